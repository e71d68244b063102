use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::{stft, AudioClip, DspError, SpectrogramParams, LOG_FLOOR, SAMPLE_RATE};

/// 80-band mel spectrogram in natural-log scale, band-major:
/// `row(b)` is band `b` across all frames.
#[derive(Debug, Clone, PartialEq)]
pub struct MelSpectrogram {
    data: Vec<f32>,
    num_frames: usize,
    params: SpectrogramParams,
}

impl MelSpectrogram {
    pub fn bands(&self) -> usize {
        self.params.mel_bands
    }

    pub fn num_frames(&self) -> usize {
        self.num_frames
    }

    pub fn hop(&self) -> usize {
        self.params.hop_length
    }

    pub fn params(&self) -> &SpectrogramParams {
        &self.params
    }

    pub fn value(&self, band: usize, frame: usize) -> f32 {
        self.data[band * self.num_frames + frame]
    }

    pub fn row(&self, band: usize) -> &[f32] {
        &self.data[band * self.num_frames..(band + 1) * self.num_frames]
    }

    /// Band-major backing storage.
    pub fn data(&self) -> &[f32] {
        &self.data
    }

    /// One frame as a fresh `bands`-length vector (storage is band-major, so
    /// this gathers a strided column).
    pub fn frame_column(&self, frame: usize) -> Vec<f32> {
        (0..self.bands()).map(|b| self.value(b, frame)).collect()
    }

    /// Wraps band-major log-mel values, enforcing the clamp floor.
    pub fn from_data(
        data: Vec<f32>,
        num_frames: usize,
        params: SpectrogramParams,
    ) -> Result<Self, DspError> {
        params.validate()?;
        if data.len() != params.mel_bands * num_frames {
            return Err(DspError::BadParams(format!(
                "mel data has {} values, expected {} bands x {} frames",
                data.len(),
                params.mel_bands,
                num_frames
            )));
        }
        let floor = LOG_FLOOR.ln();
        if data.iter().any(|v| !v.is_finite() || *v < floor - 1e-4) {
            return Err(DspError::BadParams(
                "mel values must be finite and at least log(1e-5)".into(),
            ));
        }
        Ok(Self { data, num_frames, params })
    }
}

/// Slaney-style mel filterbank as a dense `mel_bands x num_bins` row-major
/// matrix. Triangles are area-normalized (each row scaled by 2 / bandwidth).
pub fn mel_filterbank(params: &SpectrogramParams) -> Vec<f32> {
    let num_bins = params.num_bins();
    let num_mels = params.mel_bands;

    // Band edges: mel-spaced points from fmin to fmax, two more than bands.
    let lo = hz_to_mel(params.fmin);
    let hi = hz_to_mel(params.fmax);
    let edges: Vec<f64> = (0..num_mels + 2)
        .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (num_mels + 1) as f64))
        .collect();

    let bin_hz = SAMPLE_RATE as f64 / params.filter_length as f64;
    let mut fb = vec![0.0f32; num_mels * num_bins];
    for m in 0..num_mels {
        let (f0, f1, f2) = (edges[m], edges[m + 1], edges[m + 2]);
        let norm = 2.0 / (f2 - f0);
        for k in 0..num_bins {
            let f = k as f64 * bin_hz;
            let rising = (f - f0) / (f1 - f0);
            let falling = (f2 - f) / (f2 - f1);
            let w = rising.min(falling).max(0.0);
            fb[m * num_bins + k] = (w * norm) as f32;
        }
    }
    fb
}

// Slaney mel scale: linear below 1 kHz, logarithmic above.
fn hz_to_mel(hz: f64) -> f64 {
    const BREAK_HZ: f64 = 1000.0;
    const BREAK_MEL: f64 = 15.0;
    if hz < BREAK_HZ {
        hz * 3.0 / 200.0
    } else {
        BREAK_MEL + (hz / BREAK_HZ).ln() / (6.4f64.ln() / 27.0)
    }
}

fn mel_to_hz(mel: f64) -> f64 {
    const BREAK_HZ: f64 = 1000.0;
    const BREAK_MEL: f64 = 15.0;
    if mel < BREAK_MEL {
        mel * 200.0 / 3.0
    } else {
        BREAK_HZ * ((mel - BREAK_MEL) * 6.4f64.ln() / 27.0).exp()
    }
}

/// Log-mel spectrogram: `log(max(filterbank . |STFT|, 1e-5))`.
pub fn log_mel(audio: &AudioClip, params: &SpectrogramParams) -> Result<MelSpectrogram, DspError> {
    let spec = stft(audio, params)?;
    let fb = mel_filterbank(params);
    let num_bins = params.num_bins();
    let num_frames = spec.num_frames();
    let mags = spec.magnitudes();

    let mut data = vec![0.0f32; params.mel_bands * num_frames];
    for t in 0..num_frames {
        let frame = &mags[t * num_bins..(t + 1) * num_bins];
        for b in 0..params.mel_bands {
            let row = &fb[b * num_bins..(b + 1) * num_bins];
            let mut acc = 0.0f64;
            for k in 0..num_bins {
                acc += row[k] as f64 * frame[k] as f64;
            }
            data[b * num_frames + t] = (acc as f32).max(LOG_FLOOR).ln();
        }
    }
    Ok(MelSpectrogram { data, num_frames, params: *params })
}

const MEL_MAGIC: &[u8; 4] = b"MELB";
const MEL_VERSION: u32 = 1;

/// Writes a mel spectrogram as a small self-describing binary file:
/// magic "MELB", version, bands, frames (little-endian u32), then
/// band-major 32-bit float rows.
pub fn write_mel(path: &Path, mel: &MelSpectrogram) -> Result<(), DspError> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MEL_MAGIC)?;
    w.write_all(&MEL_VERSION.to_le_bytes())?;
    w.write_all(&(mel.bands() as u32).to_le_bytes())?;
    w.write_all(&(mel.num_frames() as u32).to_le_bytes())?;
    for v in mel.data() {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_mel(path: &Path) -> Result<MelSpectrogram, DspError> {
    let mut r = BufReader::new(File::open(path)?);
    let mut head = [0u8; 16];
    r.read_exact(&mut head)
        .map_err(|_| DspError::format("mel", "file too short for header"))?;
    if &head[0..4] != MEL_MAGIC {
        return Err(DspError::format("mel", "bad magic bytes"));
    }
    let version = u32::from_le_bytes(head[4..8].try_into().unwrap());
    if version != MEL_VERSION {
        return Err(DspError::format("mel", format!("unsupported version {version}")));
    }
    let bands = u32::from_le_bytes(head[8..12].try_into().unwrap()) as usize;
    let frames = u32::from_le_bytes(head[12..16].try_into().unwrap()) as usize;
    let params = SpectrogramParams::default();
    if bands != params.mel_bands {
        return Err(DspError::format("mel", format!("expected 80 bands, found {bands}")));
    }
    let mut bytes = vec![0u8; bands * frames * 4];
    r.read_exact(&mut bytes)
        .map_err(|_| DspError::format("mel", "truncated data section"))?;
    let mut tail = [0u8; 1];
    if r.read(&mut tail)? != 0 {
        return Err(DspError::format("mel", "trailing bytes after data section"));
    }
    let data = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    MelSpectrogram::from_data(data, frames, params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn sine(freq: f64, num_samples: usize, amp: f32) -> AudioClip {
        let samples = (0..num_samples)
            .map(|i| amp * (2.0 * PI * freq * i as f64 / SAMPLE_RATE as f64).sin() as f32)
            .collect();
        AudioClip::new(samples).unwrap()
    }

    #[test]
    fn zero_audio_is_all_floor() {
        let mel = log_mel(&AudioClip::silence(1000), &SpectrogramParams::default()).unwrap();
        assert!(mel.data().iter().all(|&v| v == LOG_FLOOR.ln()));
    }

    #[test]
    fn one_second_is_80_by_63() {
        let mel = log_mel(&sine(440.0, 16_000, 0.5), &SpectrogramParams::default()).unwrap();
        assert_eq!(mel.bands(), 80);
        assert_eq!(mel.num_frames(), 63);
    }

    #[test]
    fn doubling_amplitude_never_decreases_any_cell() {
        let params = SpectrogramParams::default();
        let quiet = log_mel(&sine(440.0, 8000, 0.2), &params).unwrap();
        let loud = log_mel(&sine(440.0, 8000, 0.4), &params).unwrap();
        for (l, q) in loud.data().iter().zip(quiet.data()) {
            assert!(l >= q);
        }
    }

    #[test]
    fn filterbank_rows_are_nonnegative_and_cover_interior_bins() {
        let params = SpectrogramParams::default();
        let fb = mel_filterbank(&params);
        assert!(fb.iter().all(|&w| w >= 0.0));
        // Every bin strictly between fmin and fmax must touch some filter.
        let num_bins = params.num_bins();
        for k in 1..num_bins - 1 {
            let covered = (0..params.mel_bands).any(|m| fb[m * num_bins + k] > 0.0);
            assert!(covered, "bin {k} has no filter weight");
        }
    }

    #[test]
    fn mel_file_round_trip() {
        let mel = log_mel(&sine(660.0, 8000, 0.5), &SpectrogramParams::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("clip.mel");
        write_mel(&path, &mel).unwrap();
        let back = read_mel(&path).unwrap();
        assert_eq!(back, mel);
    }

    #[test]
    fn mel_file_rejects_bad_magic() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("junk.mel");
        std::fs::write(&path, b"JUNKJUNKJUNKJUNKJUNK").unwrap();
        let err = read_mel(&path).unwrap_err();
        assert!(err.to_string().contains("magic"));
    }

    #[test]
    fn mel_file_rejects_truncation() {
        let mel = log_mel(&sine(660.0, 4000, 0.5), &SpectrogramParams::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cut.mel");
        write_mel(&path, &mel).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
        let err = read_mel(&path).unwrap_err();
        assert!(err.to_string().contains("truncated"));
    }
}

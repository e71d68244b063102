use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::{AudioClip, DspError, SAMPLE_RATE};

/// Writes a clip as 16-bit PCM mono WAV at 16 kHz. Samples are clamped to
/// [-1, 1] before quantization.
pub fn write_wav(path: &Path, clip: &AudioClip) -> Result<(), DspError> {
    let mut w = BufWriter::new(File::create(path)?);
    let data_len = (clip.len() * 2) as u32;

    w.write_all(b"RIFF")?;
    w.write_all(&(36 + data_len).to_le_bytes())?;
    w.write_all(b"WAVE")?;

    w.write_all(b"fmt ")?;
    w.write_all(&16u32.to_le_bytes())?;
    w.write_all(&1u16.to_le_bytes())?; // PCM
    w.write_all(&1u16.to_le_bytes())?; // mono
    w.write_all(&SAMPLE_RATE.to_le_bytes())?;
    w.write_all(&(SAMPLE_RATE * 2).to_le_bytes())?; // byte rate
    w.write_all(&2u16.to_le_bytes())?; // block align
    w.write_all(&16u16.to_le_bytes())?; // bits per sample

    w.write_all(b"data")?;
    w.write_all(&data_len.to_le_bytes())?;
    for &s in clip.samples() {
        let q = (s.clamp(-1.0, 1.0) * 32767.0).round() as i16;
        w.write_all(&q.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a 16-bit PCM mono WAV file. Files at other sample rates are
/// resampled to 16 kHz by linear interpolation; stereo files are rejected.
pub fn read_wav(path: &Path) -> Result<AudioClip, DspError> {
    let mut r = BufReader::new(File::open(path)?);
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;

    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(DspError::format("wav", "not a RIFF/WAVE file"));
    }

    let mut fmt: Option<(u16, u16, u32, u16)> = None;
    let mut data: Option<&[u8]> = None;
    let mut pos = 12;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = u32::from_le_bytes(bytes[pos + 4..pos + 8].try_into().unwrap()) as usize;
        let body_end = pos + 8 + size;
        if body_end > bytes.len() {
            return Err(DspError::format("wav", "chunk extends past end of file"));
        }
        let body = &bytes[pos + 8..body_end];
        match id {
            b"fmt " => {
                if body.len() < 16 {
                    return Err(DspError::format("wav", "fmt chunk too short"));
                }
                fmt = Some((
                    u16::from_le_bytes(body[0..2].try_into().unwrap()),
                    u16::from_le_bytes(body[2..4].try_into().unwrap()),
                    u32::from_le_bytes(body[4..8].try_into().unwrap()),
                    u16::from_le_bytes(body[14..16].try_into().unwrap()),
                ));
            }
            b"data" => data = Some(body),
            _ => {} // skip LIST, cue, etc.
        }
        // Chunks are word-aligned.
        pos = body_end + (size & 1);
    }

    let (format, channels, rate, bits) =
        fmt.ok_or_else(|| DspError::format("wav", "missing fmt chunk"))?;
    if format != 1 {
        return Err(DspError::format("wav", format!("unsupported format tag {format}, need PCM")));
    }
    if channels != 1 {
        return Err(DspError::format("wav", format!("expected mono, found {channels} channels")));
    }
    if bits != 16 {
        return Err(DspError::format("wav", format!("expected 16-bit samples, found {bits}")));
    }
    let data = data.ok_or_else(|| DspError::format("wav", "missing data chunk"))?;
    if data.len() % 2 != 0 {
        return Err(DspError::format("wav", "data chunk has an odd byte count"));
    }

    // Mirror the writer's 32767 scale so a round trip only costs the
    // rounding step; -32768 clamps to -1.
    let samples: Vec<f32> = data
        .chunks_exact(2)
        .map(|c| (i16::from_le_bytes(c.try_into().unwrap()) as f32 / 32767.0).max(-1.0))
        .collect();

    if rate == SAMPLE_RATE {
        return AudioClip::new(samples);
    }
    AudioClip::new(resample_linear(&samples, rate, SAMPLE_RATE))
}

/// Linear-interpolation resampling. The output covers the same time span,
/// clamping interpolation at the final input sample.
fn resample_linear(samples: &[f32], from_rate: u32, to_rate: u32) -> Vec<f32> {
    if samples.is_empty() {
        return Vec::new();
    }
    let out_len = ((samples.len() as u64 * to_rate as u64) / from_rate as u64).max(1) as usize;
    let ratio = from_rate as f64 / to_rate as f64;
    (0..out_len)
        .map(|i| {
            let pos = i as f64 * ratio;
            let lo = pos.floor() as usize;
            if lo + 1 >= samples.len() {
                samples[samples.len() - 1]
            } else {
                let frac = (pos - lo as f64) as f32;
                samples[lo] * (1.0 - frac) + samples[lo + 1] * frac
            }
        })
        .collect()
}

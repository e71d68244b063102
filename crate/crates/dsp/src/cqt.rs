use crate::stft::hann_window;
use crate::{AudioClip, DspError, HOP_LENGTH, LOG_FLOOR, SAMPLE_RATE};

/// Parameters for the pseudo constant-Q transform used as the alignment
/// feature. Defaults: 12 bins per octave over 7 octaves starting at G3
/// (the violin's lowest string).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CqtParams {
    pub bins_per_octave: usize,
    pub num_octaves: usize,
    pub fmin: f64,
    pub hop: usize,
}

impl Default for CqtParams {
    fn default() -> Self {
        Self {
            bins_per_octave: 12,
            num_octaves: 7,
            // Equal-tempered G3 (MIDI 55): 440 * 2^((55-69)/12).
            fmin: 440.0 * (2.0f64).powf(-14.0 / 12.0),
            hop: HOP_LENGTH,
        }
    }
}

impl CqtParams {
    pub fn num_bins(&self) -> usize {
        self.bins_per_octave * self.num_octaves
    }

    /// Center frequency of bin `k`: fmin * 2^(k / bins_per_octave).
    pub fn center_frequency(&self, k: usize) -> f64 {
        self.fmin * (2.0f64).powf(k as f64 / self.bins_per_octave as f64)
    }

    /// Samples spanned by the kernel for bin `k`. The quality factor keeps
    /// each kernel `Q = 1/(2^(1/B) - 1)` cycles long, so bin 0 is longest.
    pub fn kernel_length(&self, k: usize) -> usize {
        let q = 1.0 / ((2.0f64).powf(1.0 / self.bins_per_octave as f64) - 1.0);
        (q * SAMPLE_RATE as f64 / self.center_frequency(k)).ceil() as usize
    }

    pub fn validate(&self) -> Result<(), DspError> {
        if self.bins_per_octave == 0 || self.num_octaves == 0 || self.hop == 0 {
            return Err(DspError::BadParams("constant-Q sizes must be nonzero".into()));
        }
        if !(self.fmin > 0.0 && self.fmin < SAMPLE_RATE as f64 / 2.0) {
            return Err(DspError::BadParams(
                "constant-Q fmin must be positive and below the Nyquist frequency".into(),
            ));
        }
        Ok(())
    }
}

/// Log-magnitude constant-Q spectrogram, frame-major: `frame(t)` is the
/// `num_bins`-length feature vector for analysis frame `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct CqtSpectrogram {
    data: Vec<f32>,
    num_bins: usize,
    num_frames: usize,
    pub bins_per_octave: usize,
    pub fmin: f64,
}

impl CqtSpectrogram {
    pub fn num_bins(&self) -> usize {
        self.num_bins
    }

    pub fn num_frames(&self) -> usize {
        self.num_frames
    }

    pub fn frame(&self, t: usize) -> &[f32] {
        &self.data[t * self.num_bins..(t + 1) * self.num_bins]
    }

    pub fn value(&self, bin: usize, frame: usize) -> f32 {
        self.data[frame * self.num_bins + bin]
    }

    /// Frame-major storage, mainly for tests.
    pub fn data(&self) -> &[f32] {
        &self.data
    }

    /// Wraps precomputed frame-major values (used by warping tests that
    /// need hand-built feature sequences).
    pub fn from_frames(data: Vec<f32>, num_bins: usize, params: &CqtParams) -> Self {
        assert_eq!(data.len() % num_bins, 0);
        let num_frames = data.len() / num_bins;
        Self {
            data,
            num_bins,
            num_frames,
            bins_per_octave: params.bins_per_octave,
            fmin: params.fmin,
        }
    }
}

/// Pseudo constant-Q transform: each bin correlates the signal with a
/// Hann-windowed complex exponential at that bin's center frequency. All
/// kernels are centered inside a block the length of the longest kernel,
/// so every bin shares the same group delay, and frame `t` is CENTERED at
/// sample `t * hop` (zero-padded at the edges) — the same convention and
/// frame count, `1 + len / hop`, as the mel pipeline. Keeping the two
/// frame coordinate systems identical is what lets a warping path computed
/// on constant-Q frames transfer note times onto mel frames without a
/// systematic offset.
pub fn cqt(audio: &AudioClip, params: &CqtParams) -> Result<CqtSpectrogram, DspError> {
    params.validate()?;
    let num_bins = params.num_bins();
    let longest = params.kernel_length(0);

    // Precompute kernels: conjugated windowed exponentials, normalized by
    // the window sum so a unit sine at a center frequency reads ~0.5. Bins
    // whose center is at or above Nyquist cannot be measured at 16 kHz;
    // they stay at the log floor (constant rows never affect frame
    // distances downstream).
    let nyquist = SAMPLE_RATE as f64 / 2.0;
    let mut kernels: Vec<Option<(usize, Vec<(f32, f32)>)>> = Vec::with_capacity(num_bins);
    for k in 0..num_bins {
        if params.center_frequency(k) >= nyquist {
            kernels.push(None);
            continue;
        }
        let len = params.kernel_length(k);
        let window = hann_window(len);
        let wsum: f64 = window.iter().map(|&w| w as f64).sum();
        let freq = params.center_frequency(k);
        let offset = (longest - len) / 2;
        let kernel = (0..len)
            .map(|n| {
                let ang = -2.0 * std::f64::consts::PI * freq * n as f64 / SAMPLE_RATE as f64;
                let w = window[n] as f64 / wsum;
                ((w * ang.cos()) as f32, (w * ang.sin()) as f32)
            })
            .collect();
        kernels.push(Some((offset, kernel)));
    }

    let num_frames = 1 + audio.len() / params.hop;
    // Pad so the block for frame t, padded[t*hop .. t*hop + longest), is
    // centered on original sample t*hop.
    let padded_len =
        ((num_frames - 1) * params.hop + longest).max(longest / 2 + audio.len());
    let mut padded = vec![0.0f32; padded_len];
    padded[longest / 2..longest / 2 + audio.len()].copy_from_slice(audio.samples());
    let mut data = vec![LOG_FLOOR.ln(); num_frames * num_bins];
    for t in 0..num_frames {
        let block = &padded[t * params.hop..];
        for (k, entry) in kernels.iter().enumerate() {
            let Some((offset, kernel)) = entry else { continue };
            let mut re = 0.0f64;
            let mut im = 0.0f64;
            for (n, &(kr, ki)) in kernel.iter().enumerate() {
                let s = block[offset + n] as f64;
                re += s * kr as f64;
                im += s * ki as f64;
            }
            let mag = (re * re + im * im).sqrt() as f32;
            data[t * num_bins + k] = mag.max(LOG_FLOOR).ln();
        }
    }

    Ok(CqtSpectrogram {
        data,
        num_bins,
        num_frames,
        bins_per_octave: params.bins_per_octave,
        fmin: params.fmin,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn sine(freq: f64, num_samples: usize) -> AudioClip {
        let samples = (0..num_samples)
            .map(|i| 0.5 * (2.0 * PI * freq * i as f64 / SAMPLE_RATE as f64).sin() as f32)
            .collect();
        AudioClip::new(samples).unwrap()
    }

    fn peak_bin(spec: &CqtSpectrogram, t: usize) -> usize {
        let frame = spec.frame(t);
        (0..frame.len()).max_by(|&a, &b| frame[a].total_cmp(&frame[b])).unwrap()
    }

    #[test]
    fn default_geometry() {
        let p = CqtParams::default();
        assert_eq!(p.num_bins(), 84);
        assert!((p.fmin - 196.0).abs() < 0.01);
        assert!(p.validate().is_ok());
    }

    #[test]
    fn center_frequencies_are_exact_powers() {
        let p = CqtParams::default();
        for k in 0..p.num_bins() {
            let expected = p.fmin * (2.0f64).powf(k as f64 / 12.0);
            assert_eq!(p.center_frequency(k), expected);
        }
        // One octave doubles the frequency to within float rounding.
        assert!((p.center_frequency(12) / p.center_frequency(0) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn tone_at_fmin_peaks_in_bin_0() {
        let p = CqtParams::default();
        let spec = cqt(&sine(p.fmin, 8000), &p).unwrap();
        assert_eq!(peak_bin(&spec, spec.num_frames() / 2), 0);
    }

    #[test]
    fn tone_one_octave_up_peaks_in_bin_12() {
        let p = CqtParams::default();
        let spec = cqt(&sine(p.fmin * 2.0, 8000), &p).unwrap();
        assert_eq!(peak_bin(&spec, spec.num_frames() / 2), 12);
    }

    #[test]
    fn silence_is_uniform_floor() {
        let p = CqtParams::default();
        let spec = cqt(&AudioClip::silence(4000), &p).unwrap();
        assert!(spec.data().iter().all(|&v| v == LOG_FLOOR.ln()));
    }

    #[test]
    fn frame_count_matches_the_mel_shape_law() {
        let p = CqtParams::default();
        for len in [1usize, 255, 256, 257, 8000, 256 * 100] {
            let spec = cqt(&AudioClip::silence(len), &p).unwrap();
            assert_eq!(spec.num_frames(), 1 + len / p.hop, "len {len}");
        }
    }

    #[test]
    fn frames_are_centered_on_their_hop_positions() {
        // A burst around sample 20*hop must peak (across time) at frame 20
        // in every measurable bin's energy profile: the frame grid is
        // centered, not trailing.
        let p = CqtParams::default();
        let center = 20 * p.hop;
        let mut samples = vec![0.0f32; 40 * p.hop];
        for (i, s) in samples.iter_mut().enumerate() {
            let d = i as f64 - center as f64;
            let env = (-d * d / (2.0 * 300.0f64.powi(2))).exp();
            *s = (env * (2.0 * PI * 440.0 * i as f64 / SAMPLE_RATE as f64).sin()) as f32;
        }
        let spec = cqt(&AudioClip::new(samples).unwrap(), &p).unwrap();
        let energy: Vec<f32> =
            (0..spec.num_frames()).map(|t| spec.frame(t).iter().sum()).collect();
        let peak = (0..energy.len()).max_by(|&a, &b| energy[a].total_cmp(&energy[b])).unwrap();
        assert!(
            (peak as i64 - 20).unsigned_abs() <= 1,
            "burst at frame 20 peaked at frame {peak}"
        );
    }
}

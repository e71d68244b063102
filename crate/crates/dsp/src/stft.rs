use rustfft::num_complex::Complex32;
use rustfft::FftPlanner;

use crate::{AudioClip, DspError, SpectrogramParams};

/// Complex short-time Fourier transform, frame-major: `frame(t)` holds the
/// 513 non-redundant bins of analysis frame `t`.
#[derive(Debug, Clone)]
pub struct Spectrogram {
    data: Vec<Complex32>,
    num_frames: usize,
    num_bins: usize,
}

impl Spectrogram {
    pub fn num_frames(&self) -> usize {
        self.num_frames
    }

    pub fn num_bins(&self) -> usize {
        self.num_bins
    }

    pub fn frame(&self, t: usize) -> &[Complex32] {
        &self.data[t * self.num_bins..(t + 1) * self.num_bins]
    }

    pub fn frame_mut(&mut self, t: usize) -> &mut [Complex32] {
        &mut self.data[t * self.num_bins..(t + 1) * self.num_bins]
    }

    /// Frame-major magnitudes, same layout as the complex data.
    pub fn magnitudes(&self) -> Vec<f32> {
        self.data.iter().map(|c| c.norm()).collect()
    }

    /// Builds a spectrogram from frame-major magnitudes with zero phase.
    pub fn from_magnitudes(mags: &[f32], num_frames: usize, num_bins: usize) -> Self {
        assert_eq!(mags.len(), num_frames * num_bins);
        Self {
            data: mags.iter().map(|&m| Complex32::new(m, 0.0)).collect(),
            num_frames,
            num_bins,
        }
    }

    /// Drops trailing frames, keeping the first `num_frames`.
    pub fn truncate_frames(&mut self, num_frames: usize) {
        assert!(num_frames <= self.num_frames);
        self.data.truncate(num_frames * self.num_bins);
        self.num_frames = num_frames;
    }
}

/// Periodic Hann window of length `n`.
pub(crate) fn hann_window(n: usize) -> Vec<f32> {
    (0..n)
        .map(|i| {
            let x = 2.0 * std::f64::consts::PI * i as f64 / n as f64;
            (0.5 - 0.5 * x.cos()) as f32
        })
        .collect()
}

/// Index into a signal of length `len` with reflection at the boundaries
/// (the edge sample is not repeated). A one-sample signal reflects to itself.
fn reflect_index(i: isize, len: usize) -> usize {
    if len == 1 {
        return 0;
    }
    let period = 2 * (len - 1) as isize;
    let mut j = i.rem_euclid(period);
    if j >= len as isize {
        j = period - j;
    }
    j as usize
}

/// Short-time Fourier transform with reflect center-padding, so frame `t` is
/// centered on sample `t * hop` and a clip of `n` samples yields
/// `1 + n/hop` frames.
pub fn stft(audio: &AudioClip, params: &SpectrogramParams) -> Result<Spectrogram, DspError> {
    params.validate()?;
    if audio.is_empty() {
        return Err(DspError::EmptyAudio);
    }

    let n_fft = params.filter_length;
    let hop = params.hop_length;
    let num_bins = params.num_bins();
    let num_frames = params.num_frames(audio.len());
    let samples = audio.samples();
    let pad = n_fft / 2;

    // Center the analysis window inside the FFT buffer when it is shorter.
    let mut window = vec![0.0f32; n_fft];
    let offset = (n_fft - params.window_size) / 2;
    window[offset..offset + params.window_size].copy_from_slice(&hann_window(params.window_size));

    let mut planner = FftPlanner::<f32>::new();
    let fft = planner.plan_fft_forward(n_fft);
    let mut buf = vec![Complex32::default(); n_fft];
    let mut scratch = vec![Complex32::default(); fft.get_inplace_scratch_len()];
    let mut data = Vec::with_capacity(num_frames * num_bins);

    for t in 0..num_frames {
        let start = t as isize * hop as isize - pad as isize;
        for (i, slot) in buf.iter_mut().enumerate() {
            let s = samples[reflect_index(start + i as isize, samples.len())];
            *slot = Complex32::new(s * window[i], 0.0);
        }
        fft.process_with_scratch(&mut buf, &mut scratch);
        data.extend_from_slice(&buf[..num_bins]);
    }

    Ok(Spectrogram { data, num_frames, num_bins })
}

/// Least-squares inverse STFT (windowed overlap-add, normalized by the sum
/// of squared windows). Returns `length` samples, counted from the center of
/// frame 0; `length` must be coverable by the given frames.
pub fn istft(spec: &Spectrogram, params: &SpectrogramParams, length: usize) -> AudioClip {
    let n_fft = params.filter_length;
    let hop = params.hop_length;
    let pad = n_fft / 2;
    assert_eq!(spec.num_bins(), params.num_bins());
    // Last frame must reach past the end of the requested range.
    assert!(
        (spec.num_frames() - 1) * hop + n_fft >= length + pad,
        "not enough frames to reconstruct {length} samples"
    );

    let mut window = vec![0.0f32; n_fft];
    let offset = (n_fft - params.window_size) / 2;
    window[offset..offset + params.window_size].copy_from_slice(&hann_window(params.window_size));

    let mut planner = FftPlanner::<f32>::new();
    let ifft = planner.plan_fft_inverse(n_fft);
    let mut buf = vec![Complex32::default(); n_fft];
    let mut scratch = vec![Complex32::default(); ifft.get_inplace_scratch_len()];

    let padded_len = (spec.num_frames() - 1) * hop + n_fft;
    let mut num = vec![0.0f64; padded_len];
    let mut den = vec![0.0f64; padded_len];

    for t in 0..spec.num_frames() {
        let frame = spec.frame(t);
        // Rebuild the full conjugate-symmetric spectrum from the half kept.
        buf[..frame.len()].copy_from_slice(frame);
        for k in frame.len()..n_fft {
            buf[k] = frame[n_fft - k].conj();
        }
        ifft.process_with_scratch(&mut buf, &mut scratch);
        let start = t * hop;
        for i in 0..n_fft {
            // rustfft leaves the inverse unscaled; fold 1/N in here.
            let y = buf[i].re as f64 / n_fft as f64;
            num[start + i] += y * window[i] as f64;
            den[start + i] += (window[i] as f64) * (window[i] as f64);
        }
    }

    let samples = (0..length)
        .map(|i| {
            let j = i + pad;
            if den[j] > 1e-12 {
                (num[j] / den[j]) as f32
            } else {
                0.0
            }
        })
        .collect();
    // Skip the finite check: the inputs were finite and weighted
    // overlap-add cannot introduce NaN.
    AudioClip { samples }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn sine(freq: f64, num_samples: usize, amp: f32) -> AudioClip {
        let samples = (0..num_samples)
            .map(|i| amp * (2.0 * PI * freq * i as f64 / crate::SAMPLE_RATE as f64).sin() as f32)
            .collect();
        AudioClip::new(samples).unwrap()
    }

    #[test]
    fn one_second_has_63_frames_and_513_bins() {
        let spec = stft(&sine(440.0, 16_000, 0.5), &SpectrogramParams::default()).unwrap();
        assert_eq!(spec.num_frames(), 63);
        assert_eq!(spec.num_bins(), 513);
    }

    #[test]
    fn empty_audio_is_an_error() {
        let clip = AudioClip::new(vec![]).unwrap();
        assert!(matches!(
            stft(&clip, &SpectrogramParams::default()),
            Err(DspError::EmptyAudio)
        ));
    }

    #[test]
    fn zero_audio_gives_zero_magnitudes() {
        let spec = stft(&AudioClip::silence(4096), &SpectrogramParams::default()).unwrap();
        assert!(spec.magnitudes().iter().all(|&m| m == 0.0));
    }

    #[test]
    fn one_khz_sine_peaks_at_bin_64() {
        // 1000 Hz * 1024 / 16000 = bin 64 exactly.
        let spec = stft(&sine(1000.0, 16_000, 0.7), &SpectrogramParams::default()).unwrap();
        let mid = spec.frame(31);
        let peak = (0..spec.num_bins())
            .max_by(|&a, &b| mid[a].norm().total_cmp(&mid[b].norm()))
            .unwrap();
        assert_eq!(peak, 64);
    }

    #[test]
    fn matches_brute_force_dft_on_one_frame() {
        let clip = sine(937.5, 2048, 0.6);
        let params = SpectrogramParams::default();
        let spec = stft(&clip, &params).unwrap();

        // Recompute frame 4 (centered at sample 1024, fully interior) by a
        // direct DFT over the same windowed slice.
        let t = 4;
        let window = hann_window(1024);
        let start = t * params.hop_length - 512;
        for k in [0usize, 17, 60, 64, 200, 512] {
            let mut re = 0.0f64;
            let mut im = 0.0f64;
            for n in 0..1024 {
                let x = (clip.samples()[start + n] * window[n]) as f64;
                let ang = -2.0 * PI * (k * n) as f64 / 1024.0;
                re += x * ang.cos();
                im += x * ang.sin();
            }
            let got = spec.frame(t)[k];
            assert!(
                (got.re as f64 - re).abs() < 1e-2 && (got.im as f64 - im).abs() < 1e-2,
                "bin {k}: fft ({}, {}) vs dft ({re}, {im})",
                got.re,
                got.im
            );
        }
    }

    #[test]
    fn istft_round_trips_interior_samples() {
        let clip = sine(440.0, 4096, 0.5);
        let params = SpectrogramParams::default();
        let spec = stft(&clip, &params).unwrap();
        let back = istft(&spec, &params, clip.len());
        assert_eq!(back.len(), clip.len());
        for i in 0..clip.len() {
            assert!(
                (back.samples()[i] - clip.samples()[i]).abs() < 1e-4,
                "sample {i} diverged"
            );
        }
    }
}

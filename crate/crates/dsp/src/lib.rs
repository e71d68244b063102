//! Signal-processing kernels for the performance-synthesis pipeline.
//!
//! Everything here operates on 16 kHz mono audio. The main entry points:
//!
//! - [`stft`] / [`log_mel`]: short-time Fourier analysis and the 80-band
//!   log-mel spectrograms the synthesis model is trained against.
//! - [`cqt`]: a pseudo constant-Q spectrogram used as the feature for
//!   DTW-based score/performance alignment.
//! - [`additive_synth`]: a deterministic oracle synthesizer that renders an
//!   aligned score as a harmonic stack, standing in for an external
//!   SoundFont renderer.
//! - [`griffin_lim`]: mel-to-waveform inversion (non-negative least squares
//!   back to linear magnitudes, then phase reconstruction by alternating
//!   STFT-consistency projections).
//!
//! All functions are pure and deterministic; there is no hidden global
//! state, so spectrograms for different clips can be computed in parallel.

mod cqt;
mod error;
mod griffin;
mod mel;
mod stft;
mod synth;
mod wav;

pub use cqt::{cqt, CqtParams, CqtSpectrogram};
pub use error::DspError;
pub use griffin::{griffin_lim, griffin_lim_traced, mel_to_linear};
pub use mel::{log_mel, mel_filterbank, read_mel, write_mel, MelSpectrogram};
pub use stft::{istft, stft, Spectrogram};
pub use synth::additive_synth;
pub use wav::{read_wav, write_wav};

/// Fixed sample rate for every clip in the pipeline.
pub const SAMPLE_RATE: u32 = 16_000;

/// Samples per spectrogram frame (16 ms at 16 kHz).
pub const HOP_LENGTH: usize = 256;

/// Clamp applied to mel energies before taking the log.
pub const LOG_FLOOR: f32 = 1e-5;

/// Mono audio at [`SAMPLE_RATE`].
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    samples: Vec<f32>,
}

impl AudioClip {
    /// Wraps raw samples, rejecting NaN or infinite values.
    pub fn new(samples: Vec<f32>) -> Result<Self, DspError> {
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(DspError::NonFiniteSample { index: i });
        }
        Ok(Self { samples })
    }

    pub fn silence(num_samples: usize) -> Self {
        Self { samples: vec![0.0; num_samples] }
    }

    pub fn samples(&self) -> &[f32] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn sample_rate(&self) -> u32 {
        SAMPLE_RATE
    }

    pub fn duration_seconds(&self) -> f64 {
        self.samples.len() as f64 / SAMPLE_RATE as f64
    }

    /// Largest absolute sample value (0.0 for an empty clip).
    pub fn peak(&self) -> f32 {
        self.samples.iter().fold(0.0f32, |m, s| m.max(s.abs()))
    }

    /// Root-mean-square level (0.0 for an empty clip).
    pub fn rms(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        let sum: f64 = self.samples.iter().map(|&s| (s as f64) * (s as f64)).sum();
        (sum / self.samples.len() as f64).sqrt()
    }
}

/// Analysis parameters shared by the STFT and mel stages.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectrogramParams {
    pub filter_length: usize,
    pub hop_length: usize,
    pub window_size: usize,
    pub mel_bands: usize,
    pub fmin: f64,
    pub fmax: f64,
}

impl Default for SpectrogramParams {
    fn default() -> Self {
        Self {
            filter_length: 1024,
            hop_length: HOP_LENGTH,
            window_size: 1024,
            mel_bands: 80,
            fmin: 0.0,
            fmax: 8000.0,
        }
    }
}

impl SpectrogramParams {
    /// Number of non-redundant FFT bins (filter_length/2 + 1).
    pub fn num_bins(&self) -> usize {
        self.filter_length / 2 + 1
    }

    /// Frames produced for a clip of `num_samples` with reflect center-padding.
    pub fn num_frames(&self, num_samples: usize) -> usize {
        1 + num_samples / self.hop_length
    }

    pub fn validate(&self) -> Result<(), DspError> {
        if self.filter_length == 0 || self.hop_length == 0 || self.window_size == 0 {
            return Err(DspError::BadParams("filter, hop and window sizes must be nonzero".into()));
        }
        if self.window_size > self.filter_length {
            return Err(DspError::BadParams("window size cannot exceed filter length".into()));
        }
        if self.mel_bands == 0 {
            return Err(DspError::BadParams("mel_bands must be at least 1".into()));
        }
        if !(self.fmin >= 0.0 && self.fmax > self.fmin) {
            return Err(DspError::BadParams("need 0 <= fmin < fmax".into()));
        }
        if self.fmax > SAMPLE_RATE as f64 / 2.0 {
            return Err(DspError::BadParams("fmax cannot exceed the Nyquist frequency".into()));
        }
        Ok(())
    }
}

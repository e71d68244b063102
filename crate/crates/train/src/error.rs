use std::path::PathBuf;

use espressivo_dsp::DspError;
use espressivo_nn::NnError;
use espressivo_score::ScoreError;
use espressivo_synth::SynthError;
use espressivo_timing::TimingError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    Config(String),

    #[error("manifest has no entries")]
    EmptyManifest,

    #[error("dataset produced no training units (scores too short for the clip length?)")]
    EmptyDataset,

    #[error("no aligned score for {score}: expected {expected} (run the dataset aligner first)")]
    MissingAligned { score: PathBuf, expected: PathBuf },

    #[error("checkpoint config does not match the requested config: {0}")]
    ConfigMismatch(String),

    /// Training is aborted the moment a loss or gradient stops being finite;
    /// the last checkpoint written before this step stays on disk.
    #[error("non-finite loss at step {step}; training aborted, last-good checkpoint retained")]
    NonFiniteLoss { step: u64 },

    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Score(#[from] ScoreError),

    #[error(transparent)]
    Dsp(#[from] DspError),

    #[error(transparent)]
    Nn(#[from] NnError),

    #[error(transparent)]
    Timing(#[from] TimingError),

    #[error(transparent)]
    Synth(#[from] SynthError),
}

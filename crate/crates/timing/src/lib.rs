//! The expressive-timing alignment model: a transformer encoder over a
//! note sequence (pitch, metric onset, metric duration, optional velocity,
//! plus tempo and performer conditioning) with a fully-connected head that
//! regresses each note's performed onset and duration in spectrogram
//! frames. Trained with MSE against frame-level alignments; at inference
//! the raw regressions are rounded and clamped into an
//! [`espressivo_score::AlignedScore`].

mod features;
mod model;

pub use features::{extract_features, NoteInputFeatures};
pub use model::{alignment_loss, alignment_loss_pairs, AlignmentModel};

use espressivo_nn::NnError;
use espressivo_score::{ClipPolicy, ScoreError, TICKS_PER_QUARTER};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Architecture and featurization knobs. The defaults are the published
/// ones: 3 encoder layers, 2 heads, 64 attention / 256 feed-forward hidden
/// units, 128-dim embeddings, sequences up to 1000 notes, and time/duration
/// embedding tables spanning 96 quarter notes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentModelConfig {
    pub encoder_layers: usize,
    pub num_heads: usize,
    pub mha_hidden: usize,
    pub ffn_hidden: usize,
    pub embed_dim: usize,
    pub max_seq_len: usize,
    /// Span of the onset embedding table, in quarter notes.
    pub max_time: u32,
    /// Span of the duration embedding table, in quarter notes.
    pub max_duration: u32,
    /// Ticks of metric time per embedding bucket. 1 gives one bucket per
    /// tick (tables of `max_time * 24` rows); larger values coarsen the
    /// tables. The unit of the published "96" is unstated, so the
    /// granularity stays configurable.
    pub ticks_per_bucket: u32,
    /// Performer embedding table size; performer IDs must be below this.
    pub num_performers: usize,
    pub dropout: f64,
    /// What to do with onsets/durations beyond the table span.
    pub clip_policy: ClipPolicy,
    /// When set, the head predicts a correction to the constant-tempo
    /// alignment instead of absolute frames. Off by default.
    pub predict_residual: bool,
}

impl Default for AlignmentModelConfig {
    fn default() -> Self {
        AlignmentModelConfig {
            encoder_layers: 3,
            num_heads: 2,
            mha_hidden: 64,
            ffn_hidden: 256,
            embed_dim: 128,
            max_seq_len: 1000,
            max_time: 96,
            max_duration: 96,
            ticks_per_bucket: 1,
            num_performers: 16,
            dropout: 0.2,
            clip_policy: ClipPolicy::Saturate,
            predict_residual: false,
        }
    }
}

impl AlignmentModelConfig {
    pub fn validate(&self) -> Result<(), TimingError> {
        if self.encoder_layers == 0 {
            return Err(TimingError::Config("encoder_layers must be >= 1".into()));
        }
        if self.embed_dim == 0 || self.embed_dim % 2 != 0 {
            return Err(TimingError::Config(format!(
                "embed_dim must be even and nonzero for sinusoidal encoding, got {}",
                self.embed_dim
            )));
        }
        if self.max_seq_len == 0 {
            return Err(TimingError::Config("max_seq_len must be >= 1".into()));
        }
        if self.max_time == 0 || self.max_duration == 0 {
            return Err(TimingError::Config("embedding table spans must be >= 1".into()));
        }
        if self.ticks_per_bucket == 0 {
            return Err(TimingError::Config("ticks_per_bucket must be >= 1".into()));
        }
        if self.num_performers == 0 {
            return Err(TimingError::Config("num_performers must be >= 1".into()));
        }
        Ok(())
    }

    /// Rows in the onset embedding table.
    pub fn onset_table_size(&self) -> u32 {
        (self.max_time * TICKS_PER_QUARTER).div_ceil(self.ticks_per_bucket)
    }

    /// Rows in the duration embedding table.
    pub fn duration_table_size(&self) -> u32 {
        (self.max_duration * TICKS_PER_QUARTER).div_ceil(self.ticks_per_bucket)
    }
}

#[derive(Debug, Error)]
pub enum TimingError {
    #[error(
        "score has {got} notes but the encoder accepts at most {max}; \
         split the score into segments of at most {max} notes and align each separately"
    )]
    TooManyNotes { got: usize, max: usize },

    #[error("predictions cover {pred} notes but the target has {target}")]
    LengthMismatch { pred: usize, target: usize },

    #[error("performer id {id} is outside the {table}-entry embedding table")]
    UnknownPerformer { id: u32, table: usize },

    #[error("bad model config: {0}")]
    Config(String),

    #[error(transparent)]
    Score(#[from] ScoreError),

    #[error(transparent)]
    Nn(#[from] NnError),
}

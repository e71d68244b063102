use espressivo_dsp::DspError;
use espressivo_nn::NnError;
use espressivo_score::ScoreError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SynthError {
    /// Note-relative position handed to the positional encoding must lie in
    /// [0, 1]; anything else means the caller mis-derived it.
    #[error("note position {0} is outside [0, 1]")]
    PositionOutOfRange(f64),

    #[error("{0}")]
    Shape(String),

    /// A note's frame span reaches past the end of the frame grid being
    /// mixed into.
    #[error("note {index} sounds through frame {end} but the mix is only {frames} frames long")]
    SpanBeyondFrames { index: usize, end: u32, frames: usize },

    #[error(
        "clip is {got} frames long but the model accepts at most {max}; \
         split the clip into segments of at most {max} frames and synthesize \
         each segment separately"
    )]
    TooManyFrames { got: usize, max: usize },

    #[error(
        "clip has {got} notes but the model accepts at most {max}; \
         split the clip into segments of at most {max} notes and synthesize \
         each segment separately"
    )]
    TooManyNotes { got: usize, max: usize },

    #[error("performer id {id} is outside the embedding table (size {table})")]
    UnknownPerformer { id: u32, table: usize },

    #[error("clip has no frames")]
    EmptyClip,

    #[error("invalid synthesis config: {0}")]
    Config(String),

    #[error(transparent)]
    Score(#[from] ScoreError),

    #[error(transparent)]
    Nn(#[from] NnError),

    #[error(transparent)]
    Dsp(#[from] DspError),
}

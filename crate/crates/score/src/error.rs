use thiserror::Error;

#[derive(Debug, Error)]
pub enum ScoreError {
    #[error("midi parse error at byte {offset}: {message}")]
    MidiParse { offset: usize, message: String },

    #[error("score contains no note events")]
    EmptyScore,

    #[error("invalid score json: {0}")]
    Json(String),

    #[error("{0}")]
    Validation(String),

    #[error("index {value} exceeds table capacity {cap}")]
    IndexOutOfRange { value: u32, cap: u32 },
}

impl ScoreError {
    pub(crate) fn validation(message: impl Into<String>) -> Self {
        ScoreError::Validation(message.into())
    }

    pub(crate) fn midi(offset: usize, message: impl Into<String>) -> Self {
        ScoreError::MidiParse { offset, message: message.into() }
    }
}

use thiserror::Error;

#[derive(Debug, Error)]
pub enum DspError {
    #[error("audio sample at index {index} is not finite")]
    NonFiniteSample { index: usize },

    #[error("cannot analyze empty audio")]
    EmptyAudio,

    #[error("invalid spectrogram parameters: {0}")]
    BadParams(String),

    #[error("griffin-lim needs at least one iteration")]
    NoIterations,

    #[error("malformed {what} file: {reason}")]
    Format { what: &'static str, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl DspError {
    pub(crate) fn format(what: &'static str, reason: impl Into<String>) -> Self {
        DspError::Format { what, reason: reason.into() }
    }
}

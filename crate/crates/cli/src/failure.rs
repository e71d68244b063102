//! Exit-code discipline: every error leaving the CLI is classified as a
//! usage, data, or numerical failure, and reported as exactly one
//! machine-parseable line `error: <kind>: <message>` on stderr.

use espressivo_dsp::DspError;
use espressivo_dtw::DtwError;
use espressivo_nn::NnError;
use espressivo_score::ScoreError;
use espressivo_synth::SynthError;
use espressivo_timing::TimingError;
use espressivo_train::TrainError;

#[derive(Debug)]
pub enum Failure {
    /// Bad invocation: unknown flags, missing arguments, invalid flag
    /// values or combinations. Exit code 1.
    Usage(String),
    /// Bad or missing input data: unreadable files, malformed JSON,
    /// shape/config mismatches, empty datasets. Exit code 2.
    Data(String),
    /// Non-finite numbers where finite ones were required: NaN losses,
    /// exploding gradients, a failed gradient check. Exit code 3.
    Numerical(String),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Data(_) => 2,
            Failure::Numerical(_) => 3,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Failure::Usage(_) => "usage",
            Failure::Data(_) => "data",
            Failure::Numerical(_) => "numerical",
        }
    }

    /// The single diagnostic line, newlines flattened so it stays one line.
    pub fn report_line(&self) -> String {
        let message = match self {
            Failure::Usage(m) | Failure::Data(m) | Failure::Numerical(m) => m,
        };
        format!("error: {}: {}", self.kind(), message.replace('\n', "; "))
    }
}

impl From<NnError> for Failure {
    fn from(err: NnError) -> Self {
        match err {
            NnError::NonFiniteGradient { .. } | NnError::NonFiniteObjective => {
                Failure::Numerical(err.to_string())
            }
            other => Failure::Data(other.to_string()),
        }
    }
}

impl From<TimingError> for Failure {
    fn from(err: TimingError) -> Self {
        match err {
            TimingError::Nn(nn) => nn.into(),
            TimingError::Config(msg) => Failure::Usage(format!("bad model config: {msg}")),
            other => Failure::Data(other.to_string()),
        }
    }
}

impl From<SynthError> for Failure {
    fn from(err: SynthError) -> Self {
        match err {
            SynthError::Nn(nn) => nn.into(),
            SynthError::Config(msg) => Failure::Usage(format!("bad model config: {msg}")),
            other => Failure::Data(other.to_string()),
        }
    }
}

impl From<TrainError> for Failure {
    fn from(err: TrainError) -> Self {
        match err {
            TrainError::Config(msg) => Failure::Usage(msg),
            TrainError::NonFiniteLoss { .. } => Failure::Numerical(err.to_string()),
            TrainError::Nn(nn) => nn.into(),
            TrainError::Timing(t) => t.into(),
            TrainError::Synth(s) => s.into(),
            other => Failure::Data(other.to_string()),
        }
    }
}

impl From<ScoreError> for Failure {
    fn from(err: ScoreError) -> Self {
        Failure::Data(err.to_string())
    }
}

impl From<DspError> for Failure {
    fn from(err: DspError) -> Self {
        Failure::Data(err.to_string())
    }
}

impl From<DtwError> for Failure {
    fn from(err: DtwError) -> Self {
        Failure::Data(err.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(err: std::io::Error) -> Self {
        Failure::Data(err.to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn report_lines_are_single_lines_with_stable_prefixes() {
        let f = Failure::Data("first\nsecond".into());
        assert_eq!(f.report_line(), "error: data: first; second");
        assert_eq!(f.exit_code(), 2);
        assert_eq!(Failure::Usage(String::new()).exit_code(), 1);
        assert_eq!(Failure::Numerical(String::new()).exit_code(), 3);
    }

    #[test]
    fn non_finite_nn_errors_classify_as_numerical() {
        let f: Failure = NnError::NonFiniteGradient { name: "w".into() }.into();
        assert_eq!(f.exit_code(), 3);
        let f: Failure = TrainError::NonFiniteLoss { step: 9 }.into();
        assert_eq!(f.exit_code(), 3);
        let f: Failure = NnError::Shape("2x3 vs 3x2".into()).into();
        assert_eq!(f.exit_code(), 2);
    }
}

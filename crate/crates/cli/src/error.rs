use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("empty plot range: {0}")]
    EmptyRange(String),
    #[error(transparent)]
    Core(#[from] uqseq::Error),
}

impl CliError {
    /// 1 usage, 2 data, 3 numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::EmptyRange(_) => 1,
            CliError::Core(
                uqseq::Error::InvalidArgument(_)
                | uqseq::Error::BetaOutOfRange(_)
                | uqseq::Error::RateOutOfRange(_)
                | uqseq::Error::UnknownVariant(_)
                | uqseq::Error::RunsForNonDropoutVariant,
            ) => 1,
            CliError::Core(uqseq::Error::NumericalFailure(_)) => 3,
            CliError::Core(_) => 2,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(e.into())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Core(e.into())
    }
}

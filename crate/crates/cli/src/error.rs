use taskcp::multiround::MultiRoundError;
use taskcp::testbed::TestbedError;
use taskcp::validation::ValidationError;
use taskcp::ConformalError;
use thiserror::Error;

pub const EXIT_OTHER: u8 = 1;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_IO: u8 = 3;
pub const EXIT_ACCEPTANCE: u8 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{failed} of {total} acceptance criteria failed")]
    Acceptance { failed: usize, total: usize },
    #[error(transparent)]
    Testbed(#[from] TestbedError),
    #[error(transparent)]
    Validation(#[from] ValidationError),
    #[error(transparent)]
    MultiRound(#[from] MultiRoundError),
    #[error(transparent)]
    Conformal(#[from] ConformalError),
}

impl CliError {
    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        CliError::Io {
            context: context.into(),
            source,
        }
    }

    /// Process exit status: 2 for configuration problems, 3 for I/O, 4 for
    /// acceptance failures and 1 for anything else.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Io { .. } => EXIT_IO,
            CliError::Acceptance { .. } => EXIT_ACCEPTANCE,
            CliError::Testbed(TestbedError::InvalidSpec(_)) => EXIT_CONFIG,
            CliError::Testbed(TestbedError::Malformed(_)) => EXIT_IO,
            CliError::Validation(
                ValidationError::DegenerateFolds { .. } | ValidationError::InvalidArgument(_),
            ) => EXIT_CONFIG,
            CliError::MultiRound(
                MultiRoundError::InvalidPlan(_)
                | MultiRoundError::Validation(
                    ValidationError::DegenerateFolds { .. } | ValidationError::InvalidArgument(_),
                ),
            ) => EXIT_CONFIG,
            _ => EXIT_OTHER,
        }
    }
}

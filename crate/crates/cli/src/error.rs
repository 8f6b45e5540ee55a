use std::fmt;

use xai_core::Error;

/// Bad input: flags, config files, data or checkpoints.
pub const EXIT_USAGE: u8 = 2;
/// The command was well-formed but failed while running.
pub const EXIT_RUNTIME: u8 = 1;

#[derive(Debug)]
pub enum CliError {
    /// A problem with what the user supplied.
    Usage(String),
    /// A failure while reading a user-supplied file.
    Input(Error),
    Core(Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Input(_) => EXIT_USAGE,
            CliError::Core(e) => match e {
                Error::Config(_)
                | Error::Parameter(_)
                | Error::Data(_)
                | Error::Format(_)
                | Error::Index(_)
                | Error::Dimension { .. }
                | Error::Json(_) => EXIT_USAGE,
                _ => EXIT_RUNTIME,
            },
        }
    }

    pub(crate) fn input(e: Error) -> Self {
        CliError::Input(e)
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(msg) => f.write_str(msg),
            CliError::Input(e) | CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for CliError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            CliError::Usage(_) => None,
            CliError::Input(e) | CliError::Core(e) => Some(e),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

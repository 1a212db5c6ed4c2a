use std::fmt::Display;

use cipd::Error;

pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_IO: u8 = 3;
pub const EXIT_NON_CONVERGENCE: u8 = 4;

/// A failed command: process exit code plus a one-line diagnostic.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn config(message: impl Display) -> Self {
        Self {
            code: EXIT_CONFIG,
            message: message.to_string(),
        }
    }

    pub fn io(message: impl Display) -> Self {
        Self {
            code: EXIT_IO,
            message: message.to_string(),
        }
    }
}

/// Maps a library error to its exit code, prefixing `context`.
pub fn classify(context: impl Display, err: Error) -> Failure {
    let code = match &err {
        Error::Io(_) => EXIT_IO,
        Error::NonConvergence { .. } => EXIT_NON_CONVERGENCE,
        _ => EXIT_CONFIG,
    };
    Failure {
        code,
        message: format!("{context}: {err}"),
    }
}

pub trait Context<T> {
    fn context(self, context: impl Display) -> Result<T, Failure>;
}

impl<T> Context<T> for Result<T, Error> {
    fn context(self, context: impl Display) -> Result<T, Failure> {
        self.map_err(|e| classify(context, e))
    }
}

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Which broad class of failure an [`Error`] belongs to.
///
/// The command-line driver maps each class to its own exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Data,
    Numerical,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("parse error at data row {row} (column `{column}`): {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },

    #[error("vector bundle format error: {0}")]
    Format(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("alignment error: {}", describe_missing(.missing))]
    MissingAlignment { missing: Vec<String> },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },
}

fn describe_missing(missing: &[String]) -> String {
    const SHOWN: usize = 20;
    let mut s = format!("{} key(s) without features: ", missing.len());
    s.push_str(&missing.iter().take(SHOWN).cloned().collect::<Vec<_>>().join(", "));
    if missing.len() > SHOWN {
        s.push_str(&format!(", ... ({} more)", missing.len() - SHOWN));
    }
    s
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Config(_) | Error::Schema(_) => ErrorClass::Config,
            Error::Numerical(_) => ErrorClass::Numerical,
            Error::Context { source, .. } => source.class(),
            _ => ErrorClass::Data,
        }
    }
}

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    Dimension { context: &'static str, expected: usize, found: usize },

    #[error("invalid input: {0}")]
    Input(String),

    /// The LP backend could not reach a trustworthy verdict. Callers treat
    /// this as "unknown", never as "safe".
    #[error("LP solver failure: {0}")]
    Solver(String),

    #[error("set is empty")]
    EmptySet,

    #[error("point lies outside the domain")]
    OutsideDomain,

    #[error("training diverged: {0}")]
    Training(String),

    #[error("system evaluation failed at sample {index}: {message}")]
    System { index: usize, message: String },

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn dim(context: &'static str, expected: usize, found: usize) -> Self {
        Error::Dimension { context, expected, found }
    }

    pub(crate) fn check_dim(context: &'static str, expected: usize, found: usize) -> Result<()> {
        if expected == found {
            Ok(())
        } else {
            Err(Error::dim(context, expected, found))
        }
    }
}

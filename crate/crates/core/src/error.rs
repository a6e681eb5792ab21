use thiserror::Error;

/// Errors raised by the estimator stack and the harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("rank deficient: {0}")]
    RankDeficient(String),

    #[error("resource limit exceeded: {0}")]
    Resource(String),

    #[error("initialization failed: {0}")]
    Initialization(String),

    /// The profile information is not positive semidefinite; carries its eigenvalues.
    #[error("profile information is not positive semidefinite (eigenvalues {0:?})")]
    NotPositiveSemidefinite(Vec<f64>),

    #[error("data error: {0}")]
    Data(String),

    #[error("statistics error: {0}")]
    Statistics(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code used by the command line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Data(_) | Error::DegenerateData(_) | Error::Io(_) => 3,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

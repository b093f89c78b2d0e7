use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),

    #[error("matrix is not positive semidefinite: eigenvalue {eigenvalue:e} below -{tol:e}")]
    NotPsd { eigenvalue: f64, tol: f64 },

    #[error("numerical rank {rank} exceeds {max_rank} (spilled eigenvalue mass {spilled:e})")]
    RankExceeded {
        rank: usize,
        max_rank: usize,
        spilled: f64,
    },

    #[error("invalid model parameter: {0}")]
    InvalidParameter(String),

    #[error("unsupported operation: {0}")]
    Unsupported(String),

    #[error("index out of range: {0}")]
    Index(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("estimation failed for {} entr{}: {}", .0.len(), if .0.len() == 1 { "y" } else { "ies" }, summarize_entries(.0))]
    EntryFailures(Vec<crate::estimators::EntryFailure>),

    #[error("data error: {0}")]
    Data(String),

    #[error("io error: {0}")]
    Io(String),
}

fn summarize_entries(list: &[crate::estimators::EntryFailure]) -> String {
    list.iter()
        .take(4)
        .map(|f| format!("({},{}) {}", f.i + 1, f.j + 1, f.reason))
        .collect::<Vec<_>>()
        .join("; ")
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

/// Coarse grouping used for exit codes and stage reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCategory {
    /// Bad parameters or configuration.
    Usage,
    /// Malformed or inconsistent input data, IO.
    Data,
    /// The numerics failed on otherwise valid input.
    Numeric,
}

impl Error {
    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::InvalidParameter(_) | Error::Unsupported(_) => ErrorCategory::Usage,
            Error::Dimension(_) | Error::Index(_) | Error::Data(_) | Error::Io(_) => ErrorCategory::Data,
            Error::NotSymmetric(_)
            | Error::NotPsd { .. }
            | Error::RankExceeded { .. }
            | Error::Numeric(_)
            | Error::EntryFailures(_) => ErrorCategory::Numeric,
        }
    }
}

use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid manifest: {0}")]
    InvalidManifest(String),

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("unknown sample id `{0}`")]
    UnknownId(String),

    #[error("inputs do not match: {0}")]
    Mismatch(String),

    #[error("infeasible request: {0}")]
    Infeasible(String),

    #[error("kept fraction is not monotone in t: f({t_lo}) = {f_lo} < f({t_hi}) = {f_hi}")]
    NonMonotone { t_lo: f64, f_lo: f64, t_hi: f64, f_hi: f64 },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for filesystem failures, false for validation failures.
    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io { .. })
    }
}

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("unknown key `{0}`")]
    UnknownKey(String),

    #[error("invalid `{path}`: {reason}")]
    Validation { path: String, reason: String },

    #[error("network is disconnected; components: {0:?}")]
    Disconnected(Vec<Vec<usize>>),

    #[error("jωI - A is numerically singular at ω = {omega} rad/s")]
    Singular { omega: f64 },

    #[error("step size {dt} s too large for this model; use dt <= {suggested} s")]
    StepTooLarge { dt: f64, suggested: f64 },

    #[error("eigenvalue iteration did not converge ({unconverged} eigenvalues left)")]
    EigenNoConvergence { unconverged: usize },

    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl Error {
    pub fn invalid(path: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Validation {
            path: path.into(),
            reason: reason.into(),
        }
    }

    /// True for errors caused by bad input rather than by the numerics.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Io { .. }
                | Error::Parse(_)
                | Error::UnknownKey(_)
                | Error::Validation { .. }
                | Error::Disconnected(_)
        )
    }
}

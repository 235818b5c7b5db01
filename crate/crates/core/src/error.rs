use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("certificate invalid: {0}")]
    CertificateInvalid(String),

    #[error("not strictly feasible: {0}")]
    NotStrictlyFeasible(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("numerical divergence at t = {t}")]
    Divergence { t: f64 },

    #[error("infeasible: {reason}")]
    Infeasible {
        reason: String,
        /// Best (least violated) combined margin seen during the search, if any.
        best_margin: Option<f64>,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn infeasible(reason: impl Into<String>, best_margin: Option<f64>) -> Self {
        Error::Infeasible {
            reason: reason.into(),
            best_margin,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

use ndarray::Array2;
use num_complex::Complex64;
use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// The free-space kernel is singular at zero separation.
    #[error("kernel diverges: {0}")]
    Divergence(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    /// LAPACK eigensolver failure; carries the offending matrix for inspection.
    #[error("eigensolver failed: {reason}")]
    EigenFailure {
        reason: String,
        matrix: Box<Array2<Complex64>>,
    },

    /// The steady-state linear system `(J - iΔ) b = d` has a (near) zero eigenvalue.
    #[error("singular steady-state system: coupling eigenvalue {eigenvalue} is resonant with the drive (|λ - iΔ| = {distance:e})")]
    Singular { eigenvalue: Complex64, distance: f64 },

    #[error("unsupported configuration: {0}")]
    Unsupported(String),

    #[error("capacity exceeded: {0}")]
    Capacity(String),

    #[error("ill-defined topology: band gap closes near k = ({kx:.6}, {ky:.6}) (gap {gap:e})")]
    IllDefinedTopology { kx: f64, ky: f64, gap: f64 },

    #[error("Lorentzian fit failed: {0}")]
    Fit(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// True for errors that come from the numerics rather than from bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Divergence(_)
                | Error::Numerical(_)
                | Error::EigenFailure { .. }
                | Error::Singular { .. }
                | Error::IllDefinedTopology { .. }
                | Error::Fit(_)
        )
    }
}

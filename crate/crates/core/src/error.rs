use thiserror::Error;

/// Errors raised by the simulator library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("basis too large: {what} has dimension {dimension}, limit is {limit}")]
    BasisTooLarge {
        what: String,
        dimension: u128,
        limit: u128,
    },

    #[error("degenerate density distribution: fewer than two modes are occupied")]
    DegenerateDensity,

    #[error("index out of range: {0}")]
    IndexOutOfRange(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("operator is not hermitian")]
    NotHermitian,

    #[error("operator order mismatch: expected {expected}, found {found}")]
    WrongOrder { expected: String, found: usize },

    #[error("additivity not guaranteed: two components share species distribution {0}")]
    AdditivityNotGuaranteed(String),

    #[error("an interacting hamiltonian was given to a non-interacting evolution path")]
    InteractingHamiltonian,

    #[error("krylov propagation did not converge (residual {residual:.3e})")]
    KrylovNotConverged { residual: f64 },

    #[error("quadrature did not converge (last change {change:.3e})")]
    QuadratureNotConverged { change: f64 },

    #[error("eigendecomposition failed")]
    EigenFailed,

    #[error("no interference contrast at site {site}")]
    NoInterferenceContrast { site: usize },

    #[error("state is not a probe configuration: {0}")]
    NotProbeConfiguration(String),

    #[error("hamiltonian is not species-blind (commutator residual {residual:.3e})")]
    NotSpeciesBlind { residual: f64 },

    #[error("time grid is not uniform")]
    NonUniformGrid,

    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    /// True for errors caused by a size or resource limit.
    pub fn is_resource_limit(&self) -> bool {
        matches!(self, Error::BasisTooLarge { .. })
    }

    /// True for errors raised by a numerical routine rather than by bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::KrylovNotConverged { .. }
                | Error::QuadratureNotConverged { .. }
                | Error::EigenFailed
                | Error::NoInterferenceContrast { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;

use thiserror::Error;

/// Errors raised by the tomography toolkit.
#[derive(Debug, Error)]
pub enum TomoError {
    #[error("basis is not unitary: max |U^dag U - I| = {deviation:e}")]
    NonUnitaryBasis { deviation: f64 },

    #[error("invalid spectrum: {0}")]
    BadSpectrum(String),

    #[error("invalid density matrix: {0}")]
    InvalidState(String),

    #[error("parameter index {index} out of range for chart with D = {len}")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("state left the chart's validity region: min eigenvalue {min_eigenvalue:e}")]
    NotPositive { min_eigenvalue: f64 },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("outcome probability {value:e} is negative beyond the clamping threshold")]
    NegativeProbability { value: f64 },

    #[error("Fisher matrix is singular: min eigenvalue {min_eigenvalue:e}")]
    SingularFisher { min_eigenvalue: f64 },

    #[error("spectrum has an eigenvalue {value:e} below 1e-12 inside the declared rank")]
    SingularSpectrum { value: f64 },

    #[error("rank {rank} too large to enumerate permutations (max 5)")]
    RankTooLarge { rank: usize },

    #[error("degenerate qubit setting: Fisher denominator {denominator:e} underflows")]
    DegenerateSetting { denominator: f64 },

    #[error("argument out of domain: {0}")]
    OutOfDomain(String),

    #[error("lambda2 = {lambda2:e} is in the near-pure regime where infidelity is linear")]
    PureStateRegime { lambda2: f64 },

    #[error("bad parameters: {0}")]
    BadParameters(String),

    #[error("state determinant {det:e} is not positive")]
    SingularState { det: f64 },

    #[error("required number of settings is unbounded")]
    Unbounded,

    #[error("maximum-likelihood iteration did not converge after {iterations} iterations")]
    NoConvergence { iterations: usize },

    #[error("counts inconsistent with design: {0}")]
    InconsistentCounts(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, TomoError>;

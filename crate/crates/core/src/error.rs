use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("covariance matrix is not symmetric (asymmetry {asymmetry:.3e})")]
    NonSymmetric { asymmetry: f64 },

    #[error("covariance matrix is not physical (worst eigenvalue {worst:.3e})")]
    NonPhysicalCovariance { worst: f64 },

    #[error("malformed input: {0}")]
    Shape(String),

    #[error("mode index {index} out of range for a {n_modes}-mode state")]
    BadModeIndex { index: usize, n_modes: usize },

    #[error("invalid channel: {}", .0.join("; "))]
    InvalidChannel(Vec<String>),

    #[error("probe has {found} modes but the channel acts on {expected}")]
    ModeMismatch { expected: usize, found: usize },

    #[error("state has a pure mode (resolvent norm {norm:.3e}); regularize the probe first")]
    SingularPureMode { norm: f64 },

    #[error("flattened tensor system is ill-conditioned (condition number {cond:.3e})")]
    IllConditioned { cond: f64 },

    #[error("complex contraction left an imaginary residue of {residue:.3e}")]
    ImaginaryResidue { residue: f64 },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("barrier solver stalled after {iterations} Newton steps (gap {gap:.3e})")]
    SolverStalled { iterations: usize, gap: f64 },

    /// A failure inside [`crate::metric::sample_and_solve`], with the rounds
    /// completed before it.
    #[error("sampling stopped in round {round}: {cause}")]
    SamplingFailed { round: usize, trace: Vec<crate::metric::TraceEntry>, cause: Box<Error> },

    /// Raised by [`crate::metric::SampleCache`] implementations.
    #[error("sample cache: {0}")]
    Cache(String),

    #[error("invalid resource split: {0}")]
    InvalidSplit(String),

    #[error("Fock cutoff too small (trace deficit {deficit:.3e} > {tolerance:.1e})")]
    CutoffTooSmall { deficit: f64, tolerance: f64 },

    #[error("integrator step size underflow at t = {t:.6}")]
    StiffnessFailure { t: f64 },
}

impl Error {
    /// Variant name, stable across message wording changes.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::NonSymmetric { .. } => "NonSymmetric",
            Error::NonPhysicalCovariance { .. } => "NonPhysicalCovariance",
            Error::Shape(_) => "Shape",
            Error::BadModeIndex { .. } => "BadModeIndex",
            Error::InvalidChannel(_) => "InvalidChannel",
            Error::ModeMismatch { .. } => "ModeMismatch",
            Error::SingularPureMode { .. } => "SingularPureMode",
            Error::IllConditioned { .. } => "IllConditioned",
            Error::ImaginaryResidue { .. } => "ImaginaryResidue",
            Error::DimensionMismatch { .. } => "DimensionMismatch",
            Error::SolverStalled { .. } => "SolverStalled",
            Error::SamplingFailed { .. } => "SamplingFailed",
            Error::Cache(_) => "Cache",
            Error::InvalidSplit(_) => "InvalidSplit",
            Error::CutoffTooSmall { .. } => "CutoffTooSmall",
            Error::StiffnessFailure { .. } => "StiffnessFailure",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

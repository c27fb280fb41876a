use thiserror::Error;

/// Errors produced anywhere in the pipeline.
#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("schema error at `{path}`: {message}")]
    Schema { path: String, message: String },

    #[error("unit error at `{path}`: {message}")]
    Unit { path: String, message: String },

    #[error("topology error: {0}")]
    Topology(String),

    #[error("generator dimension {dim} exceeds cap {cap}")]
    Capacity { dim: usize, cap: usize },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("step size underflow at t = {t} ns (h = {h:e})")]
    StepSizeUnderflow { t: f64, h: f64 },

    #[error("non-finite state encountered at t = {t} ns")]
    NonFinite { t: f64 },

    #[error("steady state not reached: component ({i},{j};N={n}) drifts by {drift:e}")]
    NotConverged { i: usize, j: usize, n: i32, drift: f64 },

    #[error("generator is defective or ill-conditioned (residual {residual:e})")]
    DefectiveGenerator { residual: f64 },

    #[error("Floquet matrix is defective or ill-conditioned ({check} residual {residual:e})")]
    DefectiveFloquetMatrix { check: &'static str, residual: f64 },

    #[error("dressed-state set failed its defectiveness checks: {0}")]
    DefectiveInput(String),

    #[error("linear system is numerically singular (condition estimate {cond:e})")]
    SingularSystem { cond: f64 },

    #[error("coherences are not at steady state")]
    NotSteady,

    #[error("1 + chi = {re} + {im}i lies on the branch cut of the square root")]
    BranchCut { re: f64, im: f64 },

    #[error("truncation schedule did not converge (last relative change {change:e})")]
    TruncationNotConverged { change: f64 },

    #[error("pure dephasing rates for source state {j} differ between B states; use a per-source Floquet matrix")]
    NonUniformDephasing { j: usize },

    #[error("eigendecomposition failed: {0}")]
    Eigen(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    /// Stable machine-readable tag for the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Schema { .. } => "SchemaError",
            Error::Unit { .. } => "UnitError",
            Error::Topology(_) => "TopologyError",
            Error::Capacity { .. } => "CapacityError",
            Error::DimensionMismatch { .. } => "DimensionMismatch",
            Error::StepSizeUnderflow { .. } => "StepSizeUnderflow",
            Error::NonFinite { .. } => "NonFinite",
            Error::NotConverged { .. } => "NotConverged",
            Error::DefectiveGenerator { .. } => "DefectiveGenerator",
            Error::DefectiveFloquetMatrix { .. } => "DefectiveFloquetMatrix",
            Error::DefectiveInput(_) => "DefectiveInput",
            Error::SingularSystem { .. } => "SingularSystem",
            Error::NotSteady => "NotSteady",
            Error::BranchCut { .. } => "BranchCut",
            Error::TruncationNotConverged { .. } => "TruncationNotConverged",
            Error::NonUniformDephasing { .. } => "NonUniformDephasing",
            Error::Eigen(_) => "EigenError",
            Error::InvalidArgument(_) => "InvalidArgument",
            Error::Io(_) => "IoError",
        }
    }

    pub(crate) fn schema(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Schema { path: path.into(), message: message.into() }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

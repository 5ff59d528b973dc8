use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("weight matrix is not of full row rank; the torus action is not effective")]
    IneffectiveAction,

    #[error("invalid point: {0}")]
    InvalidPoint(String),

    #[error("parse error at byte {position}: {message}")]
    Parse { position: usize, message: String },

    #[error("unknown variable `{0}` for this field")]
    UnknownVariable(String),

    #[error("derivative order must be 1 or 2, got {0}")]
    InvalidOrder(usize),

    #[error("potential is not torus invariant (max deviation {deviation:.3e})")]
    NonInvariantPotential { deviation: f64 },

    #[error("potential is degenerate: min eigenvalue of the complex Hessian is {min_eigenvalue:.3e}")]
    DegeneratePotential { min_eigenvalue: f64 },

    #[error("convex function is not strictly convex at mu = {at:?} (min Hessian eigenvalue {min_eigenvalue:.3e})")]
    NotConvex { at: Vec<f64>, min_eigenvalue: f64 },

    #[error("moment Jacobian A is singular (min eigenvalue {min_eigenvalue:.3e}); point is not regular")]
    SingularA { min_eigenvalue: f64 },

    #[error("frame of flowed differentials is degenerate (|det| = {det:.3e})")]
    DegenerateFrame { det: f64 },

    #[error("flowed point leaves the domain: {0}")]
    DomainEscape(String),

    #[error("sum is not direct: expected dimension {expected}, got {actual}")]
    RankMismatch { expected: usize, actual: usize },

    #[error("numerical rank is ambiguous: could be {low} or {high} (singular value {sigma:.3e})")]
    AmbiguousRank { low: usize, high: usize, sigma: f64 },

    #[error("unknown builtin scenario `{0}`")]
    UnknownScenario(String),
}

impl Error {
    /// Stable name of the error variant, for reports and exit messages.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::DimensionMismatch(_) => "DimensionMismatch",
            Error::IneffectiveAction => "IneffectiveAction",
            Error::InvalidPoint(_) => "InvalidPoint",
            Error::Parse { .. } => "ParseError",
            Error::UnknownVariable(_) => "UnknownVariable",
            Error::InvalidOrder(_) => "InvalidOrder",
            Error::NonInvariantPotential { .. } => "NonInvariantPotential",
            Error::DegeneratePotential { .. } => "DegeneratePotential",
            Error::NotConvex { .. } => "NotConvex",
            Error::SingularA { .. } => "SingularA",
            Error::DegenerateFrame { .. } => "DegenerateFrame",
            Error::DomainEscape(_) => "DomainEscape",
            Error::RankMismatch { .. } => "RankMismatch",
            Error::AmbiguousRank { .. } => "AmbiguousRank",
            Error::UnknownScenario(_) => "UnknownScenario",
        }
    }
}

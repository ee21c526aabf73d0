use thiserror::Error;

use crate::solvers::ConvergenceTrace;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    // measures
    #[error("points and weights have different lengths: {points} vs {weights}")]
    LengthMismatch { points: usize, weights: usize },
    #[error("measure has no atoms")]
    EmptySupport,
    #[error("weight {index} is negative or not finite: {value}")]
    NegativeWeight { index: usize, value: f64 },
    #[error("total mass is zero")]
    ZeroTotalMass,
    #[error("weights sum to {0}, expected 1 within 1e-9")]
    NotNormalized(f64),
    #[error("point {index} has dimension {found}, expected {expected}")]
    PointDimension {
        index: usize,
        expected: usize,
        found: usize,
    },
    #[error("point {0} has a non-finite coordinate")]
    NonFinitePoint(usize),
    #[error("density is zero on every cell")]
    AllZeroDensity,
    #[error("density is negative or not finite at cell {0}")]
    InvalidDensity(usize),
    #[error("invalid grid box: {0}")]
    InvalidBox(String),
    #[error("radius must be positive, got {0}")]
    NonpositiveRadius(f64),
    #[error("density bounds are required when P does not come from a grid")]
    MissingDensityBounds,
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    // costs
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("cost entry ({i}, {j}) is not finite")]
    NonFiniteCost { i: usize, j: usize },
    #[error("invalid modulus of continuity: {0}")]
    InvalidModulus(String),
    #[error("no radius r > 0 satisfies the modulus condition at eps = {0}")]
    ZeroRadius(f64),
    #[error("cost specification cannot be resolved: {0}")]
    UnresolvedCost(String),

    // dual / problem
    #[error("eps must be positive and finite, got {0}")]
    InvalidEps(f64),
    #[error("interpolation parameter {0} outside [0, 1]")]
    TOutOfRange(f64),
    #[error("coupling entry ({i}, {j}) lies on a cell with zero product weight")]
    ZeroWeightCell { i: usize, j: usize },

    // solvers
    #[error("step size {step} outside the admissible interval (0, {bound}) ({rule})")]
    StepSizeOutOfRange {
        step: f64,
        bound: f64,
        rule: &'static str,
    },
    #[error("step size is required for {0}")]
    MissingStepSize(&'static str),
    #[error("non-finite iterate at iteration {iteration}")]
    NonFiniteIterate {
        iteration: usize,
        trace: Box<ConvergenceTrace>,
    },
    #[error("all weights are zero in the scalar first-order equation")]
    ZeroWeights,
    #[error("reference potentials are required")]
    MissingReference,
    #[error("solver configuration mismatch: {0}")]
    AlgorithmMismatch(String),

    // constants
    #[error("instance carries no geometry constants")]
    MissingGeometry,
    #[error("atlas constant C_Omega must be >= 1, got {0}")]
    COmegaLessThanOne(f64),
    #[error("reference potentials are not optimal (FOC residual {residual:e} > {tol:e})")]
    ReferenceNotOptimal { residual: f64, tol: f64 },

    // spectral
    #[error("section parameter {0} outside [0, 1]")]
    ROutOfRange(f64),
    #[error("sample r = {r} outside [0, r0 = {r0}]")]
    RSampleOutOfRange { r: f64, r0: f64 },
    #[error("Gram matrix of the quotient space is singular")]
    SingularGram,

    // oracle
    #[error("instance too large for the brute-force oracle: n*m = {0} > 64")]
    InstanceTooLarge(usize),
    #[error("marginals are not probability vectors")]
    InfeasibleMarginals,

    // io
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error in {path}: {message}")]
    Parse { path: String, message: String },
}

impl Error {
    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    pub fn parse(path: impl AsRef<std::path::Path>, message: impl ToString) -> Self {
        Error::Parse {
            path: path.as_ref().display().to_string(),
            message: message.to_string(),
        }
    }
}

use thiserror::Error;

/// Errors shared across the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),

    #[error("epsilon {0} outside [0, {1}]")]
    EpsilonOutOfRange(f64, f64),

    #[error("Hormander failure: every frame determinant vanishes at the point")]
    HormanderFailure,

    #[error("non-finite state during flow integration")]
    NonFiniteState,

    #[error("resolution too coarse: spacing {h} exceeds {limit} for radius {r}")]
    ResolutionTooCoarse { h: f64, limit: f64, r: f64 },

    #[error("lattice disconnected: reached {reached} of {total} nodes (resolution too coarse to follow brackets, or rank-deficient frame)")]
    DisconnectedLattice { reached: usize, total: usize },

    #[error("ball of radius {r} escapes the box (min boundary distance {min_boundary})")]
    BallEscapesBox { r: f64, min_boundary: f64 },

    #[error("zero denominator: test function is constant on the large ball")]
    ConstantTestFunction,

    #[error("zero horizontal gradient")]
    ZeroGradient,

    #[error("theta {0} is not positive: exponents incompatible with the structure conditions")]
    ThetaNonPositive(f64),

    #[error("structure conditions violated: {}", .0.join("; "))]
    StructureViolation(Vec<String>),

    #[error("steklov window {h} is not a positive multiple of the time step {tau}")]
    SteklovWindow { h: f64, tau: f64 },

    #[error("CFL violation: tau {tau} exceeds {limit}")]
    CflViolation { tau: f64, limit: f64 },

    #[error("iteration failed to converge after {iters} iterations (residual {residual})")]
    NoConvergence { iters: usize, residual: f64 },

    #[error("flux coefficient {value} outside ellipticity window [{a}, {abar}]")]
    EllipticityViolation { value: f64, a: f64, abar: f64 },

    #[error("test function support violation: {0}")]
    SupportViolation(String),

    #[error("cylinder escapes the domain: {0}")]
    CylinderEscapesDomain(String),

    #[error("rho {rho} must be below 20R = {limit}")]
    RhoTooLarge { rho: f64, limit: f64 },

    #[error("empty node mask for region {0}")]
    EmptyMask(&'static str),

    #[error("negative solution value {value} inside the cylinder")]
    NegativeInsideCylinder { value: f64 },

    #[error("nonpositive value under the logarithm")]
    NonPositiveLog,

    #[error("parse error at position {pos}: {msg}")]
    Parse { pos: usize, msg: String },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

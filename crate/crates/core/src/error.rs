use thiserror::Error;

/// Crate-wide error type.  Construction errors are distinguished from solver
/// failures so that callers can map them to different exit codes.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid cone divisor: {0}")]
    InvalidDivisor(String),

    #[error("degenerate profile: {0}")]
    DegenerateProfile(String),

    #[error("unrealizable polygon angles: {0}")]
    UnrealizableAngles(String),

    #[error("triangle {tri} violates the triangle inequality: lengths ({a}, {b}, {c})")]
    TriangleInequality { tri: usize, a: f64, b: f64, c: f64 },

    #[error("mesh construction failed: {0}")]
    MeshConstruction(String),

    #[error("malformed mesh file at line {line}: {msg}")]
    MeshFormat { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("truncation level {k} resolves below the grid scale (radius {radius:.3e} < 2 * {spacing:.3e})")]
    TruncationTooFine { k: i32, radius: f64, spacing: f64 },

    #[error("conjugate gradient stalled after {iters} iterations (residual {residual:.3e}, diagonal spread {diag_ratio:.3e})")]
    CgStalled { iters: usize, residual: f64, diag_ratio: f64 },

    #[error("right-hand side is not mean-zero: weighted integral {integral:.3e} exceeds tolerance {tol:.3e}")]
    NotMeanZero { integral: f64, tol: f64 },

    #[error("implicit step unstable: 1 - dt*theta*b = {pivot:.3e} at node {node}; shrink dt")]
    ReactionTooStiff { node: usize, pivot: f64 },

    #[error("fixed-point iteration is not contracting on [0, {horizon}]: trailing gap ratios {ratios:?}")]
    NonContraction { horizon: f64, ratios: Vec<f64> },

    #[error("curvature blowup at t = {t}: sup|K| = {sup_k:.3e} exceeds threshold {threshold:.3e}")]
    Blowup { t: f64, sup_k: f64, threshold: f64 },

    #[error("time step collapsed to {dt:.3e} at t = {t}; the state is too rough to advance")]
    StepsizeCollapse { t: f64, dt: f64 },

    #[error("comparison ODE escapes to infinity near t = {t_escape}")]
    OdeBlowup { t_escape: f64 },

    #[error("non-finite value produced in {context}")]
    NonFinite { context: String },

    #[error("{0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// True for errors that indicate bad user input rather than a numerical
    /// failure at runtime.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::InvalidDivisor(_)
                | Error::DegenerateProfile(_)
                | Error::UnrealizableAngles(_)
                | Error::TriangleInequality { .. }
                | Error::MeshConstruction(_)
                | Error::MeshFormat { .. }
                | Error::TruncationTooFine { .. }
                | Error::InvalidArgument(_)
        )
    }
}

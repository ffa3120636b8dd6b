use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid mesh parameters: {0}")]
    InvalidMesh(String),

    #[error("point ({x}, {y}) lies outside the domain")]
    PointOutsideDomain { x: f64, y: f64 },

    #[error("lower bound {lower} is not below upper bound {upper} at vertex {vertex}")]
    CrossingBounds { vertex: usize, lower: f64, upper: f64 },

    #[error("edge {0} is a boundary edge; the stabilizer acts on interior edges only")]
    BoundaryEdge(usize),

    #[error("matrix is not positive definite (non-positive pivot at index {pivot})")]
    NotPositiveDefinite { pivot: usize },

    #[error("local matrix of subdomain {subdomain} is not positive definite (pivot {pivot})")]
    LocalNotPositiveDefinite { subdomain: usize, pivot: usize },

    #[error("conjugate gradient breakdown at iteration {iteration}: non-positive curvature {curvature:e}")]
    CgBreakdown { iteration: usize, curvature: f64 },

    #[error("active-set iteration did not converge in {max_iter} iterations; active set sizes (lower, upper): {history:?}")]
    ActiveSetMaxIter {
        max_iter: usize,
        history: Vec<(usize, usize)>,
    },

    #[error("infeasible box constraints: {0}")]
    InfeasibleBox(String),

    #[error("overlap {delta} is not a positive multiple of the mesh size {h}")]
    OverlapNotAligned { delta: f64, h: f64 },

    #[error("invalid partition: {0}")]
    InvalidPartition(String),

    #[error("expression error: {0}")]
    Expression(String),

    #[error("config error at line {line}: {message}")]
    Config { line: usize, message: String },

    #[error("negative tracking weight {value} at ({x}, {y})")]
    NegativeWeight { x: f64, y: f64, value: f64 },

    #[error("malformed polyline: {0}")]
    MalformedPolyline(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("sparse factorization failed: {0}")]
    Factorization(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

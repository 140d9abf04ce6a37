use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("boundary needs at least {min} nodes, got {got}")]
    TooFewNodes { got: usize, min: usize },

    #[error("boundary is not strictly convex: curvature {curvature:.3e} at node {node}")]
    NonConvex { node: usize, curvature: f64 },

    #[error("invalid boundary parameter: {0}")]
    InvalidBoundary(String),

    #[error("point ({x}, {y}) lies outside the domain")]
    OutsideDomain { x: f64, y: f64 },

    #[error("ray from ({x}, {y}) does not meet the boundary")]
    NoIntersection { x: f64, y: f64 },

    #[error("angular grid of {angles} samples cannot resolve {modes} modes (need at least {need})")]
    GridTooCoarse { angles: usize, modes: usize, need: usize },

    #[error("sequence entry {index} is negative ({value})")]
    NegativeEntry { index: usize, value: f64 },

    #[error("unknown phantom '{0}'")]
    UnknownPhantom(String),

    #[error("phantom support leaves the domain near ({x}, {y})")]
    SupportViolation { x: f64, y: f64 },

    #[error("point ({x}, {y}) is {distance:.3e} from the boundary, below margin {margin:.3e}")]
    TooCloseToBoundary { x: f64, y: f64, distance: f64, margin: f64 },

    #[error("samples do not vanish at the ends of the grid ({left:.3e}, {right:.3e})")]
    SupportTouchesEdge { left: f64, right: f64 },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("integrating factor has negative modes of size {max:.3e} (tolerance {tol:.1e})")]
    NonAnalyticFactor { max: f64, tol: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

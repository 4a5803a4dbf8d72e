use thiserror::Error;

/// Errors raised by the geometry, shooting, flow and construction layers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum LabError {
    #[error("curve has {found} nodes, at least {required} are required")]
    TooFewNodes { found: usize, required: usize },

    #[error("node {index} has r = {r}, profile must stay in the open half-plane r > 0")]
    NonPositiveRadius { index: usize, r: f64 },

    #[error("node {index} has r = {r} below the axis floor {floor}")]
    AxisContact { index: usize, r: f64, floor: f64 },

    #[error("profile self-intersects between segments {first} and {second}")]
    SelfIntersection { first: usize, second: usize },

    #[error("profile is traversed clockwise (signed area {signed_area})")]
    WrongOrientation { signed_area: f64 },

    #[error("non-finite coordinate at node {index}")]
    NonFinite { index: usize },

    #[error("offset {offset} exceeds focal distance {focal}")]
    FocalDistance { offset: f64, focal: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shooting failed: {0}")]
    Shooting(String),

    #[error("no sign change of the miss angle in bracket [{lo}, {hi}] (miss {miss_lo}, {miss_hi})")]
    NoSignChange {
        lo: f64,
        hi: f64,
        miss_lo: f64,
        miss_hi: f64,
    },

    #[error("perturbation index {i} is not shrinker mean convex (min residual {margin})")]
    NotMeanConvex { i: u32, margin: f64 },

    #[error("flow fault: {0}")]
    Flow(String),

    #[error("io error: {0}")]
    Io(String),

    #[error("format error: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, LabError>;

impl From<std::io::Error> for LabError {
    fn from(e: std::io::Error) -> Self {
        LabError::Io(e.to_string())
    }
}

impl From<serde_json::Error> for LabError {
    fn from(e: serde_json::Error) -> Self {
        LabError::Format(e.to_string())
    }
}

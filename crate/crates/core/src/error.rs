use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid radial grid: {0}")]
    InvalidGrid(String),
    #[error("mode functions live on different grids or angular truncations")]
    GridMismatch,
    #[error("{0} is not a shell boundary of the grid")]
    NotShellBoundary(f64),
    #[error("shell index {index} out of range 1..={count}")]
    ShellIndex { index: usize, count: usize },
    #[error("angular truncation l_max = {l_max} cannot hold angular momentum {needed}")]
    AngularTruncation { needed: usize, l_max: usize },
    #[error("invalid profile: {0}")]
    InvalidProfile(String),
    #[error("charges differ ({q1} vs {q2}); the difference is not square integrable")]
    ChargeMismatch { q1: f64, q2: f64 },
    #[error("dilation by {lambda} leaves the grid; support would need an infrared cutoff below {required:.3e}")]
    DilationOutOfRange { lambda: f64, required: f64 },
    #[error("invalid KPR configuration: {0}")]
    InvalidConfig(String),
    #[error("configuration is not KPR-like: {0}")]
    NotKprLike(String),
    #[error("test function support meets the closed cone")]
    SupportIntersectsCone,
    #[error("invalid cone: {0}")]
    InvalidCone(String),
}

pub type Result<T> = std::result::Result<T, Error>;

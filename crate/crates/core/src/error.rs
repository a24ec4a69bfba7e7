use thiserror::Error;

/// Errors raised by the estimator and its building blocks.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid timestamp {0}")]
    InvalidTimestamp(f64),
    #[error("invalid pose: quaternion must be finite and non-zero")]
    InvalidPose,
    #[error("time did not advance: dt = {dt}")]
    NonMonotonicTime { dt: f64 },
    #[error("time step {dt} s exceeds the {max} s limit")]
    DtTooLarge { dt: f64, max: f64 },
    #[error("scan from radar {scan} handed to extrinsics of radar {extrinsics}")]
    MismatchedRadarId { scan: u32, extrinsics: u32 },
    #[error("unknown radar id {0}")]
    UnknownRadar(u32),
    #[error("duplicate radar id {0} in rig")]
    DuplicateRadar(u32),
    #[error("only {found} targets, need at least {needed}")]
    InsufficientTargets { found: usize, needed: usize },
    #[error("degenerate target geometry (condition number {condition:e})")]
    DegenerateGeometry { condition: f64 },
    #[error("innovation covariance is singular (condition number {condition:e})")]
    SingularInnovationCovariance { condition: f64 },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid measurement: {0}")]
    InvalidMeasurement(String),
}

pub type Result<T> = std::result::Result<T, Error>;

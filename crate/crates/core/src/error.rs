use std::time::Duration;

/// Errors shared across the toolkit.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("bitstream length {len} is not a whole number of bytes")]
    NonByteAlignedLength { len: usize },

    #[error("bitstream lengths differ: sent {sent}, received {received}")]
    LengthMismatch { sent: usize, received: usize },

    #[error("trace contains no samples")]
    EmptyTrace,

    #[error("{what} must be positive, got {value}")]
    DomainError { what: &'static str, value: f64 },

    #[error("start epoch {start:?} already passed (now {now:?})")]
    MissedStartEpoch { start: Duration, now: Duration },

    #[error("no monotonic clock available")]
    ClockUnavailable,

    #[error("buffer allocation of {bytes} bytes failed")]
    AllocationFailure { bytes: usize },

    #[error("kernel backend unavailable: {0}")]
    BackendUnavailable(String),

    #[error("kernel failure: {0}")]
    KernelFailure(String),

    #[error("calibration failure: {0}")]
    CalibrationFailure(String),

    #[error("unknown actor `{0}`")]
    UnknownActor(String),

    #[error("unsupported schema version: found `{found}`, expected `{expected}`")]
    SchemaVersion { found: String, expected: String },

    #[error("config error at line {line}: {msg}")]
    Config { line: usize, msg: String },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

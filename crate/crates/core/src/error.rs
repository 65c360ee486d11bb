use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),

    #[error("bad magic bytes {0:?}, expected \"BPTT\"")]
    BadMagic([u8; 4]),

    #[error("unsupported tag file version {0}")]
    Version(u16),

    #[error("time tags not in (time, channel) order at index {index}")]
    NotMonotone { index: usize },

    #[error("tag {index} uses channel {channel} which has no label")]
    UnlabeledChannel { index: usize, channel: u8 },

    #[error("channel {0} carries a role that the file format cannot represent")]
    UnrepresentableLabel(u8),

    #[error("timestamp overflows 64-bit picoseconds")]
    Overflow,

    #[error("resolution mismatch: {0} ps vs {1} ps")]
    ResolutionMismatch(u32, u32),

    #[error("channel {0} is labeled differently in the two streams")]
    LabelConflict(u8),

    #[error("duplicate tag at time {time} on channel {channel}")]
    DuplicateTag { time: u64, channel: u8 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("no root: {0}")]
    NoRoot(String),

    #[error("channel {0} has no tags")]
    EmptyChannel(u8),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("degenerate histogram: {0}")]
    Degenerate(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}

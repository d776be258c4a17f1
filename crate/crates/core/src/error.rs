use thiserror::Error;

use crate::dealer::BundleId;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid fixed-point configuration: {0}")]
    Config(String),

    #[error("value {value} is outside the representable range (|v| < {limit})")]
    OutOfRange { value: f64, limit: f64 },

    #[error("dimension mismatch: {0}")]
    Shape(String),

    #[error("affine program is not linear in the shares: {0}")]
    NonLinear(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("peer disconnected")]
    Disconnected,

    #[error("protocol desynchronized: expected tag {expected}, received {received}")]
    TagMismatch { expected: u8, received: u8 },

    #[error("frame of {len} bytes exceeds the limit of {max} bytes")]
    FrameTooLarge { len: usize, max: usize },

    #[error("malformed frame: {0}")]
    Frame(String),

    #[error("invalid bit width {bits} for a {ell}-bit ring")]
    BitWidth { bits: u32, ell: u32 },

    #[error("input {x} is outside the {bits}-bit domain")]
    Domain { x: u64, bits: u32 },

    #[error("malformed interval: {0}")]
    Interval(String),

    #[error("key material does not belong to party {0}")]
    WrongParty(u8),

    #[error("correlated randomness for {0} was already consumed")]
    BundleReused(BundleId),

    #[error("wrong kind of preprocessing material: {0}")]
    WrongBundle(String),

    #[error("no preprocessing material left for {0}")]
    BundleExhausted(BundleId),

    #[error("serialization: {0}")]
    Codec(#[from] bincode::Error),

    #[error("dataset: {0}")]
    Dataset(String),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("unsupported: {0}")]
    Unsupported(String),
}

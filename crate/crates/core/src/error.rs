use alloc::string::String;
use alloc::vec::Vec;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("input too small: layer {layer} has stride {stride} but the image is {width}x{height}")]
    DegenerateLayer {
        layer: String,
        stride: usize,
        width: usize,
        height: usize,
    },
    #[error("pooling window at output ({row}, {col}) lies entirely in padding")]
    EmptyWindow { row: usize, col: usize },
    #[error("unknown layer {0}")]
    UnknownLayer(String),
    #[error("missing weights for layer {0}")]
    MissingWeights(String),
    #[error("bad magic")]
    BadMagic,
    #[error("unsupported format version {0}")]
    BadVersion(u32),
    #[error("descriptor mismatch: file hash {found:#018x}, expected {expected:#018x}")]
    DescriptorMismatch { expected: u64, found: u64 },
    #[error("truncated weight data")]
    Truncated,
    #[error("unknown image ids in detections: {0:?}")]
    UnknownImages(Vec<String>),
}

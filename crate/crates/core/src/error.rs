use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error(
        "invalid shape {nx}x{ny}x{nz}: every axis needs at least one voxel and positive spacing"
    )]
    InvalidShape { nx: usize, ny: usize, nz: usize },
    #[error("data length {actual} does not match shape volume {expected}")]
    DataLength { expected: usize, actual: usize },
    #[error("non-finite value at index {index}")]
    NonFinite { index: usize },
    #[error("label {label} at index {index} is not below the class count {num_classes}")]
    LabelOutOfRange {
        index: usize,
        label: u8,
        num_classes: usize,
    },
    #[error("class count {0} is outside 2..=256")]
    InvalidClassCount(usize),
    #[error("class {class} out of range for {num_classes} classes")]
    ClassOutOfRange { class: usize, num_classes: usize },
    #[error("volume shapes differ")]
    ShapeMismatch,
    #[error("class counts differ: {left} vs {right}")]
    ClassCountMismatch { left: usize, right: usize },
    #[error("empty foreground: distance undefined")]
    EmptyForeground,
    #[error("penalized loss requires a penalty map")]
    MissingPenalty,
    #[error("invalid parameter {name} = {value}")]
    InvalidParameter { name: &'static str, value: f64 },
    #[error("non-finite gradient in tensor {0}")]
    NonFiniteGradient(String),
    #[error("activation tape does not match the network or gradient")]
    TapeMismatch,
    #[error("loss diverged at iteration {iteration}")]
    Diverged { iteration: usize },
    #[error("phantom does not fit; need at least {min_nx}x{min_ny}x{min_nz}")]
    PhantomDoesNotFit {
        min_nx: usize,
        min_ny: usize,
        min_nz: usize,
    },
    #[error("empty dataset")]
    EmptyDataset,
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

use thiserror::Error;

/// Errors produced anywhere in the flow pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("value out of range: {0}")]
    ValueOutOfRange(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("non-finite score at index {index}")]
    NonFiniteScore { index: usize },

    #[error("refinement exhausted: step {step} >= configured steps {steps}")]
    IterationExhausted { step: usize, steps: usize },

    #[error("upsampling weights are not convex at full-res pixel {pixel}")]
    WeightNotConvex { pixel: usize },

    #[error("mask selects no pixels")]
    EmptyMask,

    #[error("prediction list is empty")]
    EmptyPredictions,

    #[error("no non-occluded pixels in ground truth")]
    NoNonOccludedPixels,

    #[error("bad .flo magic: {0}")]
    BadMagic(f32),

    #[error("truncated file: {0}")]
    Truncated(String),

    #[error("flow value {0} outside the representable KITTI range (|flow| < 512)")]
    OutOfRepresentableRange(f64),

    #[error("degenerate affine motion (determinant {0})")]
    DegenerateAffine(f64),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("image error: {0}")]
    Image(#[from] image::ImageError),
}

pub type Result<T> = std::result::Result<T, Error>;

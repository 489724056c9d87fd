use thiserror::Error;

/// Errors produced by the detection pipeline, the evaluator and the
/// synthetic generator.
#[derive(Debug, Error)]
pub enum Error {
    /// The pith must lie strictly inside the image so every ray has a
    /// positive length.
    #[error("pith ({cx}, {cy}) outside image of {width}x{height}")]
    PithOutOfBounds {
        cy: f64,
        cx: f64,
        height: u32,
        width: u32,
    },

    /// Parameter combination rejected before any processing.
    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    /// Input image or annotation rejected (wrong size, empty, malformed).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Ground-truth rings must be pairwise non-crossing for the influence
    /// partition to exist.
    #[error("ground-truth rings cross each other")]
    GtRingsCross,

    /// A ground-truth polygon must wind around the pith so every ray hits it.
    #[error("polygon does not enclose the pith (ray {ray} misses it)")]
    PolygonMissesPith { ray: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Image(#[from] image::ImageError),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

//! Delineation of annual rings on RGB images of tree cross-sections.
//!
//! The detector models a cross-section as a spider web centred on the pith:
//! `nr` evenly spaced rays shoot from the pith and every ring is a closed
//! curve crossing each ray exactly once. Processing stages:
//!
//! 1. [`preprocess`]: resize, grayscale conversion and local histogram
//!    equalization with background handling.
//! 2. [`devernay`]: subpixel edge detection (Gaussian smoothing, non-maximum
//!    suppression with parabolic correction, edge chaining, hysteresis).
//! 3. [`edge_filter`]: keeps edges whose gradient is nearly radial, and
//!    extracts the cross-section border as an extra curve.
//! 4. [`sampling`]: intersects curves with the rays, turning curves into
//!    chains of one-node-per-ray samples.
//! 5. [`chain_connect`]: merges chains that belong to the same ring over a
//!    fixed schedule of increasingly permissive parameter sets.
//! 6. [`postprocess`]: works region by region between already closed rings,
//!    splitting and reconnecting leftover chains and completing rings.
//!
//! [`pipeline`] wires the stages together, [`metrics`] scores detections
//! against ground truth via influence areas, [`synthetic`] renders seeded
//! wood-disk images with exact ground truth, and [`io`] covers annotation
//! JSON, overlays and report files.

pub mod chain_connect;
pub mod devernay;
pub mod edge_filter;
mod error;
pub mod geometry;
pub mod io;
pub mod metrics;
pub mod pipeline;
pub mod postprocess;
pub mod preprocess;
pub mod sampling;
pub mod synthetic;

pub use error::Error;

/// Result alias used across the crate.
pub type Result<T> = std::result::Result<T, Error>;

#[cfg(doctest)]
mod book {
    macro_rules! chapter {
        ($name:ident, $path:literal) => {
            #[doc = include_str!($path)]
            mod $name {}
        };
    }

    chapter!(spider_web, "../../../book/src/spider-web.md");
    chapter!(edges, "../../../book/src/edges.md");
    chapter!(chains_to_rings, "../../../book/src/chains-to-rings.md");
    chapter!(evaluation, "../../../book/src/evaluation.md");
    chapter!(synthetic_disks, "../../../book/src/synthetic-disks.md");
}

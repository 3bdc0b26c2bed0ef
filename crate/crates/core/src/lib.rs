//! Quantitative stenosis analysis on binary vessel masks.
//!
//! The pipeline thins a segmentation mask to its centerline
//! ([`skeleton::thin`]), splits the centerline into branches
//! ([`skeleton::trace_branches`]), measures the inscribed radius along each
//! branch ([`radius::profile_branch`]), and finds local narrowings
//! ([`stenosis::detect_all`]). [`metrics`] scores segmentations and detections,
//! and [`phantom`] builds synthetic masks with known answers.

pub mod error;
pub mod metrics;
pub mod phantom;
pub mod pipeline;
pub mod radius;
pub mod raster;
pub mod skeleton;
pub mod stenosis;

pub use error::{Error, Result};
pub use pipeline::{analyze, Analysis, PipelineConfig};
pub use raster::{load_mask, BinaryMask, PixelPoint, ProbMask};
pub use stenosis::{DetectorConfig, Grade, StenosisFinding};

//! obbkit: oriented bounding boxes with a head-tail keypoint loss.
//!
//! - [`geometry`]: box representations, conversions and exact rotated IoU.
//! - [`losses`]: head-tail loss, its four-point and width-extended variants,
//!   and analytic gradients.
//! - [`annotations`]: DOTA / HRSC parsers and the JSONL interchange format.
//! - [`metrics`]: greedy matching, PR curves, AP/mAP/AR.
//! - [`optim`]: gradient-descent box fitting and synthetic scenes.
//! - [`svg`]: standalone SVG renderings.

pub mod annotations;
pub mod geometry;
pub mod losses;
pub mod metrics;
pub mod optim;
pub mod svg;

pub use annotations::{AnnotationError, DatasetManifest, DetectionRecord, GroundTruthRecord};
pub use geometry::{GeometryError, ImageSize, KeypointBox, ObbParams, Point2, Quad};
pub use losses::{Branch, LossConfig, LossGradient, LossValue, LossVariant, Normalization, WidthTerm};
pub use metrics::{EvalReport, MetricsError};
pub use optim::{FitConfig, FitTrace, OptimError, SynthSpec};

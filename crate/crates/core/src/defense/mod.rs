//! Detection by re-attack cost, the comparison baselines, and the
//! detector-then-rectifier pipeline.

mod baselines;
mod detector;
mod pipeline;
mod rsv;
mod stats;

pub use baselines::{gaussian_blur, random_pixel_replacement};
pub(crate) use detector::costs_for;
pub use detector::{calibrate, detect_knn, detect_z, reattack_cost, CostCalibration, DetectionVerdict, DetectorConfig};
pub use pipeline::{defend, Defended};
pub use rsv::{rsv_noise, rsv_rectify, RsvVerdict, RSV_DEFAULT_K};
pub use stats::mann_whitney_less;

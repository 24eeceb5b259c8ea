//! Radar-to-LiDAR fusion and the center-based detection network.

mod decode;
mod detect;
mod encoder;
mod loss;
mod target;

pub use decode::{decode_detections, is_peak, DetectionBox};
pub use detect::{r2l_concat, DetectionHead, HeadOutputs, HEATMAP_CLAMP};
pub use encoder::{BevEncoder, ENCODER_CHANNELS};
pub use loss::{compute_loss, HeadGradients, LossBreakdown, LossWeights, FOCAL_ALPHA, FOCAL_BETA};
pub use target::{gaussian_radius, outputs_from_targets, render_targets, CenterTarget, Targets};

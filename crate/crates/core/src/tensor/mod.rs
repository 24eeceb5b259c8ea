//! Dense numeric substrate: feature maps, MLPs, 2D convolutions, max
//! reduction and a central-difference gradient checker.
//!
//! Everything is `f64`, immutable after construction and deterministic:
//! every reduction runs in a fixed order so identical inputs give
//! bit-identical outputs.

mod conv;
mod gradcheck;
mod init;
mod map;
mod mlp;
mod reduce;

pub use conv::{Conv2d, Conv2dGrads};
pub use gradcheck::{finite_diff_check, GradReport};
pub use init::{seeded_rng, uniform_fan_in};
pub use map::FeatureMap;
pub use mlp::{Dense, Mlp, MlpGrads, MlpTrace};
pub use reduce::{argmax_rows, max_reduce};

#[inline]
pub(crate) fn relu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        0.0
    }
}

//! Bi-directional LiDAR/Radar fusion for BEV 3D object detection.
//!
//! The crate is organised the same way data flows through a frame:
//!
//! * [`tensor`]: dense feature maps plus the three learnable layer kinds
//!   (MLP, 2D convolution, symmetric max reduction) with analytic gradients.
//! * [`scene`]: point-cloud data model, the `BLRF` binary format, sweep
//!   accumulation and a synthetic scene generator.
//! * [`grid`]: voxelization, pillarization and BEV collapse producing the
//!   LiDAR map `M_L` and the Radar map `M_R`.
//! * [`fusion`]: LiDAR-to-Radar fusion. Height queries (QHF) and BEV grid
//!   queries (QBF) lift every non-empty Radar cell to a 96-channel feature.
//! * [`head`]: Radar-to-LiDAR concatenation, the 512-channel BEV encoder,
//!   center heatmap heads, decoding and the joint loss.
//! * [`harness`]: configuration, end-to-end orchestration, evaluation and
//!   the property/oracle suite behind the `lrfuse check` command.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod fusion;
pub mod grid;
pub mod harness;
pub mod head;
pub mod scene;
pub mod tensor;

pub use error::{Error, Result};

//! Point clouds to BEV feature maps.
//!
//! LiDAR goes through [`voxelize`] → [`voxel_encode`] → [`zstack_collapse`]
//! to become `M_L`. Radar goes through [`pillarize`] to become `M_R`.
//! [`collapse_to_bev_grids`] re-bins encoded LiDAR voxels onto the coarser
//! Radar grid for BEV queries.

mod bev;
mod pillar;
mod spec;
mod voxel;

pub use bev::{collapse_to_bev_grids, BevGridIndex, BevGrids};
pub use pillar::{pillarize, radar_point_features, RadarBev};
pub use spec::GridSpec;
pub use voxel::{
    lidar_point_features, voxel_encode, voxelize, zstack_collapse, Voxel, VoxelKey, VoxelSet,
    LIDAR_POINT_FEATURES,
};

//! Point-cloud data model, synthetic scenes and the `BLRF` cloud format.

mod format;
mod generate;
mod sample;
mod sweeps;
mod types;

pub use format::{
    decode_cloud, encode_cloud, import_raw_lidar, load_cloud, read_cloud, read_cloud_json,
    write_cloud, write_cloud_json, FORMAT_VERSION, MAGIC,
};
pub use generate::{default_classes, generate_scene, ClassSpec, SceneParams};
pub use sample::{lidar_sample, radar_sample, LidarSampling, RadarSampling};
pub use sweeps::{accumulate_sweeps, generate_sweeps, PoseTransform, SweepSet, SweepSpec};
pub use types::{
    wrap_angle, Cloud, Extent, GroundTruthBox, LidarPoint, RadarCloud, RadarExtras, RadarPoint,
    RadarVariant, Scene,
};

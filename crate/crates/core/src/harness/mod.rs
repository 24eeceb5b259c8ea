//! Configuration, pipeline orchestration, evaluation, map dumps and the
//! oracle suite.

mod config;
mod eval;
mod mapfile;
mod model;
mod oracle;
mod pipeline;

pub use config::{
    ChannelWidths, Grids, PipelineConfig, QbfSettings, QhfSettings, Scale, SceneSettings,
    WeightInit, ENHANCED_CHANNELS, RADAR_CHANNELS,
};
pub use eval::{
    eval_detections, perfect_detections, ClassAp, EvalResult, DISTANCE_THRESHOLDS,
    VELOCITY_THRESHOLD,
};
pub use mapfile::{decode_map, encode_map, read_map, write_map, MAP_MAGIC};
pub use model::{Model, HEATMAP_PRIOR_BIAS, IDENTITY_GAIN, IDENTITY_OFFSET};
pub use oracle::{
    oracle_suite, property_registry, Fault, Property, PropertyReport, SuiteContext, SuiteReport,
    Tally,
};
pub use pipeline::{
    read_detections_jsonl, run_pipeline, simulate, simulate_scene, write_detections_jsonl, Frame,
    FusionStats, HeadStats, LidarStats, PipelineRun, PipelineStats, RadarStats,
};

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fusion::{neighborhood_registry, search_registry, segment_count};
use crate::grid::{GridSpec, LIDAR_POINT_FEATURES};
use crate::head::{LossWeights, ENCODER_CHANNELS};
use crate::scene::{Extent, LidarSampling, RadarVariant, SceneParams, SweepSpec};

/// Channels of `M_R`.
pub const RADAR_CHANNELS: usize = 32;
/// Channels of the enhanced Radar map.
pub const ENHANCED_CHANNELS: usize = 96;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    Desk,
    Paper,
}

impl std::str::FromStr for Scale {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "desk" => Ok(Scale::Desk),
            "paper" => Ok(Scale::Paper),
            other => Err(Error::config("scale", format!("unknown scale `{other}`"))),
        }
    }
}

/// How network weights are produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeightInit {
    /// Seeded fan-in uniform initialisation everywhere.
    Random,
    /// Hand-set weights that turn LiDAR column occupancy into a smoothed
    /// class-0 heatmap. Fusion MLPs stay random.
    IdentityLike,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QhfSettings {
    /// Radar BEV cell size.
    pub r: f64,
    /// Defaults to `r / 2`.
    pub ball_radius: Option<f64>,
    pub max_group: usize,
    pub psi_hidden: usize,
    pub psi_width: usize,
    pub eta_width: usize,
    /// Use the lowest LiDAR z of the frame instead of the range minimum.
    pub z_min_from_points: bool,
    /// Ball-query backend name.
    pub search: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QbfSettings {
    pub window: [usize; 2],
    pub max_group: usize,
    pub eta_width: usize,
    /// BEV neighbourhood name.
    pub distance_mode: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelWidths {
    /// Per-voxel feature width.
    pub voxel: usize,
    /// `M_L` channels.
    pub c1: usize,
    /// `M_R` channels.
    pub c2: usize,
    /// Output widths of the three encoder blocks; the last is 512.
    pub encoder: [usize; 3],
    /// Width of the two detection trunk blocks.
    pub trunk: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSettings {
    pub num_objects: usize,
    pub stationary_fraction: f64,
    pub extent_half: f64,
    pub lidar: LidarSampling,
    pub radar_returns: [usize; 2],
    pub sweeps: SweepSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub range_min: [f64; 3],
    pub range_max: [f64; 3],
    pub lidar_cell: [f64; 3],
    /// LiDAR voxels are merged `bev_stride x bev_stride` before `M_L` is built.
    pub bev_stride: usize,
    pub radar_cell: [f64; 2],
    pub max_points_per_voxel: usize,
    pub max_points_per_pillar: usize,
    pub radar_variant: RadarVariant,
    pub qhf: QhfSettings,
    pub qbf: QbfSettings,
    pub channels: ChannelWidths,
    pub num_classes: usize,
    pub score_thresh: f64,
    pub max_dets: usize,
    pub loss_weights: LossWeights,
    pub weights: WeightInit,
    pub weight_seed: u64,
    pub scene: SceneSettings,
}

/// Derived grids of a validated config.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grids {
    pub lidar: GridSpec,
    /// LiDAR BEV grid of `M_L` and the detection maps.
    pub bev: GridSpec,
    pub radar: GridSpec,
    /// LiDAR BEV cells per Radar cell along each axis.
    pub radar_ratio: usize,
}

impl PipelineConfig {
    /// ±16 m, 0.25 m LiDAR cells, 1 m Radar cells, 0.5 m detection maps.
    pub fn desk() -> Self {
        Self {
            range_min: [-16.0, -16.0, -5.0],
            range_max: [16.0, 16.0, 3.0],
            lidar_cell: [0.25, 0.25, 0.2],
            bev_stride: 2,
            radar_cell: [1.0, 1.0],
            max_points_per_voxel: 10,
            max_points_per_pillar: 10,
            radar_variant: RadarVariant::A,
            qhf: QhfSettings {
                r: 1.0,
                ball_radius: None,
                max_group: 16,
                psi_hidden: 16,
                psi_width: 16,
                eta_width: 32,
                z_min_from_points: false,
                search: "hash-grid".into(),
            },
            qbf: QbfSettings {
                window: [2, 2],
                max_group: 16,
                eta_width: 32,
                distance_mode: "window".into(),
            },
            channels: ChannelWidths {
                voxel: LIDAR_POINT_FEATURES,
                c1: 64,
                c2: RADAR_CHANNELS,
                encoder: [64, 64, ENCODER_CHANNELS],
                trunk: 32,
            },
            num_classes: 2,
            score_thresh: 0.3,
            max_dets: 100,
            loss_weights: LossWeights::default(),
            weights: WeightInit::Random,
            weight_seed: 0,
            scene: SceneSettings {
                num_objects: 5,
                stationary_fraction: 0.3,
                extent_half: 14.0,
                lidar: LidarSampling::default(),
                radar_returns: [1, 3],
                sweeps: SweepSpec::default(),
            },
        }
    }

    /// nuScenes-like resolutions: ±54 m, 0.075 m LiDAR cells, 0.6 m Radar
    /// cells, 0.6 m detection maps.
    pub fn paper() -> Self {
        let mut cfg = Self::desk();
        cfg.range_min = [-54.0, -54.0, -5.0];
        cfg.range_max = [54.0, 54.0, 3.0];
        cfg.lidar_cell = [0.075, 0.075, 0.2];
        cfg.bev_stride = 8;
        cfg.radar_cell = [0.6, 0.6];
        cfg.qhf.r = 0.6;
        cfg.channels.c1 = 256;
        cfg.channels.encoder = [256, 256, ENCODER_CHANNELS];
        cfg.channels.trunk = 64;
        cfg.scene.extent_half = 50.0;
        cfg.scene.num_objects = 20;
        cfg
    }

    /// Small ±4 m configuration for fast property runs. Channel contracts
    /// are the same as at the other scales.
    pub fn tiny() -> Self {
        let mut cfg = Self::desk();
        cfg.range_min = [-4.0, -4.0, -3.0];
        cfg.range_max = [4.0, 4.0, 3.0];
        cfg.lidar_cell = [0.5, 0.5, 0.5];
        cfg.bev_stride = 2;
        cfg.radar_cell = [1.0, 1.0];
        cfg.qhf.r = 1.0;
        cfg.qhf.psi_hidden = 8;
        cfg.qhf.psi_width = 8;
        cfg.channels.c1 = 8;
        cfg.channels.encoder = [4, 4, ENCODER_CHANNELS];
        cfg.channels.trunk = 4;
        cfg.scene.num_objects = 2;
        cfg.scene.extent_half = 5.0;
        cfg.scene.lidar.density = 10.0;
        cfg.scene.sweeps.lidar_sweeps = 2;
        cfg.scene.sweeps.radar_sweeps = 2;
        cfg
    }

    pub fn for_scale(scale: Scale) -> Self {
        match scale {
            Scale::Desk => Self::desk(),
            Scale::Paper => Self::paper(),
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: Self = serde_json::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Pillar height: the LiDAR z extent.
    pub fn pillar_height(&self) -> f64 {
        self.range_max[2] - self.range_min[2]
    }

    pub fn num_segments(&self) -> usize {
        segment_count(self.pillar_height(), self.qhf.r)
    }

    pub fn effective_ball_radius(&self) -> f64 {
        self.qhf.ball_radius.unwrap_or(self.qhf.r / 2.0)
    }

    pub fn scene_params(&self) -> SceneParams {
        SceneParams {
            num_objects: self.scene.num_objects,
            extent: Extent::symmetric(self.scene.extent_half),
            stationary_fraction: self.scene.stationary_fraction,
            ..SceneParams::default()
        }
    }

    /// Builds the grids, reporting the offending field when the ranges and
    /// cells do not line up.
    pub fn grids(&self) -> Result<Grids> {
        let lidar = GridSpec::from_range(self.range_min, self.range_max, self.lidar_cell)
            .map_err(|e| retag(e, "lidar_cell"))?;
        let bev = lidar
            .coarsened(self.bev_stride)
            .map_err(|e| retag(e, "bev_stride"))?;
        let radar = GridSpec::from_range(
            self.range_min,
            self.range_max,
            [self.radar_cell[0], self.radar_cell[1], self.pillar_height()],
        )
        .map_err(|e| retag(e, "radar_cell"))?;
        let radar_ratio = bev
            .bev_ratio_to(&radar)
            .map_err(|e| retag(e, "radar_cell"))?;
        Ok(Grids {
            lidar,
            bev,
            radar,
            radar_ratio,
        })
    }

    /// Checks every cross-field invariant. Errors name the offending field.
    pub fn validate(&self) -> Result<()> {
        for a in 0..3 {
            if !(self.range_max[a] > self.range_min[a]) {
                return Err(Error::config(
                    "range_max",
                    format!("axis {a} must exceed range_min"),
                ));
            }
            if !(self.lidar_cell[a] > 0.0) {
                return Err(Error::config("lidar_cell", "cells must be > 0"));
            }
        }
        if !(self.qhf.r > 0.0) {
            return Err(Error::config("qhf.r", "must be > 0"));
        }
        if self.radar_cell[0] != self.qhf.r || self.radar_cell[1] != self.qhf.r {
            return Err(Error::config(
                "radar_cell",
                format!(
                    "radar cell {:?} must equal qhf.r = {} on both axes",
                    self.radar_cell, self.qhf.r
                ),
            ));
        }
        if let Some(b) = self.qhf.ball_radius {
            if !(b > 0.0) {
                return Err(Error::config("qhf.ball_radius", "must be > 0"));
            }
        }
        if self.channels.encoder[2] != ENCODER_CHANNELS {
            return Err(Error::config(
                "channels.encoder",
                format!(
                    "last block must output {ENCODER_CHANNELS}, got {}",
                    self.channels.encoder[2]
                ),
            ));
        }
        if self.channels.c2 != RADAR_CHANNELS {
            return Err(Error::config(
                "channels.c2",
                format!(
                    "M_R must have {RADAR_CHANNELS} channels, got {}",
                    self.channels.c2
                ),
            ));
        }
        let enhanced = self.channels.c2 + self.qhf.eta_width + self.qbf.eta_width;
        if enhanced != ENHANCED_CHANNELS {
            return Err(Error::config(
                "qhf.eta_width",
                format!(
                    "c2 + qhf.eta_width + qbf.eta_width must be {ENHANCED_CHANNELS}, got {enhanced}"
                ),
            ));
        }
        for (field, v) in [
            ("channels.voxel", self.channels.voxel),
            ("channels.c1", self.channels.c1),
            (
                "channels.encoder",
                self.channels.encoder[0].min(self.channels.encoder[1]),
            ),
            ("channels.trunk", self.channels.trunk),
            ("qhf.psi_hidden", self.qhf.psi_hidden),
            ("qhf.psi_width", self.qhf.psi_width),
            ("qhf.max_group", self.qhf.max_group),
            ("qbf.max_group", self.qbf.max_group),
            ("max_points_per_voxel", self.max_points_per_voxel),
            ("max_points_per_pillar", self.max_points_per_pillar),
            ("num_classes", self.num_classes),
        ] {
            if v == 0 {
                return Err(Error::config(field, "must be >= 1"));
            }
        }
        if !(self.score_thresh > 0.0 && self.score_thresh < 1.0) {
            return Err(Error::config("score_thresh", "must lie in (0, 1)"));
        }
        if self.scene.radar_returns[0] > self.scene.radar_returns[1] {
            return Err(Error::config("scene.radar_returns", "min exceeds max"));
        }
        search_registry().get(&self.qhf.search)?;
        neighborhood_registry().get(&self.qbf.distance_mode)?;
        self.grids()?;
        Ok(())
    }
}

fn retag(e: Error, field: &str) -> Error {
    match e {
        Error::Config { message, .. } => Error::config(field, message),
        other => Error::config(field, other.to_string()),
    }
}

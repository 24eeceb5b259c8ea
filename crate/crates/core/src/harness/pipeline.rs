use std::collections::BTreeMap;
use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result, StageExt};
use crate::fusion::{L2rStats, PseudoFeature};
use crate::grid::{collapse_to_bev_grids, pillarize, voxel_encode, voxelize, zstack_collapse};
use crate::harness::config::{PipelineConfig, ENHANCED_CHANNELS, RADAR_CHANNELS};
use crate::harness::model::Model;
use crate::head::{decode_detections, r2l_concat, DetectionBox, HeadOutputs, ENCODER_CHANNELS};
use crate::scene::{generate_scene, generate_sweeps, LidarPoint, RadarCloud, RadarSampling, Scene};
use crate::tensor::FeatureMap;

/// One synthetic keyframe with accumulated sweeps.
#[derive(Debug, Clone)]
pub struct Frame {
    pub scene: Scene,
    pub lidar: Vec<LidarPoint>,
    pub radar: RadarCloud,
}

/// Generates a scene and its accumulated LiDAR and Radar sweeps.
pub fn simulate(cfg: &PipelineConfig, seed: u64) -> Result<Frame> {
    let scene = generate_scene(&cfg.scene_params(), seed).stage("scene")?;
    simulate_scene(cfg, scene, seed)
}

/// Samples sweeps of a given scene.
pub fn simulate_scene(cfg: &PipelineConfig, scene: Scene, seed: u64) -> Result<Frame> {
    let radar_cfg = RadarSampling {
        returns_min: cfg.scene.radar_returns[0],
        returns_max: cfg.scene.radar_returns[1],
        variant: cfg.radar_variant,
        ..RadarSampling::default()
    };
    let sweeps = &cfg.scene.sweeps;
    let set = generate_sweeps(&scene, sweeps, &cfg.scene.lidar, &radar_cfg, seed).stage("scene")?;
    Ok(Frame {
        lidar: set.accumulate_lidar(sweeps.lidar_sweeps).stage("scene")?,
        radar: set.accumulate_radar(sweeps.radar_sweeps).stage("scene")?,
        scene,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LidarStats {
    pub points: usize,
    pub dropped: usize,
    pub truncated: usize,
    pub voxels: usize,
    pub bev_cells: usize,
    pub radar_grid_cells: usize,
    pub m_l: [usize; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RadarStats {
    pub points: usize,
    pub dropped: usize,
    pub pillars: usize,
    pub nonzero_cells: usize,
    pub m_r: [usize; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FusionStats {
    #[serde(flatten)]
    pub queries: L2rStats,
    pub pseudo_features: usize,
    pub enhanced_nonzero_cells: usize,
    pub query_hit_rate: f64,
    pub bev_hit_rate: f64,
    pub enhanced: [usize; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HeadStats {
    pub fused: [usize; 3],
    pub encoded: [usize; 3],
    pub heatmap: [usize; 3],
    pub detections: usize,
}

/// Per-stage statistics, one JSON object per stage.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PipelineStats {
    pub lidar: LidarStats,
    pub radar: RadarStats,
    pub l2r: FusionStats,
    pub r2l: HeadStats,
}

#[derive(Debug, Clone)]
pub struct PipelineRun {
    pub detections: Vec<DetectionBox>,
    pub stats: PipelineStats,
    pub pseudo: Vec<PseudoFeature>,
    /// Intermediate maps by name: `m_l`, `m_r`, `enhanced`, `fused`,
    /// `encoded`, `heatmap`.
    pub maps: BTreeMap<String, FeatureMap>,
    pub outputs: HeadOutputs,
}

fn expect_channels(stage: &'static str, what: &str, map: &FeatureMap, want: usize) -> Result<()> {
    if map.channels() != want {
        return Err(Error::shape(format!(
            "{what} has {} channels, expected {want}",
            map.channels()
        ))
        .in_stage(stage));
    }
    Ok(())
}

fn rate(hit: usize, total: usize) -> f64 {
    if total == 0 {
        0.0
    } else {
        hit as f64 / total as f64
    }
}

/// Runs encode, LiDAR-to-Radar fusion, Radar-to-LiDAR fusion and detection
/// on one frame. Channel and sparsity contracts are checked on every run.
pub fn run_pipeline(
    cfg: &PipelineConfig,
    model: &Model,
    lidar: &[LidarPoint],
    radar: &RadarCloud,
) -> Result<PipelineRun> {
    let grids = cfg.grids().stage("config")?;
    let ch = &cfg.channels;

    let voxels = voxelize(lidar, &grids.lidar, cfg.max_points_per_voxel).stage("voxelize")?;
    let encoded = voxel_encode(&voxels, &model.voxel_mlp).stage("voxel-encode")?;
    let coarse = encoded.coarsen(cfg.bev_stride).stage("lidar-bev")?;
    let m_l = zstack_collapse(&coarse, ch.c1, &model.zstack_mlp).stage("lidar-bev")?;
    if m_l.shape() != [ch.c1, grids.bev.ny(), grids.bev.nx()] {
        return Err(Error::shape(format!("M_L is {:?}", m_l.shape())).in_stage("lidar-bev"));
    }
    let lidar_grids = collapse_to_bev_grids(&encoded, &grids.radar).stage("lidar-bev")?;

    let radar_bev = pillarize(
        radar,
        &grids.radar,
        &model.pillar_mlp,
        ch.c2,
        cfg.max_points_per_pillar,
    )
    .stage("pillarize")?;
    expect_channels("pillarize", "M_R", &radar_bev.map, RADAR_CHANNELS)?;
    let m_r_nonzero = radar_bev.map.count_nonzero_cells();
    if m_r_nonzero != radar_bev.occupied.len() {
        return Err(Error::shape(format!(
            "{m_r_nonzero} non-zero M_R cells for {} occupied pillars",
            radar_bev.occupied.len()
        ))
        .in_stage("pillarize"));
    }

    let l2r_owned;
    let l2r = if cfg.qhf.z_min_from_points && !lidar.is_empty() {
        let mut f = model.l2r.clone();
        f.qhf.z_min = lidar
            .iter()
            .map(|p| p.z as f64)
            .fold(f64::INFINITY, f64::min);
        l2r_owned = f;
        &l2r_owned
    } else {
        &model.l2r
    };
    let fused_l2r = l2r
        .fuse(
            &radar_bev.map,
            &radar_bev.occupied,
            &grids.radar,
            lidar,
            &lidar_grids,
        )
        .stage("l2r")?;
    expect_channels(
        "l2r",
        "enhanced radar map",
        &fused_l2r.enhanced,
        ENHANCED_CHANNELS,
    )?;
    let enhanced_nonzero = fused_l2r.enhanced.count_nonzero_cells();
    if enhanced_nonzero != radar_bev.occupied.len()
        || fused_l2r.pseudo.len() != radar_bev.occupied.len()
    {
        return Err(Error::shape(format!(
            "{enhanced_nonzero} enhanced cells and {} pseudo features for {} pillars",
            fused_l2r.pseudo.len(),
            radar_bev.occupied.len()
        ))
        .in_stage("l2r"));
    }

    let fused = r2l_concat(&m_l, &fused_l2r.enhanced).stage("r2l")?;
    expect_channels("r2l", "fused map", &fused, ch.c1 + ENHANCED_CHANNELS)?;
    let encoded_map = model.encoder.forward(&fused).stage("encoder")?;
    expect_channels("encoder", "encoder output", &encoded_map, ENCODER_CHANNELS)?;
    let outputs = model.head.forward(&encoded_map).stage("head")?;
    let detections = decode_detections(&outputs, &grids.bev, cfg.score_thresh, cfg.max_dets);

    let q = fused_l2r.stats.clone();
    let stats = PipelineStats {
        lidar: LidarStats {
            points: lidar.len(),
            dropped: voxels.dropped,
            truncated: voxels.truncated,
            voxels: voxels.voxels.len(),
            bev_cells: m_l.count_nonzero_cells(),
            radar_grid_cells: lidar_grids.len(),
            m_l: m_l.shape(),
        },
        radar: RadarStats {
            points: radar.len(),
            dropped: radar_bev.dropped,
            pillars: radar_bev.occupied.len(),
            nonzero_cells: m_r_nonzero,
            m_r: radar_bev.map.shape(),
        },
        l2r: FusionStats {
            pseudo_features: fused_l2r.pseudo.len(),
            enhanced_nonzero_cells: enhanced_nonzero,
            query_hit_rate: rate(q.query_points_hit, q.query_points),
            bev_hit_rate: rate(q.bev_queries_hit, q.radar_cells),
            enhanced: fused_l2r.enhanced.shape(),
            queries: q,
        },
        r2l: HeadStats {
            fused: fused.shape(),
            encoded: encoded_map.shape(),
            heatmap: outputs.heatmap.shape(),
            detections: detections.len(),
        },
    };
    let mut maps = BTreeMap::new();
    maps.insert("m_l".to_string(), m_l);
    maps.insert("m_r".to_string(), radar_bev.map);
    maps.insert("enhanced".to_string(), fused_l2r.enhanced);
    maps.insert("fused".to_string(), fused);
    maps.insert("encoded".to_string(), encoded_map);
    maps.insert("heatmap".to_string(), outputs.heatmap.clone());
    Ok(PipelineRun {
        detections,
        stats,
        pseudo: fused_l2r.pseudo,
        maps,
        outputs,
    })
}

/// One JSON object per line.
pub fn write_detections_jsonl(dets: &[DetectionBox], mut out: impl Write) -> Result<()> {
    for d in dets {
        serde_json::to_writer(&mut out, d)?;
        out.write_all(b"\n")
            .map_err(|e| Error::io("<detections>", e))?;
    }
    Ok(())
}

pub fn read_detections_jsonl(text: &str) -> Result<Vec<DetectionBox>> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| Ok(serde_json::from_str(l)?))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::RadarVariant;

    #[test]
    fn empty_frame_runs_with_all_shapes() {
        let cfg = PipelineConfig::tiny();
        let model = Model::build(&cfg).unwrap();
        let run = run_pipeline(&cfg, &model, &[], &RadarCloud::empty(RadarVariant::A)).unwrap();
        assert_eq!(run.stats.radar.m_r[0], 32);
        assert_eq!(run.stats.l2r.enhanced[0], 96);
        assert_eq!(run.stats.r2l.fused[0], cfg.channels.c1 + 96);
        assert_eq!(run.stats.r2l.encoded[0], 512);
        assert_eq!(run.stats.l2r.pseudo_features, 0);
    }

    #[test]
    fn stats_link_pillars_and_pseudo_features() {
        let cfg = PipelineConfig::tiny();
        let model = Model::build(&cfg).unwrap();
        let frame = simulate(&cfg, 3).unwrap();
        let run = run_pipeline(&cfg, &model, &frame.lidar, &frame.radar).unwrap();
        assert!(run.stats.radar.pillars > 0);
        assert_eq!(run.stats.l2r.pseudo_features, run.stats.radar.nonzero_cells);
        assert_eq!(
            run.stats.l2r.enhanced_nonzero_cells,
            run.stats.radar.pillars
        );
    }

    #[test]
    fn same_seed_same_detection_bytes() {
        let cfg = PipelineConfig::tiny();
        let bytes = || {
            let model = Model::build(&cfg).unwrap();
            let frame = simulate(&cfg, 11).unwrap();
            let run = run_pipeline(&cfg, &model, &frame.lidar, &frame.radar).unwrap();
            let mut buf = Vec::new();
            write_detections_jsonl(&run.detections, &mut buf).unwrap();
            buf
        };
        assert_eq!(bytes(), bytes());
    }

    #[test]
    fn wrong_radar_variant_tagged_with_stage() {
        let cfg = PipelineConfig::tiny();
        let model = Model::build(&cfg).unwrap();
        let err = run_pipeline(&cfg, &model, &[], &RadarCloud::empty(RadarVariant::B)).unwrap_err();
        assert!(matches!(
            err,
            Error::Stage {
                stage: "pillarize",
                ..
            }
        ));
    }
}

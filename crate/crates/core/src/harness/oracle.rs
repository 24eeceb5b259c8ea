use std::collections::BTreeSet;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fusion::{
    bev_query, neighborhood_registry, qhf_fuse, search_registry, segment_count,
    segment_query_points, QhfConfig, Registry, PSI_INPUTS,
};
use crate::grid::{
    collapse_to_bev_grids, pillarize, voxel_encode, voxelize, BevGridIndex, BevGrids, GridSpec,
    LIDAR_POINT_FEATURES,
};
use crate::harness::config::PipelineConfig;
use crate::harness::eval::{eval_detections, perfect_detections};
use crate::harness::mapfile::encode_map;
use crate::harness::model::Model;
use crate::harness::pipeline::{run_pipeline, simulate, write_detections_jsonl};
use crate::head::{
    compute_loss, decode_detections, outputs_from_targets, render_targets, HeadOutputs, LossWeights,
};
use crate::scene::{
    decode_cloud, encode_cloud, generate_scene, generate_sweeps, lidar_sample, radar_sample,
    wrap_angle, Cloud, Extent, LidarPoint, LidarSampling, RadarCloud, RadarExtras, RadarPoint,
    RadarSampling, RadarVariant, SceneParams, SweepSpec,
};
use crate::tensor::{finite_diff_check, max_reduce, seeded_rng, Conv2d, FeatureMap, Mlp};

/// Test-only fault injections.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Fault {
    /// Query balls get radius `r` instead of `r / 2`.
    BallRadiusAsR,
}

impl std::str::FromStr for Fault {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ball-radius-as-r" => Ok(Fault::BallRadiusAsR),
            other => Err(Error::config(
                "fault",
                format!("unknown fault `{other}`; known: ball-radius-as-r"),
            )),
        }
    }
}

impl Fault {
    pub fn apply(self, cfg: &mut PipelineConfig) {
        match self {
            Fault::BallRadiusAsR => cfg.qhf.ball_radius = Some(cfg.qhf.r),
        }
    }
}

pub struct SuiteContext {
    /// Random instances per property.
    pub seeds: usize,
    pub fault: Option<Fault>,
}

impl SuiteContext {
    fn config(&self) -> PipelineConfig {
        let mut cfg = PipelineConfig::tiny();
        if let Some(f) = self.fault {
            f.apply(&mut cfg);
        }
        cfg
    }

    fn ball_radius(&self, r: f64) -> f64 {
        match self.fault {
            Some(Fault::BallRadiusAsR) => r,
            None => r / 2.0,
        }
    }
}

/// Case counts for one property. `min_pass_fraction` below 1 allows a
/// statistical property to tolerate rare misses.
#[derive(Debug, Clone, Default)]
pub struct Tally {
    pub cases: usize,
    pub failures: usize,
    pub first_failure: Option<String>,
    pub min_pass_fraction: Option<f64>,
}

impl Tally {
    fn case(&mut self, ok: bool, detail: impl FnOnce() -> String) {
        self.cases += 1;
        if !ok {
            self.failures += 1;
            if self.first_failure.is_none() {
                self.first_failure = Some(detail());
            }
        }
    }

    fn passed(&self) -> bool {
        match self.min_pass_fraction {
            Some(f) => {
                self.cases > 0 && (self.cases - self.failures) as f64 >= f * self.cases as f64
            }
            None => self.failures == 0 && self.cases > 0,
        }
    }
}

/// A named invariant with its own oracle.
pub trait Property: Send + Sync {
    fn name(&self) -> &'static str;
    fn module(&self) -> &'static str;
    fn check(&self, ctx: &SuiteContext) -> Result<Tally>;
}

struct FnProperty {
    name: &'static str,
    module: &'static str,
    run: fn(&SuiteContext) -> Result<Tally>,
}

impl Property for FnProperty {
    fn name(&self) -> &'static str {
        self.name
    }

    fn module(&self) -> &'static str {
        self.module
    }

    fn check(&self, ctx: &SuiteContext) -> Result<Tally> {
        (self.run)(ctx)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PropertyReport {
    pub name: String,
    pub module: String,
    pub cases: usize,
    pub failures: usize,
    pub passed: bool,
    pub detail: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteReport {
    pub seeds: usize,
    pub fault: Option<Fault>,
    /// Sorted by property name.
    pub properties: Vec<PropertyReport>,
    pub passed: bool,
}

pub fn property_registry() -> Registry<dyn Property> {
    let mut r: Registry<dyn Property> = Registry::new("property");
    let table: [(
        &'static str,
        &'static str,
        fn(&SuiteContext) -> Result<Tally>,
    ); 28] = [
        (
            "tensor.max_reduce_permutation",
            "tensor-core",
            max_reduce_permutation,
        ),
        ("tensor.conv_identity", "tensor-core", conv_identity),
        ("tensor.mlp_gradient", "tensor-core", mlp_gradient),
        ("tensor.conv_gradient", "tensor-core", conv_gradient),
        (
            "tensor.forward_determinism",
            "tensor-core",
            forward_determinism,
        ),
        ("scene.radar_has_no_height", "scene-io", radar_has_no_height),
        ("scene.pure_generation", "scene-io", pure_generation),
        ("scene.sweep_conservation", "scene-io", sweep_conservation),
        ("scene.doppler_parallel", "scene-io", doppler_parallel),
        ("scene.blrf_round_trip", "scene-io", blrf_round_trip),
        ("grid.index_oracle", "grid-encoding", index_oracle),
        (
            "grid.permutation_invariance",
            "grid-encoding",
            grid_permutation,
        ),
        (
            "grid.sparsity_conservation",
            "grid-encoding",
            sparsity_conservation,
        ),
        ("grid.shape_contract", "grid-encoding", shape_contract),
        ("l2r.segment_heights", "l2r-fusion", segment_heights),
        ("l2r.ball_query_oracle", "l2r-fusion", ball_query_oracle),
        ("l2r.bev_query_oracle", "l2r-fusion", bev_query_oracle),
        ("l2r.non_overlap", "l2r-fusion", non_overlap),
        ("l2r.query_locality", "l2r-fusion", query_locality),
        ("l2r.pseudo_sparsity", "l2r-fusion", pseudo_sparsity),
        ("l2r.permutation_invariance", "l2r-fusion", l2r_permutation),
        ("l2r.height_sensitivity", "l2r-fusion", height_sensitivity),
        ("head.channel_contract", "r2l-fusion-head", channel_contract),
        (
            "head.decode_round_trip",
            "r2l-fusion-head",
            decode_round_trip,
        ),
        ("head.loss_gradient", "r2l-fusion-head", loss_gradient),
        ("head.focal_monotonic", "r2l-fusion-head", focal_monotonic),
        ("harness.determinism", "harness-cli", harness_determinism),
        (
            "harness.config_validation",
            "harness-cli",
            config_validation,
        ),
    ];
    for (name, module, run) in table {
        r.register(name, Arc::new(FnProperty { name, module, run }));
    }
    r.register(
        "harness.eval_sanity",
        Arc::new(FnProperty {
            name: "harness.eval_sanity",
            module: "harness-cli",
            run: eval_sanity,
        }),
    );
    r
}

/// Runs every registered property. A property that errors counts as failed.
pub fn oracle_suite(seeds: usize, fault: Option<Fault>) -> SuiteReport {
    let ctx = SuiteContext {
        seeds: seeds.max(1),
        fault,
    };
    let registry = property_registry();
    let mut properties = Vec::new();
    for name in registry.names() {
        let p = registry.get(name).expect("registered");
        let report = match p.check(&ctx) {
            Ok(t) => PropertyReport {
                name: name.to_string(),
                module: p.module().to_string(),
                cases: t.cases,
                failures: t.failures,
                passed: t.passed(),
                detail: t.first_failure,
            },
            Err(e) => PropertyReport {
                name: name.to_string(),
                module: p.module().to_string(),
                cases: 0,
                failures: 1,
                passed: false,
                detail: Some(e.to_string()),
            },
        };
        properties.push(report);
    }
    SuiteReport {
        seeds: ctx.seeds,
        fault,
        passed: properties.iter().all(|p| p.passed),
        properties,
    }
}

// ---- random instances -------------------------------------------------

fn random_points<R: Rng>(rng: &mut R, n: usize, lo: [f64; 3], hi: [f64; 3]) -> Vec<LidarPoint> {
    (0..n)
        .map(|_| LidarPoint {
            x: rng.random_range(lo[0]..hi[0]) as f32,
            y: rng.random_range(lo[1]..hi[1]) as f32,
            z: rng.random_range(lo[2]..hi[2]) as f32,
            intensity: rng.random_range(0.0..1.0),
            t: rng.random_range(-0.5..0.0),
        })
        .collect()
}

fn random_radar<R: Rng>(
    rng: &mut R,
    n: usize,
    variant: RadarVariant,
    half: f64,
) -> Result<RadarCloud> {
    let points = (0..n)
        .map(|_| RadarPoint {
            x: rng.random_range(-half..half) as f32,
            y: rng.random_range(-half..half) as f32,
            rcs: rng.random_range(0.0..20.0),
            t: rng.random_range(-0.5..0.0),
            extras: (variant == RadarVariant::A).then(|| RadarExtras {
                vx: rng.random_range(-5.0..5.0),
                vy: rng.random_range(-5.0..5.0),
                dyn_prop: 0.0,
                invalid_state: 0.0,
                pdh0: 0.0,
            }),
        })
        .collect();
    RadarCloud::new(variant, points)
}

fn same_bits(a: &[f64], b: &[f64]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
}

fn small_scene_params() -> SceneParams {
    SceneParams {
        num_objects: 3,
        extent: Extent::symmetric(10.0),
        ..SceneParams::default()
    }
}

// ---- tensor-core ------------------------------------------------------

fn max_reduce_permutation(ctx: &SuiteContext) -> Result<Tally> {
    let mut t = Tally::default();
    for seed in 0..ctx.seeds as u64 {
        let mut rng = seeded_rng(seed);
        let n = rng.random_range(1..20);
        let d = rng.random_range(1..8);
        let mut rows: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..d).map(|_| rng.random_range(-3.0..3.0)).collect())
            .collect();
        let before = max_reduce(&rows)?;
        rows.shuffle(&mut rng);
        let after = max_reduce(&rows)?;
        t.case(same_bits(&before, &after), || format!("seed {seed}"));
    }
    Ok(t)
}

fn conv_identity(ctx: &SuiteContext) -> Result<Tally> {
    let mut t = Tally::default();
    for seed in 0..ctx.seeds as u64 {
        let mut rng = seeded_rng(seed);
        let c = rng.random_range(1..5);
        let (h, w) = (rng.random_range(1..9), rng.random_range(1..9));
        let data = (0..c * h * w)
            .map(|_| rng.random_range(-5.0..5.0))
            .collect();
        let m = FeatureMap::from_vec(c, h, w, data)?;
        let mut conv = Conv2d::zeros(c, c, 1, 1, 0);
        for k in 0..c {
            let idx = conv.kernel_index(k, k, 0, 0);
            conv.kernel[idx] = 1.0;
        }
        t.case(conv.forward(&m)? == m, || format!("seed {seed}"));
    }
    Ok(t)
}

/// Gradient of `sum(weights * mlp(x))` checked on instances whose
/// pre-activations stay at least 1e-2 away from the rectifier kink.
fn mlp_gradient(ctx: &SuiteContext) -> Result<Tally> {
    let mut t = Tally::default();
    let mut seed = 0u64;
    while t.cases < ctx.seeds {
        seed += 1;
        let mut rng = seeded_rng(seed);
        let relu_last = rng.random_bool(0.5);
        let mlp = Mlp::random(&mut rng, &[4, 6, 3], relu_last)?;
        let x: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
        let c: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
        let trace = mlp.forward_trace(&x)?;
        if trace
            .pre_activations
            .iter()
            .flatten()
            .any(|v| v.abs() < 1e-2)
        {
            continue;
        }
        let analytic = mlp.backward(&trace, &c)?.flat_params();
        let f = |p: &[f64]| -> Result<f64> {
            let out = mlp.with_params(p)?.forward(&x)?;
            Ok(out.iter().zip(&c).map(|(o, w)| o * w).sum())
        };
        let report = finite_diff_check(f, &mlp.params(), &analytic, 1e-3, 1e-3)?;
        t.case(report.passed, || {
            format!("seed {seed}: rel {}", report.max_rel_diff)
        });
    }
    Ok(t)
}

fn conv_gradient(ctx: &SuiteContext) -> Result<Tally> {
    let mut t = Tally::default();
    for seed in 0..ctx.seeds as u64 {
        let mut rng = seeded_rng(seed);
        let stride = rng.random_range(1..3);
        let conv = Conv2d::random(&mut rng, 3, 2, 3, stride, 1);
        let input = FeatureMap::from_vec(
            2,
            5,
            6,
            (0..60).map(|_| rng.random_range(-1.0..1.0)).collect(),
        )?;
        let out = conv.forward(&input)?;
        let up: Vec<f64> = (0..out.data().len())
            .map(|_| rng.random_range(-1.0..1.0))
            .collect();
        let upstream = FeatureMap::from_vec(out.channels(), out.height(), out.width(), up.clone())?;
        let g = conv.backward(&input, &upstream)?;
        let analytic: Vec<f64> = g.kernel.iter().chain(&g.bias).copied().collect();
        let f = |p: &[f64]| -> Result<f64> {
            let o = conv.with_params(p)?.forward(&input)?;
            Ok(o.data().iter().zip(&up).map(|(a, b)| a * b).sum())
        };
        let report = finite_diff_check(f, &conv.params(), &analytic, 1e-3, 1e-3)?;
        t.case(report.passed, || {
            format!("seed {seed}: rel {}", report.max_rel_diff)
        });
    }
    Ok(t)
}

fn forward_determinism(ctx: &SuiteContext) -> Result<Tally> {
    let mut t = Tally::default();
    for seed in 0..ctx.seeds as u64 {
        let mut rng = seeded_rng(seed);
        let conv = Conv2d::random(&mut rng, 4, 3, 3, 1, 1);
        let mlp = Mlp::random(&mut rng, &[5, 7, 2], true)?;
        let input = FeatureMap::from_vec(
            3,
            6,
            6,
            (0..108).map(|_| rng.random_range(-1.0..1.0)).collect(),
        )?;
        let x: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
        let ok = same_bits(conv.forward(&input)?.data(), conv.forward(&input)?.data())
            && same_bits(&mlp.forward(&x)?, &mlp.forward(&x)?);
        t.case(ok, || format!("seed {seed}"));
    }
    Ok(t)
}

// ---- scene-io ---------------------------------------------------------

fn radar_has_no_height(ctx: &SuiteContext) -> Result<Tally> {
    let mut t = Tally::default();
    for seed in 0..ctx.seeds as u64 {
        let scene = generate_scene(&small_scene_params(), seed)?;
        for variant in [RadarVariant::A, RadarVariant::B] {
            let cfg = RadarSampling {
                variant,
                ..RadarSampling::default()
            };
            let radar = radar_sample(&scene, &cfg, seed)?;
            let heights_ok = radar
                .points()
                .iter()
                .all(|p| p.position(scene.sensor_height)[2] == scene.sensor_height);
            let bytes = encode_cloud(&Cloud::Radar(radar.clone()));
            let record_ok = bytes.len() == 15 + radar.len() * variant.point_features() * 4;
            t.case(heights_ok && record_ok, || {
                format!("seed {seed} variant {variant:?}")
            });
        }
    }
    Ok(t)
}

fn pure_generation(ctx: &SuiteContext) -> Result<Tally> {
    let mut t = Tally::default();
    let params = small_scene_params();
    for seed in 0..ctx.seeds as u64 {
        let a = generate_scene(&params, seed)?;
        let b = generate_scene(&params, seed)?;
        let la = lidar_sample(&a, &LidarSampling::default(), seed);
        let lb = lidar_sample(&b, &LidarSampling::default(), seed);
        let ra = radar_sample(&a, &RadarSampling::default(), seed)?;
        let rb = radar_sample(&b, &RadarSampling::default(), seed)?;
        let ok = a == b
            && encode_cloud(&Cloud::Lidar { points: la })
                == encode_cloud(&Cloud::Lidar { points: lb })
            && encode_cloud(&Cloud::Radar(ra)) == encode_cloud(&Cloud::Radar(rb));
        t.case(ok, || format!("seed {seed}"));
    }
    Ok(t)
}

fn sweep_conservation(ctx: &SuiteContext) -> Result<Tally> {
    let mut t = Tally::default();
    let spec = SweepSpec {
        lidar_sweeps: 3,
        radar_sweeps: 3,
        ..SweepSpec::default()
    };
    let lidar_cfg = LidarSampling {
        density: 5.0,
        ..LidarSampling::default()
    };
    for seed in 0..ctx.seeds as u64 {
        let scene = generate_scene(&small_scene_params(), seed)?;
        let set = generate_sweeps(&scene, &spec, &lidar_cfg, &RadarSampling::default(), seed)?;
        let lidar = set.accumulate_lidar(3)?;
        let radar = set.accumulate_radar(3)?;
        let raw_l: Vec<&LidarPoint> = set.lidar.iter().flatten().collect();
        let raw_r: Vec<&RadarPoint> = set.radar.iter().flat_map(|c| c.points()).collect();
        let ok = lidar.len() == raw_l.len()
            && radar.len() == raw_r.len()
            && lidar
                .iter()
                .zip(&raw_l)
                .all(|(a, b)| a.intensity == b.intensity && a.t == b.t)
            && radar
                .points()
                .iter()
                .zip(&raw_r)
                .all(|(a, b)| a.rcs == b.rcs && a.t == b.t);
        t.case(ok, || format!("seed {seed}"));
    }
    Ok(t)
}

fn doppler_parallel(ctx: &SuiteContext) -> Result<Tally> {
    let mut t = Tally::default();
    for seed in 0..ctx.seeds as u64 {
        let scene = generate_scene(&small_scene_params(), seed)?;
        let radar = radar_sample(&scene, &RadarSampling::default(), seed)?;
        for p in radar.points() {
            let e = p
                .extras
                .ok_or_else(|| Error::Evaluation("variant A point without Doppler".into()))?;
            let cross = p.x as f64 * e.vy as f64 - p.y as f64 * e.vx as f64;
            t.case(cross.abs() < 1e-9, || format!("seed {seed}: cross {cross}"));
        }
    }
    Ok(t)
}

fn blrf_round_trip(ctx: &SuiteContext) -> Result<Tally> {
    let mut t = Tally::default();
    for seed in 0..ctx.seeds as u64 {
        let scene = generate_scene(&small_scene_params(), seed)?;
        let clouds = [
            Cloud::Lidar {
                points: lidar_sample(&scene, &LidarSampling::default(), seed),
            },
            Cloud::Radar(radar_sample(&scene, &RadarSampling::default(), seed)?),
            Cloud::Radar(radar_sample(
                &scene,
                &RadarSampling {
                    variant: RadarVariant::B,
                    ..RadarSampling::default()
                },
                seed,
            )?),
        ];
        for c in clouds {
            let back = decode_cloud(&encode_cloud(&c))?;
            t.case(back == c, || format!("seed {seed}"));
        }
    }
    Ok(t)
}

// ---- grid-encoding ----------------------------------------------------

fn oracle_index(v: f64, origin: f64, cell: f64, n: usize) -> Option<usize> {
    let k = ((v - origin) / cell).floor();
    (k >= 0.0 && k < n as f64).then_some(k as usize)
}

fn index_oracle(ctx: &SuiteContext) -> Result<Tally> {
    let mut t = Tally::default();
    let spec = GridSpec::from_range([-8.0, -8.0, -4.0], [8.0, 8.0, 4.0], [0.5, 0.5, 0.5])?;
    let pillars = GridSpec::from_range([-8.0, -8.0, -4.0], [8.0, 8.0, 4.0], [1.0, 1.0, 8.0])?;
    for seed in 0..ctx.seeds as u64 {
        let mut rng = seeded_rng(seed);
        let mut pts = random_points(&mut rng, 500, [-9.0; 3], [9.0; 3]);
        // exact cell boundaries, including the upper edge
        for k in 0..50 {
            let b = -8.0 + 0.5 * (k % 33) as f32;
            pts.push(LidarPoint {
                x: b,
                y: -b,
                z: (b / 2.0).clamp(-4.0, 4.0),
                intensity: 0.0,
                t: 0.0,
            });
        }
        let vs = voxelize(&pts, &spec, usize::MAX)?;
        let mut expected_dropped = 0;
        let mut ok = true;
        let mut seen = 0;
        for (i, p) in pts.iter().enumerate() {
            let key = (0..3)
                .map(|a| {
                    oracle_index(
                        p.position()[a],
                        spec.origin[a],
                        spec.cell[a],
                        spec.counts[a],
                    )
                })
                .collect::<Option<Vec<usize>>>();
            match key {
                None => expected_dropped += 1,
                Some(k) => {
                    let v = vs.voxels.get(&[k[0], k[1], k[2]]);
                    ok &= v.is_some_and(|v| v.members.contains(&i));
                    seen += 1;
                }
            }
        }
        let total: usize = vs.voxels.values().map(|v| v.members.len()).sum();
        ok &= expected_dropped == vs.dropped && total == seen;

        let radar = random_radar(&mut rng, 300, RadarVariant::B, 9.0)?;
        let mlp = Mlp::random(&mut rng, &[4, 32], false)?;
        let bev = pillarize(&radar, &pillars, &mlp, 32, usize::MAX)?;
        let cells: BTreeSet<BevGridIndex> = radar
            .points()
            .iter()
            .filter_map(|p| {
                let i = oracle_index(p.x as f64, -8.0, 1.0, 16)?;
                let j = oracle_index(p.y as f64, -8.0, 1.0, 16)?;
                Some(BevGridIndex::new(i, j))
            })
            .collect();
        ok &= bev.occupied.iter().copied().collect::<BTreeSet<_>>() == cells;
        t.case(ok, || format!("seed {seed}"));
    }
    Ok(t)
}

fn grid_permutation(ctx: &SuiteContext) -> Result<Tally> {
    let mut t = Tally::default();
    let spec = GridSpec::from_range([-4.0, -4.0, -2.0], [4.0, 4.0, 2.0], [0.5, 0.5, 0.5])?;
    let coarse = GridSpec::from_range([-4.0, -4.0, -2.0], [4.0, 4.0, 2.0], [1.0, 1.0, 4.0])?;
    for seed in 0..ctx.seeds as u64 {
        let mut rng = seeded_rng(seed);
        let mut pts = random_points(&mut rng, 400, [-4.0, -4.0, -2.0], [4.0, 4.0, 2.0]);
        let radar = random_radar(&mut rng, 100, RadarVariant::A, 4.0)?;
        let vfe = Mlp::random(&mut rng, &[LIDAR_POINT_FEATURES, 8], true)?;
        let pillar_mlp = Mlp::random(&mut rng, &[9, 32], false)?;
        let features = |pts: &[LidarPoint]| -> Result<(Vec<Vec<f64>>, BevGrids)> {
            let enc = voxel_encode(&voxelize(pts, &spec, 5)?, &vfe)?;
            let f = enc
                .voxels
                .values()
                .map(|v| v.feature.clone().unwrap_or_default())
                .collect();
            Ok((f, collapse_to_bev_grids(&enc, &coarse)?))
        };
        let before = features(&pts)?;
        let m_before = pillarize(&radar, &coarse, &pillar_mlp, 32, 3)?.map;
        pts.shuffle(&mut rng);
        let mut rp = radar.points().to_vec();
        rp.shuffle(&mut rng);
        let after = features(&pts)?;
        let m_after = pillarize(
            &RadarCloud::new(RadarVariant::A, rp)?,
            &coarse,
            &pillar_mlp,
            32,
            3,
        )?
        .map;
        t.case(before == after && m_before == m_after, || {
            format!("seed {seed}")
        });
    }
    Ok(t)
}

fn sparsity_conservation(ctx: &SuiteContext) -> Result<Tally> {
    let mut t = Tally::default();
    let spec = GridSpec::from_range([-6.0, -6.0, -3.0], [6.0, 6.0, 3.0], [1.0, 1.0, 6.0])?;
    for seed in 0..ctx.seeds as u64 {
        let mut rng = seeded_rng(seed);
        let n = rng.random_range(0..60);
        let radar = random_radar(&mut rng, n, RadarVariant::A, 7.0)?;
        let mlp = Mlp::random(&mut rng, &[9, 32], false)?;
        let bev = pillarize(&radar, &spec, &mlp, 32, 10)?;
        let pillars: BTreeSet<(usize, usize)> = radar
            .points()
            .iter()
            .filter_map(|p| spec.bev_index(p.x as f64, p.y as f64))
            .collect();
        t.case(bev.map.count_nonzero_cells() == pillars.len(), || {
            format!("seed {seed}")
        });
    }
    Ok(t)
}

fn shape_contract(ctx: &SuiteContext) -> Result<Tally> {
    let mut t = Tally::default();
    let paper = PipelineConfig::paper().grids()?;
    t.case((paper.radar.nx(), paper.radar.ny()) == (180, 180), || {
        "paper radar grid".into()
    });
    let cfg = ctx.config();
    let g = cfg.grids()?;
    let model = Model::build(&cfg)?;
    for seed in 0..ctx.seeds.min(5) as u64 {
        let frame = simulate(&cfg, seed)?;
        let run = run_pipeline(&cfg, &model, &frame.lidar, &frame.radar)?;
        let ok = run.maps["m_l"].shape() == [cfg.channels.c1, g.bev.ny(), g.bev.nx()]
            && run.maps["m_r"].shape() == [cfg.channels.c2, g.radar.ny(), g.radar.nx()];
        t.case(ok, || format!("seed {seed}"));
    }
    Ok(t)
}

// ---- l2r-fusion -------------------------------------------------------

fn qhf_config<R: Rng>(rng: &mut R, r: f64, h: f64, z_min: f64, radius: f64) -> Result<QhfConfig> {
    let m = segment_count(h, r);
    let psi = Mlp::random(rng, &[PSI_INPUTS, 8, 8], true)?;
    let head = Mlp::random(rng, &[m * 8, 32], false)?;
    QhfConfig::new(r, h, z_min, Some(radius), 16, psi, head)
}

fn segment_heights(ctx: &SuiteContext) -> Result<Tally> {
    let mut t = Tally::default();
    let grid = GridSpec::from_range([-3.0, -3.0, -5.0], [3.0, 3.0, 3.0], [0.6, 0.6, 8.0])?;
    let mut rng = seeded_rng(7);
    let paper = qhf_config(&mut rng, 0.6, 8.0, -5.0, 0.3)?;
    let zs: Vec<f64> = segment_query_points(BevGridIndex::new(0, 0), &paper, &grid)
        .iter()
        .map(|q| q.z)
        .collect();
    let want = [-4.4, -3.2, -2.0, -0.8, 0.4, 1.6];
    t.case(
        zs.len() == 6
            && zs
                .iter()
                .zip(want)
                .all(|(a, b)| (a - b).abs() <= 4.0 * f64::EPSILON * b.abs().max(1.0)),
        || format!("paper instance gave {zs:?}"),
    );
    for seed in 0..ctx.seeds as u64 {
        let mut rng = seeded_rng(seed);
        let r = rng.random_range(0.1..2.0);
        let z_min = rng.random_range(-10.0..0.0);
        let h = rng.random_range(2.0 * r..20.0);
        let cfg = qhf_config(&mut rng, r, h, z_min, r / 2.0)?;
        let ok = segment_query_points(BevGridIndex::new(1, 1), &cfg, &grid)
            .iter()
            .all(|q| q.z == z_min + r * (2.0 * q.segment as f64 - 1.0));
        t.case(ok, || format!("seed {seed}"));
    }
    Ok(t)
}

fn ball_query_oracle(ctx: &SuiteContext) -> Result<Tally> {
    let mut t = Tally::default();
    let registry = search_registry();
    for seed in 0..ctx.seeds as u64 {
        let mut rng = seeded_rng(seed);
        let n = rng.random_range(0..500);
        let pts = random_points(&mut rng, n, [-5.0; 3], [5.0; 3]);
        let radius = rng.random_range(0.2..2.0);
        let k = rng.random_range(1..20);
        let q = [0, 1, 2].map(|_| rng.random_range(-5.0..5.0));
        let mut expected: Vec<(f64, usize)> = pts
            .iter()
            .enumerate()
            .filter_map(|(i, p)| {
                let d = p
                    .position()
                    .iter()
                    .zip(q)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
                (d <= radius).then_some((d, i))
            })
            .collect();
        expected.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let expected: Vec<usize> = expected.into_iter().take(k).map(|(_, i)| i).collect();
        for name in registry.names() {
            let index = registry.get(name)?.build(&pts, radius);
            let got = index.ball_query(q, radius, k).indices();
            t.case(got == expected, || format!("seed {seed} backend {name}"));
        }
    }
    Ok(t)
}

fn bev_query_oracle(ctx: &SuiteContext) -> Result<Tally> {
    let mut t = Tally::default();
    let registry = neighborhood_registry();
    for seed in 0..ctx.seeds as u64 {
        let mut rng = seeded_rng(seed);
        let n = rng.random_range(5..30);
        let grids: BevGrids = (0..n * n / 3)
            .map(|_| {
                (
                    BevGridIndex::new(rng.random_range(0..n), rng.random_range(0..n)),
                    vec![0.0],
                )
            })
            .collect();
        let cell = BevGridIndex::new(rng.random_range(0..n), rng.random_range(0..n));
        let window = (rng.random_range(0..4), rng.random_range(0..4));
        let k = rng.random_range(1..20);
        for name in registry.names() {
            let mut expected: Vec<(usize, BevGridIndex)> = grids
                .keys()
                .filter(|g| {
                    let (di, dj) = (g.i.abs_diff(cell.i), g.j.abs_diff(cell.j));
                    match name {
                        "manhattan" => di + dj <= window.0,
                        _ => di <= window.0 && dj <= window.1,
                    }
                })
                .map(|&g| (g.i.abs_diff(cell.i) + g.j.abs_diff(cell.j), g))
                .collect();
            expected.sort();
            let expected: Vec<BevGridIndex> =
                expected.into_iter().take(k).map(|(_, g)| g).collect();
            let got = bev_query(cell, &grids, window, k, registry.get(name)?.as_ref()).cells();
            t.case(got == expected, || format!("seed {seed} mode {name}"));
        }
    }
    Ok(t)
}

/// Query balls of one pillar must be pairwise disjoint: closed balls of
/// radius `rho` with centers `d` apart are disjoint iff `d > 2 rho`.
fn non_overlap(ctx: &SuiteContext) -> Result<Tally> {
    let mut t = Tally::default();
    let grid = GridSpec::from_range([-3.0, -3.0, -5.0], [3.0, 3.0, 3.0], [0.6, 0.6, 8.0])?;
    let mut rng = seeded_rng(0);
    let mut cases = vec![(8.0, 0.6), (8.0, 1.0), (7.0, 0.32), (8.0, 0.5), (8.0, 0.25)];
    for _ in 0..ctx.seeds {
        let r = rng.random_range(0.1..1.5);
        cases.push((rng.random_range(2.0 * r..12.0), r));
    }
    for (h, r) in cases {
        let radius = ctx.ball_radius(r);
        let cfg = qhf_config(&mut rng, r, h, -5.0, radius)?;
        let zs: Vec<f64> = segment_query_points(BevGridIndex::new(2, 2), &cfg, &grid)
            .iter()
            .map(|q| q.z)
            .collect();
        let mut min_gap = f64::INFINITY;
        for a in 0..zs.len() {
            for b in a + 1..zs.len() {
                min_gap = min_gap.min((zs[a] - zs[b]).abs());
            }
        }
        t.case(min_gap > 2.0 * radius, || {
            format!("h {h} r {r}: min center gap {min_gap} with radius {radius}")
        });
    }
    Ok(t)
}

fn query_locality(ctx: &SuiteContext) -> Result<Tally> {
    let mut t = Tally::default();
    let grid = GridSpec::from_range([-4.0, -4.0, -4.0], [4.0, 4.0, 4.0], [1.0, 1.0, 8.0])?;
    let search = search_registry().get("hash-grid")?;
    for seed in 0..ctx.seeds as u64 {
        let mut rng = seeded_rng(seed);
        let cfg = qhf_config(&mut rng, 1.0, 8.0, -4.0, ctx.ball_radius(1.0))?;
        let cell = BevGridIndex::new(rng.random_range(0..8), rng.random_range(0..8));
        let queries: Vec<[f64; 3]> = segment_query_points(cell, &cfg, &grid)
            .iter()
            .map(|q| q.position())
            .collect();
        let mut pts = random_points(&mut rng, 300, [-4.0; 3], [4.0; 3]);
        let base = qhf_fuse(
            cell,
            &cfg,
            &grid,
            &pts,
            search.build(&pts, cfg.ball_radius).as_ref(),
        )?;
        let far = |p: &LidarPoint| {
            queries.iter().all(|q| {
                p.position()
                    .iter()
                    .zip(q)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt()
                    > cfg.ball_radius + 1e-6
            })
        };
        for p in pts.iter_mut() {
            if far(p) {
                let moved = LidarPoint {
                    x: p.x + rng.random_range(-0.05..0.05),
                    z: p.z + rng.random_range(-0.05..0.05),
                    ..*p
                };
                if far(&moved) {
                    *p = moved;
                }
            }
        }
        let again = qhf_fuse(
            cell,
            &cfg,
            &grid,
            &pts,
            search.build(&pts, cfg.ball_radius).as_ref(),
        )?;
        t.case(same_bits(&base.eta_h, &again.eta_h), || {
            format!("seed {seed}")
        });
    }
    Ok(t)
}

fn pseudo_sparsity(ctx: &SuiteContext) -> Result<Tally> {
    let mut t = Tally::default();
    let cfg = ctx.config();
    let model = Model::build(&cfg)?;
    for seed in 0..ctx.seeds.min(10) as u64 {
        let frame = simulate(&cfg, seed)?;
        let run = run_pipeline(&cfg, &model, &frame.lidar, &frame.radar)?;
        let m_r_cells = run.maps["m_r"].count_nonzero_cells();
        let enhanced_cells = run.maps["enhanced"].count_nonzero_cells();
        t.case(
            run.pseudo.len() == m_r_cells && enhanced_cells == m_r_cells,
            || {
                format!(
                    "seed {seed}: {} pseudo, {m_r_cells} M_R cells",
                    run.pseudo.len()
                )
            },
        );
    }
    Ok(t)
}

fn l2r_permutation(ctx: &SuiteContext) -> Result<Tally> {
    let mut t = Tally::default();
    let cfg = ctx.config();
    let model = Model::build(&cfg)?;
    for seed in 0..ctx.seeds.min(10) as u64 {
        let frame = simulate(&cfg, seed)?;
        let base = run_pipeline(&cfg, &model, &frame.lidar, &frame.radar)?;
        let mut rng = seeded_rng(seed ^ 0xABCD);
        let mut lidar = frame.lidar.clone();
        lidar.shuffle(&mut rng);
        let run = run_pipeline(&cfg, &model, &lidar, &frame.radar)?;
        let ok = base.pseudo.len() == run.pseudo.len()
            && base.pseudo.iter().zip(&run.pseudo).all(|(a, b)| {
                a.cell == b.cell && same_bits(&a.eta_h, &b.eta_h) && same_bits(&a.eta_b, &b.eta_b)
            });
        t.case(ok, || format!("seed {seed}"));
    }
    Ok(t)
}

/// Moving the LiDAR points of one queried pillar up by one segment, all
/// else equal, must change its height feature for generic weights.
fn height_sensitivity(ctx: &SuiteContext) -> Result<Tally> {
    let mut t = Tally {
        min_pass_fraction: Some(0.95),
        ..Tally::default()
    };
    let grid = GridSpec::from_range([-4.0, -4.0, -4.0], [4.0, 4.0, 4.0], [1.0, 1.0, 8.0])?;
    let search = search_registry().get("hash-grid")?;
    for seed in 0..ctx.seeds as u64 {
        let mut rng = seeded_rng(seed);
        let cfg = qhf_config(&mut rng, 1.0, 8.0, -4.0, 0.5)?;
        let cell = BevGridIndex::new(4, 4);
        let [cx, cy] = grid.cell_center(4, 4);
        let low: Vec<LidarPoint> = (0..20)
            .map(|_| LidarPoint {
                x: (cx + rng.random_range(-0.2..0.2)) as f32,
                y: (cy + rng.random_range(-0.2..0.2)) as f32,
                z: rng.random_range(-3.3..-2.7) as f32,
                intensity: 0.5,
                t: 0.0,
            })
            .collect();
        let high: Vec<LidarPoint> = low
            .iter()
            .map(|p| LidarPoint { z: p.z + 2.0, ..*p })
            .collect();
        let eta = |pts: &[LidarPoint]| {
            qhf_fuse(
                cell,
                &cfg,
                &grid,
                pts,
                search.build(pts, cfg.ball_radius).as_ref(),
            )
            .map(|r| r.eta_h)
        };
        let (a, b) = (eta(&low)?, eta(&high)?);
        t.case(!same_bits(&a, &b), || format!("seed {seed}"));
    }
    Ok(t)
}

// ---- r2l-fusion-head --------------------------------------------------

fn channel_contract(ctx: &SuiteContext) -> Result<Tally> {
    let mut t = Tally::default();
    let cfg = ctx.config();
    let model = Model::build(&cfg)?;
    for seed in 0..ctx.seeds.min(10) as u64 {
        let frame = simulate(&cfg, seed)?;
        let s = run_pipeline(&cfg, &model, &frame.lidar, &frame.radar)?.stats;
        let ok = s.radar.m_r[0] == 32
            && s.l2r.enhanced[0] == 96
            && s.r2l.fused[0] == cfg.channels.c1 + 96
            && s.r2l.encoded[0] == 512;
        t.case(ok, || format!("seed {seed}: {s:?}"));
    }
    Ok(t)
}

fn decode_round_trip(ctx: &SuiteContext) -> Result<Tally> {
    let mut t = Tally::default();
    let grid = PipelineConfig::desk().grids()?.bev;
    let half = grid.cell[0] / 2.0;
    for seed in 0..ctx.seeds as u64 {
        let mut rng = seeded_rng(seed);
        let params = SceneParams {
            num_objects: rng.random_range(0..=8),
            extent: Extent::symmetric(15.0),
            ..SceneParams::default()
        };
        let scene = generate_scene(&params, seed)?;
        let targets = render_targets(&scene.objects, &grid, 2)?;
        let dets = decode_detections(&outputs_from_targets(&targets)?, &grid, 0.5, 100);
        let ok = dets.len() == scene.objects.len()
            && scene.objects.iter().all(|b| {
                dets.iter().any(|d| {
                    d.class_id == b.class_id
                        && (d.x - b.center[0]).abs() <= half
                        && (d.y - b.center[1]).abs() <= half
                        && (d.l - b.size[0]).abs() < 1e-9
                        && (d.w - b.size[1]).abs() < 1e-9
                        && (d.h - b.size[2]).abs() < 1e-9
                        && wrap_angle(d.yaw - b.yaw).abs() < 1e-9
                })
            });
        t.case(ok, || {
            format!(
                "seed {seed}: {} boxes, {} detections",
                scene.objects.len(),
                dets.len()
            )
        });
    }
    Ok(t)
}

/// Small random head outputs with regression values kept at least 0.05 away
/// from their targets.
pub(crate) fn random_loss_instance(seed: u64) -> Result<(HeadOutputs, crate::head::Targets)> {
    let mut rng = seeded_rng(seed);
    let grid = GridSpec::from_range([0.0, 0.0, -3.0], [4.0, 4.0, 3.0], [0.5, 0.5, 6.0])?;
    let params = SceneParams {
        num_objects: rng.random_range(0..3),
        extent: Extent {
            x: [0.0, 4.0],
            y: [0.0, 4.0],
        },
        classes: crate::scene::default_classes()
            .into_iter()
            .map(|mut c| {
                c.length = [0.6, 1.2];
                c.width = [0.5, 1.0];
                c
            })
            .collect(),
        ..SceneParams::default()
    };
    let scene = generate_scene(&params, seed)?;
    let targets = render_targets(&scene.objects, &grid, 2)?;
    let mut h = outputs_from_targets(&targets)?;
    let mut logits = h.logits.clone();
    logits
        .data_mut()
        .iter_mut()
        .for_each(|v| *v = rng.random_range(-3.0..3.0));
    let mut jitter = |m: &FeatureMap| {
        let mut out = m.clone();
        for v in out.data_mut() {
            let d = rng.random_range(0.05..0.5);
            *v += if rng.random_bool(0.5) { d } else { -d };
        }
        out
    };
    h = HeadOutputs::from_logits(
        logits,
        jitter(&h.offset),
        jitter(&h.z),
        jitter(&h.size),
        jitter(&h.rot),
        jitter(&h.vel),
    )?;
    Ok((h, targets))
}

fn flatten_outputs(h: &HeadOutputs) -> Vec<f64> {
    [&h.logits, &h.offset, &h.z, &h.size, &h.rot, &h.vel]
        .iter()
        .flat_map(|m| m.data().iter().copied())
        .collect()
}

fn unflatten_outputs(like: &HeadOutputs, flat: &[f64]) -> Result<HeadOutputs> {
    let mut at = 0;
    let mut take = |m: &FeatureMap| {
        let n = m.data().len();
        let out = FeatureMap::from_vec(
            m.channels(),
            m.height(),
            m.width(),
            flat[at..at + n].to_vec(),
        );
        at += n;
        out
    };
    HeadOutputs::from_logits(
        take(&like.logits)?,
        take(&like.offset)?,
        take(&like.z)?,
        take(&like.size)?,
        take(&like.rot)?,
        take(&like.vel)?,
    )
}

fn loss_gradient(ctx: &SuiteContext) -> Result<Tally> {
    let mut t = Tally::default();
    let weights = LossWeights::default();
    for seed in 0..ctx.seeds as u64 {
        let (h, targets) = random_loss_instance(seed)?;
        let (_, g) = compute_loss(&h, &targets, &weights)?;
        let analytic: Vec<f64> = [&g.logits, &g.offset, &g.z, &g.size, &g.rot, &g.vel]
            .iter()
            .flat_map(|m| m.data().iter().copied())
            .collect();
        let f = |p: &[f64]| -> Result<f64> {
            Ok(
                compute_loss(&unflatten_outputs(&h, p)?, &targets, &weights)?
                    .0
                    .total,
            )
        };
        let report = finite_diff_check(f, &flatten_outputs(&h), &analytic, 1e-3, 1e-3)?;
        t.case(report.passed, || {
            format!("seed {seed}: rel {}", report.max_rel_diff)
        });
    }
    Ok(t)
}

fn focal_monotonic(ctx: &SuiteContext) -> Result<Tally> {
    let mut t = Tally::default();
    let weights = LossWeights::default();
    for seed in 0..ctx.seeds as u64 {
        let (h, targets) = random_loss_instance(seed)?;
        let candidates: Vec<usize> = (0..targets.heatmap.data().len())
            .filter(|&i| targets.heatmap.data()[i] < 1.0)
            .collect();
        let mut rng = seeded_rng(seed);
        let idx = candidates[rng.random_range(0..candidates.len())];
        let base = compute_loss(&h, &targets, &weights)?.0.heatmap_loss;
        let mut logits = h.logits.clone();
        logits.data_mut()[idx] += 0.5;
        let bumped = HeadOutputs::from_logits(
            logits,
            h.offset.clone(),
            h.z.clone(),
            h.size.clone(),
            h.rot.clone(),
            h.vel.clone(),
        )?;
        let after = compute_loss(&bumped, &targets, &weights)?.0.heatmap_loss;
        t.case(after > base, || format!("seed {seed}: {base} -> {after}"));
    }
    Ok(t)
}

// ---- harness ----------------------------------------------------------

fn harness_determinism(ctx: &SuiteContext) -> Result<Tally> {
    let mut t = Tally::default();
    let cfg = ctx.config();
    for seed in 0..ctx.seeds.min(3) as u64 {
        let artifacts = || -> Result<Vec<u8>> {
            let model = Model::build(&cfg)?;
            let frame = simulate(&cfg, seed)?;
            let run = run_pipeline(&cfg, &model, &frame.lidar, &frame.radar)?;
            let mut buf = encode_cloud(&Cloud::Lidar {
                points: frame.lidar,
            });
            buf.extend(encode_cloud(&Cloud::Radar(frame.radar)));
            for m in run.maps.values() {
                buf.extend(encode_map(m)?);
            }
            write_detections_jsonl(&run.detections, &mut buf)?;
            Ok(buf)
        };
        t.case(artifacts()? == artifacts()?, || format!("seed {seed}"));
    }
    Ok(t)
}

fn config_validation(_: &SuiteContext) -> Result<Tally> {
    let mut t = Tally::default();
    type Mutation = fn(&mut PipelineConfig);
    let cases: [(&str, Mutation); 8] = [
        ("radar_cell", |c| c.radar_cell = [c.qhf.r, c.qhf.r / 2.0]),
        ("channels.encoder", |c| c.channels.encoder[2] = 256),
        ("channels.c2", |c| c.channels.c2 = 16),
        ("qhf.eta_width", |c| c.qhf.eta_width += 1),
        ("lidar_cell", |c| c.lidar_cell[0] = 0.3),
        ("bev_stride", |c| c.bev_stride = 3),
        ("qhf.search", |c| c.qhf.search = "octree".into()),
        ("qbf.distance_mode", |c| {
            c.qbf.distance_mode = "chebyshev".into()
        }),
    ];
    for (field, mutate) in cases {
        let mut cfg = PipelineConfig::desk();
        mutate(&mut cfg);
        let got = match cfg.validate() {
            Err(Error::Config { field, .. }) => Some(field),
            _ => None,
        };
        t.case(got.as_deref() == Some(field), || {
            format!("{field}: got {got:?}")
        });
    }
    Ok(t)
}

fn eval_sanity(ctx: &SuiteContext) -> Result<Tally> {
    let mut t = Tally::default();
    for seed in 0..ctx.seeds as u64 {
        let scene = generate_scene(&small_scene_params(), seed)?;
        let perfect = eval_detections(&perfect_detections(&scene.objects), &scene.objects);
        let mut shifted = perfect_detections(&scene.objects);
        shifted.iter_mut().for_each(|d| d.x += 3.0);
        let moved = eval_detections(&shifted, &scene.objects);
        let ok = perfect.mean_ap == vec![1.0; 4]
            && perfect.mean_velocity_error == Some(0.0)
            && moved.mean_ap == vec![0.0, 0.0, 0.0, 1.0];
        t.case(ok, || {
            format!("seed {seed}: {:?} / {:?}", perfect.mean_ap, moved.mean_ap)
        });
    }
    Ok(t)
}

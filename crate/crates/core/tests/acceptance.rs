//! Acceptance criteria. Runs as a plain binary so that every criterion
//! prints one PASS/FAIL line; exits non-zero if any criterion fails.

use std::collections::BTreeSet;
use std::time::{Duration, Instant};

use lrfuse::fusion::{
    bev_query, neighborhood_registry, qhf_fuse, search_registry, segment_count,
    segment_query_points, QhfConfig, PSI_INPUTS,
};
use lrfuse::grid::{BevGridIndex, BevGrids, GridSpec};
use lrfuse::harness::{
    eval_detections, perfect_detections, run_pipeline, simulate, simulate_scene, Model,
    PipelineConfig, WeightInit,
};
use lrfuse::head::{
    compute_loss, decode_detections, outputs_from_targets, render_targets, HeadOutputs,
    LossWeights, Targets,
};
use lrfuse::scene::{
    generate_scene, Extent, GroundTruthBox, LidarPoint, RadarCloud, Scene, SceneParams,
};
use lrfuse::tensor::{finite_diff_check, seeded_rng, FeatureMap, Mlp};
use rand::seq::SliceRandom;
use rand::Rng;

type Outcome = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within_time(start: Instant, limit: Duration) -> Result<Duration, String> {
    let spent = start.elapsed();
    ensure(spent < limit, || format!("took {spent:?}, limit {limit:?}"))?;
    Ok(spent)
}

fn ulp(x: f64) -> f64 {
    let b = x.abs().to_bits();
    f64::from_bits(b + 1) - x.abs()
}

fn qhf(rng: &mut impl Rng, r: f64, h: f64, z_min: f64) -> QhfConfig {
    let m = segment_count(h, r);
    let psi = Mlp::random(rng, &[PSI_INPUTS, 8, 8], true).unwrap();
    let head = Mlp::random(rng, &[m * 8, 32], false).unwrap();
    QhfConfig::new(r, h, z_min, None, 16, psi, head).unwrap()
}

fn pillar_grid(r: f64, z_min: f64, h: f64) -> GridSpec {
    GridSpec {
        origin: [0.0, 0.0, z_min],
        cell: [r, r, h],
        counts: [4, 4, 1],
    }
}

/// Query heights equal `z_M + r (2s - 1)` to one ulp.
fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut rng = seeded_rng(1);
    let psi = Mlp::random(&mut rng, &[PSI_INPUTS, 1], true).unwrap();
    let mut checked = 0;
    for _ in 0..1000 {
        let z_m: f64 = rng.random_range(-10.0..0.0);
        let r: f64 = rng.random_range(0.05..2.0);
        let s: usize = rng.random_range(1..=12);
        let h = 2.0 * r * s as f64 + rng.random_range(0.0..2.0 * r);
        let m = segment_count(h, r);
        let head = Mlp::random(&mut rng, &[m, 1], false).unwrap();
        let cfg = QhfConfig::new(r, h, z_m, None, 4, psi.clone(), head).unwrap();
        let q = segment_query_points(BevGridIndex::new(1, 2), &cfg, &pillar_grid(r, z_m, h));
        let got = q
            .iter()
            .find(|q| q.segment == s)
            .ok_or(format!("segment {s} missing for h={h} r={r}"))?;
        let want = z_m + r * (2.0 * s as f64 - 1.0);
        ensure((got.z - want).abs() <= ulp(want), || {
            format!("z_M={z_m} r={r} s={s}: {} vs {want}", got.z)
        })?;
        checked += 1;
    }
    let cfg = qhf(&mut rng, 0.6, 8.0, -5.0);
    let zs: Vec<f64> =
        segment_query_points(BevGridIndex::new(0, 0), &cfg, &pillar_grid(0.6, -5.0, 8.0))
            .iter()
            .map(|q| q.z)
            .collect();
    let want = [-4.4, -3.2, -2.0, -0.8, 0.4, 1.6];
    ensure(cfg.num_segments == 6 && zs.len() == 6, || {
        format!("M = {}", cfg.num_segments)
    })?;
    // 0.6 is inexact in binary, so the decimal heights are only reachable to
    // one ulp of the operand scale (|z_M| = 5)
    for (a, b) in zs.iter().zip(want) {
        ensure((a - b).abs() <= ulp(5.0), || {
            format!("full-scale instance: {zs:?}")
        })?;
    }
    let spent = within_time(start, Duration::from_secs(1))?;
    Ok(format!(
        "{checked} triples + full-scale instance M=6 {zs:?} in {spent:?}"
    ))
}

fn scan_ball(points: &[LidarPoint], q: [f64; 3], radius: f64, k: usize) -> Vec<usize> {
    let mut hits: Vec<(f64, usize)> = Vec::new();
    for (i, p) in points.iter().enumerate() {
        let d = ((p.x as f64 - q[0]).powi(2)
            + (p.y as f64 - q[1]).powi(2)
            + (p.z as f64 - q[2]).powi(2))
        .sqrt();
        if d <= radius {
            hits.push((d, i));
        }
    }
    hits.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    hits.into_iter().take(k).map(|h| h.1).collect()
}

fn scan_bev(
    grids: &BevGrids,
    cell: BevGridIndex,
    window: (usize, usize),
    k: usize,
    manhattan: bool,
) -> Vec<BevGridIndex> {
    let mut hits: Vec<(usize, usize, usize)> = Vec::new();
    for g in grids.keys() {
        let di = (g.i as i64 - cell.i as i64).unsigned_abs() as usize;
        let dj = (g.j as i64 - cell.j as i64).unsigned_abs() as usize;
        let inside = if manhattan {
            di + dj <= window.0
        } else {
            di <= window.0 && dj <= window.1
        };
        if inside {
            hits.push((di + dj, g.i, g.j));
        }
    }
    hits.sort();
    hits.into_iter()
        .take(k)
        .map(|(_, i, j)| BevGridIndex::new(i, j))
        .collect()
}

/// Both query mechanisms agree with full scans in membership and order.
fn criterion_2() -> Outcome {
    let start = Instant::now();
    let searches = search_registry();
    let hoods = neighborhood_registry();
    let (mut scenes, mut queries) = (0, 0);
    for seed in 0..1000u64 {
        let mut rng = seeded_rng(10_000 + seed);
        let n = rng.random_range(0..=2000);
        let half = rng.random_range(2.0..10.0);
        let pts: Vec<LidarPoint> = (0..n)
            .map(|_| LidarPoint {
                // coarse quantisation provokes distance ties
                x: (rng.random_range(-half..half) * 8.0f64).round() as f32 / 8.0,
                y: (rng.random_range(-half..half) * 8.0f64).round() as f32 / 8.0,
                z: (rng.random_range(-3.0..3.0) * 8.0f64).round() as f32 / 8.0,
                intensity: 0.0,
                t: 0.0,
            })
            .collect();
        let radius = rng.random_range(0.1..1.5);
        let k = rng.random_range(1..=32);
        for name in searches.names() {
            let index = searches.get(name).unwrap().build(&pts, radius);
            for _ in 0..4 {
                let q = [
                    rng.random_range(-half..half),
                    rng.random_range(-half..half),
                    rng.random_range(-3.0..3.0),
                ];
                let got = index.ball_query(q, radius, k).indices();
                let want = scan_ball(&pts, q, radius, k);
                ensure(got == want, || {
                    format!("ball query seed {seed} backend {name}")
                })?;
                queries += 1;
            }
        }
        let side = rng.random_range(1..=40);
        let fill = rng.random_range(0.0..1.0);
        let mut grids = BevGrids::new();
        for i in 0..side {
            for j in 0..side {
                if rng.random_bool(fill) {
                    grids.insert(BevGridIndex::new(i, j), vec![1.0]);
                }
            }
        }
        for name in hoods.names() {
            let hood = hoods.get(name).unwrap();
            for _ in 0..4 {
                let cell = BevGridIndex::new(rng.random_range(0..side), rng.random_range(0..side));
                let window = (rng.random_range(0..=4), rng.random_range(0..=4));
                let k = rng.random_range(1..=32);
                let got = bev_query(cell, &grids, window, k, hood.as_ref()).cells();
                let want = scan_bev(&grids, cell, window, k, name == "manhattan");
                ensure(got == want, || format!("bev query seed {seed} mode {name}"))?;
                queries += 1;
            }
        }
        scenes += 1;
    }
    let spent = within_time(start, Duration::from_secs(30))?;
    Ok(format!(
        "{scenes} scenes, {queries} queries, 0 mismatches in {spent:?}"
    ))
}

/// Query balls of radius r/2 in one pillar never share a point.
fn criterion_3() -> Outcome {
    let mut rng = seeded_rng(3);
    let mut configs: Vec<(f64, f64)> = [
        PipelineConfig::desk(),
        PipelineConfig::paper(),
        PipelineConfig::tiny(),
    ]
    .iter()
    .map(|c| (c.pillar_height(), c.qhf.r))
    .collect();
    configs.extend([(7.0, 0.32), (8.0, 0.25), (8.0, 0.5), (6.0, 1.5)]);
    for _ in 0..100 {
        let r = rng.random_range(0.1..2.0);
        configs.push((rng.random_range(2.0 * r..16.0), r));
    }
    let mut pairs = 0;
    for &(h, r) in &configs {
        let cfg = qhf(&mut rng, r, h, -5.0);
        let radius = r / 2.0;
        ensure(cfg.ball_radius == radius, || {
            format!("default ball radius {} for r={r}", cfg.ball_radius)
        })?;
        let qs = segment_query_points(BevGridIndex::new(1, 1), &cfg, &pillar_grid(r, -5.0, h));
        for a in 0..qs.len() {
            for b in a + 1..qs.len() {
                let d = (qs[a].z - qs[b].z).abs();
                ensure(d > 2.0 * radius, || {
                    format!("h={h} r={r}: balls {a},{b} centers {d} apart")
                })?;
                pairs += 1;
            }
        }
        // no sample point in the pillar lies in two balls
        for _ in 0..200 {
            let p = [
                qs[0].x + rng.random_range(-radius..radius),
                qs[0].y + rng.random_range(-radius..radius),
                rng.random_range(-5.0..-5.0 + h),
            ];
            let inside = qs
                .iter()
                .filter(|q| {
                    ((p[0] - q.x).powi(2) + (p[1] - q.y).powi(2) + (p[2] - q.z).powi(2)).sqrt()
                        <= radius
                })
                .count();
            ensure(inside <= 1, || {
                format!("h={h} r={r}: point {p:?} in {inside} balls")
            })?;
        }
    }
    Ok(format!(
        "{} (h, r) configs, {pairs} ball pairs, 0 violations",
        configs.len()
    ))
}

fn check_channels(run: &lrfuse::harness::PipelineRun, c1: usize) -> Result<(), String> {
    let s = &run.stats;
    ensure(
        s.radar.m_r[0] == 32
            && s.l2r.enhanced[0] == 96
            && s.r2l.fused[0] == c1 + 96
            && s.r2l.encoded[0] == 512,
        || {
            format!(
                "channel chain {} -> {} -> {} -> {}",
                s.radar.m_r[0], s.l2r.enhanced[0], s.r2l.fused[0], s.r2l.encoded[0]
            )
        },
    )?;
    ensure(
        run.maps["m_r"].channels() == 32
            && run.maps["enhanced"].channels() == 96
            && run.maps["encoded"].channels() == 512,
        || "map channels".into(),
    )
}

/// 32 -> 96 -> C1+96 -> 512 on every run.
fn criterion_4() -> Outcome {
    let mut runs = 0;
    let desk = PipelineConfig::desk();
    let model = Model::build(&desk).map_err(|e| e.to_string())?;
    let frame = simulate(&desk, 4).map_err(|e| e.to_string())?;
    let run = run_pipeline(&desk, &model, &frame.lidar, &frame.radar).map_err(|e| e.to_string())?;
    check_channels(&run, desk.channels.c1)?;
    runs += 1;
    for variant in [
        lrfuse::scene::RadarVariant::A,
        lrfuse::scene::RadarVariant::B,
    ] {
        let mut cfg = PipelineConfig::tiny();
        cfg.radar_variant = variant;
        let model = Model::build(&cfg).map_err(|e| e.to_string())?;
        for seed in 0..10 {
            let frame = simulate(&cfg, seed).map_err(|e| e.to_string())?;
            let run = run_pipeline(&cfg, &model, &frame.lidar, &frame.radar)
                .map_err(|e| e.to_string())?;
            check_channels(&run, cfg.channels.c1)?;
            runs += 1;
        }
        let empty = run_pipeline(&cfg, &model, &[], &RadarCloud::empty(variant))
            .map_err(|e| e.to_string())?;
        check_channels(&empty, cfg.channels.c1)?;
        runs += 1;
    }
    Ok(format!(
        "{runs} runs: M_R 32, enhanced 96, fused C1+96, encoder 512"
    ))
}

fn bits(m: &FeatureMap) -> Vec<u64> {
    m.data().iter().map(|v| v.to_bits()).collect()
}

/// Point order never changes M_L, M_R, eta_H, eta_B or detections.
fn criterion_5() -> Outcome {
    let start = Instant::now();
    let cfg = PipelineConfig::tiny();
    let model = Model::build(&cfg).map_err(|e| e.to_string())?;
    let mut compared = 0;
    for scene_seed in 0..20u64 {
        let frame = simulate(&cfg, 500 + scene_seed).map_err(|e| e.to_string())?;
        let base =
            run_pipeline(&cfg, &model, &frame.lidar, &frame.radar).map_err(|e| e.to_string())?;
        let mut rng = seeded_rng(scene_seed);
        for shuffle in 0..100 {
            let mut lidar = frame.lidar.clone();
            lidar.shuffle(&mut rng);
            let mut radar_pts = frame.radar.points().to_vec();
            radar_pts.shuffle(&mut rng);
            let radar =
                RadarCloud::new(frame.radar.variant(), radar_pts).map_err(|e| e.to_string())?;
            let run = run_pipeline(&cfg, &model, &lidar, &radar).map_err(|e| e.to_string())?;
            let tag = || format!("scene {scene_seed} shuffle {shuffle}");
            ensure(bits(&run.maps["m_l"]) == bits(&base.maps["m_l"]), || {
                format!("{} M_L", tag())
            })?;
            ensure(bits(&run.maps["m_r"]) == bits(&base.maps["m_r"]), || {
                format!("{} M_R", tag())
            })?;
            ensure(run.pseudo.len() == base.pseudo.len(), || {
                format!("{} pseudo count", tag())
            })?;
            for (a, b) in run.pseudo.iter().zip(&base.pseudo) {
                let same = a.cell == b.cell
                    && a.eta_h
                        .iter()
                        .map(|v| v.to_bits())
                        .eq(b.eta_h.iter().map(|v| v.to_bits()))
                    && a.eta_b
                        .iter()
                        .map(|v| v.to_bits())
                        .eq(b.eta_b.iter().map(|v| v.to_bits()));
                ensure(same, || format!("{} pseudo feature at {:?}", tag(), a.cell))?;
            }
            let dets =
                |r: &lrfuse::harness::PipelineRun| serde_json::to_string(&r.detections).unwrap();
            ensure(dets(&run) == dets(&base), || {
                format!("{} detections", tag())
            })?;
            compared += 1;
        }
    }
    Ok(format!(
        "{compared} shuffled runs bit-identical in {:?}",
        start.elapsed()
    ))
}

/// Non-zero enhanced cells equal non-empty pillars, found by floor division.
fn criterion_6() -> Outcome {
    let mut runs = 0;
    for (cfg, seeds) in [
        (PipelineConfig::tiny(), 0..20u64),
        (PipelineConfig::desk(), 0..2u64),
    ] {
        let model = Model::build(&cfg).map_err(|e| e.to_string())?;
        for seed in seeds {
            let frame = simulate(&cfg, 900 + seed).map_err(|e| e.to_string())?;
            let run = run_pipeline(&cfg, &model, &frame.lidar, &frame.radar)
                .map_err(|e| e.to_string())?;
            let (x0, y0, c) = (cfg.range_min[0], cfg.range_min[1], cfg.radar_cell[0]);
            let n = ((cfg.range_max[0] - x0) / c).round() as i64;
            let pillars: BTreeSet<(usize, usize)> = frame
                .radar
                .points()
                .iter()
                .filter_map(|p| {
                    let i = ((p.x as f64 - x0) / c).floor() as i64;
                    let j = ((p.y as f64 - y0) / c).floor() as i64;
                    (i >= 0 && j >= 0 && i < n && j < n).then_some((i as usize, j as usize))
                })
                .collect();
            let enhanced = run.maps["enhanced"].count_nonzero_cells();
            let pseudo_cells: BTreeSet<(usize, usize)> =
                run.pseudo.iter().map(|p| (p.cell.i, p.cell.j)).collect();
            ensure(enhanced == pillars.len(), || {
                format!(
                    "seed {seed}: {enhanced} enhanced cells, {} pillars",
                    pillars.len()
                )
            })?;
            ensure(
                pseudo_cells == pillars && run.pseudo.len() == pillars.len(),
                || format!("seed {seed}: pseudo features off the pillars"),
            )?;
            runs += 1;
        }
    }
    Ok(format!("{runs} runs, enhanced cells == non-empty pillars"))
}

/// 8x8 BEV, two classes, regression values kept 0.05..0.5 from their targets.
fn loss_instance(seed: u64) -> (HeadOutputs, Targets, f64) {
    let mut rng = seeded_rng(seed);
    let grid = GridSpec::from_range([0.0, 0.0, -3.0], [4.0, 4.0, 3.0], [0.5, 0.5, 6.0]).unwrap();
    let n = rng.random_range(0..=3);
    let mut boxes: Vec<GroundTruthBox> = Vec::new();
    while boxes.len() < n {
        let b = GroundTruthBox {
            center: [
                rng.random_range(0.0..4.0),
                rng.random_range(0.0..4.0),
                rng.random_range(-2.0..0.0),
            ],
            size: [
                rng.random_range(0.5..2.0),
                rng.random_range(0.5..2.0),
                rng.random_range(1.0..3.0),
            ],
            yaw: rng.random_range(-3.1..3.1),
            velocity: [rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0)],
            class_id: rng.random_range(0..2),
        };
        let cell = grid.bev_index(b.center[0], b.center[1]);
        if boxes
            .iter()
            .all(|o| grid.bev_index(o.center[0], o.center[1]) != cell)
        {
            boxes.push(b);
        }
    }
    let targets = render_targets(&boxes, &grid, 2).unwrap();
    let exact = outputs_from_targets(&targets).unwrap();
    let mut min_gap = f64::INFINITY;
    let mut jitter = |m: &FeatureMap, rng: &mut rand_chacha::ChaCha8Rng| {
        let mut out = m.clone();
        for v in out.data_mut() {
            let d: f64 = rng.random_range(0.05..0.5);
            *v += if rng.random_bool(0.5) { d } else { -d };
            min_gap = min_gap.min(d);
        }
        out
    };
    let offset = jitter(&exact.offset, &mut rng);
    let z = jitter(&exact.z, &mut rng);
    let size = jitter(&exact.size, &mut rng);
    let rot = jitter(&exact.rot, &mut rng);
    let vel = jitter(&exact.vel, &mut rng);
    let logits = FeatureMap::from_vec(
        2,
        8,
        8,
        (0..128).map(|_| rng.random_range(-4.0..4.0)).collect(),
    )
    .unwrap();
    (
        HeadOutputs::from_logits(logits, offset, z, size, rot, vel).unwrap(),
        targets,
        min_gap,
    )
}

fn flatten(h: &HeadOutputs) -> Vec<f64> {
    [&h.logits, &h.offset, &h.z, &h.size, &h.rot, &h.vel]
        .iter()
        .flat_map(|m| m.data().to_vec())
        .collect()
}

fn unflatten(like: &HeadOutputs, p: &[f64]) -> HeadOutputs {
    let mut at = 0;
    let mut take = |m: &FeatureMap| {
        let n = m.data().len();
        at += n;
        FeatureMap::from_vec(m.channels(), m.height(), m.width(), p[at - n..at].to_vec()).unwrap()
    };
    let (l, o, z, s, r, v) = (
        take(&like.logits),
        take(&like.offset),
        take(&like.z),
        take(&like.size),
        take(&like.rot),
        take(&like.vel),
    );
    HeadOutputs::from_logits(l, o, z, s, r, v).unwrap()
}

/// Central differences agree with the analytic loss gradient.
fn criterion_7() -> Outcome {
    let start = Instant::now();
    let weights = LossWeights {
        heatmap: 1.0,
        offset: 2.0,
        z: 0.5,
        size: 1.0,
        rot: 1.5,
        vel: 0.25,
    };
    let (mut checked, mut excluded, mut worst) = (0, 0, 0.0f64);
    let mut seed = 0;
    while checked < 100 {
        seed += 1;
        let (h, targets, min_gap) = loss_instance(seed);
        // |pred - target| < 1e-2 would put the L1 kink inside the stencil
        if min_gap < 1e-2 {
            excluded += 1;
            continue;
        }
        let (_, g) = compute_loss(&h, &targets, &weights).map_err(|e| e.to_string())?;
        let analytic: Vec<f64> = [&g.logits, &g.offset, &g.z, &g.size, &g.rot, &g.vel]
            .iter()
            .flat_map(|m| m.data().to_vec())
            .collect();
        let f = |p: &[f64]| Ok(compute_loss(&unflatten(&h, p), &targets, &weights)?.0.total);
        let report =
            finite_diff_check(f, &flatten(&h), &analytic, 1e-3, 1e-3).map_err(|e| e.to_string())?;
        ensure(report.passed, || {
            format!("seed {seed}: max rel diff {}", report.max_rel_diff)
        })?;
        worst = worst.max(report.max_rel_diff);
        checked += 1;
    }
    let spent = within_time(start, Duration::from_secs(60))?;
    Ok(format!("{checked} instances ({excluded} kink-adjacent excluded), worst rel diff {worst:.2e}, {spent:?}"))
}

fn angle_diff(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(2.0 * std::f64::consts::PI);
    d.min(2.0 * std::f64::consts::PI - d)
}

/// Rendered targets decode back to the planted boxes.
fn criterion_8() -> Outcome {
    let grid = PipelineConfig::desk()
        .grids()
        .map_err(|e| e.to_string())?
        .bev;
    let half = grid.cell[0] / 2.0;
    let mut boxes_total = 0;
    for seed in 0..100u64 {
        let mut rng = seeded_rng(800 + seed);
        let params = SceneParams {
            num_objects: rng.random_range(0..=8),
            extent: Extent::symmetric(15.0),
            ..SceneParams::default()
        };
        let scene = generate_scene(&params, seed).map_err(|e| e.to_string())?;
        let targets = render_targets(&scene.objects, &grid, 2).map_err(|e| e.to_string())?;
        let dets = decode_detections(
            &outputs_from_targets(&targets).map_err(|e| e.to_string())?,
            &grid,
            0.5,
            100,
        );
        ensure(dets.len() == scene.objects.len(), || {
            format!(
                "seed {seed}: {} boxes, {} detections",
                scene.objects.len(),
                dets.len()
            )
        })?;
        for b in &scene.objects {
            let d = dets
                .iter()
                .find(|d| {
                    d.class_id == b.class_id
                        && (d.x - b.center[0]).abs() <= half
                        && (d.y - b.center[1]).abs() <= half
                })
                .ok_or(format!("seed {seed}: box at {:?} not recovered", b.center))?;
            ensure(
                (d.l - b.size[0]).abs() < 1e-9
                    && (d.w - b.size[1]).abs() < 1e-9
                    && (d.h - b.size[2]).abs() < 1e-9,
                || format!("seed {seed}: size"),
            )?;
            ensure(angle_diff(d.yaw, b.yaw) < 1e-9, || {
                format!("seed {seed}: yaw {} vs {}", d.yaw, b.yaw)
            })?;
            ensure(
                d.yaw > -std::f64::consts::PI && d.yaw <= std::f64::consts::PI,
                || "yaw range".into(),
            )?;
        }
        boxes_total += scene.objects.len();
    }
    Ok(format!("100 scenes, {boxes_total} boxes recovered"))
}

/// Lifting the LiDAR points of a queried pillar changes eta_H.
fn criterion_9() -> Outcome {
    let search = search_registry()
        .get("hash-grid")
        .map_err(|e| e.to_string())?;
    let grid = GridSpec::from_range([-4.0, -4.0, -5.0], [4.0, 4.0, 3.0], [1.0, 1.0, 8.0]).unwrap();
    let mut differ = 0;
    for seed in 0..100u64 {
        let mut rng = seeded_rng(9000 + seed);
        let cfg = qhf(&mut rng, 1.0, 8.0, -5.0);
        let (i, j) = (rng.random_range(0..8), rng.random_range(0..8));
        let [cx, cy] = grid.cell_center(i, j);
        // shared context outside the pillar
        let mut shared: Vec<LidarPoint> = (0..200)
            .map(|_| LidarPoint {
                x: rng.random_range(-4.0..4.0) as f32,
                y: rng.random_range(-4.0..4.0) as f32,
                z: rng.random_range(-5.0..3.0) as f32,
                intensity: rng.random_range(0.0..1.0),
                t: 0.0,
            })
            .filter(|p| grid.bev_index(p.x as f64, p.y as f64) != Some((i, j)))
            .collect();
        let inside: Vec<(f32, f32, f32)> = (0..15)
            .map(|_| {
                (
                    rng.random_range(-0.3..0.3),
                    rng.random_range(-0.3..0.3),
                    rng.random_range(0.0..1.0),
                )
            })
            .collect();
        let make = |z_lo: f64, z_hi: f64, rng: &mut rand_chacha::ChaCha8Rng| -> Vec<LidarPoint> {
            inside
                .iter()
                .map(|&(dx, dy, a)| LidarPoint {
                    x: cx as f32 + dx,
                    y: cy as f32 + dy,
                    z: (z_lo + (z_hi - z_lo) * rng.random_range(0.0..1.0)) as f32,
                    intensity: a,
                    t: 0.0,
                })
                .collect()
        };
        let low = make(-4.9, -3.2, &mut rng);
        let high = make(0.8, 2.9, &mut rng);
        let mut a = shared.clone();
        a.extend(low);
        shared.extend(high);
        let eta = |pts: &[LidarPoint]| {
            qhf_fuse(
                BevGridIndex::new(i, j),
                &cfg,
                &grid,
                pts,
                search.build(pts, cfg.ball_radius).as_ref(),
            )
            .unwrap()
            .eta_h
        };
        if eta(&a) != eta(&shared) {
            differ += 1;
        }
    }
    ensure(differ >= 95, || {
        format!("eta_H differed on only {differ}/100 seeds")
    })?;
    Ok(format!("eta_H differed on {differ}/100 seeds"))
}

/// Hand-set weights turn one planted object into exactly one detection.
fn criterion_10() -> Outcome {
    let start = Instant::now();
    let mut cfg = PipelineConfig::desk();
    cfg.weights = WeightInit::IdentityLike;
    cfg.scene.lidar.ground_density = 0.0;
    let planted = GroundTruthBox {
        center: [3.3, -2.1, -1.05],
        size: [1.0, 1.0, 1.5],
        yaw: 0.3,
        velocity: [0.0, 0.0],
        class_id: 0,
    };
    let scene = Scene {
        objects: vec![planted],
        sensor_height: -1.3,
        ground_z: -1.8,
        rng_seed: 0,
        extent: Extent::symmetric(16.0),
    };
    let cell = cfg.grids().map_err(|e| e.to_string())?.bev.cell[0];
    let mut outputs = Vec::new();
    for _ in 0..5 {
        let model = Model::build(&cfg).map_err(|e| e.to_string())?;
        let frame = simulate_scene(&cfg, scene.clone(), 10).map_err(|e| e.to_string())?;
        let run =
            run_pipeline(&cfg, &model, &frame.lidar, &frame.radar).map_err(|e| e.to_string())?;
        ensure(run.detections.len() == 1, || {
            format!("{} detections: {:?}", run.detections.len(), run.detections)
        })?;
        let d = run.detections[0];
        let dist = (d.x - planted.center[0]).hypot(d.y - planted.center[1]);
        ensure(dist <= cell, || {
            format!("detection {dist} m from the planted center")
        })?;
        outputs.push(serde_json::to_string(&run.detections).unwrap());
    }
    ensure(outputs.windows(2).all(|w| w[0] == w[1]), || {
        "runs differ".into()
    })?;
    let spent = within_time(start, Duration::from_secs(10))?;
    Ok(format!(
        "5 identical runs, one detection within one {cell} m cell, {spent:?}"
    ))
}

/// Perfect copies score 1; a 3 m shift only matches at 4 m.
fn criterion_11() -> Outcome {
    for seed in 0..20u64 {
        let scene = generate_scene(
            &SceneParams {
                num_objects: 6,
                ..SceneParams::default()
            },
            seed,
        )
        .map_err(|e| e.to_string())?;
        let gts = &scene.objects;
        let perfect = eval_detections(&perfect_detections(gts), gts);
        ensure(perfect.mean_ap == vec![1.0; 4], || {
            format!("seed {seed}: perfect AP {:?}", perfect.mean_ap)
        })?;
        ensure(
            perfect.ap_by_class.iter().all(|c| c.ap == vec![1.0; 4]),
            || "per-class AP".into(),
        )?;
        ensure(perfect.mean_velocity_error == Some(0.0), || {
            format!("velocity error {:?}", perfect.mean_velocity_error)
        })?;
        let mut shifted = perfect_detections(gts);
        let mut rng = seeded_rng(seed);
        for d in &mut shifted {
            let a: f64 = rng.random_range(0.0..std::f64::consts::TAU);
            d.x += 3.0 * a.cos();
            d.y += 3.0 * a.sin();
        }
        let moved = eval_detections(&shifted, gts);
        ensure(moved.mean_ap == vec![0.0, 0.0, 0.0, 1.0], || {
            format!("seed {seed}: shifted AP {:?}", moved.mean_ap)
        })?;
    }
    Ok("20 scenes: AP 1 at all thresholds, shifted AP [0, 0, 0, 1]".into())
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 11] = [
        ("1 segment query heights", criterion_1),
        ("2 query oracle equivalence", criterion_2),
        ("3 non-overlapping query balls", criterion_3),
        ("4 channel contract", criterion_4),
        ("5 permutation invariance", criterion_5),
        ("6 sparsity preservation", criterion_6),
        ("7 loss gradient", criterion_7),
        ("8 decode fidelity", criterion_8),
        ("9 height sensitivity", criterion_9),
        ("10 hand-set end-to-end smoke", criterion_10),
        ("11 eval metric sanity", criterion_11),
    ];
    let filter: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .collect();
    let mut failed = 0;
    for (name, run) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        match run() {
            Ok(detail) => println!("criterion {name}: PASS ({detail})"),
            Err(detail) => {
                failed += 1;
                println!("criterion {name}: FAIL ({detail})");
            }
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}

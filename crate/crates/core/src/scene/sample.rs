use rand::Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use super::types::{
    GroundTruthBox, LidarPoint, RadarCloud, RadarExtras, RadarPoint, RadarVariant, Scene,
};
use crate::error::Result;
use crate::tensor::seeded_rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LidarSampling {
    /// Expected points per square meter of visible box surface.
    pub density: f64,
    /// Expected points per square meter of ground plane.
    pub ground_density: f64,
    pub noise_sigma: f64,
}

impl Default for LidarSampling {
    fn default() -> Self {
        Self {
            density: 40.0,
            ground_density: 0.5,
            noise_sigma: 0.02,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadarSampling {
    pub returns_min: usize,
    pub returns_max: usize,
    pub variant: RadarVariant,
    /// RCS range per class id; the last entry covers higher ids.
    pub rcs: Vec<[f64; 2]>,
}

impl Default for RadarSampling {
    fn default() -> Self {
        Self {
            returns_min: 1,
            returns_max: 3,
            variant: RadarVariant::A,
            rcs: super::generate::default_classes()
                .into_iter()
                .map(|c| c.rcs)
                .collect(),
        }
    }
}

fn poisson<R: Rng + ?Sized>(rng: &mut R, mean: f64) -> usize {
    if mean <= 0.0 {
        return 0;
    }
    match Poisson::new(mean) {
        Ok(d) => d.sample(rng) as usize,
        Err(_) => 0,
    }
}

/// Visible surface of a box: top face plus four sides.
pub(crate) fn visible_area(size: [f64; 3]) -> f64 {
    let [l, w, h] = size;
    l * w + 2.0 * (l * h + w * h)
}

fn surface_point<R: Rng + ?Sized>(rng: &mut R, b: &GroundTruthBox) -> [f64; 3] {
    let [l, w, h] = b.size;
    let faces = [l * w, w * h, w * h, l * h, l * h];
    let total: f64 = faces.iter().sum();
    let mut pick = rng.random_range(0.0..total);
    let mut face = faces.len() - 1;
    for (k, a) in faces.iter().enumerate() {
        if pick < *a {
            face = k;
            break;
        }
        pick -= a;
    }
    let u = rng.random_range(-0.5..0.5);
    let v = rng.random_range(-0.5..0.5);
    let local = match face {
        0 => [u * l, v * w, h / 2.0],
        1 => [l / 2.0, u * w, v * h],
        2 => [-l / 2.0, u * w, v * h],
        3 => [u * l, w / 2.0, v * h],
        _ => [u * l, -w / 2.0, v * h],
    };
    b.to_world(local)
}

/// Samples box surfaces and the ground plane with Gaussian position noise
/// (truncated at three standard deviations).
/// Object `k` yields `Poisson(density * visible_area)` points.
pub fn lidar_sample(scene: &Scene, cfg: &LidarSampling, seed: u64) -> Vec<LidarPoint> {
    let mut rng = seeded_rng(seed);
    let noise = Normal::new(0.0, cfg.noise_sigma.max(0.0)).expect("finite sigma");
    let mut out = Vec::new();
    let mut push = |rng: &mut rand_chacha::ChaCha8Rng, p: [f64; 3], intensity: f64| {
        // Gaussian noise truncated at 3 sigma by resampling.
        let jitter = |rng: &mut rand_chacha::ChaCha8Rng| {
            if cfg.noise_sigma <= 0.0 {
                return 0.0;
            }
            loop {
                let n: f64 = noise.sample(rng);
                if n.abs() <= 3.0 * cfg.noise_sigma {
                    return n;
                }
            }
        };
        let x = p[0] + jitter(rng);
        let y = p[1] + jitter(rng);
        let z = p[2] + jitter(rng);
        out.push(LidarPoint {
            x: x as f32,
            y: y as f32,
            z: z as f32,
            intensity: intensity.clamp(0.0, 1.0) as f32,
            t: 0.0,
        });
    };
    for b in &scene.objects {
        let n = poisson(&mut rng, cfg.density * visible_area(b.size));
        for _ in 0..n {
            let p = surface_point(&mut rng, b);
            let intensity = 0.3 + 0.1 * b.class_id as f64 + rng.random_range(-0.05..0.05);
            push(&mut rng, p, intensity);
        }
    }
    let n_ground = poisson(&mut rng, cfg.ground_density * scene.extent.area());
    for _ in 0..n_ground {
        let x = rng.random_range(scene.extent.x[0]..scene.extent.x[1]);
        let y = rng.random_range(scene.extent.y[0]..scene.extent.y[1]);
        let intensity = rng.random_range(0.02..0.1);
        push(&mut rng, [x, y, scene.ground_z], intensity);
    }
    out
}

/// Positions are quantised to 1/256 m.
const POSITION_STEP: f64 = 1.0 / 256.0;
/// Significant bits kept in the Doppler scale `radial / range`. With 8
/// fractional position bits and |x| < 128 m the products `x * scale` fit in
/// 24 bits, so the stored `f32` velocity is exactly parallel to the stored
/// position.
const DOPPLER_BITS: i32 = 9;

fn quantise_scale(s: f64) -> f64 {
    if s == 0.0 || !s.is_finite() {
        return 0.0;
    }
    let e = s.abs().log2().floor() as i32 - (DOPPLER_BITS - 1);
    let step = 2f64.powi(e);
    (s / step).round() * step
}

fn perimeter_point<R: Rng + ?Sized>(rng: &mut R, b: &GroundTruthBox) -> [f64; 3] {
    let [l, w, _] = b.size;
    let edges = [l, l, w, w];
    let mut pick = rng.random_range(0.0..2.0 * (l + w));
    let mut edge = 3;
    for (k, len) in edges.iter().enumerate() {
        if pick < *len {
            edge = k;
            break;
        }
        pick -= len;
    }
    let u = rng.random_range(-0.5..0.5);
    let local = match edge {
        0 => [u * l, w / 2.0, 0.0],
        1 => [u * l, -w / 2.0, 0.0],
        2 => [l / 2.0, u * w, 0.0],
        _ => [-l / 2.0, u * w, 0.0],
    };
    b.to_world(local)
}

/// Draws `returns_min..=returns_max` returns per object on the BEV outline.
/// Velocities follow a Doppler model with the sensor at the origin: the
/// object velocity projected onto the line of sight.
pub fn radar_sample(scene: &Scene, cfg: &RadarSampling, seed: u64) -> Result<RadarCloud> {
    let mut rng = seeded_rng(seed);
    let mut points = Vec::new();
    let (lo, hi) = (
        cfg.returns_min.min(cfg.returns_max),
        cfg.returns_max.max(cfg.returns_min),
    );
    let fallback = [[0.0, 1.0]];
    let rcs_ranges: &[[f64; 2]] = if cfg.rcs.is_empty() {
        &fallback
    } else {
        &cfg.rcs
    };
    for b in &scene.objects {
        let n = rng.random_range(lo..=hi);
        for _ in 0..n {
            let p = perimeter_point(&mut rng, b);
            let x = (p[0] / POSITION_STEP).round() * POSITION_STEP;
            let y = (p[1] / POSITION_STEP).round() * POSITION_STEP;
            let range_sq = x * x + y * y;
            let scale = if range_sq > 0.0 {
                quantise_scale((b.velocity[0] * x + b.velocity[1] * y) / range_sq)
            } else {
                0.0
            };
            let rcs_range = rcs_ranges[b.class_id.min(rcs_ranges.len() - 1)];
            let rcs = if rcs_range[1] > rcs_range[0] {
                rng.random_range(rcs_range[0]..rcs_range[1])
            } else {
                rcs_range[0]
            };
            let moving = b.velocity != [0.0, 0.0];
            let extras = match cfg.variant {
                RadarVariant::A => Some(RadarExtras {
                    vx: (x * scale) as f32,
                    vy: (y * scale) as f32,
                    dyn_prop: if moving { 0.0 } else { 1.0 },
                    invalid_state: 0.0,
                    pdh0: 1.0,
                }),
                RadarVariant::B => None,
            };
            points.push(RadarPoint {
                x: x as f32,
                y: y as f32,
                rcs: rcs as f32,
                t: 0.0,
                extras,
            });
        }
    }
    RadarCloud::new(cfg.variant, points)
}

use nalgebra::{Isometry3, Point3, Translation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use super::sample::{lidar_sample, radar_sample, LidarSampling, RadarSampling};
use super::types::{LidarPoint, RadarCloud, RadarPoint, Scene};
use crate::error::{Error, Result};

/// A point type that can be moved into another frame by a rigid transform.
/// Everything except the coordinates (and velocity direction) is carried
/// over unchanged.
pub trait PoseTransform: Clone {
    fn transformed(&self, pose: &Isometry3<f64>) -> Self;
}

impl PoseTransform for LidarPoint {
    fn transformed(&self, pose: &Isometry3<f64>) -> Self {
        let p = pose.transform_point(&Point3::new(self.x as f64, self.y as f64, self.z as f64));
        LidarPoint {
            x: p.x as f32,
            y: p.y as f32,
            z: p.z as f32,
            ..*self
        }
    }
}

impl PoseTransform for RadarPoint {
    fn transformed(&self, pose: &Isometry3<f64>) -> Self {
        let p = pose.transform_point(&Point3::new(self.x as f64, self.y as f64, 0.0));
        let extras = self.extras.map(|mut e| {
            let v = pose
                .rotation
                .transform_vector(&Vector3::new(e.vx as f64, e.vy as f64, 0.0));
            e.vx = v.x as f32;
            e.vy = v.y as f32;
            e
        });
        RadarPoint {
            x: p.x as f32,
            y: p.y as f32,
            extras,
            ..*self
        }
    }
}

/// Merges the first `n` sweeps into the keyframe. `poses[k]` maps sweep
/// `k` into keyframe coordinates.
pub fn accumulate_sweeps<P: PoseTransform>(
    sweeps: &[Vec<P>],
    poses: &[Isometry3<f64>],
    n: usize,
) -> Result<Vec<P>> {
    if poses.len() != sweeps.len() {
        return Err(Error::Argument(format!(
            "{} sweeps but {} poses",
            sweeps.len(),
            poses.len()
        )));
    }
    if n > sweeps.len() {
        return Err(Error::Argument(format!(
            "asked for {n} sweeps, only {} available",
            sweeps.len()
        )));
    }
    let total = sweeps[..n].iter().map(Vec::len).sum();
    let mut out = Vec::with_capacity(total);
    for (cloud, pose) in sweeps[..n].iter().zip(poses) {
        out.extend(cloud.iter().map(|p| p.transformed(pose)));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub lidar_sweeps: usize,
    pub radar_sweeps: usize,
    pub lidar_period: f64,
    pub radar_period: f64,
    /// Constant ego velocity in m/s.
    pub ego_velocity: [f64; 3],
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            lidar_sweeps: 10,
            radar_sweeps: 6,
            lidar_period: 0.05,
            radar_period: 0.077,
            ego_velocity: [3.0, 0.0, 0.0],
        }
    }
}

/// Raw per-sweep clouds with their sweep-to-keyframe poses.
#[derive(Debug, Clone)]
pub struct SweepSet {
    pub lidar: Vec<Vec<LidarPoint>>,
    pub lidar_poses: Vec<Isometry3<f64>>,
    pub radar: Vec<RadarCloud>,
    pub radar_poses: Vec<Isometry3<f64>>,
}

impl SweepSet {
    pub fn accumulate_lidar(&self, n: usize) -> Result<Vec<LidarPoint>> {
        accumulate_sweeps(&self.lidar, &self.lidar_poses, n)
    }

    pub fn accumulate_radar(&self, n: usize) -> Result<RadarCloud> {
        let variant = self
            .radar
            .first()
            .map(|r| r.variant())
            .unwrap_or(crate::scene::RadarVariant::A);
        let clouds: Vec<Vec<RadarPoint>> = self.radar.iter().map(|r| r.points().to_vec()).collect();
        RadarCloud::new(variant, accumulate_sweeps(&clouds, &self.radar_poses, n)?)
    }
}

fn sweep_seed(seed: u64, stream: u64, k: usize) -> u64 {
    seed ^ (stream << 56) ^ ((k as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Scene as seen from the ego frame `dt` seconds after the keyframe
/// (`dt <= 0` for past sweeps), with a constant-velocity ego.
fn scene_at(scene: &Scene, ego_velocity: [f64; 3], dt: f64) -> Scene {
    let mut s = scene.clone();
    for o in &mut s.objects {
        o.center[0] += (o.velocity[0] - ego_velocity[0]) * dt;
        o.center[1] += (o.velocity[1] - ego_velocity[1]) * dt;
        o.center[2] -= ego_velocity[2] * dt;
    }
    s
}

fn ego_pose(ego_velocity: [f64; 3], dt: f64) -> Isometry3<f64> {
    Isometry3::from_parts(
        Translation3::new(
            ego_velocity[0] * dt,
            ego_velocity[1] * dt,
            ego_velocity[2] * dt,
        ),
        UnitQuaternion::identity(),
    )
}

/// Samples past sweeps of a scene. Sweep `k` is taken `k * period` seconds
/// before the keyframe; its points carry that (negative) relative time.
pub fn generate_sweeps(
    scene: &Scene,
    spec: &SweepSpec,
    lidar: &LidarSampling,
    radar: &RadarSampling,
    seed: u64,
) -> Result<SweepSet> {
    let mut set = SweepSet {
        lidar: Vec::with_capacity(spec.lidar_sweeps),
        lidar_poses: Vec::with_capacity(spec.lidar_sweeps),
        radar: Vec::with_capacity(spec.radar_sweeps),
        radar_poses: Vec::with_capacity(spec.radar_sweeps),
    };
    for k in 0..spec.lidar_sweeps {
        let dt = -(k as f64) * spec.lidar_period;
        let mut pts = lidar_sample(
            &scene_at(scene, spec.ego_velocity, dt),
            lidar,
            sweep_seed(seed, 1, k),
        );
        pts.iter_mut().for_each(|p| p.t = dt as f32);
        set.lidar.push(pts);
        set.lidar_poses.push(ego_pose(spec.ego_velocity, dt));
    }
    for k in 0..spec.radar_sweeps {
        let dt = -(k as f64) * spec.radar_period;
        let cloud = radar_sample(
            &scene_at(scene, spec.ego_velocity, dt),
            radar,
            sweep_seed(seed, 2, k),
        )?;
        let variant = cloud.variant();
        let pts = cloud
            .into_points()
            .into_iter()
            .map(|mut p| {
                p.t = dt as f32;
                p
            })
            .collect();
        set.radar.push(RadarCloud::new(variant, pts)?);
        set.radar_poses.push(ego_pose(spec.ego_velocity, dt));
    }
    Ok(set)
}

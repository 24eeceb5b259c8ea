use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One LiDAR return. `t` is seconds relative to the keyframe.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LidarPoint {
    pub x: f32,
    pub y: f32,
    pub z: f32,
    pub intensity: f32,
    pub t: f32,
}

impl LidarPoint {
    pub fn position(&self) -> [f64; 3] {
        [self.x as f64, self.y as f64, self.z as f64]
    }
}

/// Fields present only on nuScenes-style Radar clouds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadarExtras {
    pub vx: f32,
    pub vy: f32,
    pub dyn_prop: f32,
    pub invalid_state: f32,
    pub pdh0: f32,
}

/// One Radar return. There is deliberately no height field.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadarPoint {
    pub x: f32,
    pub y: f32,
    pub rcs: f32,
    pub t: f32,
    #[serde(flatten, default, skip_serializing_if = "Option::is_none")]
    pub extras: Option<RadarExtras>,
}

impl RadarPoint {
    /// 3D position of the return; Radar measures no height so `z` is the
    /// mounting height of the sensor.
    pub fn position(&self, sensor_height: f64) -> [f64; 3] {
        [self.x as f64, self.y as f64, sensor_height]
    }
}

/// `A`: x, y, rcs, t, vx, vy, dyn_prop, invalid_state, pdh0.
/// `B`: x, y, rcs, t (image-derived Radar without Doppler).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RadarVariant {
    A,
    B,
}

impl RadarVariant {
    pub fn point_features(self) -> usize {
        match self {
            RadarVariant::A => 9,
            RadarVariant::B => 4,
        }
    }
}

impl std::str::FromStr for RadarVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "a" => Ok(RadarVariant::A),
            "b" => Ok(RadarVariant::B),
            other => Err(Error::Argument(format!("unknown radar variant `{other}`"))),
        }
    }
}

/// A Radar cloud whose optional fields are all present (`A`) or all absent
/// (`B`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawRadarCloud")]
pub struct RadarCloud {
    variant: RadarVariant,
    points: Vec<RadarPoint>,
}

#[derive(Deserialize)]
struct RawRadarCloud {
    variant: RadarVariant,
    points: Vec<RadarPoint>,
}

impl TryFrom<RawRadarCloud> for RadarCloud {
    type Error = Error;

    fn try_from(raw: RawRadarCloud) -> Result<Self> {
        RadarCloud::new(raw.variant, raw.points)
    }
}

impl RadarCloud {
    pub fn new(variant: RadarVariant, points: Vec<RadarPoint>) -> Result<Self> {
        let want_extras = variant == RadarVariant::A;
        if let Some(i) = points
            .iter()
            .position(|p| p.extras.is_some() != want_extras)
        {
            return Err(Error::Argument(format!(
                "radar point {i} does not match variant {variant:?}: optional fields must be all present or all absent"
            )));
        }
        Ok(Self { variant, points })
    }

    pub fn empty(variant: RadarVariant) -> Self {
        Self {
            variant,
            points: Vec::new(),
        }
    }

    pub fn variant(&self) -> RadarVariant {
        self.variant
    }

    pub fn points(&self) -> &[RadarPoint] {
        &self.points
    }

    pub fn into_points(self) -> Vec<RadarPoint> {
        self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Cloud {
    Lidar { points: Vec<LidarPoint> },
    Radar(RadarCloud),
}

impl Cloud {
    pub fn len(&self) -> usize {
        match self {
            Cloud::Lidar { points } => points.len(),
            Cloud::Radar(r) => r.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn as_lidar(&self) -> Option<&[LidarPoint]> {
        match self {
            Cloud::Lidar { points } => Some(points),
            Cloud::Radar(_) => None,
        }
    }

    pub fn as_radar(&self) -> Option<&RadarCloud> {
        match self {
            Cloud::Radar(r) => Some(r),
            Cloud::Lidar { .. } => None,
        }
    }
}

/// Axis-aligned BEV bounds in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Extent {
    pub x: [f64; 2],
    pub y: [f64; 2],
}

impl Extent {
    pub fn symmetric(half: f64) -> Self {
        Self {
            x: [-half, half],
            y: [-half, half],
        }
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.x[0] && x <= self.x[1] && y >= self.y[0] && y <= self.y[1]
    }

    pub fn area(&self) -> f64 {
        (self.x[1] - self.x[0]) * (self.y[1] - self.y[0])
    }

    pub fn is_degenerate(&self) -> bool {
        !(self.x[1] > self.x[0] && self.y[1] > self.y[0])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthBox {
    pub center: [f64; 3],
    /// length (along yaw), width, height
    pub size: [f64; 3],
    pub yaw: f64,
    pub velocity: [f64; 2],
    pub class_id: usize,
}

impl GroundTruthBox {
    /// Corners of the BEV footprint, counter-clockwise.
    pub fn bev_corners(&self) -> [[f64; 2]; 4] {
        let (s, c) = self.yaw.sin_cos();
        let (hl, hw) = (self.size[0] / 2.0, self.size[1] / 2.0);
        let local = [[hl, hw], [-hl, hw], [-hl, -hw], [hl, -hw]];
        local.map(|[u, v]| {
            [
                self.center[0] + c * u - s * v,
                self.center[1] + s * u + c * v,
            ]
        })
    }

    pub fn bev_radius(&self) -> f64 {
        0.5 * self.size[0].hypot(self.size[1])
    }

    /// Maps a point given in the box frame (origin at the center) to world
    /// coordinates.
    pub fn to_world(&self, local: [f64; 3]) -> [f64; 3] {
        let (s, c) = self.yaw.sin_cos();
        [
            self.center[0] + c * local[0] - s * local[1],
            self.center[1] + s * local[0] + c * local[1],
            self.center[2] + local[2],
        ]
    }
}

/// Normalises an angle to `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    let mut w = a.rem_euclid(2.0 * PI);
    if w > PI {
        w -= 2.0 * PI;
    }
    if w <= -PI {
        w += 2.0 * PI;
    }
    w
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub objects: Vec<GroundTruthBox>,
    pub sensor_height: f64,
    pub ground_z: f64,
    pub rng_seed: u64,
    pub extent: Extent,
}

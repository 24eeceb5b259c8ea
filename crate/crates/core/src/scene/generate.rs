use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::types::{wrap_angle, Extent, GroundTruthBox, Scene};
use crate::error::{Error, Result};
use crate::tensor::seeded_rng;

/// Per-class size, motion and reflectivity ranges for synthetic objects.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassSpec {
    pub name: String,
    pub length: [f64; 2],
    pub width: [f64; 2],
    pub height: [f64; 2],
    pub speed: [f64; 2],
    pub rcs: [f64; 2],
    pub intensity: f64,
    /// Whether the class belongs to the "tall objects" group.
    pub tall: bool,
}

/// Cars (regular height) and trucks (tall). Every scene with at least two
/// objects contains both groups.
pub fn default_classes() -> Vec<ClassSpec> {
    vec![
        ClassSpec {
            name: "car".into(),
            length: [3.8, 4.8],
            width: [1.7, 2.0],
            height: [1.4, 1.8],
            speed: [2.0, 10.0],
            rcs: [5.0, 15.0],
            intensity: 0.35,
            tall: false,
        },
        ClassSpec {
            name: "truck".into(),
            length: [6.0, 9.0],
            width: [2.3, 2.6],
            height: [2.8, 3.8],
            speed: [1.0, 8.0],
            rcs: [15.0, 30.0],
            intensity: 0.55,
            tall: true,
        },
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneParams {
    pub num_objects: usize,
    pub extent: Extent,
    pub classes: Vec<ClassSpec>,
    /// Height of the Radar sensor in the LiDAR frame.
    pub sensor_height: f64,
    /// Height of the ground plane in the LiDAR frame.
    pub ground_z: f64,
    /// Fraction of objects generated stationary.
    pub stationary_fraction: f64,
    pub max_attempts: usize,
}

impl Default for SceneParams {
    fn default() -> Self {
        Self {
            num_objects: 5,
            extent: Extent::symmetric(16.0),
            classes: default_classes(),
            sensor_height: -1.3,
            ground_z: -1.8,
            stationary_fraction: 0.3,
            max_attempts: 1000,
        }
    }
}

fn draw<R: Rng + ?Sized>(rng: &mut R, range: [f64; 2]) -> f64 {
    if range[1] > range[0] {
        rng.random_range(range[0]..range[1])
    } else {
        range[0]
    }
}

/// Places `num_objects` boxes by rejection sampling. Two boxes are accepted
/// only if their circumscribed BEV circles are disjoint. Object `i` takes
/// class `i % classes.len()`.
pub fn generate_scene(params: &SceneParams, seed: u64) -> Result<Scene> {
    if params.extent.is_degenerate() {
        return Err(Error::Argument("scene extent is degenerate".into()));
    }
    if params.num_objects > 0 && params.classes.is_empty() {
        return Err(Error::Argument("scene needs at least one class".into()));
    }
    let mut rng = seeded_rng(seed);
    let mut objects: Vec<GroundTruthBox> = Vec::with_capacity(params.num_objects);
    for index in 0..params.num_objects {
        let class_id = index % params.classes.len();
        let class = &params.classes[class_id];
        let size = [
            draw(&mut rng, class.length),
            draw(&mut rng, class.width),
            draw(&mut rng, class.height),
        ];
        let yaw = wrap_angle(rng.random_range(-PI..PI));
        let velocity = if rng.random_bool(params.stationary_fraction.clamp(0.0, 1.0)) {
            [0.0, 0.0]
        } else {
            let speed = draw(&mut rng, class.speed);
            [speed * yaw.cos(), speed * yaw.sin()]
        };
        let mut placed = None;
        for _ in 0..params.max_attempts {
            let candidate = GroundTruthBox {
                center: [
                    rng.random_range(params.extent.x[0]..=params.extent.x[1]),
                    rng.random_range(params.extent.y[0]..=params.extent.y[1]),
                    params.ground_z + size[2] / 2.0,
                ],
                size,
                yaw,
                velocity,
                class_id,
            };
            let clear = objects.iter().all(|o| {
                let d =
                    (o.center[0] - candidate.center[0]).hypot(o.center[1] - candidate.center[1]);
                d > o.bev_radius() + candidate.bev_radius()
            });
            if clear {
                placed = Some(candidate);
                break;
            }
        }
        match placed {
            Some(b) => objects.push(b),
            None => {
                return Err(Error::Placement {
                    index,
                    attempts: params.max_attempts,
                })
            }
        }
    }
    Ok(Scene {
        objects,
        sensor_height: params.sensor_height,
        ground_z: params.ground_z,
        rng_seed: seed,
        extent: params.extent,
    })
}

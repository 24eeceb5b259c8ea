use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::head::detect::HeadOutputs;
use crate::head::target::Targets;
use crate::tensor::FeatureMap;

pub const FOCAL_ALPHA: i32 = 2;
pub const FOCAL_BETA: i32 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub heatmap: f64,
    pub offset: f64,
    pub z: f64,
    pub size: f64,
    pub rot: f64,
    pub vel: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            heatmap: 1.0,
            offset: 1.0,
            z: 1.0,
            size: 1.0,
            rot: 1.0,
            vel: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub heatmap_loss: f64,
    pub offset_loss: f64,
    pub z_loss: f64,
    pub size_loss: f64,
    pub rot_loss: f64,
    pub vel_loss: f64,
    pub total: f64,
    pub weights: LossWeights,
}

/// Gradients of `total` with respect to the heatmap logits and the raw
/// regression maps.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadGradients {
    pub logits: FeatureMap,
    pub offset: FeatureMap,
    pub z: FeatureMap,
    pub size: FeatureMap,
    pub rot: FeatureMap,
    pub vel: FeatureMap,
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Penalty-reduced focal loss of one cell and its derivative with respect to
/// the logit. Works on the unclamped sigmoid so the gradient is smooth.
fn focal(x: f64, y: f64) -> (f64, f64) {
    let p = sigmoid(x);
    let q = sigmoid(-x);
    if y == 1.0 {
        let log_p = -softplus(-x);
        (-q * q * log_p, 2.0 * p * q * q * log_p - q * q * q)
    } else {
        let log_q = -softplus(x);
        let wgt = (1.0 - y).powi(FOCAL_BETA);
        (
            -wgt * p * p * log_q,
            wgt * (p * p * p - 2.0 * p * p * q * log_q),
        )
    }
}

/// Focal loss on the heatmap plus L1 regression at ground-truth center cells.
/// Every term is normalised by the number of centers (at least 1).
pub fn compute_loss(
    h: &HeadOutputs,
    targets: &Targets,
    weights: &LossWeights,
) -> Result<(LossBreakdown, HeadGradients)> {
    if h.logits.shape() != targets.heatmap.shape() {
        return Err(Error::shape(format!(
            "heatmap is {:?}, targets are {:?}",
            h.logits.shape(),
            targets.heatmap.shape()
        )));
    }
    let (height, width) = h.dims();
    for t in &targets.centers {
        if t.row >= height || t.col >= width || t.class_id >= h.num_classes() {
            return Err(Error::shape(format!(
                "center target at row {} col {} class {} outside outputs",
                t.row, t.col, t.class_id
            )));
        }
    }
    let num_pos = targets.heatmap.data().iter().filter(|&&y| y == 1.0).count();
    let norm = num_pos.max(1) as f64;

    let mut logits_grad = FeatureMap::zeros(h.num_classes(), height, width);
    let mut heatmap_loss = 0.0;
    for ((&x, &y), g) in h
        .logits
        .data()
        .iter()
        .zip(targets.heatmap.data())
        .zip(logits_grad.data_mut())
    {
        let (l, d) = focal(x, y);
        heatmap_loss += l;
        *g = weights.heatmap * d / norm;
    }
    heatmap_loss /= norm;

    let reg_norm = targets.centers.len().max(1) as f64;
    let l1 = |pred: &FeatureMap, weight: f64, pick: &dyn Fn(usize) -> Vec<f64>| {
        let mut grad = FeatureMap::zeros(pred.channels(), height, width);
        let mut loss = 0.0;
        for (n, t) in targets.centers.iter().enumerate() {
            for (c, want) in pick(n).into_iter().enumerate() {
                let diff = pred.get(c, t.row, t.col) - want;
                loss += diff.abs();
                if diff != 0.0 {
                    let idx = grad.index(c, t.row, t.col);
                    grad.data_mut()[idx] += weight * diff.signum() / reg_norm;
                }
            }
        }
        (loss / reg_norm, grad)
    };
    let c = &targets.centers;
    let (offset_loss, offset) = l1(&h.offset, weights.offset, &|n| c[n].offset.to_vec());
    let (z_loss, z) = l1(&h.z, weights.z, &|n| vec![c[n].z]);
    let (size_loss, size) = l1(&h.size, weights.size, &|n| c[n].size.to_vec());
    let (rot_loss, rot) = l1(&h.rot, weights.rot, &|n| c[n].rot.to_vec());
    let (vel_loss, vel) = l1(&h.vel, weights.vel, &|n| c[n].vel.to_vec());

    let total = weights.heatmap * heatmap_loss
        + weights.offset * offset_loss
        + weights.z * z_loss
        + weights.size * size_loss
        + weights.rot * rot_loss
        + weights.vel * vel_loss;
    Ok((
        LossBreakdown {
            heatmap_loss,
            offset_loss,
            z_loss,
            size_loss,
            rot_loss,
            vel_loss,
            total,
            weights: *weights,
        },
        HeadGradients {
            logits: logits_grad,
            offset,
            z,
            size,
            rot,
            vel,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridSpec;
    use crate::head::target::{outputs_from_targets, render_targets};
    use crate::scene::GroundTruthBox;

    fn targets() -> Targets {
        let grid =
            GridSpec::from_range([0.0, 0.0, -3.0], [4.0, 4.0, 3.0], [0.5, 0.5, 6.0]).unwrap();
        let b = GroundTruthBox {
            center: [1.1, 2.3, -0.5],
            size: [1.2, 1.0, 1.5],
            yaw: -2.0,
            velocity: [0.5, 1.5],
            class_id: 0,
        };
        render_targets(&[b], &grid, 2).unwrap()
    }

    #[test]
    fn perfect_regression_is_zero() {
        let t = targets();
        let h = outputs_from_targets(&t).unwrap();
        let (loss, _) = compute_loss(&h, &t, &LossWeights::default()).unwrap();
        assert_eq!(loss.offset_loss, 0.0);
        assert_eq!(loss.z_loss, 0.0);
        assert_eq!(loss.size_loss, 0.0);
        assert_eq!(loss.rot_loss, 0.0);
        assert_eq!(loss.vel_loss, 0.0);
    }

    #[test]
    fn empty_scene_regression_zero_heatmap_positive() {
        let t = Targets {
            heatmap: FeatureMap::zeros(2, 8, 8),
            centers: vec![],
        };
        let h = HeadOutputs::from_logits(
            FeatureMap::from_vec(2, 8, 8, vec![0.3; 128]).unwrap(),
            FeatureMap::from_vec(2, 8, 8, vec![1.0; 128]).unwrap(),
            FeatureMap::zeros(1, 8, 8),
            FeatureMap::zeros(3, 8, 8),
            FeatureMap::zeros(2, 8, 8),
            FeatureMap::zeros(2, 8, 8),
        )
        .unwrap();
        let (loss, _) = compute_loss(&h, &t, &LossWeights::default()).unwrap();
        assert_eq!(
            loss.offset_loss + loss.z_loss + loss.size_loss + loss.rot_loss + loss.vel_loss,
            0.0
        );
        assert!(loss.heatmap_loss > 0.0);
    }

    #[test]
    fn total_is_weighted_sum() {
        let t = targets();
        let mut h = outputs_from_targets(&t).unwrap();
        h.vel.data_mut().iter_mut().for_each(|v| *v += 0.25);
        let w = LossWeights {
            heatmap: 2.0,
            vel: 0.5,
            ..LossWeights::default()
        };
        let (loss, _) = compute_loss(&h, &t, &w).unwrap();
        assert_eq!(loss.vel_loss, 0.5);
        let want = 2.0 * loss.heatmap_loss + 0.5 * loss.vel_loss;
        assert!((loss.total - want).abs() <= f64::EPSILON * want);
    }

    #[test]
    fn focal_derivative_matches_difference() {
        for &(x, y) in &[(0.7, 1.0), (-1.3, 1.0), (0.2, 0.3), (-2.5, 0.0), (3.0, 0.9)] {
            let e = 1e-6;
            let num = (focal(x + e, y).0 - focal(x - e, y).0) / (2.0 * e);
            let ana = focal(x, y).1;
            assert!((num - ana).abs() < 1e-7 * ana.abs().max(1.0), "{x} {y}");
        }
    }

    #[test]
    fn shape_mismatch_rejected() {
        let t = targets();
        let h = HeadOutputs::from_logits(
            FeatureMap::zeros(2, 4, 4),
            FeatureMap::zeros(2, 4, 4),
            FeatureMap::zeros(1, 4, 4),
            FeatureMap::zeros(3, 4, 4),
            FeatureMap::zeros(2, 4, 4),
            FeatureMap::zeros(2, 4, 4),
        )
        .unwrap();
        assert!(matches!(
            compute_loss(&h, &t, &LossWeights::default()),
            Err(Error::Shape(_))
        ));
    }
}

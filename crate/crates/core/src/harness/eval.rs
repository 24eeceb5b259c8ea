use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::head::DetectionBox;
use crate::scene::GroundTruthBox;

/// Center-distance match thresholds in meters.
pub const DISTANCE_THRESHOLDS: [f64; 4] = [0.5, 1.0, 2.0, 4.0];
/// Threshold whose matches feed the velocity error and the counts.
pub const VELOCITY_THRESHOLD: f64 = 2.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassAp {
    pub class_id: usize,
    /// One AP per entry of `DISTANCE_THRESHOLDS`.
    pub ap: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub thresholds: Vec<f64>,
    pub ap_by_class: Vec<ClassAp>,
    /// Mean over classes that have ground truth, per threshold.
    pub mean_ap: Vec<f64>,
    /// Mean velocity error norm over true positives at 2 m, `None` without
    /// matches.
    pub mean_velocity_error: Option<f64>,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

struct ClassMatch {
    ap: f64,
    /// `(detection, ground truth)` pairs.
    pairs: Vec<(usize, usize)>,
    fp: usize,
    fn_: usize,
}

/// Greedy matching: detections in descending score order (input order on
/// ties) each take the nearest unmatched ground truth within `threshold`.
/// AP sums the precision at every true-positive rank over the number of
/// ground-truth boxes.
fn match_class(
    dets: &[(usize, &DetectionBox)],
    gts: &[(usize, &GroundTruthBox)],
    threshold: f64,
) -> ClassMatch {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| dets[b].1.score.total_cmp(&dets[a].1.score).then(a.cmp(&b)));
    let mut taken = vec![false; gts.len()];
    let mut pairs = Vec::new();
    let mut tp = 0usize;
    let mut precision_sum = 0.0;
    for (rank, &d) in order.iter().enumerate() {
        let det = dets[d].1;
        let mut best: Option<(f64, usize)> = None;
        for (g, (_, gt)) in gts.iter().enumerate() {
            if taken[g] {
                continue;
            }
            let dist = (det.x - gt.center[0]).hypot(det.y - gt.center[1]);
            if dist <= threshold && best.is_none_or(|(bd, _)| dist < bd) {
                best = Some((dist, g));
            }
        }
        if let Some((_, g)) = best {
            taken[g] = true;
            tp += 1;
            precision_sum += tp as f64 / (rank + 1) as f64;
            pairs.push((dets[d].0, gts[g].0));
        }
    }
    let ap = if gts.is_empty() {
        0.0
    } else {
        precision_sum / gts.len() as f64
    };
    ClassMatch {
        ap,
        fp: dets.len() - tp,
        fn_: gts.len() - tp,
        pairs,
    }
}

pub fn eval_detections(dets: &[DetectionBox], gts: &[GroundTruthBox]) -> EvalResult {
    let gt_classes: BTreeSet<usize> = gts.iter().map(|g| g.class_id).collect();
    let all_classes: BTreeSet<usize> = gt_classes
        .iter()
        .copied()
        .chain(dets.iter().map(|d| d.class_id))
        .collect();
    let mut ap_by_class = Vec::new();
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    let mut vel_sum = 0.0;
    for &class_id in &all_classes {
        let cd: Vec<(usize, &DetectionBox)> = dets
            .iter()
            .enumerate()
            .filter(|(_, d)| d.class_id == class_id)
            .collect();
        let cg: Vec<(usize, &GroundTruthBox)> = gts
            .iter()
            .enumerate()
            .filter(|(_, g)| g.class_id == class_id)
            .collect();
        let mut ap = Vec::with_capacity(DISTANCE_THRESHOLDS.len());
        for &t in &DISTANCE_THRESHOLDS {
            let m = match_class(&cd, &cg, t);
            ap.push(m.ap);
            if t == VELOCITY_THRESHOLD {
                tp += m.pairs.len();
                fp += m.fp;
                fn_ += m.fn_;
                for &(d, g) in &m.pairs {
                    let (det, gt) = (&dets[d], &gts[g]);
                    vel_sum += (det.vx - gt.velocity[0]).hypot(det.vy - gt.velocity[1]);
                }
            }
        }
        if gt_classes.contains(&class_id) {
            ap_by_class.push(ClassAp { class_id, ap });
        }
    }
    let mean_ap = (0..DISTANCE_THRESHOLDS.len())
        .map(|k| {
            if ap_by_class.is_empty() {
                0.0
            } else {
                ap_by_class.iter().map(|c| c.ap[k]).sum::<f64>() / ap_by_class.len() as f64
            }
        })
        .collect();
    EvalResult {
        thresholds: DISTANCE_THRESHOLDS.to_vec(),
        ap_by_class,
        mean_ap,
        mean_velocity_error: (tp > 0).then(|| vel_sum / tp as f64),
        tp,
        fp,
        fn_,
    }
}

/// Detection copies of ground-truth boxes with score 1.
pub fn perfect_detections(gts: &[GroundTruthBox]) -> Vec<DetectionBox> {
    gts.iter()
        .map(|g| DetectionBox {
            x: g.center[0],
            y: g.center[1],
            z: g.center[2],
            l: g.size[0],
            w: g.size[1],
            h: g.size[2],
            yaw: g.yaw,
            vx: g.velocity[0],
            vy: g.velocity[1],
            class_id: g.class_id,
            score: 1.0,
        })
        .collect()
}

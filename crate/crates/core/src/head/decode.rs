use serde::{Deserialize, Serialize};

use crate::grid::GridSpec;
use crate::head::detect::HeadOutputs;
use crate::scene::wrap_angle;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionBox {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub l: f64,
    pub w: f64,
    pub h: f64,
    pub yaw: f64,
    pub vx: f64,
    pub vy: f64,
    pub class_id: usize,
    pub score: f64,
}

impl DetectionBox {
    pub fn center(&self) -> [f64; 2] {
        [self.x, self.y]
    }
}

/// Whether `(row, col)` survives 3x3 suppression on `plane`. A neighbour with
/// a greater value suppresses the cell, as does an equal neighbour that comes
/// earlier in row-major order.
pub fn is_peak(plane: &[f64], height: usize, width: usize, row: usize, col: usize) -> bool {
    let v = plane[row * width + col];
    for r in row.saturating_sub(1)..=(row + 1).min(height - 1) {
        for c in col.saturating_sub(1)..=(col + 1).min(width - 1) {
            if (r, c) == (row, col) {
                continue;
            }
            let n = plane[r * width + c];
            if n > v || (n == v && (r, c) < (row, col)) {
                return false;
            }
        }
    }
    true
}

/// Peaks per class with score at least `score_thresh`, sorted by descending
/// score (ties keep class then row-major order) and truncated to `max_dets`.
pub fn decode_detections(
    h: &HeadOutputs,
    grid: &GridSpec,
    score_thresh: f64,
    max_dets: usize,
) -> Vec<DetectionBox> {
    let (height, width) = h.dims();
    let mut out = Vec::new();
    for class_id in 0..h.num_classes() {
        let plane = h.heatmap.plane(class_id);
        for row in 0..height {
            for col in 0..width {
                let score = plane[row * width + col];
                if score < score_thresh || !is_peak(plane, height, width, row, col) {
                    continue;
                }
                let c = grid.cell_center(col, row);
                let size = [0, 1, 2].map(|k| h.size.get(k, row, col).exp());
                let yaw = h.rot.get(0, row, col).atan2(h.rot.get(1, row, col));
                out.push(DetectionBox {
                    x: c[0] + h.offset.get(0, row, col),
                    y: c[1] + h.offset.get(1, row, col),
                    z: h.z.get(0, row, col),
                    l: size[0],
                    w: size[1],
                    h: size[2],
                    yaw: wrap_angle(yaw),
                    vx: h.vel.get(0, row, col),
                    vy: h.vel.get(1, row, col),
                    class_id,
                    score,
                });
            }
        }
    }
    out.sort_by(|a, b| b.score.total_cmp(&a.score));
    out.truncate(max_dets);
    out
}

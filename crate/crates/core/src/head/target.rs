use crate::error::{Error, Result};
use crate::grid::GridSpec;
use crate::head::detect::HeadOutputs;
use crate::scene::GroundTruthBox;
use crate::tensor::FeatureMap;

/// Regression targets for one ground-truth box, attached to the BEV cell that
/// contains its center.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CenterTarget {
    pub row: usize,
    pub col: usize,
    pub class_id: usize,
    pub offset: [f64; 2],
    pub z: f64,
    pub size: [f64; 3],
    pub rot: [f64; 2],
    pub vel: [f64; 2],
}

#[derive(Debug, Clone, PartialEq)]
pub struct Targets {
    /// `num_classes x H x W`, Gaussian splats peaking at exactly 1.
    pub heatmap: FeatureMap,
    pub centers: Vec<CenterTarget>,
}

/// Splat radius in cells: half the smaller BEV side, at least one cell.
pub fn gaussian_radius(b: &GroundTruthBox, grid: &GridSpec) -> usize {
    let cell = grid.cell[0].min(grid.cell[1]);
    let r = (b.size[0].min(b.size[1]) / (2.0 * cell)).floor();
    (r as usize).max(1)
}

/// Renders boxes into a class heatmap plus per-center regression targets.
/// Boxes whose center falls outside the grid are skipped.
pub fn render_targets(
    boxes: &[GroundTruthBox],
    grid: &GridSpec,
    num_classes: usize,
) -> Result<Targets> {
    let (nx, ny) = (grid.nx(), grid.ny());
    let mut heatmap = FeatureMap::zeros(num_classes, ny, nx);
    let mut centers = Vec::new();
    for b in boxes {
        if b.class_id >= num_classes {
            return Err(Error::shape(format!(
                "box class {} out of range for {num_classes} classes",
                b.class_id
            )));
        }
        let Some((i, j)) = grid.bev_index(b.center[0], b.center[1]) else {
            continue;
        };
        let radius = gaussian_radius(b, grid) as isize;
        let sigma = (2 * radius + 1) as f64 / 6.0;
        let denom = 2.0 * sigma * sigma;
        for dj in -radius..=radius {
            for di in -radius..=radius {
                let (ci, cj) = (i as isize + di, j as isize + dj);
                if ci < 0 || cj < 0 || ci >= nx as isize || cj >= ny as isize {
                    continue;
                }
                let v = (-((di * di + dj * dj) as f64) / denom).exp();
                let idx = heatmap.index(b.class_id, cj as usize, ci as usize);
                let cur = &mut heatmap.data_mut()[idx];
                if v > *cur {
                    *cur = v;
                }
            }
        }
        let c = grid.cell_center(i, j);
        let (s, co) = b.yaw.sin_cos();
        centers.push(CenterTarget {
            row: j,
            col: i,
            class_id: b.class_id,
            offset: [b.center[0] - c[0], b.center[1] - c[1]],
            z: b.center[2],
            size: b.size.map(f64::ln),
            rot: [s, co],
            vel: b.velocity,
        });
    }
    Ok(Targets { heatmap, centers })
}

/// Head outputs that reproduce `targets` exactly: the heatmap is
/// logit-inverted and the regression values are written at center cells.
pub fn outputs_from_targets(targets: &Targets) -> Result<HeadOutputs> {
    let [_, h, w] = targets.heatmap.shape();
    let eps = 1e-6;
    let logits = targets.heatmap.map(|p| {
        let p = p.clamp(eps, 1.0 - eps);
        (p / (1.0 - p)).ln()
    });
    let mut offset = FeatureMap::zeros(2, h, w);
    let mut z = FeatureMap::zeros(1, h, w);
    let mut size = FeatureMap::zeros(3, h, w);
    let mut rot = FeatureMap::zeros(2, h, w);
    let mut vel = FeatureMap::zeros(2, h, w);
    for t in &targets.centers {
        offset.set_cell(t.row, t.col, &t.offset);
        z.set_cell(t.row, t.col, &[t.z]);
        size.set_cell(t.row, t.col, &t.size);
        rot.set_cell(t.row, t.col, &t.rot);
        vel.set_cell(t.row, t.col, &t.vel);
    }
    HeadOutputs::from_logits(logits, offset, z, size, rot, vel)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> GridSpec {
        GridSpec::from_range([-4.0, -4.0, -3.0], [4.0, 4.0, 3.0], [0.5, 0.5, 6.0]).unwrap()
    }

    fn car(x: f64, y: f64) -> GroundTruthBox {
        GroundTruthBox {
            center: [x, y, -0.9],
            size: [4.0, 1.8, 1.6],
            yaw: 0.4,
            velocity: [1.0, -0.5],
            class_id: 1,
        }
    }

    #[test]
    fn center_cell_is_exactly_one() {
        let t = render_targets(&[car(0.1, 0.2)], &grid(), 2).unwrap();
        let c = t.centers[0];
        assert_eq!((c.col, c.row), (8, 8));
        assert_eq!(t.heatmap.get(1, 8, 8), 1.0);
        assert!(t.heatmap.plane(0).iter().all(|&v| v == 0.0));
        assert!(t.heatmap.get(1, 8, 9) < 1.0 && t.heatmap.get(1, 8, 9) > 0.0);
        assert!((c.offset[0] - (0.1 - 0.25)).abs() < 1e-12);
    }

    #[test]
    fn radius_at_least_one_cell() {
        let mut b = car(0.0, 0.0);
        b.size = [0.3, 0.2, 1.0];
        assert_eq!(gaussian_radius(&b, &grid()), 1);
        assert_eq!(gaussian_radius(&car(0.0, 0.0), &grid()), 1);
        b.size = [4.0, 2.5, 1.0];
        assert_eq!(gaussian_radius(&b, &grid()), 2);
    }

    #[test]
    fn outside_boxes_skipped() {
        let t = render_targets(&[car(10.0, 0.0)], &grid(), 2).unwrap();
        assert!(t.centers.is_empty());
        assert!(t.heatmap.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn bad_class_rejected() {
        assert!(render_targets(&[car(0.0, 0.0)], &grid(), 1).is_err());
    }
}

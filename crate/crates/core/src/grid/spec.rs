use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Regular 3D grid: `origin` is the minimum corner, cells are
/// lower-inclusive and upper-exclusive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub origin: [f64; 3],
    pub cell: [f64; 3],
    pub counts: [usize; 3],
}

impl GridSpec {
    /// Grid covering `[min, max)` per axis; the span must be a whole number
    /// of cells.
    pub fn from_range(min: [f64; 3], max: [f64; 3], cell: [f64; 3]) -> Result<Self> {
        let mut counts = [0usize; 3];
        for a in 0..3 {
            let n = (max[a] - min[a]) / cell[a];
            let rounded = n.round();
            if !(cell[a] > 0.0) || !(rounded >= 1.0) || (n - rounded).abs() > 1e-6 {
                return Err(Error::config(
                    format!("grid.axis{a}"),
                    format!(
                        "range [{}, {}) is not a positive whole number of {} m cells",
                        min[a], max[a], cell[a]
                    ),
                ));
            }
            counts[a] = rounded as usize;
        }
        Ok(Self {
            origin: min,
            cell,
            counts,
        })
    }

    pub fn validate(&self) -> Result<()> {
        for a in 0..3 {
            if !(self.cell[a] > 0.0) || !self.cell[a].is_finite() {
                return Err(Error::config(format!("cell[{a}]"), "must be > 0"));
            }
            if self.counts[a] == 0 {
                return Err(Error::config(format!("counts[{a}]"), "must be >= 1"));
            }
            if !self.origin[a].is_finite() {
                return Err(Error::config(format!("origin[{a}]"), "must be finite"));
            }
        }
        Ok(())
    }

    pub fn nx(&self) -> usize {
        self.counts[0]
    }

    pub fn ny(&self) -> usize {
        self.counts[1]
    }

    pub fn nz(&self) -> usize {
        self.counts[2]
    }

    pub fn is_pillar(&self) -> bool {
        self.counts[2] == 1
    }

    pub fn max(&self) -> [f64; 3] {
        [0, 1, 2].map(|a| self.origin[a] + self.cell[a] * self.counts[a] as f64)
    }

    #[inline]
    pub fn axis_index(&self, axis: usize, v: f64) -> Option<usize> {
        let k = ((v - self.origin[axis]) / self.cell[axis]).floor();
        if k >= 0.0 && k < self.counts[axis] as f64 {
            Some(k as usize)
        } else {
            None
        }
    }

    pub fn voxel_index(&self, p: [f64; 3]) -> Option<[usize; 3]> {
        Some([
            self.axis_index(0, p[0])?,
            self.axis_index(1, p[1])?,
            self.axis_index(2, p[2])?,
        ])
    }

    pub fn bev_index(&self, x: f64, y: f64) -> Option<(usize, usize)> {
        Some((self.axis_index(0, x)?, self.axis_index(1, y)?))
    }

    /// BEV center of cell `(i, j)`.
    pub fn cell_center(&self, i: usize, j: usize) -> [f64; 2] {
        [
            self.origin[0] + (i as f64 + 0.5) * self.cell[0],
            self.origin[1] + (j as f64 + 0.5) * self.cell[1],
        ]
    }

    /// Same origin and z layout with the BEV cell multiplied by `stride`.
    pub fn coarsened(&self, stride: usize) -> Result<Self> {
        if stride == 0
            || !self.counts[0].is_multiple_of(stride)
            || !self.counts[1].is_multiple_of(stride)
        {
            return Err(Error::config(
                "bev_stride",
                format!(
                    "stride {stride} must divide the {}x{} grid",
                    self.counts[0], self.counts[1]
                ),
            ));
        }
        Ok(Self {
            origin: self.origin,
            cell: [
                self.cell[0] * stride as f64,
                self.cell[1] * stride as f64,
                self.cell[2],
            ],
            counts: [
                self.counts[0] / stride,
                self.counts[1] / stride,
                self.counts[2],
            ],
        })
    }

    /// Integer ratio `coarse.cell / self.cell` in x and y, if the two grids
    /// share an origin and the ratio is whole.
    pub fn bev_ratio_to(&self, coarse: &GridSpec) -> Result<usize> {
        let rx = coarse.cell[0] / self.cell[0];
        let ry = coarse.cell[1] / self.cell[1];
        let k = rx.round();
        let aligned = (self.origin[0] - coarse.origin[0]).abs() < 1e-9
            && (self.origin[1] - coarse.origin[1]).abs() < 1e-9;
        if k < 1.0 || (rx - k).abs() > 1e-6 || (ry - k).abs() > 1e-6 || !aligned {
            return Err(Error::config(
                "radar_grid.cell",
                format!(
                    "coarse cell ({}, {}) is not an integer multiple of fine cell ({}, {}) on a shared origin",
                    coarse.cell[0], coarse.cell[1], self.cell[0], self.cell[1]
                ),
            ));
        }
        Ok(k as usize)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_scale_radar_grid_is_180() {
        let g =
            GridSpec::from_range([-54.0, -54.0, -5.0], [54.0, 54.0, 3.0], [0.6, 0.6, 8.0]).unwrap();
        assert_eq!(g.counts, [180, 180, 1]);
        assert!(g.is_pillar());
    }

    #[test]
    fn full_scale_lidar_grid() {
        let g = GridSpec::from_range([-54.0, -54.0, -5.0], [54.0, 54.0, 3.0], [0.075, 0.075, 0.2])
            .unwrap();
        assert_eq!(g.counts, [1440, 1440, 40]);
        let r =
            GridSpec::from_range([-54.0, -54.0, -5.0], [54.0, 54.0, 3.0], [0.6, 0.6, 8.0]).unwrap();
        assert_eq!(g.bev_ratio_to(&r).unwrap(), 8);
    }

    #[test]
    fn boundaries_lower_inclusive_upper_exclusive() {
        let g = GridSpec::from_range([0.0, 0.0, 0.0], [2.0, 2.0, 2.0], [0.25, 0.25, 0.5]).unwrap();
        assert_eq!(g.voxel_index([0.0, 0.0, 0.0]), Some([0, 0, 0]));
        assert_eq!(g.voxel_index([0.25, 0.0, 0.0]), Some([1, 0, 0]));
        assert_eq!(g.voxel_index([2.0, 0.0, 0.0]), None);
        assert_eq!(g.voxel_index([-1e-12, 0.0, 0.0]), None);
    }

    #[test]
    fn non_commensurate_rejected() {
        let fine = GridSpec::from_range([0.0; 3], [6.0, 6.0, 1.0], [0.25, 0.25, 1.0]).unwrap();
        let coarse = GridSpec::from_range([0.0; 3], [6.0, 6.0, 1.0], [0.6, 0.6, 1.0]).unwrap();
        assert!(matches!(
            fine.bev_ratio_to(&coarse),
            Err(Error::Config { .. })
        ));
    }
}

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::spec::GridSpec;
use super::voxel::VoxelSet;
use crate::error::{Error, Result};
use crate::tensor::max_reduce;

/// BEV cell index: `i` along X, `j` along Y. Ordered by `i`, then `j`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct BevGridIndex {
    pub i: usize,
    pub j: usize,
}

impl BevGridIndex {
    pub fn new(i: usize, j: usize) -> Self {
        Self { i, j }
    }
}

/// Non-empty BEV grids and their features.
pub type BevGrids = BTreeMap<BevGridIndex, Vec<f64>>;

/// Re-bins encoded voxels onto `coarse` (a grid whose BEV cell is an
/// integer multiple of the voxel cell) and max-reduces every voxel feature
/// in a coarse cell, across all heights. Empty cells are absent.
pub fn collapse_to_bev_grids(v: &VoxelSet, coarse: &GridSpec) -> Result<BevGrids> {
    let ratio = v.spec.bev_ratio_to(coarse)?;
    let mut groups: BTreeMap<BevGridIndex, Vec<&[f64]>> = BTreeMap::new();
    for (key, voxel) in &v.voxels {
        let feature = voxel
            .feature
            .as_deref()
            .ok_or_else(|| Error::shape("collapse_to_bev_grids needs encoded voxels"))?;
        let cell = BevGridIndex::new(key[0] / ratio, key[1] / ratio);
        if cell.i >= coarse.nx() || cell.j >= coarse.ny() {
            continue;
        }
        groups.entry(cell).or_default().push(feature);
    }
    groups
        .into_iter()
        .map(|(cell, rows)| Ok((cell, max_reduce(&rows)?)))
        .collect()
}

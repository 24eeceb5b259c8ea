use std::collections::BTreeSet;
use std::sync::Arc;

use serde::Serialize;

use super::qbf::{qbf_fuse, QbfConfig};
use super::qhf::{qhf_fuse, QhfConfig};
use super::query::{BevNeighborhood, NeighborSearch};
use crate::error::{Error, Result};
use crate::grid::{BevGridIndex, BevGrids, GridSpec};
use crate::scene::LidarPoint;
use crate::tensor::FeatureMap;

/// Pseudo features of one non-empty Radar cell.
#[derive(Debug, Clone, PartialEq)]
pub struct PseudoFeature {
    pub cell: BevGridIndex,
    pub eta_h: Vec<f64>,
    pub eta_b: Vec<f64>,
}

/// `[m_r | eta_h | eta_b]` along channels. Pseudo features must exist for
/// exactly the non-empty cells of `m_r`; every other cell stays zero in all
/// channels. `widths` are the `eta_h` and `eta_b` widths.
pub fn enhance_radar_map(
    m_r: &FeatureMap,
    pseudo: &[PseudoFeature],
    widths: (usize, usize),
) -> Result<FeatureMap> {
    let (wh, wb) = widths;
    let nonempty: BTreeSet<BevGridIndex> = m_r
        .nonzero_cells()
        .into_iter()
        .map(|(row, col)| BevGridIndex::new(col, row))
        .collect();
    let given: BTreeSet<BevGridIndex> = pseudo.iter().map(|p| p.cell).collect();
    if given.len() != pseudo.len() {
        return Err(Error::Argument("duplicate pseudo feature cells".into()));
    }
    if given != nonempty {
        return Err(Error::Argument(format!(
            "pseudo features cover {} cells, radar map has {} non-empty cells",
            given.len(),
            nonempty.len()
        )));
    }
    let (h, w) = (m_r.height(), m_r.width());
    let mut eta_h = FeatureMap::zeros(wh, h, w);
    let mut eta_b = FeatureMap::zeros(wb, h, w);
    for p in pseudo {
        if p.eta_h.len() != wh || p.eta_b.len() != wb {
            return Err(Error::shape("pseudo features of unequal width"));
        }
        eta_h.set_cell(p.cell.j, p.cell.i, &p.eta_h);
        eta_b.set_cell(p.cell.j, p.cell.i, &p.eta_b);
    }
    FeatureMap::concat_channels(&[m_r, &eta_h, &eta_b])
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct L2rStats {
    pub radar_cells: usize,
    pub query_points: usize,
    pub query_points_hit: usize,
    pub bev_queries_hit: usize,
    pub grouped_grids: usize,
}

#[derive(Debug, Clone)]
pub struct L2rOutput {
    pub pseudo: Vec<PseudoFeature>,
    pub enhanced: FeatureMap,
    pub stats: L2rStats,
}

/// Both L2R blocks with their query strategies.
#[derive(Clone)]
pub struct L2rFusion {
    pub qhf: QhfConfig,
    pub qbf: QbfConfig,
    pub search: Arc<dyn NeighborSearch>,
    pub neighborhood: Arc<dyn BevNeighborhood>,
}

impl L2rFusion {
    /// Width of the enhanced Radar map for a given `M_R` width.
    pub fn enhanced_width(&self, c2: usize) -> usize {
        c2 + self.qhf.eta_width() + self.qbf.eta_width()
    }

    /// Computes pseudo features at every `occupied` Radar cell and builds
    /// the enhanced map. No query runs when `occupied` is empty.
    pub fn fuse(
        &self,
        m_r: &FeatureMap,
        occupied: &[BevGridIndex],
        radar_grid: &GridSpec,
        lidar: &[LidarPoint],
        lidar_grids: &BevGrids,
    ) -> Result<L2rOutput> {
        let mut stats = L2rStats {
            radar_cells: occupied.len(),
            ..Default::default()
        };
        let widths = (self.qhf.eta_width(), self.qbf.eta_width());
        if occupied.is_empty() {
            return Ok(L2rOutput {
                pseudo: Vec::new(),
                enhanced: enhance_radar_map(m_r, &[], widths)?,
                stats,
            });
        }
        let index = self.search.build(lidar, self.qhf.ball_radius);
        let mut pseudo = Vec::with_capacity(occupied.len());
        for &cell in occupied {
            let qh = qhf_fuse(cell, &self.qhf, radar_grid, lidar, index.as_ref())?;
            let (eta_b, grouped) =
                qbf_fuse(cell, lidar_grids, &self.qbf, self.neighborhood.as_ref())?;
            stats.query_points += self.qhf.num_segments;
            stats.query_points_hit += qh.segments_hit;
            stats.grouped_grids += grouped;
            if grouped > 0 {
                stats.bev_queries_hit += 1;
            }
            pseudo.push(PseudoFeature {
                cell,
                eta_h: qh.eta_h,
                eta_b,
            });
        }
        let enhanced = enhance_radar_map(m_r, &pseudo, widths)?;
        Ok(L2rOutput {
            pseudo,
            enhanced,
            stats,
        })
    }
}

use super::query::{BevNeighborhood, GridHit, QueryResult};
use crate::error::{Error, Result};
use crate::grid::{BevGridIndex, BevGrids};
use crate::tensor::{max_reduce, Mlp};

/// `|i_a - i_b| + |j_a - j_b|`.
pub fn manhattan_distance(a: BevGridIndex, b: BevGridIndex) -> usize {
    a.i.abs_diff(b.i) + a.j.abs_diff(b.j)
}

#[derive(Debug, Clone)]
pub struct QbfConfig {
    /// Threshold pair `(di, dj)`; scalar neighbourhoods use only `.0`.
    pub window: (usize, usize),
    pub max_group: usize,
    /// Per-grid MLP applied to `feature ⊕ di ⊕ dj`.
    pub psi_prime: Mlp,
}

impl QbfConfig {
    pub fn new(window: (usize, usize), max_group: usize, psi_prime: Mlp) -> Result<Self> {
        if max_group == 0 {
            return Err(Error::config("qbf.max_group", "must be >= 1"));
        }
        Ok(Self {
            window,
            max_group,
            psi_prime,
        })
    }

    pub fn eta_width(&self) -> usize {
        self.psi_prime.output_dim()
    }
}

/// Up to `max_group` non-empty LiDAR grids around `cell`, ordered by
/// Manhattan distance then by `(i, j)`.
pub fn bev_query(
    cell: BevGridIndex,
    grids: &BevGrids,
    window: (usize, usize),
    max_group: usize,
    neighborhood: &dyn BevNeighborhood,
) -> QueryResult<GridHit> {
    let (ri, rj) = neighborhood.reach(window);
    let mut hits = Vec::new();
    let i_lo = cell.i.saturating_sub(ri);
    let j_lo = cell.j.saturating_sub(rj);
    for i in i_lo..=cell.i + ri {
        for j in j_lo..=cell.j + rj {
            let other = BevGridIndex::new(i, j);
            if !neighborhood.contains(i.abs_diff(cell.i), j.abs_diff(cell.j), window) {
                continue;
            }
            if grids.contains_key(&other) {
                hits.push(GridHit {
                    cell: other,
                    distance: manhattan_distance(cell, other),
                });
            }
        }
    }
    hits.sort_by(|a, b| a.distance.cmp(&b.distance).then(a.cell.cmp(&b.cell)));
    hits.truncate(max_group);
    QueryResult { hits }
}

/// `eta_b = max over grouped grids of psi_prime(feature ⊕ di ⊕ dj)`, with
/// `(di, dj)` the LiDAR grid offset from `cell`. Zero when nothing is
/// grouped.
pub fn qbf_fuse(
    cell: BevGridIndex,
    grids: &BevGrids,
    cfg: &QbfConfig,
    neighborhood: &dyn BevNeighborhood,
) -> Result<(Vec<f64>, usize)> {
    let found = bev_query(cell, grids, cfg.window, cfg.max_group, neighborhood);
    if found.is_empty() {
        return Ok((vec![0.0; cfg.eta_width()], 0));
    }
    let rows = found
        .hits
        .iter()
        .map(|h| {
            let mut input = grids[&h.cell].clone();
            input.push(h.cell.i as f64 - cell.i as f64);
            input.push(h.cell.j as f64 - cell.j as f64);
            cfg.psi_prime.forward(&input)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((max_reduce(&rows)?, found.len()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fusion::{ManhattanNeighborhood, WindowNeighborhood};
    use crate::tensor::seeded_rng;

    fn idx(i: usize, j: usize) -> BevGridIndex {
        BevGridIndex::new(i, j)
    }

    #[test]
    fn manhattan_examples() {
        assert_eq!(manhattan_distance(idx(4, 4), idx(4, 4)), 0);
        assert_eq!(manhattan_distance(idx(3, 4), idx(1, 7)), 5);
        assert_eq!(manhattan_distance(idx(1, 7), idx(3, 4)), 5);
    }

    #[test]
    fn empty_grids_give_empty_result() {
        let g = BevGrids::new();
        assert!(bev_query(idx(3, 3), &g, (2, 2), 16, &WindowNeighborhood).is_empty());
    }

    #[test]
    fn self_cell_only() {
        let mut g = BevGrids::new();
        g.insert(idx(3, 3), vec![1.0]);
        let r = bev_query(idx(3, 3), &g, (2, 2), 16, &WindowNeighborhood);
        assert_eq!(
            r.hits,
            vec![GridHit {
                cell: idx(3, 3),
                distance: 0
            }]
        );
    }

    #[test]
    fn window_vs_manhattan_corner() {
        let mut g = BevGrids::new();
        g.insert(idx(5, 5), vec![1.0]);
        // corner of the (2,2) window: Manhattan 4
        assert_eq!(
            bev_query(idx(3, 3), &g, (2, 2), 16, &WindowNeighborhood).len(),
            1
        );
        assert_eq!(
            bev_query(idx(3, 3), &g, (2, 2), 16, &ManhattanNeighborhood).len(),
            0
        );
    }

    #[test]
    fn ordering_and_truncation() {
        let mut g = BevGrids::new();
        for (i, j) in [(0, 0), (1, 0), (0, 1), (2, 1), (1, 1)] {
            g.insert(idx(i, j), vec![0.0]);
        }
        let r = bev_query(idx(1, 1), &g, (1, 1), 4, &WindowNeighborhood);
        assert_eq!(r.cells(), vec![idx(1, 1), idx(0, 1), idx(1, 0), idx(2, 1)]);
    }

    #[test]
    fn qbf_empty_and_singleton() {
        let mut rng = seeded_rng(3);
        let cfg =
            QbfConfig::new((2, 2), 16, Mlp::random(&mut rng, &[4, 32], true).unwrap()).unwrap();
        let mut g = BevGrids::new();
        let (eta, n) = qbf_fuse(idx(3, 3), &g, &cfg, &WindowNeighborhood).unwrap();
        assert_eq!((eta, n), (vec![0.0; 32], 0));
        g.insert(idx(4, 2), vec![0.5, -1.0]);
        let (eta, n) = qbf_fuse(idx(3, 3), &g, &cfg, &WindowNeighborhood).unwrap();
        assert_eq!(n, 1);
        assert_eq!(eta, cfg.psi_prime.forward(&[0.5, -1.0, 1.0, -1.0]).unwrap());
    }
}

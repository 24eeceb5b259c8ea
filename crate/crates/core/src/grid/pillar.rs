use std::collections::BTreeMap;

use super::bev::BevGridIndex;
use super::spec::GridSpec;
use crate::error::{Error, Result};
use crate::scene::{RadarCloud, RadarPoint};
use crate::tensor::{max_reduce, FeatureMap, Mlp};

/// Radar BEV map `M_R` plus its occupancy.
#[derive(Debug, Clone, PartialEq)]
pub struct RadarBev {
    pub map: FeatureMap,
    /// Non-empty pillars in `(i, j)` order.
    pub occupied: Vec<BevGridIndex>,
    pub dropped: usize,
}

/// Raw per-point pillar input. Variant A carries Doppler and status fields,
/// variant B only `x y rcs t`. Missing fields are never imputed.
pub fn radar_point_features(p: &RadarPoint) -> Vec<f64> {
    let mut f = vec![p.x as f64, p.y as f64, p.rcs as f64, p.t as f64];
    if let Some(e) = p.extras {
        f.extend([e.vx, e.vy, e.dyn_prop, e.invalid_state, e.pdh0].map(f64::from));
    }
    f
}

fn canonical_key(p: &RadarPoint) -> Vec<u32> {
    radar_point_features(p)
        .iter()
        .map(|&v| (v as f32).to_bits())
        .collect()
}

/// Pillar encoder: per-pillar max over `mlp(point features)`, scattered to
/// a `c2 x ny x nx` map. Empty pillars are exactly zero.
pub fn pillarize(
    radar: &RadarCloud,
    spec: &GridSpec,
    mlp: &Mlp,
    c2: usize,
    max_points_per_pillar: usize,
) -> Result<RadarBev> {
    spec.validate()?;
    if !spec.is_pillar() {
        return Err(Error::shape(format!(
            "pillar grid must have nz == 1, got {}",
            spec.nz()
        )));
    }
    let dims = radar.variant().point_features();
    if mlp.input_dim() != dims {
        return Err(Error::shape(format!(
            "pillar MLP expects {} inputs, {:?} radar points have {dims}",
            mlp.input_dim(),
            radar.variant()
        )));
    }
    if mlp.output_dim() != c2 {
        return Err(Error::shape(format!(
            "pillar MLP outputs {}, M_R needs {c2} channels",
            mlp.output_dim()
        )));
    }
    let mut bins: BTreeMap<BevGridIndex, Vec<&RadarPoint>> = BTreeMap::new();
    let mut dropped = 0;
    for p in radar.points() {
        match spec.bev_index(p.x as f64, p.y as f64) {
            Some((i, j)) => bins.entry(BevGridIndex { i, j }).or_default().push(p),
            None => dropped += 1,
        }
    }
    let mut map = FeatureMap::zeros(c2, spec.ny(), spec.nx());
    let mut occupied = Vec::with_capacity(bins.len());
    for (cell, mut pts) in bins {
        pts.sort_by_cached_key(|p| canonical_key(p));
        pts.truncate(max_points_per_pillar.max(1));
        let rows = pts
            .iter()
            .map(|p| mlp.forward(&radar_point_features(p)))
            .collect::<Result<Vec<_>>>()?;
        map.set_cell(cell.j, cell.i, &max_reduce(&rows)?);
        occupied.push(cell);
    }
    Ok(RadarBev {
        map,
        occupied,
        dropped,
    })
}

use super::query::PointIndex;
use crate::error::{Error, Result};
use crate::grid::{BevGridIndex, GridSpec};
use crate::scene::LidarPoint;
use crate::tensor::{max_reduce, Mlp};

/// Ψ input: point offset to the query point, intensity and time.
pub const PSI_INPUTS: usize = 5;

/// Number of pillar segments: `floor(h / 2r)`, at least one.
pub fn segment_count(h: f64, r: f64) -> usize {
    let m = (h / (2.0 * r) + 1e-9).floor();
    if m >= 1.0 {
        m as usize
    } else {
        1
    }
}

/// Height-query settings and weights.
#[derive(Debug, Clone)]
pub struct QhfConfig {
    /// Radar BEV cell edge.
    pub r: f64,
    /// Pillar height (LiDAR z extent).
    pub h: f64,
    /// Height of the pillar floor.
    pub z_min: f64,
    pub num_segments: usize,
    pub ball_radius: f64,
    pub max_group: usize,
    /// Per-point MLP before the segment max-pool.
    pub psi: Mlp,
    /// Maps the concatenated segment features to `eta_h`.
    pub head: Mlp,
}

impl QhfConfig {
    /// `ball_radius` defaults to `r / 2`.
    pub fn new(
        r: f64,
        h: f64,
        z_min: f64,
        ball_radius: Option<f64>,
        max_group: usize,
        psi: Mlp,
        head: Mlp,
    ) -> Result<Self> {
        if !(r > 0.0) || !(h > 0.0) {
            return Err(Error::config("qhf", "r and h must be > 0"));
        }
        let ball_radius = ball_radius.unwrap_or(r / 2.0);
        if !(ball_radius > 0.0) {
            return Err(Error::config("qhf.ball_radius", "must be > 0"));
        }
        if max_group == 0 {
            return Err(Error::config("qhf.max_group", "must be >= 1"));
        }
        let num_segments = segment_count(h, r);
        if psi.input_dim() != PSI_INPUTS {
            return Err(Error::shape(format!(
                "psi expects {} inputs, grouped points have {PSI_INPUTS}",
                psi.input_dim()
            )));
        }
        if head.input_dim() != num_segments * psi.output_dim() {
            return Err(Error::shape(format!(
                "qhf head expects {} inputs, {num_segments} segments x {} give {}",
                head.input_dim(),
                psi.output_dim(),
                num_segments * psi.output_dim()
            )));
        }
        Ok(Self {
            r,
            h,
            z_min,
            num_segments,
            ball_radius,
            max_group,
            psi,
            head,
        })
    }

    pub fn eta_width(&self) -> usize {
        self.head.output_dim()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QueryPoint {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    /// 1-based segment index.
    pub segment: usize,
}

impl QueryPoint {
    pub fn position(&self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }
}

/// One query point per segment at `z_s = z_min + r (2s - 1)`, `s = 1..=M`,
/// above the center of `cell`.
pub fn segment_query_points(
    cell: BevGridIndex,
    cfg: &QhfConfig,
    radar_grid: &GridSpec,
) -> Vec<QueryPoint> {
    let [x, y] = radar_grid.cell_center(cell.i, cell.j);
    (1..=cfg.num_segments)
        .map(|s| QueryPoint {
            x,
            y,
            z: cfg.z_min + cfg.r * (2.0 * s as f64 - 1.0),
            segment: s,
        })
        .collect()
}

/// True when every pair of query balls in a pillar is disjoint. Balls are
/// closed, so centers must be strictly more than two radii apart.
pub fn query_balls_disjoint(cfg: &QhfConfig, radius: f64) -> bool {
    let zs: Vec<f64> = (1..=cfg.num_segments)
        .map(|s| cfg.z_min + cfg.r * (2.0 * s as f64 - 1.0))
        .collect();
    zs.iter()
        .enumerate()
        .all(|(a, za)| zs[a + 1..].iter().all(|zb| (zb - za).abs() > 2.0 * radius))
}

/// Segment feature: max over grouped points of `psi(p - q, intensity, t)`.
/// An empty group yields zeros.
pub fn aggregate_segment(q: &QueryPoint, grouped: &[LidarPoint], psi: &Mlp) -> Result<Vec<f64>> {
    if grouped.is_empty() {
        return Ok(vec![0.0; psi.output_dim()]);
    }
    let rows = grouped
        .iter()
        .map(|p| {
            psi.forward(&[
                p.x as f64 - q.x,
                p.y as f64 - q.y,
                p.z as f64 - q.z,
                p.intensity as f64,
                p.t as f64,
            ])
        })
        .collect::<Result<Vec<_>>>()?;
    max_reduce(&rows)
}

/// Result of the height query for one Radar cell.
#[derive(Debug, Clone, PartialEq)]
pub struct QhfResult {
    pub eta_h: Vec<f64>,
    /// Segments whose ball query returned at least one point.
    pub segments_hit: usize,
}

/// `eta_h = head(concat(F_1, ..., F_M))`.
pub fn qhf_fuse(
    cell: BevGridIndex,
    cfg: &QhfConfig,
    radar_grid: &GridSpec,
    cloud: &[LidarPoint],
    index: &dyn PointIndex,
) -> Result<QhfResult> {
    let width = cfg.psi.output_dim();
    let mut concat = Vec::with_capacity(cfg.num_segments * width);
    let mut segments_hit = 0;
    for q in segment_query_points(cell, cfg, radar_grid) {
        let found = index.ball_query(q.position(), cfg.ball_radius, cfg.max_group);
        if !found.is_empty() {
            segments_hit += 1;
        }
        let grouped: Vec<LidarPoint> = found.hits.iter().map(|h| cloud[h.index]).collect();
        concat.extend(aggregate_segment(&q, &grouped, &cfg.psi)?);
    }
    Ok(QhfResult {
        eta_h: cfg.head.forward(&concat)?,
        segments_hit,
    })
}

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::grid::BevGridIndex;
use crate::scene::LidarPoint;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BallHit {
    pub index: usize,
    pub distance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridHit {
    pub cell: BevGridIndex,
    pub distance: usize,
}

/// Grouped neighbours of one query in their deterministic order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryResult<H> {
    pub hits: Vec<H>,
}

impl<H> QueryResult<H> {
    pub fn len(&self) -> usize {
        self.hits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hits.is_empty()
    }
}

impl QueryResult<BallHit> {
    pub fn indices(&self) -> Vec<usize> {
        self.hits.iter().map(|h| h.index).collect()
    }
}

impl QueryResult<GridHit> {
    pub fn cells(&self) -> Vec<BevGridIndex> {
        self.hits.iter().map(|h| h.cell).collect()
    }
}

/// Euclidean distance from a point to a query location.
#[inline]
pub fn point_distance(p: &LidarPoint, q: [f64; 3]) -> f64 {
    let dx = p.x as f64 - q[0];
    let dy = p.y as f64 - q[1];
    let dz = p.z as f64 - q[2];
    (dx * dx + dy * dy + dz * dz).sqrt()
}

/// Sorts by ascending distance, ties by ascending index, and keeps `k`.
fn finish(mut hits: Vec<BallHit>, k: usize) -> QueryResult<BallHit> {
    hits.sort_by(|a, b| {
        a.distance
            .total_cmp(&b.distance)
            .then(a.index.cmp(&b.index))
    });
    hits.truncate(k);
    QueryResult { hits }
}

/// Up to `k` points within `radius` of `q` by a full scan.
pub fn ball_query(
    q: [f64; 3],
    points: &[LidarPoint],
    radius: f64,
    k: usize,
) -> QueryResult<BallHit> {
    let hits = points
        .iter()
        .enumerate()
        .filter_map(|(index, p)| {
            let distance = point_distance(p, q);
            (distance <= radius).then_some(BallHit { index, distance })
        })
        .collect();
    finish(hits, k)
}

/// A prepared spatial index over one cloud.
pub trait PointIndex: Send + Sync {
    fn ball_query(&self, q: [f64; 3], radius: f64, k: usize) -> QueryResult<BallHit>;
}

/// Ball-query backend. Every backend must return exactly what
/// [`ball_query`] returns, in the same order.
pub trait NeighborSearch: Send + Sync {
    fn name(&self) -> &'static str;

    /// Builds an index tuned for queries of roughly `radius`.
    fn build<'a>(&self, points: &'a [LidarPoint], radius: f64) -> Box<dyn PointIndex + 'a>;
}

pub struct BruteForceSearch;

struct ScanIndex<'a> {
    points: &'a [LidarPoint],
}

impl PointIndex for ScanIndex<'_> {
    fn ball_query(&self, q: [f64; 3], radius: f64, k: usize) -> QueryResult<BallHit> {
        ball_query(q, self.points, radius, k)
    }
}

impl NeighborSearch for BruteForceSearch {
    fn name(&self) -> &'static str {
        "brute-force"
    }

    fn build<'a>(&self, points: &'a [LidarPoint], _radius: f64) -> Box<dyn PointIndex + 'a> {
        Box::new(ScanIndex { points })
    }
}

/// Uniform hash grid with cell edge equal to the build radius.
pub struct HashGridSearch;

struct HashGridIndex<'a> {
    points: &'a [LidarPoint],
    cell: f64,
    buckets: HashMap<[i64; 3], Vec<usize>>,
}

impl HashGridIndex<'_> {
    fn key(&self, p: [f64; 3]) -> [i64; 3] {
        p.map(|v| (v / self.cell).floor() as i64)
    }
}

impl PointIndex for HashGridIndex<'_> {
    fn ball_query(&self, q: [f64; 3], radius: f64, k: usize) -> QueryResult<BallHit> {
        let lo = self.key(q.map(|v| v - radius));
        let hi = self.key(q.map(|v| v + radius));
        let mut hits = Vec::new();
        for x in lo[0]..=hi[0] {
            for y in lo[1]..=hi[1] {
                for z in lo[2]..=hi[2] {
                    let Some(bucket) = self.buckets.get(&[x, y, z]) else {
                        continue;
                    };
                    for &index in bucket {
                        let distance = point_distance(&self.points[index], q);
                        if distance <= radius {
                            hits.push(BallHit { index, distance });
                        }
                    }
                }
            }
        }
        finish(hits, k)
    }
}

impl NeighborSearch for HashGridSearch {
    fn name(&self) -> &'static str {
        "hash-grid"
    }

    fn build<'a>(&self, points: &'a [LidarPoint], radius: f64) -> Box<dyn PointIndex + 'a> {
        let cell = if radius > 0.0 && radius.is_finite() {
            radius
        } else {
            1.0
        };
        let mut index = HashGridIndex {
            points,
            cell,
            buckets: HashMap::new(),
        };
        for (i, p) in points.iter().enumerate() {
            let key = index.key(p.position());
            index.buckets.entry(key).or_default().push(i);
        }
        Box::new(index)
    }
}

/// Which BEV offsets `(di, dj)` count as neighbours for a threshold pair.
pub trait BevNeighborhood: Send + Sync {
    fn name(&self) -> &'static str;

    fn contains(&self, di: usize, dj: usize, window: (usize, usize)) -> bool;

    /// Half-extent of the bounding box that contains every neighbour.
    fn reach(&self, window: (usize, usize)) -> (usize, usize);
}

/// `|di| <= window.0 && |dj| <= window.1`.
pub struct WindowNeighborhood;

impl BevNeighborhood for WindowNeighborhood {
    fn name(&self) -> &'static str {
        "window"
    }

    fn contains(&self, di: usize, dj: usize, window: (usize, usize)) -> bool {
        di <= window.0 && dj <= window.1
    }

    fn reach(&self, window: (usize, usize)) -> (usize, usize) {
        window
    }
}

/// `|di| + |dj| <= window.0`.
pub struct ManhattanNeighborhood;

impl BevNeighborhood for ManhattanNeighborhood {
    fn name(&self) -> &'static str {
        "manhattan"
    }

    fn contains(&self, di: usize, dj: usize, window: (usize, usize)) -> bool {
        di + dj <= window.0
    }

    fn reach(&self, window: (usize, usize)) -> (usize, usize) {
        (window.0, window.0)
    }
}

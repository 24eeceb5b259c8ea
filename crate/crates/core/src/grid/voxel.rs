use std::cmp::Ordering;
use std::collections::BTreeMap;

use super::spec::GridSpec;
use crate::error::{Error, Result};
use crate::scene::LidarPoint;
use crate::tensor::{max_reduce, FeatureMap, Mlp};

/// `(ix, iy, iz)`; the `BTreeMap` order is x-major, then y, then z.
pub type VoxelKey = [usize; 3];

/// Per-point VFE input: `x y z intensity t` plus offsets to the voxel
/// centroid.
pub const LIDAR_POINT_FEATURES: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct Voxel {
    /// Indices into the voxelized cloud, in canonical point order.
    pub members: Vec<usize>,
    pub points: Vec<LidarPoint>,
    pub feature: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VoxelSet {
    pub spec: GridSpec,
    pub voxels: BTreeMap<VoxelKey, Voxel>,
    /// Points outside the grid.
    pub dropped: usize,
    /// Points inside the grid but beyond `max_points_per_voxel`.
    pub truncated: usize,
}

impl VoxelSet {
    pub fn feature_dim(&self) -> Option<usize> {
        self.voxels
            .values()
            .find_map(|v| v.feature.as_ref().map(Vec::len))
    }

    pub fn is_encoded(&self) -> bool {
        self.voxels.values().all(|v| v.feature.is_some())
    }

    /// Merges `stride x stride` columns into one, keeping z levels. Member
    /// lists are concatenated and features max-reduced.
    pub fn coarsen(&self, stride: usize) -> Result<VoxelSet> {
        let spec = self.spec.coarsened(stride)?;
        let mut grouped: BTreeMap<VoxelKey, Vec<&Voxel>> = BTreeMap::new();
        for (k, v) in &self.voxels {
            grouped
                .entry([k[0] / stride, k[1] / stride, k[2]])
                .or_default()
                .push(v);
        }
        let mut voxels = BTreeMap::new();
        for (key, group) in grouped {
            let mut members = Vec::new();
            let mut points = Vec::new();
            for v in &group {
                members.extend_from_slice(&v.members);
                points.extend_from_slice(&v.points);
            }
            let feature = if group.iter().all(|v| v.feature.is_some()) {
                let rows: Vec<&[f64]> = group
                    .iter()
                    .map(|v| v.feature.as_deref().expect("checked"))
                    .collect();
                Some(max_reduce(&rows)?)
            } else {
                None
            };
            voxels.insert(
                key,
                Voxel {
                    members,
                    points,
                    feature,
                },
            );
        }
        Ok(VoxelSet {
            spec,
            voxels,
            dropped: self.dropped,
            truncated: self.truncated,
        })
    }
}

/// Total order on point values used to make voxel membership independent
/// of input order.
pub(crate) fn canonical_cmp(a: &LidarPoint, b: &LidarPoint) -> Ordering {
    a.x.total_cmp(&b.x)
        .then(a.y.total_cmp(&b.y))
        .then(a.z.total_cmp(&b.z))
        .then(a.intensity.total_cmp(&b.intensity))
        .then(a.t.total_cmp(&b.t))
}

/// Assigns each point to voxel `floor((p - origin) / cell)`, dropping
/// out-of-range points. Members of a voxel are kept in canonical value
/// order and truncated to `max_points_per_voxel`, so the result does not
/// depend on the order of `points`.
pub fn voxelize(
    points: &[LidarPoint],
    spec: &GridSpec,
    max_points_per_voxel: usize,
) -> Result<VoxelSet> {
    spec.validate()?;
    if max_points_per_voxel == 0 {
        return Err(Error::Argument("max_points_per_voxel must be >= 1".into()));
    }
    let mut bins: BTreeMap<VoxelKey, Vec<usize>> = BTreeMap::new();
    let mut dropped = 0;
    for (idx, p) in points.iter().enumerate() {
        match spec.voxel_index(p.position()) {
            Some(key) => bins.entry(key).or_default().push(idx),
            None => dropped += 1,
        }
    }
    let mut truncated = 0;
    let voxels = bins
        .into_iter()
        .map(|(key, mut members)| {
            members.sort_by(|&a, &b| canonical_cmp(&points[a], &points[b]).then(a.cmp(&b)));
            if members.len() > max_points_per_voxel {
                truncated += members.len() - max_points_per_voxel;
                members.truncate(max_points_per_voxel);
            }
            let pts = members.iter().map(|&i| points[i]).collect();
            (
                key,
                Voxel {
                    members,
                    points: pts,
                    feature: None,
                },
            )
        })
        .collect();
    Ok(VoxelSet {
        spec: *spec,
        voxels,
        dropped,
        truncated,
    })
}

/// Decorated VFE inputs for the points of one voxel.
pub fn lidar_point_features(points: &[LidarPoint]) -> Vec<[f64; LIDAR_POINT_FEATURES]> {
    let n = points.len().max(1) as f64;
    let mut c = [0.0; 3];
    for p in points {
        c[0] += p.x as f64;
        c[1] += p.y as f64;
        c[2] += p.z as f64;
    }
    let c = c.map(|v| v / n);
    points
        .iter()
        .map(|p| {
            let (x, y, z) = (p.x as f64, p.y as f64, p.z as f64);
            [
                x,
                y,
                z,
                p.intensity as f64,
                p.t as f64,
                x - c[0],
                y - c[1],
                z - c[2],
            ]
        })
        .collect()
}

/// Per-voxel feature = max over member points of `mlp(point features)`.
pub fn voxel_encode(v: &VoxelSet, mlp: &Mlp) -> Result<VoxelSet> {
    if mlp.input_dim() != LIDAR_POINT_FEATURES {
        return Err(Error::shape(format!(
            "voxel MLP expects {} inputs, point features have {LIDAR_POINT_FEATURES}",
            mlp.input_dim()
        )));
    }
    let mut out = v.clone();
    for voxel in out.voxels.values_mut() {
        let rows = lidar_point_features(&voxel.points)
            .iter()
            .map(|f| mlp.forward(f))
            .collect::<Result<Vec<_>>>()?;
        voxel.feature = Some(max_reduce(&rows)?);
    }
    Ok(out)
}

/// Stacks the `nz` voxel features of every BEV column bottom to top (zeros
/// for empty voxels) and maps them through `mlp` to `c_out` channels.
/// Columns with no occupied voxel stay exactly zero.
pub fn zstack_collapse(v: &VoxelSet, c_out: usize, mlp: &Mlp) -> Result<FeatureMap> {
    let (nx, ny, nz) = (v.spec.nx(), v.spec.ny(), v.spec.nz());
    let mut out = FeatureMap::zeros(c_out, ny, nx);
    if v.voxels.is_empty() {
        return Ok(out);
    }
    let f = v
        .feature_dim()
        .ok_or_else(|| Error::shape("zstack_collapse needs encoded voxels"))?;
    if mlp.input_dim() != f * nz {
        return Err(Error::shape(format!(
            "zstack MLP expects {} inputs, column has {f} x {nz}",
            mlp.input_dim()
        )));
    }
    if mlp.output_dim() != c_out {
        return Err(Error::shape(format!(
            "zstack MLP outputs {}, map needs {c_out} channels",
            mlp.output_dim()
        )));
    }
    let mut iter = v.voxels.iter().peekable();
    while let Some((key, _)) = iter.peek() {
        let (ix, iy) = (key[0], key[1]);
        let mut column = vec![0.0; f * nz];
        while let Some((k, voxel)) = iter.next_if(|(k, _)| k[0] == ix && k[1] == iy) {
            let feat = voxel
                .feature
                .as_ref()
                .ok_or_else(|| Error::shape("zstack_collapse needs encoded voxels"))?;
            if feat.len() != f {
                return Err(Error::shape("voxel features of unequal width"));
            }
            column[k[2] * f..(k[2] + 1) * f].copy_from_slice(feat);
        }
        let cell = mlp.forward(&column)?;
        out.set_cell(iy, ix, &cell);
    }
    Ok(out)
}

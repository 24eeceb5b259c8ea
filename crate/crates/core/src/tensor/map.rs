use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense `C x H x W` grid of activations, row-major with channels outermost.
///
/// Cell `(i, j)` of a BEV grid (index `i` along X, `j` along Y) lives at
/// row `j`, column `i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMap {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl FeatureMap {
    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Self {
            channels,
            height,
            width,
            data: vec![0.0; channels * height * width],
        }
    }

    pub fn from_vec(channels: usize, height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != channels * height * width {
            return Err(Error::shape(format!(
                "feature map {channels}x{height}x{width} needs {} values, got {}",
                channels * height * width,
                data.len()
            )));
        }
        Ok(Self {
            channels,
            height,
            width,
            data,
        })
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn shape(&self) -> [usize; 3] {
        [self.channels, self.height, self.width]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn index(&self, c: usize, row: usize, col: usize) -> usize {
        debug_assert!(c < self.channels && row < self.height && col < self.width);
        (c * self.height + row) * self.width + col
    }

    #[inline]
    pub fn get(&self, c: usize, row: usize, col: usize) -> f64 {
        self.data[self.index(c, row, col)]
    }

    #[inline]
    pub fn set(&mut self, c: usize, row: usize, col: usize, value: f64) {
        let idx = self.index(c, row, col);
        self.data[idx] = value;
    }

    pub fn plane(&self, c: usize) -> &[f64] {
        let n = self.height * self.width;
        &self.data[c * n..(c + 1) * n]
    }

    pub fn plane_mut(&mut self, c: usize) -> &mut [f64] {
        let n = self.height * self.width;
        &mut self.data[c * n..(c + 1) * n]
    }

    /// The channel vector at one spatial location.
    pub fn cell(&self, row: usize, col: usize) -> Vec<f64> {
        (0..self.channels).map(|c| self.get(c, row, col)).collect()
    }

    pub fn set_cell(&mut self, row: usize, col: usize, values: &[f64]) {
        debug_assert_eq!(values.len(), self.channels);
        for (c, &v) in values.iter().enumerate() {
            self.set(c, row, col, v);
        }
    }

    pub fn is_cell_nonzero(&self, row: usize, col: usize) -> bool {
        (0..self.channels).any(|c| self.get(c, row, col) != 0.0)
    }

    /// Spatial locations `(row, col)` with at least one non-zero channel,
    /// in row-major order.
    pub fn nonzero_cells(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for row in 0..self.height {
            for col in 0..self.width {
                if self.is_cell_nonzero(row, col) {
                    out.push((row, col));
                }
            }
        }
        out
    }

    pub fn count_nonzero_cells(&self) -> usize {
        self.nonzero_cells().len()
    }

    /// Copy of channels `[start, end)`.
    pub fn channel_slice(&self, start: usize, end: usize) -> Result<FeatureMap> {
        if start > end || end > self.channels {
            return Err(Error::shape(format!(
                "channel slice {start}..{end} out of range for {} channels",
                self.channels
            )));
        }
        let n = self.height * self.width;
        FeatureMap::from_vec(
            end - start,
            self.height,
            self.width,
            self.data[start * n..end * n].to_vec(),
        )
    }

    /// Channel-wise concatenation; all maps must share spatial dims.
    pub fn concat_channels(maps: &[&FeatureMap]) -> Result<FeatureMap> {
        let first = maps.first().ok_or(Error::EmptyInput("concat of no maps"))?;
        let (h, w) = (first.height, first.width);
        let mut data = Vec::new();
        let mut channels = 0;
        for m in maps {
            if m.height != h || m.width != w {
                return Err(Error::shape(format!(
                    "concat spatial mismatch: {}x{} vs {}x{}",
                    m.height, m.width, h, w
                )));
            }
            channels += m.channels;
            data.extend_from_slice(&m.data);
        }
        FeatureMap::from_vec(channels, h, w, data)
    }

    /// Nearest-neighbour upsampling by an integer factor in both axes.
    pub fn replicate(&self, factor: usize) -> Result<FeatureMap> {
        if factor == 0 {
            return Err(Error::shape("replication factor must be >= 1"));
        }
        let (h, w) = (self.height * factor, self.width * factor);
        let mut out = FeatureMap::zeros(self.channels, h, w);
        for c in 0..self.channels {
            for row in 0..h {
                for col in 0..w {
                    out.set(c, row, col, self.get(c, row / factor, col / factor));
                }
            }
        }
        Ok(out)
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> FeatureMap {
        FeatureMap {
            channels: self.channels,
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn from_vec_checks_length() {
        assert!(FeatureMap::from_vec(2, 2, 2, vec![0.0; 7]).is_err());
        assert!(FeatureMap::from_vec(2, 2, 2, vec![0.0; 8]).is_ok());
    }

    #[test]
    fn concat_keeps_order() {
        let a = FeatureMap::from_vec(1, 1, 2, vec![1.0, 2.0]).unwrap();
        let b = FeatureMap::from_vec(2, 1, 2, vec![3.0, 4.0, 5.0, 6.0]).unwrap();
        let c = FeatureMap::concat_channels(&[&a, &b]).unwrap();
        assert_eq!(c.shape(), [3, 1, 2]);
        assert_eq!(c.channel_slice(0, 1).unwrap(), a);
        assert_eq!(c.channel_slice(1, 3).unwrap(), b);
    }

    #[test]
    fn concat_rejects_spatial_mismatch() {
        let a = FeatureMap::zeros(1, 2, 2);
        let b = FeatureMap::zeros(1, 2, 3);
        assert!(matches!(
            FeatureMap::concat_channels(&[&a, &b]),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn replicate_is_block_copy() {
        let m = FeatureMap::from_vec(1, 2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let r = m.replicate(2).unwrap();
        assert_eq!(r.shape(), [1, 4, 4]);
        assert_eq!(r.get(0, 0, 1), 1.0);
        assert_eq!(r.get(0, 1, 2), 2.0);
        assert_eq!(r.get(0, 3, 0), 3.0);
        assert_eq!(r.get(0, 3, 3), 4.0);
    }
}

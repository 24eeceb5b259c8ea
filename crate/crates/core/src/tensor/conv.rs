use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{init::uniform_fan_in, FeatureMap};
use crate::error::{Error, Result};

/// 2D cross-correlation layer with zero padding.
///
/// `kernel` is laid out `out x in x kh x kw`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Conv2d {
    pub out_channels: usize,
    pub in_channels: usize,
    pub kh: usize,
    pub kw: usize,
    pub kernel: Vec<f64>,
    pub bias: Vec<f64>,
    pub stride: usize,
    pub padding: usize,
}

#[derive(Debug, Clone)]
pub struct Conv2dGrads {
    pub kernel: Vec<f64>,
    pub bias: Vec<f64>,
    pub input: FeatureMap,
}

impl Conv2d {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        out_channels: usize,
        in_channels: usize,
        kh: usize,
        kw: usize,
        kernel: Vec<f64>,
        bias: Vec<f64>,
        stride: usize,
        padding: usize,
    ) -> Result<Self> {
        if kernel.len() != out_channels * in_channels * kh * kw || bias.len() != out_channels {
            return Err(Error::shape(format!(
                "conv {out_channels}x{in_channels}x{kh}x{kw}: kernel has {} values, bias {}",
                kernel.len(),
                bias.len()
            )));
        }
        if stride == 0 || kh == 0 || kw == 0 {
            return Err(Error::shape("conv stride and kernel dims must be positive"));
        }
        Ok(Self {
            out_channels,
            in_channels,
            kh,
            kw,
            kernel,
            bias,
            stride,
            padding,
        })
    }

    pub fn zeros(
        out_channels: usize,
        in_channels: usize,
        k: usize,
        stride: usize,
        padding: usize,
    ) -> Self {
        Self {
            out_channels,
            in_channels,
            kh: k,
            kw: k,
            kernel: vec![0.0; out_channels * in_channels * k * k],
            bias: vec![0.0; out_channels],
            stride,
            padding,
        }
    }

    pub fn random<R: Rng + ?Sized>(
        rng: &mut R,
        out_channels: usize,
        in_channels: usize,
        k: usize,
        stride: usize,
        padding: usize,
    ) -> Self {
        let fan_in = in_channels * k * k;
        Self {
            out_channels,
            in_channels,
            kh: k,
            kw: k,
            kernel: uniform_fan_in(rng, fan_in, out_channels * fan_in),
            bias: uniform_fan_in(rng, fan_in, out_channels),
            stride,
            padding,
        }
    }

    /// Square `k x k` kernel with "same" padding and stride 1.
    pub fn same(out_channels: usize, in_channels: usize, k: usize) -> Self {
        Self::zeros(out_channels, in_channels, k, 1, k / 2)
    }

    #[inline]
    pub fn kernel_index(&self, o: usize, c: usize, ky: usize, kx: usize) -> usize {
        ((o * self.in_channels + c) * self.kh + ky) * self.kw + kx
    }

    pub fn output_dims(&self, height: usize, width: usize) -> Result<(usize, usize)> {
        let h = (height + 2 * self.padding) as isize - self.kh as isize;
        let w = (width + 2 * self.padding) as isize - self.kw as isize;
        if h < 0 || w < 0 {
            return Err(Error::shape(format!(
                "conv {}x{} kernel with padding {} does not fit a {height}x{width} map",
                self.kh, self.kw, self.padding
            )));
        }
        Ok((h as usize / self.stride + 1, w as usize / self.stride + 1))
    }

    /// Range of output positions whose input coordinate
    /// `o * stride + k - pad` lands inside `[0, len)`.
    fn valid_range(&self, k: usize, len: usize, out_len: usize) -> (usize, usize) {
        let s = self.stride as isize;
        let shift = k as isize - self.padding as isize;
        // smallest o with o*s + shift >= 0
        let lo = if shift >= 0 {
            0
        } else {
            ((-shift) + s - 1) / s
        };
        // largest o with o*s + shift <= len - 1, exclusive bound
        let hi_num = len as isize - 1 - shift;
        let hi = if hi_num < 0 { 0 } else { hi_num / s + 1 };
        (lo.max(0) as usize, (hi as usize).min(out_len))
    }

    pub fn forward(&self, input: &FeatureMap) -> Result<FeatureMap> {
        if input.channels() != self.in_channels {
            return Err(Error::shape(format!(
                "conv expects {} input channels, got {}",
                self.in_channels,
                input.channels()
            )));
        }
        let (h, w) = (input.height(), input.width());
        let (oh, ow) = self.output_dims(h, w)?;
        let mut out = FeatureMap::zeros(self.out_channels, oh, ow);
        for o in 0..self.out_channels {
            let plane = out.plane_mut(o);
            plane.iter_mut().for_each(|v| *v = self.bias[o]);
            for c in 0..self.in_channels {
                let src = input.plane(c);
                for ky in 0..self.kh {
                    let (y0, y1) = self.valid_range(ky, h, oh);
                    for kx in 0..self.kw {
                        let wgt = self.kernel[self.kernel_index(o, c, ky, kx)];
                        if wgt == 0.0 {
                            continue;
                        }
                        let (x0, x1) = self.valid_range(kx, w, ow);
                        if x0 >= x1 {
                            continue;
                        }
                        for oy in y0..y1 {
                            let iy = oy * self.stride + ky - self.padding;
                            let dst = &mut plane[oy * ow..(oy + 1) * ow];
                            let row = &src[iy * w..(iy + 1) * w];
                            if self.stride == 1 {
                                let ix0 = x0 + kx - self.padding;
                                let n = x1 - x0;
                                for (d, s) in dst[x0..x1].iter_mut().zip(&row[ix0..ix0 + n]) {
                                    *d += wgt * s;
                                }
                            } else {
                                for ox in x0..x1 {
                                    let ix = ox * self.stride + kx - self.padding;
                                    dst[ox] += wgt * row[ix];
                                }
                            }
                        }
                    }
                }
            }
        }
        Ok(out)
    }

    /// Gradients given the forward input and `dL/d(output)`.
    pub fn backward(&self, input: &FeatureMap, upstream: &FeatureMap) -> Result<Conv2dGrads> {
        let (h, w) = (input.height(), input.width());
        let (oh, ow) = self.output_dims(h, w)?;
        if upstream.shape() != [self.out_channels, oh, ow] {
            return Err(Error::shape(format!(
                "upstream gradient shape {:?} does not match conv output {:?}",
                upstream.shape(),
                [self.out_channels, oh, ow]
            )));
        }
        let mut gk = vec![0.0; self.kernel.len()];
        let mut gb = vec![0.0; self.out_channels];
        let mut gx = FeatureMap::zeros(self.in_channels, h, w);
        for o in 0..self.out_channels {
            let up = upstream.plane(o);
            gb[o] = up.iter().sum();
            for c in 0..self.in_channels {
                for ky in 0..self.kh {
                    let (y0, y1) = self.valid_range(ky, h, oh);
                    for kx in 0..self.kw {
                        let (x0, x1) = self.valid_range(kx, w, ow);
                        let k_idx = self.kernel_index(o, c, ky, kx);
                        let wgt = self.kernel[k_idx];
                        let mut acc = 0.0;
                        for oy in y0..y1 {
                            let iy = oy * self.stride + ky - self.padding;
                            for ox in x0..x1 {
                                let ix = ox * self.stride + kx - self.padding;
                                let g = up[oy * ow + ox];
                                acc += g * input.get(c, iy, ix);
                                let idx = gx.index(c, iy, ix);
                                gx.data_mut()[idx] += g * wgt;
                            }
                        }
                        gk[k_idx] = acc;
                    }
                }
            }
        }
        Ok(Conv2dGrads {
            kernel: gk,
            bias: gb,
            input: gx,
        })
    }

    pub fn params(&self) -> Vec<f64> {
        self.kernel.iter().chain(&self.bias).copied().collect()
    }

    pub fn with_params(&self, flat: &[f64]) -> Result<Self> {
        let nk = self.kernel.len();
        if flat.len() != nk + self.bias.len() {
            return Err(Error::shape(format!(
                "expected {} conv parameters, got {}",
                nk + self.bias.len(),
                flat.len()
            )));
        }
        let mut out = self.clone();
        out.kernel.copy_from_slice(&flat[..nk]);
        out.bias.copy_from_slice(&flat[nk..]);
        Ok(out)
    }
}

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{init::uniform_fan_in, relu};
use crate::error::{Error, Result};

/// One affine layer; `weight` is `outputs x inputs`, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn new(inputs: usize, outputs: usize, weight: Vec<f64>, bias: Vec<f64>) -> Result<Self> {
        if weight.len() != inputs * outputs || bias.len() != outputs {
            return Err(Error::shape(format!(
                "dense {inputs}->{outputs}: weight has {} values, bias {}",
                weight.len(),
                bias.len()
            )));
        }
        Ok(Self {
            inputs,
            outputs,
            weight,
            bias,
        })
    }

    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            inputs,
            outputs,
            weight: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
        }
    }

    pub fn random<R: Rng + ?Sized>(rng: &mut R, inputs: usize, outputs: usize) -> Self {
        let weight = uniform_fan_in(rng, inputs, inputs * outputs);
        let bias = uniform_fan_in(rng, inputs, outputs);
        Self {
            inputs,
            outputs,
            weight,
            bias,
        }
    }

    fn affine(&self, x: &[f64]) -> Vec<f64> {
        (0..self.outputs)
            .map(|o| {
                let row = &self.weight[o * self.inputs..(o + 1) * self.inputs];
                row.iter()
                    .zip(x)
                    .fold(self.bias[o], |acc, (w, v)| acc + w * v)
            })
            .collect()
    }
}

/// Multi-layer perceptron with a rectifier after every layer except,
/// optionally, the last.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    layers: Vec<Dense>,
    relu_last: bool,
}

/// Intermediate values of one forward pass, needed by [`Mlp::backward`].
#[derive(Debug, Clone)]
pub struct MlpTrace {
    /// Input to each layer.
    pub inputs: Vec<Vec<f64>>,
    /// Affine output of each layer, before any rectifier.
    pub pre_activations: Vec<Vec<f64>>,
    pub output: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct MlpGrads {
    pub weight: Vec<Vec<f64>>,
    pub bias: Vec<Vec<f64>>,
    pub input: Vec<f64>,
}

impl MlpGrads {
    /// Parameter gradients flattened in the same order as [`Mlp::params`].
    pub fn flat_params(&self) -> Vec<f64> {
        self.weight
            .iter()
            .zip(&self.bias)
            .flat_map(|(w, b)| w.iter().chain(b).copied())
            .collect()
    }
}

impl Mlp {
    pub fn new(layers: Vec<Dense>, relu_last: bool) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::shape("mlp needs at least one layer"));
        }
        for (k, pair) in layers.windows(2).enumerate() {
            if pair[0].outputs != pair[1].inputs {
                return Err(Error::shape(format!(
                    "mlp layer {k} outputs {} but layer {} expects {}",
                    pair[0].outputs,
                    k + 1,
                    pair[1].inputs
                )));
            }
        }
        Ok(Self { layers, relu_last })
    }

    /// Randomly initialised MLP with layer widths `dims[0] -> dims[1] -> ...`.
    pub fn random<R: Rng + ?Sized>(rng: &mut R, dims: &[usize], relu_last: bool) -> Result<Self> {
        if dims.len() < 2 {
            return Err(Error::shape("mlp dims need an input and an output width"));
        }
        let layers = dims
            .windows(2)
            .map(|d| Dense::random(rng, d[0], d[1]))
            .collect();
        Self::new(layers, relu_last)
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn relu_last(&self) -> bool {
        self.relu_last
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].outputs
    }

    fn rectified(&self, layer: usize) -> bool {
        layer + 1 < self.layers.len() || self.relu_last
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let mut h = x.to_vec();
        for (k, layer) in self.layers.iter().enumerate() {
            h = layer.affine(&h);
            if self.rectified(k) {
                h.iter_mut().for_each(|v| *v = relu(*v));
            }
        }
        Ok(h)
    }

    pub fn forward_trace(&self, x: &[f64]) -> Result<MlpTrace> {
        self.check_input(x)?;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre_activations = Vec::with_capacity(self.layers.len());
        let mut h = x.to_vec();
        for (k, layer) in self.layers.iter().enumerate() {
            let z = layer.affine(&h);
            inputs.push(h);
            h = if self.rectified(k) {
                z.iter().map(|&v| relu(v)).collect()
            } else {
                z.clone()
            };
            pre_activations.push(z);
        }
        Ok(MlpTrace {
            inputs,
            pre_activations,
            output: h,
        })
    }

    /// Back-propagates `upstream = dL/d(output)` through a recorded pass.
    pub fn backward(&self, trace: &MlpTrace, upstream: &[f64]) -> Result<MlpGrads> {
        if upstream.len() != self.output_dim() {
            return Err(Error::shape(format!(
                "upstream gradient has {} values, mlp outputs {}",
                upstream.len(),
                self.output_dim()
            )));
        }
        let n = self.layers.len();
        let mut weight = vec![Vec::new(); n];
        let mut bias = vec![Vec::new(); n];
        let mut grad = upstream.to_vec();
        for k in (0..n).rev() {
            let layer = &self.layers[k];
            if self.rectified(k) {
                for (g, &z) in grad.iter_mut().zip(&trace.pre_activations[k]) {
                    if z <= 0.0 {
                        *g = 0.0;
                    }
                }
            }
            let input = &trace.inputs[k];
            let mut gw = vec![0.0; layer.inputs * layer.outputs];
            let mut gx = vec![0.0; layer.inputs];
            for o in 0..layer.outputs {
                let g = grad[o];
                let row = &layer.weight[o * layer.inputs..(o + 1) * layer.inputs];
                for i in 0..layer.inputs {
                    gw[o * layer.inputs + i] = g * input[i];
                    gx[i] += g * row[i];
                }
            }
            weight[k] = gw;
            bias[k] = grad;
            grad = gx;
        }
        Ok(MlpGrads {
            weight,
            bias,
            input: grad,
        })
    }

    /// All parameters flattened layer by layer, weights before biases.
    pub fn params(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weight.iter().chain(&l.bias).copied())
            .collect()
    }

    pub fn num_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.len() + l.bias.len())
            .sum()
    }

    /// Same architecture with parameters replaced from a flat vector.
    pub fn with_params(&self, flat: &[f64]) -> Result<Self> {
        if flat.len() != self.num_params() {
            return Err(Error::shape(format!(
                "expected {} parameters, got {}",
                self.num_params(),
                flat.len()
            )));
        }
        let mut offset = 0;
        let mut layers = self.layers.clone();
        for l in &mut layers {
            let nw = l.weight.len();
            l.weight.copy_from_slice(&flat[offset..offset + nw]);
            offset += nw;
            let nb = l.bias.len();
            l.bias.copy_from_slice(&flat[offset..offset + nb]);
            offset += nb;
        }
        Ok(Self {
            layers,
            relu_last: self.relu_last,
        })
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::shape(format!(
                "mlp expects {} inputs, got {}",
                self.input_dim(),
                x.len()
            )));
        }
        Ok(())
    }
}

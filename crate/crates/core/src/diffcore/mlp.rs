use rand::Rng;
use serde::{Deserialize, Serialize};

use super::graph::{Graph, Var};
use super::tensor::{gemm_into, Tensor};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Tanh,
    Relu,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Relu => x.max(0.0),
        }
    }

    pub(crate) fn tag(self) -> u8 {
        match self {
            Activation::Tanh => 0,
            Activation::Relu => 1,
        }
    }

    pub(crate) fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(Activation::Tanh),
            1 => Some(Activation::Relu),
            _ => None,
        }
    }
}

/// Affine layer `y = x·W + b` with `W: [in, out]`, `b: [1, out]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Linear {
    pub weight: Tensor,
    pub bias: Tensor,
}

/// Fully connected network. Hidden layers use `activation`, the output layer
/// is affine.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    widths: Vec<usize>,
    layers: Vec<Linear>,
    activation: Activation,
}

impl Mlp {
    /// Weights and biases drawn from `U(-√(1/fan_in), √(1/fan_in))`.
    pub fn new<R: Rng + ?Sized>(widths: &[usize], activation: Activation, rng: &mut R) -> Result<Self> {
        Self::check_widths(widths)?;
        let layers = widths
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let bound = (1.0 / fan_in as f64).sqrt();
                let mut draw = |len: usize| -> Vec<f64> {
                    (0..len).map(|_| rng.gen_range(-bound..bound)).collect()
                };
                let weight = Tensor::matrix(fan_in, fan_out, draw(fan_in * fan_out))?;
                let bias = Tensor::matrix(1, fan_out, draw(fan_out))?;
                Ok(Linear { weight, bias })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            widths: widths.to_vec(),
            layers,
            activation,
        })
    }

    pub fn zeros(widths: &[usize], activation: Activation) -> Result<Self> {
        Self::check_widths(widths)?;
        let layers = widths
            .windows(2)
            .map(|w| Linear {
                weight: Tensor::zeros(w[0], w[1]),
                bias: Tensor::zeros(1, w[1]),
            })
            .collect();
        Ok(Self {
            widths: widths.to_vec(),
            layers,
            activation,
        })
    }

    pub fn from_layers(layers: Vec<Linear>, activation: Activation) -> Result<Self> {
        let first = layers
            .first()
            .ok_or_else(|| Error::dim("Mlp::from_layers", "no layers"))?;
        let mut widths = vec![first.weight.rows()];
        for (i, layer) in layers.iter().enumerate() {
            let (fan_in, fan_out) = layer.weight.dims();
            if fan_in != *widths.last().unwrap() || layer.bias.shape() != [1, fan_out] {
                return Err(Error::dim(
                    "Mlp::from_layers",
                    format!(
                        "layer {i}: weight {:?} / bias {:?} incompatible with width {}",
                        layer.weight.shape(),
                        layer.bias.shape(),
                        widths.last().unwrap()
                    ),
                ));
            }
            widths.push(fan_out);
        }
        Ok(Self {
            widths,
            layers,
            activation,
        })
    }

    fn check_widths(widths: &[usize]) -> Result<()> {
        if widths.len() < 2 || widths.contains(&0) {
            return Err(Error::dim(
                "Mlp",
                format!("widths {widths:?} need at least input and output, all positive"),
            ));
        }
        Ok(())
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.widths.last().unwrap()
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn layers(&self) -> &[Linear] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Linear] {
        &mut self.layers
    }

    pub fn param_count(&self) -> usize {
        self.widths.windows(2).map(|w| (w[0] + 1) * w[1]).sum()
    }

    /// Parameters as `[w0, b0, w1, b1, ...]`.
    pub fn params(&self) -> Vec<&Tensor> {
        self.layers.iter().flat_map(|l| [&l.weight, &l.bias]).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        self.layers
            .iter_mut()
            .flat_map(|l| [&mut l.weight, &mut l.bias])
            .collect()
    }

    /// Batched evaluation outside any graph; `input` is `[batch, in]`.
    pub fn forward(&self, input: &Tensor) -> Result<Tensor> {
        if input.rank() != 2 || input.cols() != self.input_dim() {
            return Err(Error::dim(
                "mlp_forward layer 0",
                format!("input {:?}, layer expects width {}", input.shape(), self.input_dim()),
            ));
        }
        let batch = input.rows();
        let last = self.layers.len() - 1;
        let mut h = input.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            let out_w = layer.weight.cols();
            let mut out = Tensor::zeros(batch, out_w);
            for r in 0..batch {
                out.row_slice_mut(r).copy_from_slice(layer.bias.data());
            }
            gemm_into(&h, false, &layer.weight, false, out.data_mut(), 1.0);
            if i != last {
                out.data_mut()
                    .iter_mut()
                    .for_each(|v| *v = self.activation.apply(*v));
            }
            h = out;
        }
        Ok(h)
    }

    /// Single-sample convenience wrapper around [`Mlp::forward`].
    pub fn forward_one(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward(&Tensor::row(x))?.into_data())
    }

    /// Register every weight and bias as a graph parameter.
    pub fn bind(&self, g: &mut Graph) -> Result<MlpVars> {
        let layers = self
            .layers
            .iter()
            .map(|l| Ok((g.param(l.weight.clone())?, g.param(l.bias.clone())?)))
            .collect::<Result<Vec<_>>>()?;
        Ok(MlpVars {
            layers,
            activation: self.activation,
        })
    }
}

/// Graph handles of a bound [`Mlp`].
#[derive(Clone, Debug)]
pub struct MlpVars {
    layers: Vec<(Var, Var)>,
    activation: Activation,
}

impl MlpVars {
    pub fn forward(&self, g: &mut Graph, x: Var) -> Result<Var> {
        let last = self.layers.len() - 1;
        let mut h = x;
        for (i, &(w, b)) in self.layers.iter().enumerate() {
            let z = g.matmul(h, w).map_err(|e| match e {
                Error::Dimension { detail, .. } => Error::dim(format!("mlp layer {i}"), detail),
                other => other,
            })?;
            let z = g.add_row(z, b)?;
            h = if i == last {
                z
            } else {
                match self.activation {
                    Activation::Tanh => g.tanh(z),
                    Activation::Relu => g.relu(z),
                }
            };
        }
        Ok(h)
    }

    /// Parameter handles in the order of [`Mlp::params`].
    pub fn vars(&self) -> Vec<Var> {
        self.layers.iter().flat_map(|&(w, b)| [w, b]).collect()
    }

    /// Copy current parameter values from `mlp` into the graph leaves.
    pub fn load(&self, g: &mut Graph, mlp: &Mlp) -> Result<()> {
        for (&(w, b), layer) in self.layers.iter().zip(mlp.layers()) {
            g.set_value(w, layer.weight.clone())?;
            g.set_value(b, layer.bias.clone())?;
        }
        Ok(())
    }
}

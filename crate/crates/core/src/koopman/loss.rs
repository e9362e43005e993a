use crate::datagen::{Normalizer, StepBatch};
use crate::diffcore::{Graph, Tensor, Var};
use crate::error::{Error, Result};

use super::model::{KoopmanModel, Variant};

/// Shape of the multi-step objective.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossOptions {
    /// Prediction horizon `K`.
    pub horizon: usize,
    /// Per-step weight decay `γ`; step `i` is weighted by `γ^(i−1)`.
    pub gamma: f64,
    /// Feed the true state, rather than the predicted one, to the control
    /// encoder during the rollout.
    pub teacher_forcing: bool,
}

impl LossOptions {
    pub fn new(horizon: usize, gamma: f64) -> Self {
        Self {
            horizon,
            gamma,
            teacher_forcing: false,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::Contract("loss horizon must be at least 1".into()));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::Contract(format!("gamma must lie in (0, 1], got {}", self.gamma)));
        }
        Ok(())
    }
}

/// A model trained by minimizing a weighted multi-step prediction loss.
pub trait KStepTrainable {
    fn params(&self) -> Vec<&Tensor>;

    fn params_mut(&mut self) -> Vec<&mut Tensor>;

    /// Build the loss graph for batches of `batch` windows.
    fn build_loss(&self, batch: usize, options: &LossOptions) -> Result<LossGraph>;
}

/// Reusable differentiable loss for fixed batch size and horizon.
///
/// States of all `K+1` steps enter as one stacked leaf `[(K+1)·B, n]` so
/// that the encoder runs once over every target.
#[derive(Debug)]
pub struct LossGraph {
    graph: Graph,
    params: Vec<Var>,
    states: Var,
    controls: Vec<Var>,
    step_losses: Vec<Var>,
    loss: Var,
    batch: usize,
    state_dim: usize,
}

impl LossGraph {
    pub fn batch_size(&self) -> usize {
        self.batch
    }

    pub fn horizon(&self) -> usize {
        self.controls.len()
    }

    pub fn load_params(&mut self, params: &[&Tensor]) -> Result<()> {
        if params.len() != self.params.len() {
            return Err(Error::Contract(format!(
                "loss graph has {} parameters, got {}",
                self.params.len(),
                params.len()
            )));
        }
        for (&v, p) in self.params.iter().zip(params) {
            self.graph.set_value(v, (*p).clone())?;
        }
        Ok(())
    }

    pub fn set_batch(&mut self, batch: &StepBatch) -> Result<()> {
        let k = self.horizon();
        if batch.steps() < k {
            return Err(Error::Contract(format!(
                "horizon {k} exceeds the {} steps in the batch",
                batch.steps()
            )));
        }
        if batch.batch_size() != self.batch {
            return Err(Error::dim(
                "LossGraph::set_batch",
                format!("batch of {}, graph built for {}", batch.batch_size(), self.batch),
            ));
        }
        let parts: Vec<&Tensor> = batch.states[..=k].iter().collect();
        let stacked = Tensor::concat_rows(&parts)?;
        if stacked.cols() != self.state_dim {
            return Err(Error::dim("LossGraph::set_batch", "state width mismatch"));
        }
        self.graph.set_value(self.states, stacked)?;
        for (&v, u) in self.controls.iter().zip(&batch.controls) {
            self.graph.set_value(v, u.clone())?;
        }
        Ok(())
    }

    /// Evaluate the loss for the loaded parameters and batch.
    pub fn evaluate(&mut self) -> Result<f64> {
        self.graph.forward()?;
        self.graph.scalar(self.loss)
    }

    /// Unweighted per-step MSE after [`LossGraph::evaluate`].
    pub fn step_losses(&self) -> Result<Vec<f64>> {
        self.step_losses.iter().map(|&v| self.graph.scalar(v)).collect()
    }

    /// Gradients in parameter order after [`LossGraph::evaluate`].
    pub fn gradients(&self) -> Result<Vec<Tensor>> {
        Ok(self.graph.backward(self.loss)?.into_vec())
    }
}

/// Incrementally assembled loss graph, shared by every trainable model.
pub(crate) struct LossBuilder {
    pub graph: Graph,
    pub params: Vec<Var>,
    pub states: Var,
    pub controls: Vec<Var>,
    pub batch: usize,
    pub state_dim: usize,
    options: LossOptions,
    step_losses: Vec<Var>,
    total: Option<Var>,
}

impl LossBuilder {
    pub fn new(
        batch: usize,
        state_dim: usize,
        control_dim: usize,
        options: &LossOptions,
    ) -> Result<Self> {
        options.validate()?;
        if batch == 0 {
            return Err(Error::Contract("batch size must be positive".into()));
        }
        let mut graph = Graph::new();
        let k = options.horizon;
        let states = graph.input(Tensor::zeros((k + 1) * batch, state_dim))?;
        let controls = (0..k)
            .map(|_| graph.input(Tensor::zeros(batch, control_dim)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            graph,
            params: Vec::new(),
            states,
            controls,
            batch,
            state_dim,
            options: *options,
            step_losses: Vec::new(),
            total: None,
        })
    }

    /// Rows of step `i` in a stacked `[(K+1)·B, ·]` node.
    pub fn step_rows(&mut self, stacked: Var, i: usize) -> Result<Var> {
        self.graph.slice_rows(stacked, i * self.batch, (i + 1) * self.batch)
    }

    /// `(x − offset) / scale` as graph operations.
    pub fn normalize(&mut self, x: Var, norm: Option<&Normalizer>) -> Result<Var> {
        match norm {
            None => Ok(x),
            Some(n) => {
                let neg: Vec<f64> = n.offset.iter().map(|o| -o).collect();
                let inv: Vec<f64> = n.scale.iter().map(|s| 1.0 / s).collect();
                let neg = self.graph.input(Tensor::row(&neg))?;
                let inv = self.graph.input(Tensor::row(&inv))?;
                let shifted = self.graph.add_row(x, neg)?;
                self.graph.mul_row(shifted, inv)
            }
        }
    }

    /// Add `γ^i · MSE(prediction, target)` for step index `i` (zero-based).
    pub fn push_step(&mut self, prediction: Var, target: Var) -> Result<()> {
        let mse = self.graph.mse(prediction, target)?;
        let weight = self.options.gamma.powi(self.step_losses.len() as i32);
        let weighted = self.graph.scale(mse, weight);
        self.total = Some(match self.total {
            None => weighted,
            Some(t) => self.graph.add(t, weighted)?,
        });
        self.step_losses.push(mse);
        Ok(())
    }

    pub fn finish(self) -> Result<LossGraph> {
        let loss = self
            .total
            .ok_or_else(|| Error::Contract("loss has no steps".into()))?;
        if self.step_losses.len() != self.options.horizon {
            return Err(Error::Contract("loss steps do not match the horizon".into()));
        }
        Ok(LossGraph {
            graph: self.graph,
            params: self.params,
            states: self.states,
            controls: self.controls,
            step_losses: self.step_losses,
            loss,
            batch: self.batch,
            state_dim: self.state_dim,
        })
    }
}

impl KStepTrainable for KoopmanModel {
    fn params(&self) -> Vec<&Tensor> {
        KoopmanModel::params(self)
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        KoopmanModel::params_mut(self)
    }

    fn build_loss(&self, batch: usize, options: &LossOptions) -> Result<LossGraph> {
        let (n, m) = (self.state_dim, self.control_dim);
        let mut lb = LossBuilder::new(batch, n, m, options)?;
        let embed = self.embed_net.as_ref().map(|net| net.bind(&mut lb.graph)).transpose()?;
        let control = self.control_net.as_ref().map(|net| net.bind(&mut lb.graph)).transpose()?;
        let a = lb.graph.param(self.a.clone())?;
        let b = lb.graph.param(self.b.clone())?;
        lb.params.extend(embed.iter().flat_map(|e| e.vars()));
        lb.params.extend(control.iter().flat_map(|c| c.vars()));
        lb.params.extend([a, b]);

        // targets Z_i = [X_i, g_θ(X_i)] through the current encoder
        let states = lb.states;
        let targets = match &embed {
            Some(e) => {
                let xn = lb.normalize(states, self.state_norm.as_ref())?;
                let enc = e.forward(&mut lb.graph, xn)?;
                lb.graph.concat_cols(&[states, enc])?
            }
            None => states,
        };

        let teacher = options.teacher_forcing;
        let mut z = lb.step_rows(targets, 0)?;
        for i in 0..options.horizon {
            let u = lb.controls[i];
            let u_hat = match self.variant {
                Variant::Dkuc => u,
                Variant::Dkac | Variant::Dkn => {
                    let x_hat = if teacher {
                        lb.step_rows(states, i)?
                    } else {
                        lb.graph.slice_cols(z, 0, n)?
                    };
                    let xn = lb.normalize(x_hat, self.state_norm.as_ref())?;
                    let net = control.as_ref().expect("control net present");
                    if self.variant == Variant::Dkac {
                        let gain = net.forward(&mut lb.graph, xn)?;
                        lb.graph.mul(gain, u)?
                    } else {
                        let un = lb.normalize(u, self.control_norm.as_ref())?;
                        let input = lb.graph.concat_cols(&[xn, un])?;
                        net.forward(&mut lb.graph, input)?
                    }
                }
            };
            let az = lb.graph.matmul_t(z, false, a, true)?;
            let bu = lb.graph.matmul_t(u_hat, false, b, true)?;
            z = lb.graph.add(az, bu)?;
            let target = lb.step_rows(targets, i + 1)?;
            lb.push_step(z, target)?;
        }
        lb.finish()
    }
}

/// Weighted K-step loss of `model` on one batch.
pub fn kstep_loss<M: KStepTrainable>(
    model: &M,
    batch: &StepBatch,
    options: &LossOptions,
) -> Result<f64> {
    let mut graph = model.build_loss(batch.batch_size(), options)?;
    graph.set_batch(batch)?;
    graph.evaluate()
}

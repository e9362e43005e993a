use rand::Rng;

use crate::datagen::Normalizer;
use crate::diffcore::{Activation, Mlp, Tensor};
use crate::error::{Error, Result};
use crate::koopman::{KStepTrainable, LossBuilder, LossGraph, LossOptions};

/// Direct neural transition model `x' = net([x; u])`.
#[derive(Clone, Debug, PartialEq)]
pub struct KdnnModel {
    pub net: Mlp,
    pub state_dim: usize,
    pub control_dim: usize,
    pub state_norm: Option<Normalizer>,
    pub control_norm: Option<Normalizer>,
}

impl KdnnModel {
    pub fn new<R: Rng + ?Sized>(
        state_dim: usize,
        control_dim: usize,
        hidden: &[usize],
        activation: Activation,
        rng: &mut R,
    ) -> Result<Self> {
        let widths: Vec<usize> = std::iter::once(state_dim + control_dim)
            .chain(hidden.iter().copied())
            .chain(std::iter::once(state_dim))
            .collect();
        Self::from_net(Mlp::new(&widths, activation, rng)?, state_dim, control_dim)
    }

    pub fn from_net(net: Mlp, state_dim: usize, control_dim: usize) -> Result<Self> {
        if net.input_dim() != state_dim + control_dim || net.output_dim() != state_dim {
            return Err(Error::dim(
                "KdnnModel",
                format!(
                    "network maps {} → {}, expected {} → {state_dim}",
                    net.input_dim(),
                    net.output_dim(),
                    state_dim + control_dim
                ),
            ));
        }
        Ok(Self {
            net,
            state_dim,
            control_dim,
            state_norm: None,
            control_norm: None,
        })
    }

    fn input(&self, x: &Tensor, u: &Tensor) -> Result<Tensor> {
        let xn = self.state_norm.as_ref().map_or_else(|| x.clone(), |n| n.apply(x));
        let un = self.control_norm.as_ref().map_or_else(|| u.clone(), |n| n.apply(u));
        Tensor::concat_cols(&[&xn, &un])
    }

    /// One predicted transition for a batch.
    pub fn step_batch(&self, x: &Tensor, u: &Tensor) -> Result<Tensor> {
        if x.cols() != self.state_dim || u.cols() != self.control_dim || x.rows() != u.rows() {
            return Err(Error::dim("kdnn step", format!("x {:?}, u {:?}", x.shape(), u.shape())));
        }
        self.net.forward(&self.input(x, u)?)
    }

    /// Feed predictions back through the network for every control step.
    pub fn rollout_batch(&self, x0: &Tensor, controls: &[Tensor]) -> Result<Vec<Tensor>> {
        let mut x = x0.clone();
        let mut out = Vec::with_capacity(controls.len());
        for (step, u) in controls.iter().enumerate() {
            x = self.step_batch(&x, u)?;
            if !x.is_finite() {
                return Err(Error::RolloutDivergence { step: step + 1 });
            }
            out.push(x.clone());
        }
        Ok(out)
    }

    /// Single-trajectory rollout: `controls: [K, m]` → `[K, n]`.
    pub fn rollout(&self, x0: &[f64], controls: &Tensor) -> Result<Tensor> {
        let per_step: Vec<Tensor> = (0..controls.rows()).map(|k| Tensor::row(controls.row_slice(k))).collect();
        let steps = self.rollout_batch(&Tensor::row(x0), &per_step)?;
        let parts: Vec<&Tensor> = steps.iter().collect();
        Tensor::concat_rows(&parts)
    }
}

impl KStepTrainable for KdnnModel {
    fn params(&self) -> Vec<&Tensor> {
        self.net.params()
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        self.net.params_mut()
    }

    /// Same discounted objective as the Koopman models, in state space.
    fn build_loss(&self, batch: usize, options: &LossOptions) -> Result<LossGraph> {
        let mut lb = LossBuilder::new(batch, self.state_dim, self.control_dim, options)?;
        let vars = self.net.bind(&mut lb.graph)?;
        lb.params.extend(vars.vars());
        let states = lb.states;
        let mut x = lb.step_rows(states, 0)?;
        for i in 0..options.horizon {
            let u = lb.controls[i];
            let xn = lb.normalize(x, self.state_norm.as_ref())?;
            let un = lb.normalize(u, self.control_norm.as_ref())?;
            let input = lb.graph.concat_cols(&[xn, un])?;
            x = vars.forward(&mut lb.graph, input)?;
            let target = lb.step_rows(states, i + 1)?;
            lb.push_step(x, target)?;
        }
        lb.finish()
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::datagen::StepBatch;
    use crate::koopman::kstep_loss;

    #[test]
    fn zero_network_predicts_zeros() {
        let net = Mlp::zeros(&[3, 5, 2], Activation::Tanh).unwrap();
        let model = KdnnModel::from_net(net, 2, 1).unwrap();
        let controls = Tensor::matrix(4, 1, vec![1.0, -2.0, 3.0, 0.5]).unwrap();
        let out = model.rollout(&[0.7, -0.3], &controls).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.0));
        assert_eq!(out.dims(), (4, 2));
    }

    #[test]
    fn mismatched_network_rejected() {
        let net = Mlp::zeros(&[2, 5, 2], Activation::Tanh).unwrap();
        assert!(KdnnModel::from_net(net, 2, 1).is_err());
    }

    #[test]
    fn graph_loss_matches_eager_rollout() {
        let model = KdnnModel::new(2, 1, &[6], Activation::Tanh, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut t = |r, c| Tensor::matrix(r, c, (0..r * c).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        let batch = StepBatch {
            states: (0..4).map(|_| t(3, 2)).collect(),
            controls: (0..3).map(|_| t(3, 1)).collect(),
        };
        let loss = kstep_loss(&model, &batch, &LossOptions::new(3, 0.5)).unwrap();
        let preds = model.rollout_batch(&batch.states[0], &batch.controls).unwrap();
        let expected: f64 = preds
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let d = p.sub(&batch.states[i + 1]).unwrap();
                0.5f64.powi(i as i32) * d.data().iter().map(|v| v * v).sum::<f64>() / d.len() as f64
            })
            .sum();
        assert!((loss - expected).abs() < 1e-12);
    }
}

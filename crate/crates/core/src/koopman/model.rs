use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::datagen::Normalizer;
use crate::diffcore::{matmul_t, Activation, Mlp, Tensor};
use crate::error::{Error, Result};

/// How the control enters the lifted dynamics.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// `û = u`
    Dkuc,
    /// `û = g_φ(x) ⊙ u`
    Dkac,
    /// `û = g_φ([x; u])`
    Dkn,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::Dkuc => "dkuc",
            Variant::Dkac => "dkac",
            Variant::Dkn => "dkn",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "dkuc" => Some(Variant::Dkuc),
            "dkac" => Some(Variant::Dkac),
            "dkn" => Some(Variant::Dkn),
            _ => None,
        }
    }
}

/// Architecture of a [`KoopmanModel`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    pub variant: Variant,
    pub state_dim: usize,
    pub control_dim: usize,
    /// Width `d` of the learned part of the embedding.
    pub embed_dim: usize,
    /// Hidden widths shared by the embedding and control networks.
    pub hidden: Vec<usize>,
    pub activation: Activation,
}

/// Lifted linear model `z' = A z + B û` with `z = [x; g_θ(x)]`.
#[derive(Clone, Debug, PartialEq)]
pub struct KoopmanModel {
    pub variant: Variant,
    pub state_dim: usize,
    pub control_dim: usize,
    pub embed_dim: usize,
    /// `g_θ: n → d`; absent when `d = 0`.
    pub embed_net: Option<Mlp>,
    /// `g_φ`: absent for DKUC, `n → m` for DKAC, `n+m → m` for DKN.
    pub control_net: Option<Mlp>,
    /// `[(n+d), (n+d)]`
    pub a: Tensor,
    /// `[(n+d), m]`
    pub b: Tensor,
    /// Applied to the state before it enters either network.
    pub state_norm: Option<Normalizer>,
    /// Applied to the control before it enters the DKN control network.
    pub control_norm: Option<Normalizer>,
}

/// Multi-step prediction from one initial state.
#[derive(Clone, Debug, PartialEq)]
pub struct Rollout {
    /// `[K, n+d]` predicted lifted states `ẑ_1..ẑ_K`.
    pub lifted: Tensor,
    /// `[K, n]` predicted states `x̂_k = C ẑ_k`.
    pub states: Tensor,
    /// `[K, m]` encoded controls `û_0..û_{K-1}`.
    pub encoded_controls: Tensor,
}

impl KoopmanModel {
    /// Fresh model: networks drawn from `rng`, `A = I`, and `B` uniform in
    /// `±√(1/(n+d))`.
    pub fn new<R: Rng + ?Sized>(arch: &Architecture, rng: &mut R) -> Result<Self> {
        let (n, m, d) = (arch.state_dim, arch.control_dim, arch.embed_dim);
        if n == 0 || m == 0 {
            return Err(Error::dim("KoopmanModel::new", "state and control dims must be positive"));
        }
        let widths = |input: usize, output: usize| -> Vec<usize> {
            std::iter::once(input)
                .chain(arch.hidden.iter().copied())
                .chain(std::iter::once(output))
                .collect()
        };
        let embed_net = if d > 0 {
            Some(Mlp::new(&widths(n, d), arch.activation, rng)?)
        } else {
            None
        };
        let control_net = match arch.variant {
            Variant::Dkuc => None,
            Variant::Dkac => Some(Mlp::new(&widths(n, m), arch.activation, rng)?),
            Variant::Dkn => Some(Mlp::new(&widths(n + m, m), arch.activation, rng)?),
        };
        let lifted = n + d;
        let bound = (1.0 / lifted as f64).sqrt();
        let b = Tensor::matrix(
            lifted,
            m,
            (0..lifted * m).map(|_| rng.gen_range(-bound..bound)).collect(),
        )?;
        Ok(Self {
            variant: arch.variant,
            state_dim: n,
            control_dim: m,
            embed_dim: d,
            embed_net,
            control_net,
            a: Tensor::eye(lifted),
            b,
            state_norm: None,
            control_norm: None,
        })
    }

    pub fn lifted_dim(&self) -> usize {
        self.state_dim + self.embed_dim
    }

    /// Parameters in the fixed order embed net, control net, `A`, `B`.
    pub fn params(&self) -> Vec<&Tensor> {
        let mut out = Vec::new();
        if let Some(net) = &self.embed_net {
            out.extend(net.params());
        }
        if let Some(net) = &self.control_net {
            out.extend(net.params());
        }
        out.push(&self.a);
        out.push(&self.b);
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = Vec::new();
        if let Some(net) = &mut self.embed_net {
            out.extend(net.params_mut());
        }
        if let Some(net) = &mut self.control_net {
            out.extend(net.params_mut());
        }
        out.push(&mut self.a);
        out.push(&mut self.b);
        out
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    fn check_states(&self, x: &Tensor, context: &str) -> Result<()> {
        if x.rank() != 2 || x.cols() != self.state_dim {
            return Err(Error::dim(
                context,
                format!("states {:?}, expected width {}", x.shape(), self.state_dim),
            ));
        }
        Ok(())
    }

    fn normalized_states(&self, x: &Tensor) -> Tensor {
        match &self.state_norm {
            Some(norm) => norm.apply(x),
            None => x.clone(),
        }
    }

    /// `Z = [X, g_θ(X)]` for a batch `X: [B, n]`.
    pub fn embed_batch(&self, x: &Tensor) -> Result<Tensor> {
        self.check_states(x, "embed")?;
        match &self.embed_net {
            Some(net) => {
                let enc = net.forward(&self.normalized_states(x))?;
                Tensor::concat_cols(&[x, &enc])
            }
            None => Ok(x.clone()),
        }
    }

    pub fn embed(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.embed_batch(&Tensor::row(x))?.into_data())
    }

    /// `x = C z`: the first `n` entries, copied verbatim.
    pub fn recover_state(&self, z: &[f64]) -> Result<Vec<f64>> {
        if z.len() != self.lifted_dim() {
            return Err(Error::dim(
                "recover_state",
                format!("lifted state has {} entries, expected {}", z.len(), self.lifted_dim()),
            ));
        }
        Ok(z[..self.state_dim].to_vec())
    }

    /// DKAC per-dimension control gain `g_φ(x)` for a batch.
    pub fn control_gain_batch(&self, x: &Tensor) -> Result<Tensor> {
        self.check_states(x, "control_gain")?;
        match (self.variant, &self.control_net) {
            (Variant::Dkac, Some(net)) => net.forward(&self.normalized_states(x)),
            _ => Err(Error::UnsupportedVariant(format!(
                "{} has no state-dependent control gain",
                self.variant.name()
            ))),
        }
    }

    pub fn control_gain(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.control_gain_batch(&Tensor::row(x))?.into_data())
    }

    /// Encoded control `û` for a batch of `(x, u)` pairs.
    pub fn encode_control_batch(&self, x: &Tensor, u: &Tensor) -> Result<Tensor> {
        self.check_states(x, "encode_control")?;
        if u.rank() != 2 || u.cols() != self.control_dim || u.rows() != x.rows() {
            return Err(Error::dim(
                "encode_control",
                format!("controls {:?} for {} states of width {}", u.shape(), x.rows(), self.control_dim),
            ));
        }
        match self.variant {
            Variant::Dkuc => Ok(u.clone()),
            Variant::Dkac => {
                let gain = self.control_gain_batch(x)?;
                gain.zip_map(u, |g, v| g * v)
            }
            Variant::Dkn => {
                let net = self.control_net.as_ref().expect("DKN has a control net");
                let un = match &self.control_norm {
                    Some(norm) => norm.apply(u),
                    None => u.clone(),
                };
                let input = Tensor::concat_cols(&[&self.normalized_states(x), &un])?;
                net.forward(&input)
            }
        }
    }

    pub fn encode_control(&self, x: &[f64], u: &[f64]) -> Result<Vec<f64>> {
        Ok(self
            .encode_control_batch(&Tensor::row(x), &Tensor::row(u))?
            .into_data())
    }

    /// One lifted step `Z' = Z Aᵀ + Û Bᵀ` for a batch.
    pub fn step_lifted_batch(&self, z: &Tensor, u_hat: &Tensor) -> Result<Tensor> {
        let az = matmul_t(z, false, &self.a, true)?;
        let bu = matmul_t(u_hat, false, &self.b, true)?;
        az.add(&bu)
    }

    /// Lifted rollout from `z0` under a fixed encoded-control sequence
    /// `[K, m]`; returns `[K, n+d]`.
    pub fn rollout_lifted(&self, z0: &[f64], encoded: &Tensor) -> Result<Tensor> {
        if z0.len() != self.lifted_dim() {
            return Err(Error::dim("rollout_lifted", "initial lifted state has wrong length"));
        }
        let mut z = Tensor::row(z0);
        let mut out = Vec::with_capacity(encoded.rows() * self.lifted_dim());
        for k in 0..encoded.rows() {
            z = self.step_lifted_batch(&z, &Tensor::row(encoded.row_slice(k)))?;
            out.extend_from_slice(z.data());
        }
        Tensor::matrix(encoded.rows(), self.lifted_dim(), out)
    }

    /// K-step prediction from `x0` under `controls: [K, m]`. The control
    /// encoding at step `k` sees the predicted state `C ẑ_k`.
    pub fn rollout(&self, x0: &[f64], controls: &Tensor) -> Result<Rollout> {
        let k = controls.rows();
        if k == 0 {
            return Err(Error::Contract("rollout needs at least one control".into()));
        }
        let per_step: Vec<Tensor> = (0..k).map(|i| Tensor::row(controls.row_slice(i))).collect();
        let (lifted, encoded) = self.rollout_batch_full(&Tensor::row(x0), &per_step)?;
        let d = self.lifted_dim();
        let mut lifted_rows = Vec::with_capacity(k * d);
        let mut state_rows = Vec::with_capacity(k * self.state_dim);
        let mut enc_rows = Vec::with_capacity(k * self.control_dim);
        for (z, u) in lifted.iter().zip(&encoded) {
            lifted_rows.extend_from_slice(z.data());
            state_rows.extend_from_slice(&z.data()[..self.state_dim]);
            enc_rows.extend_from_slice(u.data());
        }
        Ok(Rollout {
            lifted: Tensor::matrix(k, d, lifted_rows)?,
            states: Tensor::matrix(k, self.state_dim, state_rows)?,
            encoded_controls: Tensor::matrix(k, self.control_dim, enc_rows)?,
        })
    }

    /// Batched rollout. `x0: [B, n]`, `controls[k]: [B, m]`. Returns the
    /// predicted lifted states and the encoded controls per step; fails with
    /// the step index when a prediction stops being finite.
    pub fn rollout_batch_full(
        &self,
        x0: &Tensor,
        controls: &[Tensor],
    ) -> Result<(Vec<Tensor>, Vec<Tensor>)> {
        let mut z = self.embed_batch(x0)?;
        let mut lifted = Vec::with_capacity(controls.len());
        let mut encoded = Vec::with_capacity(controls.len());
        for (step, u) in controls.iter().enumerate() {
            let x_hat = z.slice_cols(0, self.state_dim);
            let u_hat = self.encode_control_batch(&x_hat, u)?;
            z = self.step_lifted_batch(&z, &u_hat)?;
            if !z.is_finite() {
                return Err(Error::RolloutDivergence { step: step + 1 });
            }
            lifted.push(z.clone());
            encoded.push(u_hat);
        }
        Ok((lifted, encoded))
    }

    /// Predicted physical states per step for a batch.
    pub fn rollout_batch(&self, x0: &Tensor, controls: &[Tensor]) -> Result<Vec<Tensor>> {
        let (lifted, _) = self.rollout_batch_full(x0, controls)?;
        Ok(lifted
            .into_iter()
            .map(|z| z.slice_cols(0, self.state_dim))
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::diffcore::Linear;

    pub(crate) fn arch(variant: Variant, d: usize) -> Architecture {
        Architecture {
            variant,
            state_dim: 2,
            control_dim: 1,
            embed_dim: d,
            hidden: vec![8, 8],
            activation: Activation::Tanh,
        }
    }

    fn model(variant: Variant, seed: u64) -> KoopmanModel {
        KoopmanModel::new(&arch(variant, 4), &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
    }

    #[test]
    fn zero_encoder_embeds_state_then_zeros() {
        let mut m = model(Variant::Dkuc, 1);
        m.embed_net = Some(Mlp::zeros(&[2, 8, 8, 4], Activation::Tanh).unwrap());
        assert_eq!(m.embed(&[1.0, 2.0]).unwrap(), vec![1.0, 2.0, 0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn recovery_identity_is_exact() {
        let m = model(Variant::Dkn, 2);
        for x in [[0.3, -1.7], [1e6, -1e-9], [3.25, -2.5]] {
            let z = m.embed(&x).unwrap();
            assert_eq!(m.recover_state(&z).unwrap(), x.to_vec());
        }
        assert!(m.recover_state(&[1.0, 2.0]).is_err());
    }

    #[test]
    fn batch_and_single_embedding_agree() {
        let m = model(Variant::Dkac, 3);
        let xs = Tensor::matrix(3, 2, vec![0.1, 0.2, -1.0, 0.5, 2.0, -3.0]).unwrap();
        let zb = m.embed_batch(&xs).unwrap();
        for r in 0..3 {
            let z1 = m.embed(xs.row_slice(r)).unwrap();
            for (a, b) in z1.iter().zip(zb.row_slice(r)) {
                assert!((a - b).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn control_encodings() {
        let m = model(Variant::Dkuc, 4);
        assert_eq!(m.encode_control(&[0.5, 0.1], &[3.0]).unwrap(), vec![3.0]);

        let mut m = model(Variant::Dkac, 4);
        m.control_net = Some(Mlp::zeros(&[2, 8, 8, 1], Activation::Tanh).unwrap());
        assert_eq!(m.encode_control(&[0.5, 0.1], &[3.0]).unwrap(), vec![0.0]);

        // g_φ(x) = [2] via a bias-only output layer
        let mut net = Mlp::zeros(&[2, 8, 8, 1], Activation::Tanh).unwrap();
        net.layers_mut()[2].bias = Tensor::scalar(2.0);
        m.control_net = Some(net);
        assert_eq!(m.encode_control(&[0.5, 0.1], &[3.0]).unwrap(), vec![6.0]);
    }

    #[test]
    fn single_step_rollout_is_one_linear_update() {
        let m = model(Variant::Dkn, 5);
        let x0 = [0.4, -0.2];
        let u = Tensor::matrix(1, 1, vec![1.5]).unwrap();
        let r = m.rollout(&x0, &u).unwrap();
        let z0 = Tensor::row(&m.embed(&x0).unwrap());
        let uh = Tensor::row(&m.encode_control(&x0, &[1.5]).unwrap());
        let expected = m.step_lifted_batch(&z0, &uh).unwrap();
        assert!(r.lifted.max_abs_diff(&expected) < 1e-15);
        assert_eq!(r.states.row_slice(0), &r.lifted.row_slice(0)[..2]);
    }

    #[test]
    fn frozen_dynamics_hold_state() {
        let mut m = model(Variant::Dkac, 6);
        m.b = Tensor::zeros(6, 1);
        let controls = Tensor::matrix(20, 1, (0..20).map(|i| i as f64).collect()).unwrap();
        let r = m.rollout(&[0.7, -0.3], &controls).unwrap();
        for k in 0..20 {
            assert_eq!(r.states.row_slice(k), &[0.7, -0.3]);
        }
    }

    #[test]
    fn dkac_with_unit_gain_reproduces_dkuc() {
        let dkuc = model(Variant::Dkuc, 7);
        let mut dkac = dkuc.clone();
        dkac.variant = Variant::Dkac;
        let mut layers = Mlp::zeros(&[2, 8, 8, 1], Activation::Tanh).unwrap().layers().to_vec();
        layers[2] = Linear {
            weight: Tensor::zeros(8, 1),
            bias: Tensor::scalar(1.0),
        };
        dkac.control_net = Some(Mlp::from_layers(layers, Activation::Tanh).unwrap());
        let controls = Tensor::matrix(15, 1, (0..15).map(|i| (i as f64).sin()).collect()).unwrap();
        let a = dkuc.rollout(&[1.0, 0.5], &controls).unwrap();
        let b = dkac.rollout(&[1.0, 0.5], &controls).unwrap();
        assert!(a.lifted.max_abs_diff(&b.lifted) <= 1e-12);
    }

    #[test]
    fn divergence_reports_step() {
        let mut m = model(Variant::Dkuc, 8);
        m.a = Tensor::eye(6).scale(1e200);
        let controls = Tensor::zeros(5, 1);
        let err = m.rollout(&[1.0, 1.0], &controls).unwrap_err();
        assert!(matches!(err, Error::RolloutDivergence { step: 2 }), "{err}");
    }
}

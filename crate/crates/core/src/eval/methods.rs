use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::baselines::{fit_krbf, KdnnModel, KrbfModel, DEFAULT_CENTERS};
use crate::datagen::{Dataset, Normalizer};
use crate::diffcore::{Activation, Tensor};
use crate::dynamics::{Dynamics, Environment};
use crate::error::{Error, Result};
use crate::koopman::{fit, Architecture, KoopmanModel, TrainConfig, TrainReport, Variant};
use crate::modelfile::SavedModel;
use crate::seed::derive_seed;

/// Every learnable method the suites know how to train.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Dkuc,
    Dkac,
    Dkn,
    Krbf,
    Kdnn,
}

impl Method {
    pub const ALL: [Method; 5] = [Method::Dkuc, Method::Dkac, Method::Dkn, Method::Krbf, Method::Kdnn];

    pub fn name(self) -> &'static str {
        match self {
            Method::Dkuc => "dkuc",
            Method::Dkac => "dkac",
            Method::Dkn => "dkn",
            Method::Krbf => "krbf",
            Method::Kdnn => "kdnn",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown method `{s}` (expected dkuc, dkac, dkn, krbf or kdnn)")))
    }

    pub fn variant(self) -> Option<Variant> {
        match self {
            Method::Dkuc => Some(Variant::Dkuc),
            Method::Dkac => Some(Variant::Dkac),
            Method::Dkn => Some(Variant::Dkn),
            Method::Krbf | Method::Kdnn => None,
        }
    }

    /// Whether the method is trained by gradient descent.
    pub fn is_neural(self) -> bool {
        self != Method::Krbf
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Model size and optimisation settings shared by all methods; each method
/// reads the fields that apply to it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MethodConfig {
    /// Learned embedding width `d`.
    pub embed_dim: usize,
    /// Number of RBF centers `c`.
    pub centers: usize,
    pub hidden: Vec<usize>,
    pub activation: Activation,
    /// Standardize network inputs with the dataset statistics and the
    /// control bounds.
    pub normalize: bool,
    /// Diagonal value of the initial Koopman matrix `A`.
    pub a_init: f64,
    pub train: TrainConfig,
}

impl Default for MethodConfig {
    fn default() -> Self {
        Self {
            embed_dim: 20,
            centers: DEFAULT_CENTERS,
            hidden: vec![128; 3],
            activation: Activation::Tanh,
            normalize: true,
            a_init: 1.0,
            train: TrainConfig::default(),
        }
    }
}

impl MethodConfig {
    /// Width-64 networks trained for 100 epochs: the scale the bundled
    /// experiment suites run at on a single CPU core.
    pub fn desk() -> Self {
        Self {
            hidden: vec![64; 3],
            train: TrainConfig {
                epochs: 100,
                ..TrainConfig::default()
            },
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden.contains(&0) {
            return Err(Error::Config("hidden layer widths must be positive".into()));
        }
        if self.centers == 0 {
            return Err(Error::Config("centers must be positive".into()));
        }
        if !self.a_init.is_finite() {
            return Err(Error::Config("a_init must be finite".into()));
        }
        let t = &self.train;
        if t.epochs == 0 || t.batch_size == 0 || t.horizon == 0 {
            return Err(Error::Config("epochs, batch_size and horizon must be positive".into()));
        }
        if !(t.learning_rate > 0.0 && t.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning_rate must be positive, got {}", t.learning_rate)));
        }
        if !(t.gamma > 0.0 && t.gamma <= 1.0) {
            return Err(Error::Config(format!("gamma must lie in (0, 1], got {}", t.gamma)));
        }
        if !(0.0..1.0).contains(&t.validation_fraction) {
            return Err(Error::Config("validation_fraction must lie in [0, 1)".into()));
        }
        if !(t.lr_decay > 0.0 && t.lr_decay <= 1.0) {
            return Err(Error::Config("lr_decay must lie in (0, 1]".into()));
        }
        Ok(())
    }
}

/// A fitted model with its training history (absent for KRBF).
#[derive(Clone, Debug)]
pub struct TrainedModel {
    pub method: Method,
    pub model: SavedModel,
    pub report: Option<TrainReport>,
}

/// Fit `method` on `dataset`. Network initialisation draws from
/// `derive_seed(seed, "init", 0)`; minibatch order and the validation split
/// follow `seed` through [`fit`].
pub fn train_method(
    method: Method,
    env: &Environment,
    dataset: &Dataset,
    config: &MethodConfig,
    seed: u64,
) -> Result<TrainedModel> {
    config.validate()?;
    if dataset.state_dim != env.state_dim() || dataset.control_dim != env.control_dim() {
        return Err(Error::dim("train_method", "dataset does not match the environment"));
    }
    let (n, m) = (dataset.state_dim, dataset.control_dim);
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "init", 0));
    let train = TrainConfig {
        seed,
        ..config.train.clone()
    };
    let state_norm = config.normalize.then(|| Normalizer::fit(dataset));
    let control_norm = config
        .normalize
        .then(|| Normalizer::for_bounds(&env.spec().control_bounds));
    match method {
        Method::Dkuc | Method::Dkac | Method::Dkn => {
            let arch = Architecture {
                variant: method.variant().expect("deep variant"),
                state_dim: n,
                control_dim: m,
                embed_dim: config.embed_dim,
                hidden: config.hidden.clone(),
                activation: config.activation,
            };
            let mut model = KoopmanModel::new(&arch, &mut rng)?;
            model.a = Tensor::eye(model.lifted_dim()).scale(config.a_init);
            model.state_norm = state_norm;
            model.control_norm = control_norm;
            let report = fit(&mut model, dataset, &train)?;
            Ok(TrainedModel {
                method,
                model: SavedModel::Koopman(model),
                report: Some(report),
            })
        }
        Method::Kdnn => {
            let mut model = KdnnModel::new(n, m, &config.hidden, config.activation, &mut rng)?;
            model.state_norm = state_norm;
            model.control_norm = control_norm;
            let report = fit(&mut model, dataset, &train)?;
            Ok(TrainedModel {
                method,
                model: SavedModel::Kdnn(model),
                report: Some(report),
            })
        }
        Method::Krbf => Ok(TrainedModel {
            method,
            model: SavedModel::Krbf(fit_krbf(dataset, config.centers, None, seed)?),
            report: None,
        }),
    }
}

/// Anything that maps an initial state batch and a control sequence to
/// predicted physical states.
pub trait Predictor {
    fn state_dim(&self) -> usize;

    /// `x0: [B, n]`, `controls`: K tensors `[B, m]` → K tensors `[B, n]`
    /// holding the states after each control.
    fn predict(&self, x0: &Tensor, controls: &[Tensor]) -> Result<Vec<Tensor>>;
}

impl Predictor for KoopmanModel {
    fn state_dim(&self) -> usize {
        self.state_dim
    }

    fn predict(&self, x0: &Tensor, controls: &[Tensor]) -> Result<Vec<Tensor>> {
        self.rollout_batch(x0, controls)
    }
}

impl Predictor for KrbfModel {
    fn state_dim(&self) -> usize {
        KrbfModel::state_dim(self)
    }

    fn predict(&self, x0: &Tensor, controls: &[Tensor]) -> Result<Vec<Tensor>> {
        self.rollout_batch(x0, controls)
    }
}

impl Predictor for KdnnModel {
    fn state_dim(&self) -> usize {
        self.state_dim
    }

    fn predict(&self, x0: &Tensor, controls: &[Tensor]) -> Result<Vec<Tensor>> {
        self.rollout_batch(x0, controls)
    }
}

impl Predictor for SavedModel {
    fn state_dim(&self) -> usize {
        SavedModel::state_dim(self)
    }

    fn predict(&self, x0: &Tensor, controls: &[Tensor]) -> Result<Vec<Tensor>> {
        match self {
            SavedModel::Koopman(m) => m.predict(x0, controls),
            SavedModel::Krbf(m) => m.predict(x0, controls),
            SavedModel::Kdnn(m) => m.predict(x0, controls),
        }
    }
}

/// The true environment used as a predictor; its error against data drawn
/// from the same environment is zero.
#[derive(Clone, Debug)]
pub struct Oracle(pub Environment);

impl Predictor for Oracle {
    fn state_dim(&self) -> usize {
        self.0.state_dim()
    }

    fn predict(&self, x0: &Tensor, controls: &[Tensor]) -> Result<Vec<Tensor>> {
        let mut x = x0.clone();
        let mut out = Vec::with_capacity(controls.len());
        for (step, u) in controls.iter().enumerate() {
            let mut next = Tensor::zeros(x.rows(), x.cols());
            for r in 0..x.rows() {
                let s = self.0.step(x.row_slice(r), u.row_slice(r)).map_err(|e| match e {
                    Error::Integration { .. } => Error::RolloutDivergence { step: step + 1 },
                    other => other,
                })?;
                next.row_slice_mut(r).copy_from_slice(&s);
            }
            out.push(next.clone());
            x = next;
        }
        Ok(out)
    }
}

use std::collections::HashMap;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::datagen::{split, Dataset};
use crate::diffcore::{AdamConfig, AdamState};
use crate::error::{Error, Result};
use crate::seed::derive_seed;

use super::loss::{KStepTrainable, LossGraph, LossOptions};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Prediction horizon `K` of the loss.
    pub horizon: usize,
    pub gamma: f64,
    pub teacher_forcing: bool,
    /// Fraction of trajectories held out for the validation curve.
    pub validation_fraction: f64,
    /// Multiplicative learning-rate factor applied after every epoch.
    pub lr_decay: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            batch_size: 256,
            learning_rate: 1e-3,
            horizon: 15,
            gamma: 0.8,
            teacher_forcing: false,
            validation_fraction: 0.1,
            lr_decay: 1.0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn loss_options(&self) -> LossOptions {
        LossOptions {
            horizon: self.horizon,
            gamma: self.gamma,
            teacher_forcing: self.teacher_forcing,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub validation_loss: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub history: Vec<EpochRecord>,
    pub gradient_steps: usize,
    pub seconds: f64,
}

impl TrainReport {
    pub fn final_train_loss(&self) -> f64 {
        self.history.last().map_or(f64::NAN, |r| r.train_loss)
    }
}

/// Graphs keyed by batch size; the trailing partial batch of an epoch gets
/// its own graph.
struct GraphCache {
    options: LossOptions,
    graphs: HashMap<usize, LossGraph>,
}

impl GraphCache {
    fn get<M: KStepTrainable>(&mut self, model: &M, batch: usize) -> Result<&mut LossGraph> {
        if !self.graphs.contains_key(&batch) {
            let g = model.build_loss(batch, &self.options)?;
            self.graphs.insert(batch, g);
        }
        Ok(self.graphs.get_mut(&batch).expect("inserted above"))
    }
}

/// Mean loss over `data`, evaluated in chunks of at most `chunk` windows.
fn dataset_loss_cached<M: KStepTrainable>(
    model: &M,
    data: &Dataset,
    cache: &mut GraphCache,
    chunk: usize,
) -> Result<f64> {
    let indices: Vec<usize> = (0..data.len()).collect();
    let params = model.params();
    let mut total = 0.0;
    for part in indices.chunks(chunk.max(1)) {
        let batch = data.step_batch(part, cache.options.horizon)?;
        let graph = cache.get(model, part.len())?;
        graph.load_params(&params)?;
        graph.set_batch(&batch)?;
        total += graph.evaluate()? * part.len() as f64;
    }
    Ok(total / data.len() as f64)
}

/// Minimize the weighted K-step loss with Adam over shuffled minibatches of
/// trajectory windows. Deterministic for a fixed `config.seed`.
pub fn fit<M: KStepTrainable>(model: &mut M, dataset: &Dataset, config: &TrainConfig) -> Result<TrainReport> {
    let start = Instant::now();
    if dataset.is_empty() {
        return Err(Error::Contract("cannot train on an empty dataset".into()));
    }
    if dataset.horizon < config.horizon {
        return Err(Error::Contract(format!(
            "loss horizon {} exceeds dataset horizon {}",
            config.horizon, dataset.horizon
        )));
    }
    if config.batch_size == 0 {
        return Err(Error::Config("batch_size must be positive".into()));
    }
    let (train_set, val_set) = if config.validation_fraction > 0.0 && dataset.len() >= 2 {
        let (tr, va) = split(dataset, config.validation_fraction, derive_seed(config.seed, "validation", 0))?;
        if tr.is_empty() {
            (dataset.clone(), None)
        } else {
            (tr, (!va.is_empty()).then_some(va))
        }
    } else {
        (dataset.clone(), None)
    };

    let options = config.loss_options();
    let mut cache = GraphCache {
        options,
        graphs: HashMap::new(),
    };
    let adam_config = AdamConfig {
        lr: config.learning_rate,
        ..AdamConfig::default()
    };
    let mut adam = AdamState::new(adam_config, model.params());
    let mut history = Vec::with_capacity(config.epochs);
    let mut steps = 0;
    let mut order: Vec<usize> = (0..train_set.len()).collect();

    for epoch in 0..config.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, "shuffle", epoch as u64));
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for part in order.chunks(config.batch_size) {
            let batch = train_set.step_batch(part, config.horizon)?;
            let graph = cache.get(model, part.len())?;
            graph.load_params(&model.params())?;
            graph.set_batch(&batch)?;
            let loss = graph.evaluate()?;
            if !loss.is_finite() {
                return Err(Error::TrainingDivergence { epoch, loss });
            }
            let grads = graph.gradients()?;
            adam.step(&mut model.params_mut(), &grads).map_err(|e| match e {
                Error::Optimizer { .. } => Error::TrainingDivergence { epoch, loss },
                other => other,
            })?;
            total += loss * part.len() as f64;
            steps += 1;
        }
        let validation_loss = match &val_set {
            Some(v) => Some(dataset_loss_cached(model, v, &mut cache, config.batch_size)?),
            None => None,
        };
        history.push(EpochRecord {
            epoch,
            train_loss: total / train_set.len() as f64,
            validation_loss,
        });
        adam.config.lr *= config.lr_decay;
    }
    Ok(TrainReport {
        history,
        gradient_steps: steps,
        seconds: start.elapsed().as_secs_f64(),
    })
}

#[cfg(test)]
mod tests {
    use rand::Rng;

    use super::*;
    use crate::datagen::Trajectory;
    use crate::diffcore::{Activation, Tensor};
    use crate::koopman::{Architecture, KoopmanModel, Variant};

    /// Trajectories of `x' = A₀x + B₀u` with random initial states and
    /// controls.
    pub(crate) fn linear_dataset(a0: &Tensor, b0: &Tensor, n_traj: usize, horizon: usize, seed: u64) -> Dataset {
        let (n, m) = b0.dims();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let trajectories = (0..n_traj)
            .map(|_| {
                let mut states: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let controls: Vec<f64> = (0..horizon * m).map(|_| rng.gen_range(-1.0..1.0)).collect();
                for t in 0..horizon {
                    let x = Tensor::column(&states[t * n..(t + 1) * n]);
                    let u = Tensor::column(&controls[t * m..(t + 1) * m]);
                    let next = a0.matmul(&x).unwrap().add(&b0.matmul(&u).unwrap()).unwrap();
                    states.extend_from_slice(next.data());
                }
                Trajectory {
                    states: Tensor::matrix(horizon + 1, n, states).unwrap(),
                    controls: Tensor::matrix(horizon, m, controls).unwrap(),
                }
            })
            .collect();
        Dataset {
            env: "linear".into(),
            state_dim: n,
            control_dim: m,
            dt: 1.0,
            horizon,
            seed,
            policy: "uniform_random".into(),
            trajectories,
        }
    }

    fn arch(variant: Variant, d: usize) -> Architecture {
        Architecture {
            variant,
            state_dim: 2,
            control_dim: 1,
            embed_dim: d,
            hidden: vec![8],
            activation: Activation::Tanh,
        }
    }

    #[test]
    fn linear_system_is_identified() {
        let a0 = Tensor::from_rows(&[vec![0.9, 0.2], vec![-0.1, 0.8]]).unwrap();
        let b0 = Tensor::column(&[0.5, -0.3]);
        let data = linear_dataset(&a0, &b0, 64, 4, 1);
        let mut model = KoopmanModel::new(&arch(Variant::Dkuc, 0), &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        let config = TrainConfig {
            epochs: 1500,
            batch_size: 64,
            learning_rate: 1e-2,
            horizon: 4,
            gamma: 0.8,
            validation_fraction: 0.0,
            lr_decay: 0.997,
            ..TrainConfig::default()
        };
        fit(&mut model, &data, &config).unwrap();
        assert!(model.a.max_abs_diff(&a0) < 1e-4, "A = {:?}", model.a);
        assert!(model.b.max_abs_diff(&b0) < 1e-4, "B = {:?}", model.b);
    }

    #[test]
    fn same_seed_same_parameters() {
        let a0 = Tensor::from_rows(&[vec![0.95, 0.1], vec![0.0, 0.9]]).unwrap();
        let b0 = Tensor::column(&[0.0, 0.4]);
        let data = linear_dataset(&a0, &b0, 20, 3, 3);
        let config = TrainConfig {
            epochs: 3,
            batch_size: 6,
            horizon: 3,
            seed: 9,
            ..TrainConfig::default()
        };
        let run = || {
            let mut m = KoopmanModel::new(&arch(Variant::Dkac, 2), &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
            let report = fit(&mut m, &data, &config).unwrap();
            (m, report.history)
        };
        let (m1, h1) = run();
        let (m2, h2) = run();
        assert_eq!(m1, m2);
        assert_eq!(h1, h2);
        assert_eq!(h1.len(), 3);
        assert!(h1.iter().all(|r| r.validation_loss.is_some()));
    }

    #[test]
    fn horizon_beyond_data_is_rejected() {
        let a0 = Tensor::eye(2);
        let b0 = Tensor::column(&[1.0, 0.0]);
        let data = linear_dataset(&a0, &b0, 4, 3, 5);
        let mut m = KoopmanModel::new(&arch(Variant::Dkuc, 1), &mut ChaCha8Rng::seed_from_u64(6)).unwrap();
        let config = TrainConfig {
            horizon: 4,
            ..TrainConfig::default()
        };
        assert!(matches!(fit(&mut m, &data, &config), Err(Error::Contract(_))));
    }

    #[test]
    fn nan_loss_reports_epoch() {
        let a0 = Tensor::eye(2);
        let b0 = Tensor::column(&[1.0, 0.0]);
        let data = linear_dataset(&a0, &b0, 4, 2, 7);
        let mut m = KoopmanModel::new(&arch(Variant::Dkuc, 1), &mut ChaCha8Rng::seed_from_u64(8)).unwrap();
        m.a.data_mut()[0] = f64::NAN;
        let config = TrainConfig {
            horizon: 2,
            epochs: 2,
            ..TrainConfig::default()
        };
        assert!(matches!(
            fit(&mut m, &data, &config),
            Err(Error::TrainingDivergence { epoch: 0, .. })
        ));
    }
}

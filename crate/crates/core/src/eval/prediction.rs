use std::fmt::Write as _;

use serde::Serialize;

use super::methods::{train_method, Method, MethodConfig, Predictor};
use super::parallel::{parallel_map, worker_count};
use crate::datagen::Dataset;
use crate::diffcore::Tensor;
use crate::dynamics::Environment;
use crate::error::{Error, Result};

/// Per-trajectory error substituted for non-finite or larger values.
pub const ERROR_CAP: f64 = 1e6;

/// Errors of one trained model over the test set.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SeedErrors {
    pub seed: u64,
    /// Per step, mean over trajectories of the state MSE.
    pub mean: Vec<f64>,
    /// Per step, largest per-trajectory state MSE.
    pub max: Vec<f64>,
    /// Trajectories whose rollout diverged; their errors are [`ERROR_CAP`].
    pub flagged: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MethodErrors {
    pub method: String,
    pub seeds: Vec<SeedErrors>,
}

fn mean_std(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

impl MethodErrors {
    /// Mean and population standard deviation over seeds of the mean error
    /// at `step` (1-based).
    pub fn at_step(&self, step: usize) -> (f64, f64) {
        mean_std(self.seeds.iter().map(|s| s.mean[step - 1]))
    }

    fn max_at_step(&self, step: usize) -> f64 {
        mean_std(self.seeds.iter().map(|s| s.max[step - 1])).0
    }

    /// The error at `step` is not below the one-step error for every seed.
    pub fn compounds(&self, step: usize) -> bool {
        self.seeds.iter().all(|s| s.mean[0] <= s.mean[step - 1])
    }

    pub fn flagged_count(&self) -> usize {
        self.seeds.iter().map(|s| s.flagged.len()).sum()
    }
}

/// Per-step prediction errors of several methods on one test set.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PredictionReport {
    pub env: String,
    pub horizon: usize,
    pub trajectories: usize,
    pub methods: Vec<MethodErrors>,
}

impl PredictionReport {
    pub fn method(&self, name: &str) -> Option<&MethodErrors> {
        self.methods.iter().find(|m| m.method == name)
    }

    /// `method,step,mean_err,max_err,std`, averaged over seeds.
    pub fn prediction_csv(&self) -> String {
        let mut out = String::from("method,step,mean_err,max_err,std\n");
        for m in &self.methods {
            for step in 1..=self.horizon {
                let (mean, std) = m.at_step(step);
                writeln!(out, "{},{step},{mean:e},{:e},{std:e}", m.method, m.max_at_step(step)).unwrap();
            }
        }
        out
    }

    /// Methods whose one-step error exceeds their error at `step`.
    pub fn non_compounding(&self, step: usize) -> Vec<String> {
        self.methods
            .iter()
            .filter(|m| !m.compounds(step))
            .map(|m| m.method.clone())
            .collect()
    }
}

/// `method,env,err15_mean,err15_std` rows for the error at `step`.
pub fn table1_csv(reports: &[PredictionReport], step: usize) -> String {
    let mut out = String::from("method,env,err15_mean,err15_std\n");
    for r in reports {
        for m in &r.methods {
            let (mean, std) = m.at_step(step);
            writeln!(out, "{},{},{mean:e},{std:e}", m.method, r.env).unwrap();
        }
    }
    out
}

fn clamp_error(e: f64) -> f64 {
    if e.is_finite() {
        e.min(ERROR_CAP)
    } else {
        ERROR_CAP
    }
}

/// MSE over the physical coordinates of each trajectory at each step:
/// `errors[trajectory][step]`, plus the indices of diverged trajectories.
///
/// A rollout that fails or leaves the finite range marks its trajectory as
/// diverged and caps its errors instead of dropping it.
pub fn trajectory_errors(
    predictor: &dyn Predictor,
    test: &Dataset,
    horizon: usize,
) -> Result<(Vec<Vec<f64>>, Vec<usize>)> {
    if test.horizon < horizon {
        return Err(Error::Contract(format!(
            "test trajectories have {} steps, {horizon} requested",
            test.horizon
        )));
    }
    if predictor.state_dim() != test.state_dim {
        return Err(Error::dim("prediction_benchmark", "predictor and test set disagree on n"));
    }
    let n = test.state_dim;
    let indices: Vec<usize> = (0..test.len()).collect();
    let batch = test.step_batch(&indices, horizon)?;
    let mut errors = vec![vec![0.0; horizon]; test.len()];
    let mut flagged = Vec::new();
    let score = |traj: usize, row: usize, preds: &[Tensor], errors: &mut Vec<Vec<f64>>| -> bool {
        let mut ok = true;
        for (k, p) in preds.iter().enumerate() {
            let truth = batch.states[k + 1].row_slice(traj);
            let mse = p
                .row_slice(row)
                .iter()
                .zip(truth)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                / n as f64;
            ok &= mse.is_finite();
            errors[traj][k] = clamp_error(mse);
        }
        ok
    };
    match predictor.predict(&batch.states[0], &batch.controls) {
        Ok(preds) => {
            for t in 0..test.len() {
                if !score(t, t, &preds, &mut errors) {
                    flagged.push(t);
                }
            }
        }
        Err(Error::RolloutDivergence { .. }) => {
            for t in 0..test.len() {
                let x0 = Tensor::row(batch.states[0].row_slice(t));
                let controls: Vec<Tensor> = batch.controls.iter().map(|u| Tensor::row(u.row_slice(t))).collect();
                match predictor.predict(&x0, &controls) {
                    Ok(preds) => {
                        if !score(t, 0, &preds, &mut errors) {
                            flagged.push(t);
                        }
                    }
                    Err(Error::RolloutDivergence { .. }) => {
                        errors[t].iter_mut().for_each(|e| *e = ERROR_CAP);
                        flagged.push(t);
                    }
                    Err(e) => return Err(e),
                }
            }
        }
        Err(e) => return Err(e),
    }
    Ok((errors, flagged))
}

fn seed_errors(predictor: &dyn Predictor, seed: u64, test: &Dataset, horizon: usize) -> Result<SeedErrors> {
    let (errors, flagged) = trajectory_errors(predictor, test, horizon)?;
    let count = errors.len().max(1) as f64;
    let mean = (0..horizon)
        .map(|k| errors.iter().map(|e| e[k]).sum::<f64>() / count)
        .collect();
    let max = (0..horizon)
        .map(|k| errors.iter().map(|e| e[k]).fold(0.0, f64::max))
        .collect();
    Ok(SeedErrors {
        seed,
        mean,
        max,
        flagged,
    })
}

/// Score trained models on `test`. Each entry is `(method, seed, model)`;
/// entries sharing a method name are grouped, in order of first appearance.
pub fn prediction_benchmark(
    env: &str,
    entries: &[(&str, u64, &(dyn Predictor + Sync))],
    test: &Dataset,
    horizon: usize,
) -> Result<PredictionReport> {
    if horizon == 0 {
        return Err(Error::Contract("prediction horizon must be positive".into()));
    }
    let scored = parallel_map(entries, worker_count(), |(_, seed, p)| seed_errors(*p, *seed, test, horizon));
    let mut methods: Vec<MethodErrors> = Vec::new();
    for ((name, _, _), result) in entries.iter().zip(scored) {
        let errors = result?;
        match methods.iter_mut().find(|m| m.method == *name) {
            Some(m) => m.seeds.push(errors),
            None => methods.push(MethodErrors {
                method: name.to_string(),
                seeds: vec![errors],
            }),
        }
    }
    Ok(PredictionReport {
        env: env.to_string(),
        horizon,
        trajectories: test.len(),
        methods,
    })
}

/// How many epochs each dataset size trains for.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum StepBudget {
    /// The configured epoch count for every size.
    FixedEpochs,
    /// Epochs scaled so every size takes about as many gradient steps as
    /// the configured epoch count takes at `reference_size` trajectories.
    EqualSteps { reference_size: usize },
}

impl StepBudget {
    pub fn epochs_for(&self, size: usize, config: &MethodConfig) -> usize {
        let t = &config.train;
        match *self {
            StepBudget::FixedEpochs => t.epochs,
            StepBudget::EqualSteps { reference_size } => {
                let batches = |s: usize| {
                    let held = (t.validation_fraction * s as f64).round() as usize;
                    (s.saturating_sub(held).max(1)).div_ceil(t.batch_size) as f64
                };
                let steps = t.epochs as f64 * batches(reference_size);
                ((steps / batches(size)).round() as usize).max(1)
            }
        }
    }
}

/// Step error of one method at one training-set size.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EfficiencyPoint {
    pub size: usize,
    pub epochs: usize,
    /// Mean test error at the scored step, one value per seed.
    pub errors: Vec<f64>,
    pub gradient_steps: Vec<usize>,
    pub log10_mean: f64,
    pub log10_std: f64,
}

impl EfficiencyPoint {
    pub fn mean_error(&self) -> f64 {
        self.errors.iter().sum::<f64>() / self.errors.len() as f64
    }
}

/// Train `method` on the first `size` trajectories of `data` for every size
/// and seed, and score each model at `step` on `test`.
#[allow(clippy::too_many_arguments)]
pub fn sample_efficiency(
    method: Method,
    env: &Environment,
    data: &Dataset,
    sizes: &[usize],
    seeds: &[u64],
    config: &MethodConfig,
    budget: StepBudget,
    test: &Dataset,
    step: usize,
) -> Result<Vec<EfficiencyPoint>> {
    if let Some(&s) = sizes.iter().find(|&&s| s == 0 || s > data.len()) {
        return Err(Error::Contract(format!(
            "size {s} outside 1..={} available trajectories",
            data.len()
        )));
    }
    if seeds.is_empty() {
        return Err(Error::Contract("at least one seed is required".into()));
    }
    let jobs: Vec<(usize, u64)> = sizes.iter().flat_map(|&s| seeds.iter().map(move |&seed| (s, seed))).collect();
    let results = parallel_map(&jobs, worker_count(), |&(size, seed)| -> Result<(f64, usize)> {
        let mut cfg = config.clone();
        cfg.train.epochs = budget.epochs_for(size, config);
        let trained = train_method(method, env, &data.truncated(size), &cfg, seed)?;
        let errors = seed_errors(&trained.model, seed, test, step)?;
        let steps = trained.report.map_or(0, |r| r.gradient_steps);
        Ok((errors.mean[step - 1], steps))
    });
    let mut results = results.into_iter();
    let mut points = Vec::with_capacity(sizes.len());
    for &size in sizes {
        let mut errors = Vec::with_capacity(seeds.len());
        let mut gradient_steps = Vec::with_capacity(seeds.len());
        for _ in seeds {
            let (e, s) = results.next().expect("one result per job")?;
            errors.push(e);
            gradient_steps.push(s);
        }
        let (log10_mean, log10_std) = mean_std(errors.iter().map(|e| e.log10()));
        points.push(EfficiencyPoint {
            size,
            epochs: budget.epochs_for(size, config),
            errors,
            gradient_steps,
            log10_mean,
            log10_std,
        });
    }
    Ok(points)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::collect;
    use crate::eval::Oracle;

    struct Exploding;

    impl Predictor for Exploding {
        fn state_dim(&self) -> usize {
            2
        }

        fn predict(&self, x0: &Tensor, controls: &[Tensor]) -> Result<Vec<Tensor>> {
            if x0.rows() > 1 || x0.get(0, 0) > 0.0 {
                return Err(Error::RolloutDivergence { step: 2 });
            }
            Ok(controls.iter().map(|_| x0.clone()).collect())
        }
    }

    #[test]
    fn oracle_scores_zero_everywhere() {
        let env = Environment::by_name("damping_pendulum").unwrap();
        let test = collect(&env, 6, 30, 4).unwrap();
        let oracle = Oracle(env);
        let report = prediction_benchmark("damping_pendulum", &[("oracle", 0, &oracle)], &test, 30).unwrap();
        let m = report.method("oracle").unwrap();
        assert!(m.seeds[0].mean.iter().chain(&m.seeds[0].max).all(|&e| e == 0.0));
        assert_eq!(report.prediction_csv().lines().count(), 31);
    }

    #[test]
    fn diverging_trajectories_are_capped_and_flagged() {
        let env = Environment::by_name("damping_pendulum").unwrap();
        let test = collect(&env, 8, 5, 2).unwrap();
        let (errors, flagged) = trajectory_errors(&Exploding, &test, 5).unwrap();
        let positive: Vec<usize> = (0..8).filter(|&t| test.trajectories[t].states.get(0, 0) > 0.0).collect();
        assert_eq!(flagged, positive);
        for t in 0..8 {
            assert_eq!(errors[t].iter().all(|&e| e == ERROR_CAP), positive.contains(&t));
        }
    }

    #[test]
    fn seeds_are_aggregated_per_method() {
        let env = Environment::by_name("pendulum").unwrap();
        let test = collect(&env, 4, 3, 1).unwrap();
        let oracle = Oracle(env);
        let report = prediction_benchmark(
            "pendulum",
            &[("a", 0, &oracle), ("b", 0, &oracle), ("a", 1, &oracle)],
            &test,
            3,
        )
        .unwrap();
        assert_eq!(report.methods.len(), 2);
        assert_eq!(report.method("a").unwrap().seeds.len(), 2);
        let csv = table1_csv(&[report], 3);
        assert_eq!(csv.lines().nth(1).unwrap(), "a,pendulum,0e0,0e0");
    }

    #[test]
    fn equal_step_budget_scales_epochs() {
        let config = MethodConfig::desk();
        let budget = StepBudget::EqualSteps { reference_size: 5000 };
        assert_eq!(budget.epochs_for(5000, &config), 100);
        assert_eq!(budget.epochs_for(50000, &config), 10);
        assert_eq!(StepBudget::FixedEpochs.epochs_for(50000, &config), 100);
    }
}

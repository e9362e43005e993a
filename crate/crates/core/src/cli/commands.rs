use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::control::lifted_model;
use crate::datagen::{collect, Dataset};
use crate::dynamics::Environment;
use crate::error::{Error, Result};
use crate::eval::{control_benchmark, cost_sweep, costs_csv, prediction_benchmark, table1_csv, train_method};
use crate::koopman::TrainReport;
use crate::modelfile::SavedModel;
use crate::seed::derive_seed;

use super::config::ExperimentConfig;
use super::manifest::Run;

/// Step at which the prediction table is read.
pub const TABLE_STEP: usize = 15;

/// Training and test data of `config`, drawn from the `train_data` and
/// `test_data` streams of the root seed.
pub fn collect_pair(config: &ExperimentConfig, env: &Environment, n_traj: usize) -> Result<(Dataset, Dataset)> {
    let d = &config.data;
    let train = collect(env, n_traj, d.horizon, derive_seed(config.seed, "train_data", 0))?;
    let test = collect(env, d.test_traj, d.test_horizon, derive_seed(config.seed, "test_data", 0))?;
    Ok((train, test))
}

/// Seed of the `index`-th model trained under `config`.
pub fn model_seed(config: &ExperimentConfig, index: usize) -> u64 {
    derive_seed(config.seed, "model", index as u64)
}

fn read_dataset(run: &mut Run, role: &str, path: &Path, env: &Environment) -> Result<Dataset> {
    let data = Dataset::from_bytes(&run.read_input(role, "dataset", path)?)?;
    if data.env != env.name() {
        return Err(Error::Config(format!(
            "{} holds {} data but env is {}",
            path.display(),
            data.env,
            env.name()
        )));
    }
    Ok(data)
}

fn read_model(run: &mut Run, path: &Path, env: &Environment) -> Result<SavedModel> {
    let model = SavedModel::from_bytes(&run.read_input("model", "model", path)?)?;
    if model.state_dim() != env.state_dim() || model.control_dim() != env.control_dim() {
        return Err(Error::Config(format!(
            "{} has state/control dims {}/{} but {} has {}/{}",
            path.display(),
            model.state_dim(),
            model.control_dim(),
            env.name(),
            env.state_dim(),
            env.control_dim()
        )));
    }
    Ok(model)
}

fn loss_csv(report: &TrainReport) -> String {
    let mut out = String::from("epoch,train_loss,validation_loss\n");
    for r in &report.history {
        match r.validation_loss {
            Some(v) => writeln!(out, "{},{:e},{:e}", r.epoch, r.train_loss, v).unwrap(),
            None => writeln!(out, "{},{:e},", r.epoch, r.train_loss).unwrap(),
        }
    }
    out
}

/// Writes `train.kpds` and `test.kpds`.
pub fn cmd_collect(config: &ExperimentConfig) -> Result<PathBuf> {
    let env = config.environment()?;
    let (train, test) = collect_pair(config, &env, config.data.n_traj)?;
    let mut run = Run::start("collect", config)?;
    run.write("train.kpds", &train.to_bytes()?)?;
    run.write("test.kpds", &test.to_bytes()?)?;
    run.finish()
}

/// Writes `model.kpmd`, `loss.csv` and `train.json`.
pub fn cmd_train(config: &ExperimentConfig, data: &Path) -> Result<PathBuf> {
    let env = config.environment()?;
    let mut run = Run::start("train", config)?;
    let dataset = read_dataset(&mut run, "train_data", data, &env)?;
    let trained = train_method(config.method, &env, &dataset, &config.model, model_seed(config, 0))?;
    run.write("model.kpmd", &trained.model.to_bytes())?;
    if let Some(report) = &trained.report {
        run.write("loss.csv", loss_csv(report).as_bytes())?;
        run.write_json("train.json", report)?;
    }
    run.finish()
}

/// Writes `prediction.csv`, `table1.csv` and `prediction.json`.
pub fn cmd_predict(config: &ExperimentConfig, model: &Path, test: &Path) -> Result<PathBuf> {
    let env = config.environment()?;
    let mut run = Run::start("predict", config)?;
    let model = read_model(&mut run, model, &env)?;
    let test = read_dataset(&mut run, "test_data", test, &env)?;
    let report = prediction_benchmark(env.name(), &[(model.method_name(), config.seed, &model)], &test, test.horizon)?;
    run.write("prediction.csv", report.prediction_csv().as_bytes())?;
    run.write("table1.csv", table1_csv(std::slice::from_ref(&report), TABLE_STEP.min(test.horizon)).as_bytes())?;
    run.write_json("prediction.json", &report)?;
    run.finish()
}

/// Writes `trajectory.csv`, `control.csv` and `control.json`. A run that
/// diverges or has no stabilizing gain still writes its outputs, then
/// reports the failure.
pub fn cmd_control(config: &ExperimentConfig, model: &Path) -> Result<PathBuf> {
    let env = config.environment()?;
    let task = config.control_task()?;
    let mut run = Run::start("control", config)?;
    let saved = read_model(&mut run, model, &env)?;
    let lifted = lifted_model(&saved)?;
    let outcome = control_benchmark(&[(saved.method_name(), &env, lifted, &task)])?.remove(0);
    if let Some(r) = &outcome.run {
        run.write("trajectory.csv", r.to_csv().as_bytes())?;
    }
    run.write("control.csv", costs_csv(std::slice::from_ref(&outcome)).as_bytes())?;
    run.write_json("control.json", &outcome)?;
    let dir = run.finish()?;
    match &outcome.run {
        None => Err(Error::Unstabilizable(outcome.status)),
        Some(r) if r.diverged => Err(Error::RolloutDivergence { step: r.controls.len() }),
        Some(_) => Ok(dir),
    }
}

/// Writes `costmap.csv` and `costmap.json`.
pub fn cmd_sweep(config: &ExperimentConfig, model: &Path) -> Result<PathBuf> {
    let env = config.environment()?;
    let task = config.control_task()?;
    let mut run = Run::start("sweep", config)?;
    let saved = read_model(&mut run, model, &env)?;
    let map = cost_sweep(&env, lifted_model(&saved)?, &task, config.sweep_grid())?;
    run.write("costmap.csv", map.to_csv().as_bytes())?;
    run.write_json("costmap.json", &map)?;
    run.finish()
}

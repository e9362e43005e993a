use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use serde::Serialize;

use crate::control::lifted_model;
use crate::dynamics::Environment;
use crate::error::{Error, Result};
use crate::eval::{
    control_benchmark, cost_sweep, costs_csv, parallel_map, prediction_benchmark, sample_efficiency, table1_csv,
    train_method, worker_count, ControlOutcome, CostMap, EfficiencyPoint, Method, PredictionReport, Predictor,
};
use crate::modelfile::SavedModel;

use super::commands::{collect_pair, model_seed, TABLE_STEP};
use super::config::ExperimentConfig;
use super::manifest::Run;
use super::tasks::standard_task;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Suite {
    Table1,
    Table2,
    Fig5,
    Fig6,
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "table1" => Ok(Suite::Table1),
            "table2" => Ok(Suite::Table2),
            "fig5" => Ok(Suite::Fig5),
            "fig6" => Ok(Suite::Fig6),
            other => Err(Error::Config(format!(
                "unknown suite `{other}`; expected table1, table2, fig5 or fig6"
            ))),
        }
    }
}

impl Suite {
    pub fn name(self) -> &'static str {
        match self {
            Suite::Table1 => "table1",
            Suite::Table2 => "table2",
            Suite::Fig5 => "fig5",
            Suite::Fig6 => "fig6",
        }
    }
}

/// One model of the prediction table.
#[derive(Clone, Debug)]
pub struct ModelEntry {
    pub env: String,
    pub method: Method,
    pub seed_index: usize,
    pub seed: u64,
    pub model: SavedModel,
}

#[derive(Clone, Debug)]
pub struct Table1 {
    pub reports: Vec<PredictionReport>,
    pub models: Vec<ModelEntry>,
}

impl Table1 {
    pub fn report(&self, env: &str) -> Option<&PredictionReport> {
        self.reports.iter().find(|r| r.env == env)
    }
}

/// Train every configured method on every configured environment for each
/// seed and score the models on held-out trajectories.
pub fn table1(config: &ExperimentConfig) -> Result<Table1> {
    let r = &config.reproduce;
    let mut reports = Vec::new();
    let mut models = Vec::new();
    for name in &r.envs {
        let env = Environment::by_name(name)?;
        let (train, test) = collect_pair(config, &env, config.data.n_traj)?;
        let jobs: Vec<(Method, usize)> =
            r.methods.iter().flat_map(|&m| (0..r.seeds).map(move |i| (m, i))).collect();
        let trained = parallel_map(&jobs, worker_count(), |&(method, i)| {
            train_method(method, &env, &train, &config.model, model_seed(config, i))
        });
        let mut entries = Vec::with_capacity(jobs.len());
        for (&(method, seed_index), t) in jobs.iter().zip(trained) {
            entries.push(ModelEntry {
                env: name.clone(),
                method,
                seed_index,
                seed: model_seed(config, seed_index),
                model: t?.model,
            });
        }
        let scored: Vec<(&str, u64, &(dyn Predictor + Sync))> = entries
            .iter()
            .map(|e| (e.method.name(), e.seed, &e.model as &(dyn Predictor + Sync)))
            .collect();
        reports.push(prediction_benchmark(name, &scored, &test, config.data.test_horizon)?);
        models.extend(entries);
    }
    Ok(Table1 { reports, models })
}

/// Closed-loop result of one method on one environment's standard task.
#[derive(Clone, Debug)]
pub struct ControlEntry {
    pub model: SavedModel,
    pub outcome: ControlOutcome,
}

fn control_model(config: &ExperimentConfig, method: Method, env: &Environment) -> Result<SavedModel> {
    let model_config = match config.reproduce.control_models.get(env.name()) {
        Some(o) => o.apply(&config.model),
        None => config.model.clone(),
    };
    let (train, _) = collect_pair(config, env, config.data.n_traj)?;
    Ok(train_method(method, env, &train, &model_config, model_seed(config, 0))?.model)
}

/// Train one model per control method and environment, then run each
/// environment's standard regulation task in closed loop.
pub fn table2(config: &ExperimentConfig) -> Result<Vec<ControlEntry>> {
    let r = &config.reproduce;
    let mut out = Vec::new();
    for name in &r.envs {
        let env = Environment::by_name(name)?;
        let task = standard_task(&env)?;
        let models = parallel_map(&r.control_methods, worker_count(), |&m| control_model(config, m, &env));
        let models: Vec<SavedModel> = models.into_iter().collect::<Result<_>>()?;
        let lifted: Vec<_> = models.iter().map(lifted_model).collect::<Result<_>>()?;
        let entries: Vec<_> = models.iter().zip(&lifted).map(|(m, l)| (m.method_name(), &env, *l, &task)).collect();
        let outcomes = control_benchmark(&entries)?;
        out.extend(models.into_iter().zip(outcomes).map(|(model, outcome)| ControlEntry { model, outcome }));
    }
    Ok(out)
}

#[derive(Clone, Debug, Serialize)]
pub struct EfficiencyCurve {
    pub method: Method,
    pub points: Vec<EfficiencyPoint>,
}

/// Step error against training-set size. Every size trains on a prefix of
/// one collection, so the smaller sets are nested in the larger ones.
pub fn fig5(config: &ExperimentConfig) -> Result<Vec<EfficiencyCurve>> {
    let r = &config.reproduce;
    let env = Environment::by_name(&r.efficiency_env)?;
    let largest = r.sizes.iter().copied().max().unwrap_or(0);
    let (train, test) = collect_pair(config, &env, largest)?;
    let seeds: Vec<u64> = (0..r.seeds).map(|i| model_seed(config, i)).collect();
    r.efficiency_methods
        .iter()
        .map(|&method| {
            let points = sample_efficiency(
                method,
                &env,
                &train,
                &r.sizes,
                &seeds,
                &config.model,
                r.budget(),
                &test,
                TABLE_STEP,
            )?;
            Ok(EfficiencyCurve { method, points })
        })
        .collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepEntry {
    pub method: Method,
    pub map: CostMap,
}

/// Closed-loop cost over a grid of initial states of the damping pendulum.
pub fn fig6(config: &ExperimentConfig) -> Result<Vec<SweepEntry>> {
    let env = Environment::by_name("damping_pendulum")?;
    let task = standard_task(&env)?;
    config
        .reproduce
        .sweep_methods
        .iter()
        .map(|&method| {
            let model = control_model(config, method, &env)?;
            let map = cost_sweep(&env, lifted_model(&model)?, &task, config.sweep_grid())?;
            Ok(SweepEntry { method, map })
        })
        .collect()
}

fn efficiency_csv(curves: &[EfficiencyCurve]) -> String {
    let mut out = String::from("method,size,epochs,seed_index,err15,gradient_steps\n");
    for c in curves {
        for p in &c.points {
            for (i, (e, s)) in p.errors.iter().zip(&p.gradient_steps).enumerate() {
                writeln!(out, "{},{},{},{i},{e:e},{s}", c.method, p.size, p.epochs).unwrap();
            }
        }
    }
    out
}

/// Run `suite` and write its artifacts into a fresh run directory.
pub fn cmd_reproduce(config: &ExperimentConfig, suite: Suite) -> Result<PathBuf> {
    match suite {
        Suite::Table1 => {
            let t = table1(config)?;
            let mut run = Run::start("reproduce-table1", config)?;
            run.write("table1.csv", table1_csv(&t.reports, TABLE_STEP).as_bytes())?;
            for report in &t.reports {
                run.write(&format!("prediction_{}.csv", report.env), report.prediction_csv().as_bytes())?;
            }
            run.write_json("table1.json", &t.reports)?;
            for m in &t.models {
                run.write(
                    &format!("models/{}_{}_{}.kpmd", m.env, m.method, m.seed_index),
                    &m.model.to_bytes(),
                )?;
            }
            run.finish()
        }
        Suite::Table2 => {
            let entries = table2(config)?;
            let mut run = Run::start("reproduce-table2", config)?;
            let outcomes: Vec<ControlOutcome> = entries.iter().map(|e| e.outcome.clone()).collect();
            run.write("table2.csv", costs_csv(&outcomes).as_bytes())?;
            run.write_json("table2.json", &outcomes)?;
            for e in &entries {
                let o = &e.outcome;
                if let Some(r) = &o.run {
                    run.write(&format!("trajectories/{}_{}.csv", o.env, o.method), r.to_csv().as_bytes())?;
                }
                run.write(&format!("models/{}_{}.kpmd", o.env, o.method), &e.model.to_bytes())?;
            }
            run.finish()
        }
        Suite::Fig5 => {
            let curves = fig5(config)?;
            let mut run = Run::start("reproduce-fig5", config)?;
            run.write("efficiency.csv", efficiency_csv(&curves).as_bytes())?;
            run.write_json("fig5.json", &curves)?;
            run.finish()
        }
        Suite::Fig6 => {
            let sweeps = fig6(config)?;
            let mut run = Run::start("reproduce-fig6", config)?;
            for s in &sweeps {
                run.write(&format!("costmap_{}.csv", s.method), s.map.to_csv().as_bytes())?;
            }
            run.write_json("fig6.json", &sweeps)?;
            run.finish()
        }
    }
}

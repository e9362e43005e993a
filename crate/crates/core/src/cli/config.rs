use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::control::Reference;
use crate::diffcore::Tensor;
use crate::dynamics::{Dynamics, Environment, ENV_NAMES};
use crate::error::{Error, Result};
use crate::eval::{ControlTask, Method, MethodConfig, StepBudget, SweepGrid};

use super::tasks::standard_task;

/// Everything a subcommand needs, read from a TOML file and overridden by
/// command-line flags.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub env: String,
    pub method: Method,
    /// Root of every random stream in the run.
    pub seed: u64,
    /// Parent directory of the run directories.
    pub out: PathBuf,
    /// Physical constants overriding the environment defaults.
    pub env_params: BTreeMap<String, f64>,
    pub data: DataConfig,
    pub model: MethodConfig,
    pub control: ControlConfig,
    pub sweep: SweepConfig,
    pub reproduce: ReproduceConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            env: "damping_pendulum".into(),
            method: Method::Dkac,
            seed: 0,
            out: PathBuf::from("runs"),
            env_params: BTreeMap::new(),
            data: DataConfig::default(),
            model: MethodConfig::desk(),
            control: ControlConfig::default(),
            sweep: SweepConfig::default(),
            reproduce: ReproduceConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub n_traj: usize,
    pub horizon: usize,
    pub test_traj: usize,
    pub test_horizon: usize,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            n_traj: 5000,
            horizon: 15,
            test_traj: 500,
            test_horizon: 30,
        }
    }
}

/// Control task overrides; unset fields take the environment's standard
/// task.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControlConfig {
    pub x0: Option<Vec<f64>>,
    pub goal: Option<Vec<f64>>,
    /// CSV of desired states, one row per step; replaces `goal`.
    pub reference_file: Option<PathBuf>,
    pub q_diag: Option<Vec<f64>>,
    pub r_scale: Option<f64>,
    pub steps: Option<usize>,
    pub dare_max_iter: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub resolution: usize,
    pub extent: f64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        let g = SweepGrid::default();
        Self {
            resolution: g.resolution,
            extent: g.extent,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BudgetKind {
    EqualSteps,
    FixedEpochs,
}

/// Scope of the `reproduce` suites.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReproduceConfig {
    /// Environments of the prediction table and the cost table.
    pub envs: Vec<String>,
    /// Methods of the prediction table.
    pub methods: Vec<Method>,
    /// Trained models per method and environment.
    pub seeds: usize,
    /// Training-set sizes of the sample-efficiency sweep.
    pub sizes: Vec<usize>,
    pub efficiency_methods: Vec<Method>,
    pub efficiency_env: String,
    pub budget: BudgetKind,
    pub reference_size: usize,
    pub control_methods: Vec<Method>,
    pub sweep_methods: Vec<Method>,
    /// Per-environment model overrides used by the control suites.
    pub control_models: BTreeMap<String, ControlModelConfig>,
}

impl Default for ReproduceConfig {
    fn default() -> Self {
        Self {
            envs: ENV_NAMES.iter().map(|s| s.to_string()).collect(),
            methods: Method::ALL.to_vec(),
            seeds: 4,
            sizes: vec![200, 1000, 5000, 20000, 50000],
            efficiency_methods: vec![Method::Dkuc, Method::Dkac],
            efficiency_env: "damping_pendulum".into(),
            budget: BudgetKind::EqualSteps,
            reference_size: 5000,
            control_methods: vec![Method::Dkuc, Method::Dkac],
            sweep_methods: vec![Method::Dkuc, Method::Dkac],
            control_models: ENV_NAMES
                .iter()
                .map(|name| {
                    let model = ControlModelConfig {
                        embed_dim: Some(8),
                        a_init: Some(0.0),
                        epochs: None,
                    };
                    (name.to_string(), model)
                })
                .collect(),
        }
    }
}

impl ReproduceConfig {
    pub fn budget(&self) -> StepBudget {
        match self.budget {
            BudgetKind::EqualSteps => StepBudget::EqualSteps {
                reference_size: self.reference_size,
            },
            BudgetKind::FixedEpochs => StepBudget::FixedEpochs,
        }
    }
}

/// Fields of [`MethodConfig`] a control suite may change per environment.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControlModelConfig {
    pub embed_dim: Option<usize>,
    pub a_init: Option<f64>,
    pub epochs: Option<usize>,
}

impl ControlModelConfig {
    pub fn apply(&self, base: &MethodConfig) -> MethodConfig {
        let mut c = base.clone();
        if let Some(d) = self.embed_dim {
            c.embed_dim = d;
        }
        if let Some(a) = self.a_init {
            c.a_init = a;
        }
        if let Some(e) = self.epochs {
            c.train.epochs = e;
        }
        c
    }
}

/// Values given on the command line; each one replaces the file value.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub env: Option<String>,
    pub method: Option<String>,
}

impl ExperimentConfig {
    /// Read `path` (or start from the defaults), apply the overrides and
    /// validate the result.
    pub fn load(path: Option<&Path>, overrides: &Overrides) -> Result<Self> {
        let mut config = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| match e.kind() {
                    std::io::ErrorKind::NotFound => Error::NotFound {
                        kind: "config",
                        path: p.to_path_buf(),
                    },
                    _ => Error::Io(e),
                })?;
                Self::from_toml(&text)?
            }
            None => Self::default(),
        };
        if let Some(s) = overrides.seed {
            config.seed = s;
        }
        if let Some(o) = &overrides.out {
            config.out = o.clone();
        }
        if let Some(e) = &overrides.env {
            config.env = e.clone();
        }
        if let Some(m) = &overrides.method {
            config.method = Method::parse(m)?;
        }
        config.validate()?;
        Ok(config)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    /// The configured environment with its parameter overrides applied.
    pub fn environment(&self) -> Result<Environment> {
        env_with_params(&self.env, &self.env_params)
    }

    pub fn sweep_grid(&self) -> SweepGrid {
        SweepGrid {
            resolution: self.sweep.resolution,
            extent: self.sweep.extent,
        }
    }

    /// The control task for the configured environment: its standard task
    /// with every set `[control]` field replacing the default.
    pub fn control_task(&self) -> Result<ControlTask> {
        let env = self.environment()?;
        let (n, m) = (env.state_dim(), env.control_dim());
        let mut task = standard_task(&env)?;
        let c = &self.control;
        if let Some(x0) = &c.x0 {
            task.x0 = x0.clone();
        }
        if let Some(goal) = &c.goal {
            task.reference = Reference::Constant(goal.clone());
        }
        if let Some(path) = &c.reference_file {
            task.reference = Reference::Trajectory(read_reference(path, n)?);
        }
        if let Some(q) = &c.q_diag {
            task.q_diag = q.clone();
        }
        if let Some(r) = c.r_scale {
            task.r_scale = r;
        }
        if let Some(s) = c.steps {
            task.steps = s;
        }
        if let Some(it) = c.dare_max_iter {
            task.dare_max_iter = it;
        }
        if task.x0.len() != n || task.q_diag.len() != n {
            return Err(Error::Config(format!(
                "control.x0 and control.q_diag need {n} entries for {}",
                self.env
            )));
        }
        if let Reference::Constant(g) = &task.reference {
            if g.len() != n {
                return Err(Error::Config(format!("control.goal needs {n} entries")));
            }
        }
        if task.steps == 0 {
            return Err(Error::Config("control.steps must be positive".into()));
        }
        task.problem(m).validate(n, m).map_err(|e| Error::Config(format!("control costs: {e}")))?;
        Ok(task)
    }

    /// Check every field before any work starts.
    pub fn validate(&self) -> Result<()> {
        self.environment()?;
        for env in &self.reproduce.envs {
            Environment::by_name(env)?;
        }
        Environment::by_name(&self.reproduce.efficiency_env)?;
        self.model.validate()?;
        if self.model.train.seed != 0 {
            return Err(Error::Config(
                "model.train.seed is derived from the root seed; set `seed` instead".into(),
            ));
        }
        let d = &self.data;
        if d.n_traj == 0 || d.test_traj == 0 {
            return Err(Error::Config("data.n_traj and data.test_traj must be positive".into()));
        }
        if d.horizon < self.model.train.horizon {
            return Err(Error::Config(format!(
                "data.horizon {} is shorter than the loss horizon {}",
                d.horizon, self.model.train.horizon
            )));
        }
        if d.test_horizon < 15 {
            return Err(Error::Config("data.test_horizon must be at least 15".into()));
        }
        if self.sweep.resolution < 2 || !(self.sweep.extent > 0.0) {
            return Err(Error::Config("sweep.resolution must be ≥ 2 and sweep.extent positive".into()));
        }
        let r = &self.reproduce;
        if r.seeds == 0 || r.sizes.is_empty() || r.sizes.contains(&0) || r.reference_size == 0 {
            return Err(Error::Config("reproduce.seeds, sizes and reference_size must be positive".into()));
        }
        for m in r.control_methods.iter().chain(&r.sweep_methods) {
            if !matches!(m, Method::Dkuc | Method::Dkac | Method::Krbf) {
                return Err(Error::Config(format!("{m} has no lifted linear model to control")));
            }
        }
        for env in r.control_models.keys() {
            Environment::by_name(env)?;
        }
        self.control_task()?;
        Ok(())
    }
}

/// Environment `name` with `params` applied through [`Dynamics::set_param`].
pub fn env_with_params(name: &str, params: &BTreeMap<String, f64>) -> Result<Environment> {
    let mut env = Environment::by_name(name)?;
    for (k, v) in params {
        env.set_param(k, *v).map_err(|e| Error::Config(e.to_string()))?;
    }
    env.spec().validate()?;
    Ok(env)
}

/// Rows of `n` comma-separated numbers; a first line that does not parse is
/// taken as a header.
pub fn read_reference(path: &Path, n: usize) -> Result<Tensor> {
    let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::NotFound {
            kind: "reference",
            path: path.to_path_buf(),
        },
        _ => Error::Io(e),
    })?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let parsed: std::result::Result<Vec<f64>, _> = line.split(',').map(|v| v.trim().parse::<f64>()).collect();
        match parsed {
            Ok(row) if row.len() == n => rows.push(row),
            Ok(row) => {
                return Err(Error::Format(format!(
                    "{} line {}: {} values, expected {n}",
                    path.display(),
                    i + 1,
                    row.len()
                )))
            }
            Err(_) if i == 0 => continue,
            Err(e) => return Err(Error::Format(format!("{} line {}: {e}", path.display(), i + 1))),
        }
    }
    if rows.is_empty() {
        return Err(Error::Format(format!("{} holds no reference states", path.display())));
    }
    Tensor::from_rows(&rows)
}

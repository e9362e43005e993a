//! Trajectory collection, persistence, splitting and normalization.
//!
//! ## Dataset file (`KPDS`)
//!
//! All integers and floats little-endian:
//!
//! | field        | type                          |
//! |--------------|-------------------------------|
//! | magic        | `b"KPDS"`                     |
//! | version      | u32 (= 1)                     |
//! | env name     | u32 length + UTF-8 bytes      |
//! | n, m         | u32, u32                      |
//! | dt           | f64                           |
//! | H            | u32                           |
//! | n_traj       | u32                           |
//! | seed         | u64                           |
//! | policy       | u32 length + UTF-8 bytes      |
//! | payload      | per trajectory: `(H+1)·n` state values then `H·m` control values, row-major f64 |

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::binio::{read_file, Reader, Writer};
use crate::diffcore::Tensor;
use crate::dynamics::{Dynamics, Environment};
use crate::error::{Error, Result};
use crate::seed::derive_seed;

pub const DATASET_MAGIC: &[u8; 4] = b"KPDS";
pub const DATASET_VERSION: u32 = 1;

/// Descriptor of the only excitation policy: controls drawn uniformly within
/// bounds, redrawn every step.
pub const UNIFORM_RANDOM_POLICY: &str = "uniform_random";

const MAX_RESAMPLES: usize = 10;

/// One rollout of the true system.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    /// `[H+1, n]`
    pub states: Tensor,
    /// `[H, m]`
    pub controls: Tensor,
}

impl Trajectory {
    pub fn horizon(&self) -> usize {
        self.controls.rows()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub env: String,
    pub state_dim: usize,
    pub control_dim: usize,
    pub dt: f64,
    pub horizon: usize,
    pub seed: u64,
    pub policy: String,
    pub trajectories: Vec<Trajectory>,
}

/// Per-timestep tensors for a batch of trajectory windows.
#[derive(Clone, Debug)]
pub struct StepBatch {
    /// `k+1` tensors of shape `[batch, n]`.
    pub states: Vec<Tensor>,
    /// `k` tensors of shape `[batch, m]`.
    pub controls: Vec<Tensor>,
}

impl StepBatch {
    pub fn batch_size(&self) -> usize {
        self.states[0].rows()
    }

    pub fn steps(&self) -> usize {
        self.controls.len()
    }
}

/// Draw `n_traj` trajectories of `horizon` steps from uniform initial states
/// and uniform random controls.
///
/// Trajectory `i` uses its own stream `derive_seed(seed, "collect", i)`, so
/// a larger collection with the same seed extends a smaller one.
pub fn collect(env: &Environment, n_traj: usize, horizon: usize, seed: u64) -> Result<Dataset> {
    if horizon == 0 {
        return Err(Error::Contract("horizon must be at least 1".into()));
    }
    let trajectories = (0..n_traj)
        .map(|i| collect_one(env, horizon, derive_seed(seed, "collect", i as u64)))
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset {
        env: env.name().to_string(),
        state_dim: env.state_dim(),
        control_dim: env.control_dim(),
        dt: env.dt(),
        horizon,
        seed,
        policy: UNIFORM_RANDOM_POLICY.into(),
        trajectories,
    })
}

fn collect_one(env: &Environment, horizon: usize, seed: u64) -> Result<Trajectory> {
    let spec = env.spec();
    let (n, m) = (spec.state_dim, spec.control_dim);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut last_err = None;
    for _ in 0..=MAX_RESAMPLES {
        let mut x: Vec<f64> = spec
            .sample_region
            .iter()
            .map(|&(lo, hi)| rng.gen_range(lo..hi))
            .collect();
        let mut states = Vec::with_capacity((horizon + 1) * n);
        let mut controls = Vec::with_capacity(horizon * m);
        states.extend_from_slice(&x);
        let mut failed = None;
        for _ in 0..horizon {
            let u: Vec<f64> = spec
                .control_bounds
                .iter()
                .map(|&(lo, hi)| rng.gen_range(lo..hi))
                .collect();
            match env.step(&x, &u) {
                Ok(next) => x = next,
                Err(e) => {
                    failed = Some(e);
                    break;
                }
            }
            controls.extend_from_slice(&u);
            states.extend_from_slice(&x);
        }
        match failed {
            None => {
                return Ok(Trajectory {
                    states: Tensor::matrix(horizon + 1, n, states)?,
                    controls: Tensor::matrix(horizon, m, controls)?,
                })
            }
            Some(e) => last_err = Some(e),
        }
    }
    Err(last_err.expect("loop ran at least once"))
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    pub fn transitions(&self) -> usize {
        self.len() * self.horizon
    }

    /// Simulated wall-clock time covered by all transitions, in seconds.
    pub fn duration_seconds(&self) -> f64 {
        self.transitions() as f64 * self.dt
    }

    fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            trajectories: indices.iter().map(|&i| self.trajectories[i].clone()).collect(),
            ..self.header_clone()
        }
    }

    fn header_clone(&self) -> Dataset {
        Dataset {
            env: self.env.clone(),
            state_dim: self.state_dim,
            control_dim: self.control_dim,
            dt: self.dt,
            horizon: self.horizon,
            seed: self.seed,
            policy: self.policy.clone(),
            trajectories: Vec::new(),
        }
    }

    /// First `count` trajectories.
    pub fn truncated(&self, count: usize) -> Dataset {
        let idx: Vec<usize> = (0..count.min(self.len())).collect();
        self.subset(&idx)
    }

    /// Stack the first `k` steps of the selected trajectories into per-step
    /// batch tensors.
    pub fn step_batch(&self, indices: &[usize], k: usize) -> Result<StepBatch> {
        if k > self.horizon {
            return Err(Error::Contract(format!(
                "window of {k} steps exceeds dataset horizon {}",
                self.horizon
            )));
        }
        if indices.is_empty() {
            return Err(Error::Contract("empty batch".into()));
        }
        let (n, m) = (self.state_dim, self.control_dim);
        let b = indices.len();
        let states = (0..=k)
            .map(|t| {
                let mut data = Vec::with_capacity(b * n);
                for &i in indices {
                    data.extend_from_slice(self.trajectories[i].states.row_slice(t));
                }
                Tensor::matrix(b, n, data)
            })
            .collect::<Result<Vec<_>>>()?;
        let controls = (0..k)
            .map(|t| {
                let mut data = Vec::with_capacity(b * m);
                for &i in indices {
                    data.extend_from_slice(self.trajectories[i].controls.row_slice(t));
                }
                Tensor::matrix(b, m, data)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(StepBatch { states, controls })
    }

    /// Every state row of every trajectory, `[len·(H+1), n]`.
    pub fn all_states(&self) -> Tensor {
        let parts: Vec<&Tensor> = self.trajectories.iter().map(|t| &t.states).collect();
        Tensor::concat_rows(&parts).expect("dataset is non-empty with consistent width")
    }

    fn validate(&self) -> Result<()> {
        if self.is_empty() {
            return Err(Error::Contract("dataset has no trajectories".into()));
        }
        let (n, m, h) = (self.state_dim, self.control_dim, self.horizon);
        for (i, t) in self.trajectories.iter().enumerate() {
            if t.states.shape() != [h + 1, n] || t.controls.shape() != [h, m] {
                return Err(Error::dim(
                    "dataset",
                    format!(
                        "trajectory {i}: states {:?}, controls {:?}, expected [{}, {n}] / [{h}, {m}]",
                        t.states.shape(),
                        t.controls.shape(),
                        h + 1
                    ),
                ));
            }
            if !t.states.is_finite() || !t.controls.is_finite() {
                return Err(Error::Contract(format!("trajectory {i} has non-finite values")));
            }
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        self.validate()?;
        let mut w = Writer::default();
        w.bytes(DATASET_MAGIC);
        w.u32(DATASET_VERSION);
        w.str(&self.env);
        w.u32(self.state_dim as u32);
        w.u32(self.control_dim as u32);
        w.f64(self.dt);
        w.u32(self.horizon as u32);
        w.u32(self.len() as u32);
        w.u64(self.seed);
        w.str(&self.policy);
        for t in &self.trajectories {
            w.tensor(&t.states);
            w.tensor(&t.controls);
        }
        Ok(w.buf)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        if r.take(4)? != DATASET_MAGIC {
            return Err(Error::Format("not a dataset file (bad magic)".into()));
        }
        let version = r.u32()?;
        if version != DATASET_VERSION {
            return Err(Error::Format(format!(
                "dataset version {version}, expected {DATASET_VERSION}"
            )));
        }
        let env = r.str()?;
        let state_dim = r.u32()? as usize;
        let control_dim = r.u32()? as usize;
        let dt = r.f64()?;
        let horizon = r.u32()? as usize;
        let n_traj = r.u32()? as usize;
        let seed = r.u64()?;
        let policy = r.str()?;
        if state_dim == 0 || control_dim == 0 || horizon == 0 {
            return Err(Error::Format("zero dimension in dataset header".into()));
        }
        let mut trajectories = Vec::with_capacity(n_traj.min(1 << 20));
        for _ in 0..n_traj {
            let states = r.tensor(horizon + 1, state_dim)?;
            let controls = r.tensor(horizon, control_dim)?;
            trajectories.push(Trajectory { states, controls });
        }
        r.expect_end()?;
        let ds = Dataset {
            env,
            state_dim,
            control_dim,
            dt,
            horizon,
            seed,
            policy,
            trajectories,
        };
        ds.validate().map_err(|e| Error::Format(e.to_string()))?;
        Ok(ds)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&read_file(path, "dataset")?)
    }

    /// One transition per row: `traj,k,x0..,u0..,next_x0..`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("traj,k");
        for i in 0..self.state_dim {
            write!(out, ",x{i}").unwrap();
        }
        for i in 0..self.control_dim {
            write!(out, ",u{i}").unwrap();
        }
        for i in 0..self.state_dim {
            write!(out, ",next_x{i}").unwrap();
        }
        out.push('\n');
        for (ti, t) in self.trajectories.iter().enumerate() {
            for k in 0..self.horizon {
                write!(out, "{ti},{k}").unwrap();
                let row = t
                    .states
                    .row_slice(k)
                    .iter()
                    .chain(t.controls.row_slice(k))
                    .chain(t.states.row_slice(k + 1));
                for v in row {
                    write!(out, ",{v}").unwrap();
                }
                out.push('\n');
            }
        }
        out
    }
}

/// Partition by trajectory. `round(test_fraction · len)` trajectories, drawn
/// by a seeded shuffle, go to the test side; both sides keep the original
/// trajectory order.
pub fn split(dataset: &Dataset, test_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(0.0..=1.0).contains(&test_fraction) {
        return Err(Error::Contract(format!(
            "test fraction {test_fraction} outside [0, 1]"
        )));
    }
    let n = dataset.len();
    let n_test = (test_fraction * n as f64).round() as usize;
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(seed, "split", 0)));
    let mut test = idx[..n_test].to_vec();
    let mut train = idx[n_test..].to_vec();
    test.sort_unstable();
    train.sort_unstable();
    Ok((dataset.subset(&train), dataset.subset(&test)))
}

/// Per-dimension affine map `(x − offset) / scale` applied to network
/// inputs.
#[derive(Clone, Debug, PartialEq)]
pub struct Normalizer {
    pub offset: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Normalizer {
    pub fn identity(dim: usize) -> Self {
        Self {
            offset: vec![0.0; dim],
            scale: vec![1.0; dim],
        }
    }

    /// Mean and standard deviation of every state in `dataset`; degenerate
    /// dimensions keep scale 1.
    pub fn fit(dataset: &Dataset) -> Self {
        let states = dataset.all_states();
        let (rows, n) = states.dims();
        let mut offset = vec![0.0; n];
        let mut scale = vec![0.0; n];
        for r in 0..rows {
            for (o, v) in offset.iter_mut().zip(states.row_slice(r)) {
                *o += v;
            }
        }
        offset.iter_mut().for_each(|o| *o /= rows as f64);
        for r in 0..rows {
            for ((s, v), o) in scale.iter_mut().zip(states.row_slice(r)).zip(&offset) {
                *s += (v - o) * (v - o);
            }
        }
        for s in &mut scale {
            *s = (*s / rows as f64).sqrt();
            if *s <= 1e-12 {
                *s = 1.0;
            }
        }
        Self { offset, scale }
    }

    /// Centre and standard deviation of a uniform distribution on each
    /// interval: offset `(lo + hi) / 2`, scale `(hi − lo) / √12`.
    pub fn for_bounds(bounds: &[(f64, f64)]) -> Self {
        Self {
            offset: bounds.iter().map(|(lo, hi)| 0.5 * (lo + hi)).collect(),
            scale: bounds.iter().map(|(lo, hi)| (hi - lo) / 12f64.sqrt()).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.offset.len()
    }

    pub fn apply(&self, x: &Tensor) -> Tensor {
        let mut out = x.clone();
        let n = self.dim();
        for (i, v) in out.data_mut().iter_mut().enumerate() {
            let j = i % n;
            *v = (*v - self.offset[j]) / self.scale[j];
        }
        out
    }

    pub fn invert(&self, x: &Tensor) -> Tensor {
        let mut out = x.clone();
        let n = self.dim();
        for (i, v) in out.data_mut().iter_mut().enumerate() {
            let j = i % n;
            *v = *v * self.scale[j] + self.offset[j];
        }
        out
    }
}

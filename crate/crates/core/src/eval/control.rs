use std::fmt::Write as _;

use serde::Serialize;

use super::parallel::{parallel_map, worker_count};
use crate::control::{gain_for_with, run_with_gain, LiftedLinearModel, LqrProblem, Reference, RunResult, DARE_TOL};
use crate::diffcore::Tensor;
use crate::dynamics::{Dynamics, Environment};
use crate::error::{Error, Result};

/// A regulation or tracking task for one environment.
#[derive(Clone, Debug, PartialEq)]
pub struct ControlTask {
    pub x0: Vec<f64>,
    pub reference: Reference,
    /// Diagonal of the state weight `Q`.
    pub q_diag: Vec<f64>,
    /// `R = r_scale · I`.
    pub r_scale: f64,
    pub steps: usize,
    pub dare_max_iter: usize,
}

impl ControlTask {
    /// The LQR objective for a system with `control_dim` inputs.
    pub fn problem(&self, control_dim: usize) -> LqrProblem {
        LqrProblem {
            q: Tensor::diag(&self.q_diag),
            r: Tensor::eye(control_dim).scale(self.r_scale),
            reference: self.reference.clone(),
        }
    }
}

/// Result of one closed-loop run, or the reason it could not start.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ControlOutcome {
    pub method: String,
    pub env: String,
    /// Infinite when the run diverged or no stabilizing gain exists.
    pub total_cost: f64,
    pub diverged: bool,
    /// `ok`, `diverged`, or the gain error.
    pub status: String,
    /// `|x_T − x_des|` per state dimension; empty without a run.
    pub final_error: Vec<f64>,
    pub dare_iterations: usize,
    #[serde(skip)]
    pub run: Option<RunResult>,
}

impl ControlOutcome {
    /// Final error within `fraction` of the environment's state range in
    /// every dimension.
    pub fn settled(&self, env: &Environment, fraction: f64) -> bool {
        !self.diverged
            && self.final_error.len() == env.state_dim()
            && self
                .final_error
                .iter()
                .zip(env.spec().state_range())
                .all(|(e, r)| *e <= fraction * r)
    }
}

fn run_task(
    method: &str,
    env: &Environment,
    model: &dyn LiftedLinearModel,
    task: &ControlTask,
) -> Result<ControlOutcome> {
    let problem = task.problem(env.control_dim());
    let base = ControlOutcome {
        method: method.to_string(),
        env: env.name().to_string(),
        total_cost: f64::INFINITY,
        diverged: true,
        status: String::new(),
        final_error: Vec::new(),
        dare_iterations: 0,
        run: None,
    };
    let gain = match gain_for_with(model, &problem, DARE_TOL, task.dare_max_iter) {
        Ok(g) => g,
        Err(Error::Unstabilizable(msg)) => {
            return Ok(ControlOutcome {
                status: format!("unstabilizable: {msg}"),
                ..base
            })
        }
        Err(e) => return Err(e),
    };
    let run = run_with_gain(env, model, &problem, &gain, &task.x0, task.steps)?;
    let goal = problem.reference.at(task.steps.saturating_sub(1));
    let final_error = run.final_state().iter().zip(goal).map(|(x, g)| (x - g).abs()).collect();
    Ok(ControlOutcome {
        total_cost: run.total_cost,
        diverged: run.diverged,
        status: if run.diverged { "diverged" } else { "ok" }.into(),
        final_error,
        dare_iterations: gain.iterations,
        run: Some(run),
        ..base
    })
}

/// Run every `(method, env, model, task)` entry and report its total cost.
/// Runs that diverge, or models without a stabilizing gain, are reported
/// with infinite cost rather than as errors.
pub fn control_benchmark(
    entries: &[(&str, &Environment, &(dyn LiftedLinearModel + Sync), &ControlTask)],
) -> Result<Vec<ControlOutcome>> {
    parallel_map(entries, worker_count(), |(method, env, model, task)| {
        run_task(method, env, *model, task)
    })
    .into_iter()
    .collect()
}

/// `method,env,total_cost`; out-of-range costs are written as `inf`.
pub fn costs_csv(outcomes: &[ControlOutcome]) -> String {
    let mut out = String::from("method,env,total_cost\n");
    for o in outcomes {
        if o.total_cost.is_finite() {
            writeln!(out, "{},{},{}", o.method, o.env, o.total_cost).unwrap();
        } else {
            writeln!(out, "{},{},inf", o.method, o.env).unwrap();
        }
    }
    out
}

/// Square grid of initial `(θ, θ̇)` values.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SweepGrid {
    /// Points per axis.
    pub resolution: usize,
    /// The grid spans `[−extent, extent]` on both axes.
    pub extent: f64,
}

impl Default for SweepGrid {
    fn default() -> Self {
        Self {
            resolution: 81,
            extent: 4.0,
        }
    }
}

impl SweepGrid {
    pub fn axis(&self) -> Vec<f64> {
        let r = self.resolution;
        (0..r)
            .map(|i| -self.extent + 2.0 * self.extent * i as f64 / (r - 1) as f64)
            .collect()
    }
}

/// Total closed-loop cost from every grid point. `costs[i · r + j]` starts
/// from `(thetas[i], thetadots[j])`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CostMap {
    pub thetas: Vec<f64>,
    pub thetadots: Vec<f64>,
    pub costs: Vec<f64>,
    pub diverged: Vec<bool>,
}

impl CostMap {
    pub fn resolution(&self) -> usize {
        self.thetas.len()
    }

    pub fn cost(&self, i: usize, j: usize) -> f64 {
        self.costs[i * self.resolution() + j]
    }

    /// `theta,thetadot,cost`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("theta,thetadot,cost\n");
        for (i, t) in self.thetas.iter().enumerate() {
            for (j, td) in self.thetadots.iter().enumerate() {
                let c = self.cost(i, j);
                if c.is_finite() {
                    writeln!(out, "{t},{td},{c}").unwrap();
                } else {
                    writeln!(out, "{t},{td},inf").unwrap();
                }
            }
        }
        out
    }

    /// Largest relative gap between the costs at `(θ, θ̇)` and `(−θ, −θ̇)`
    /// over cells where both runs stayed finite.
    pub fn symmetry_gap(&self) -> f64 {
        let r = self.resolution();
        let mut gap: f64 = 0.0;
        for i in 0..r {
            for j in 0..r {
                let (a, b) = (self.cost(i, j), self.cost(r - 1 - i, r - 1 - j));
                if a.is_finite() && b.is_finite() && a.max(b) > 0.0 {
                    gap = gap.max((a - b).abs() / a.max(b));
                }
            }
        }
        gap
    }
}

/// Run `task` from every point of `grid` (its `x0` is ignored). The gain is
/// computed once and shared by all cells.
pub fn cost_sweep(
    env: &Environment,
    model: &(dyn LiftedLinearModel + Sync),
    task: &ControlTask,
    grid: SweepGrid,
) -> Result<CostMap> {
    if env.state_dim() != 2 {
        return Err(Error::dim("cost_sweep", "the sweep grid needs a two-dimensional state"));
    }
    if grid.resolution < 2 || !(grid.extent > 0.0) {
        return Err(Error::Contract("sweep grid needs at least 2 points and a positive extent".into()));
    }
    let problem = task.problem(env.control_dim());
    let gain = gain_for_with(model, &problem, DARE_TOL, task.dare_max_iter)?;
    let axis = grid.axis();
    let cells: Vec<[f64; 2]> = axis
        .iter()
        .flat_map(|&t| axis.iter().map(move |&td| [t, td]))
        .collect();
    let runs = parallel_map(&cells, worker_count(), |x0| {
        run_with_gain(env, model, &problem, &gain, x0, task.steps).map(|r| (r.total_cost, r.diverged))
    });
    let mut costs = Vec::with_capacity(cells.len());
    let mut diverged = Vec::with_capacity(cells.len());
    for r in runs {
        let (c, d) = r?;
        costs.push(c);
        diverged.push(d);
    }
    Ok(CostMap {
        thetas: axis.clone(),
        thetadots: axis,
        costs,
        diverged,
    })
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::koopman::{Architecture, KoopmanModel, Variant};

    /// DKUC model with no embedding whose `(A, B)` is the exact
    /// linearization of the damping pendulum at the origin. It is odd in
    /// the state, like the pendulum itself.
    fn linearized_pendulum(env: &Environment) -> KoopmanModel {
        let arch = Architecture {
            variant: Variant::Dkuc,
            state_dim: 2,
            control_dim: 1,
            embed_dim: 0,
            hidden: vec![],
            activation: Default::default(),
        };
        let mut model = KoopmanModel::new(&arch, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let h = 1e-6;
        let mut a = Tensor::zeros(2, 2);
        for j in 0..2 {
            let mut p = [0.0; 2];
            p[j] = h;
            let m = [-p[0], -p[1]];
            let (fp, fm) = (env.step(&p, &[0.0]).unwrap(), env.step(&m, &[0.0]).unwrap());
            for i in 0..2 {
                a.set(i, j, (fp[i] - fm[i]) / (2.0 * h));
            }
        }
        let (up, um) = (env.step(&[0.0, 0.0], &[h]).unwrap(), env.step(&[0.0, 0.0], &[-h]).unwrap());
        model.a = a;
        model.b = Tensor::matrix(2, 1, vec![(up[0] - um[0]) / (2.0 * h), (up[1] - um[1]) / (2.0 * h)]).unwrap();
        model
    }

    fn task() -> ControlTask {
        ControlTask {
            x0: vec![0.5, 0.0],
            reference: Reference::Constant(vec![0.0, 0.0]),
            q_diag: vec![1.0, 0.1],
            r_scale: 0.1,
            steps: 300,
            dare_max_iter: 100_000,
        }
    }

    #[test]
    fn sweep_is_symmetric_and_zero_at_goal() {
        let env = Environment::by_name("damping_pendulum").unwrap();
        let model = linearized_pendulum(&env);
        let grid = SweepGrid {
            resolution: 9,
            extent: 2.0,
        };
        let map = cost_sweep(&env, &model, &task(), grid).unwrap();
        assert_eq!(map.costs.len(), 81);
        assert_eq!(map.thetas, vec![-2.0, -1.5, -1.0, -0.5, 0.0, 0.5, 1.0, 1.5, 2.0]);
        assert_eq!(map.cost(4, 4), 0.0);
        assert!(map.symmetry_gap() < 0.1, "gap {}", map.symmetry_gap());
        assert_eq!(map.to_csv().lines().count(), 82);
    }

    #[test]
    fn benchmark_reports_cost_and_settling() {
        let env = Environment::by_name("damping_pendulum").unwrap();
        let model = linearized_pendulum(&env);
        let t = task();
        let out = control_benchmark(&[("lin", &env, &model, &t)]).unwrap();
        let o = &out[0];
        assert_eq!(o.status, "ok");
        let run = o.run.as_ref().unwrap();
        assert_eq!(o.total_cost, run.stage_costs.iter().sum::<f64>());
        assert!(o.settled(&env, 0.05));
        assert_eq!(costs_csv(&out).lines().nth(1).unwrap(), format!("lin,damping_pendulum,{}", o.total_cost));
    }

    #[test]
    fn unstabilizable_model_is_out_of_range() {
        let env = Environment::by_name("damping_pendulum").unwrap();
        let mut model = linearized_pendulum(&env);
        model.a = Tensor::eye(2).scale(1.1);
        model.b = Tensor::zeros(2, 1);
        let t = task();
        let out = control_benchmark(&[("bad", &env, &model, &t)]).unwrap();
        assert!(out[0].total_cost.is_infinite() && out[0].status.starts_with("unstabilizable"));
        assert!(costs_csv(&out).ends_with("bad,damping_pendulum,inf\n"));
    }
}

//! Infinite-horizon LQR in the lifted space and the closed-loop runner that
//! drives a true environment with a learned lifted linear model.

mod lqr;

pub use lqr::{
    lift_cost, lqr_gain, lqr_gain_with, min_eigenvalue, solve_dare, DareSolution, LqrGain,
    DARE_MAX_ITER, DARE_TOL,
};

use std::fmt::Write as _;

use crate::baselines::KrbfModel;
use crate::diffcore::linalg::{cholesky, symmetric_eigenvalues};
use crate::diffcore::Tensor;
use crate::dynamics::{Dynamics, Environment};
use crate::error::{Error, Result};
use crate::koopman::{KoopmanModel, Variant};
use crate::modelfile::SavedModel;

/// Magnitude below which a DKAC control gain is pushed out to keep the
/// inverse finite.
pub const MIN_GAIN: f64 = 1e-3;

/// A model of the form `z' = A z + B û` with an explicit lifting and a way
/// back from `û` to the physical control.
pub trait LiftedLinearModel {
    fn state_dim(&self) -> usize;
    fn control_dim(&self) -> usize;
    fn lifted_dim(&self) -> usize;
    fn a_matrix(&self) -> &Tensor;
    fn b_matrix(&self) -> &Tensor;
    fn lift(&self, x: &[f64]) -> Result<Vec<f64>>;
    /// Physical control whose encoding at `x` is `u_hat`, before clamping.
    fn invert_control(&self, x: &[f64], u_hat: &[f64]) -> Result<Vec<f64>>;
}

impl LiftedLinearModel for KoopmanModel {
    fn state_dim(&self) -> usize {
        self.state_dim
    }

    fn control_dim(&self) -> usize {
        self.control_dim
    }

    fn lifted_dim(&self) -> usize {
        KoopmanModel::lifted_dim(self)
    }

    fn a_matrix(&self) -> &Tensor {
        &self.a
    }

    fn b_matrix(&self) -> &Tensor {
        &self.b
    }

    fn lift(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.embed(x)
    }

    fn invert_control(&self, x: &[f64], u_hat: &[f64]) -> Result<Vec<f64>> {
        if u_hat.len() != self.control_dim {
            return Err(Error::dim("recover_control", "encoded control has the wrong length"));
        }
        match self.variant {
            Variant::Dkuc => Ok(u_hat.to_vec()),
            Variant::Dkac => {
                let gain = self.control_gain(x)?;
                Ok(u_hat
                    .iter()
                    .zip(&gain)
                    .map(|(uh, &g)| {
                        let g = if g.abs() >= MIN_GAIN {
                            g
                        } else if g < 0.0 {
                            -MIN_GAIN
                        } else {
                            MIN_GAIN
                        };
                        uh / g
                    })
                    .collect())
            }
            Variant::Dkn => Err(Error::UnsupportedVariant(
                "dkn encodes the control non-invertibly; lifted LQR supports dkuc and dkac".into(),
            )),
        }
    }
}

impl LiftedLinearModel for KrbfModel {
    fn state_dim(&self) -> usize {
        KrbfModel::state_dim(self)
    }

    fn control_dim(&self) -> usize {
        self.control_dim
    }

    fn lifted_dim(&self) -> usize {
        KrbfModel::lifted_dim(self)
    }

    fn a_matrix(&self) -> &Tensor {
        &self.a
    }

    fn b_matrix(&self) -> &Tensor {
        &self.b
    }

    fn lift(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.lift.lift(x)
    }

    fn invert_control(&self, _x: &[f64], u_hat: &[f64]) -> Result<Vec<f64>> {
        Ok(u_hat.to_vec())
    }
}

/// The lifted linear form of a saved model, for the models that have one
/// with an invertible control encoding.
pub fn lifted_model(model: &SavedModel) -> Result<&(dyn LiftedLinearModel + Sync)> {
    match model {
        SavedModel::Koopman(m) if m.variant == Variant::Dkn => Err(Error::UnsupportedVariant(
            "dkn encodes the control non-invertibly; lifted LQR supports dkuc and dkac".into(),
        )),
        SavedModel::Koopman(m) => Ok(m),
        SavedModel::Krbf(m) => Ok(m),
        SavedModel::Kdnn(_) => Err(Error::UnsupportedVariant(
            "kdnn predicts the state directly and has no lifted linear form".into(),
        )),
    }
}

/// Recover the physical control from the lifted-space optimum and clamp it to
/// `bounds`.
pub fn recover_control(
    model: &dyn LiftedLinearModel,
    x: &[f64],
    u_hat: &[f64],
    bounds: &[(f64, f64)],
) -> Result<Vec<f64>> {
    let mut u = model.invert_control(x, u_hat)?;
    for (ui, &(lo, hi)) in u.iter_mut().zip(bounds) {
        *ui = ui.clamp(lo, hi);
    }
    Ok(u)
}

/// Desired physical state per time step.
#[derive(Clone, Debug, PartialEq)]
pub enum Reference {
    Constant(Vec<f64>),
    /// `[T, n]`; the last row is held beyond the end.
    Trajectory(Tensor),
}

impl Reference {
    pub fn at(&self, t: usize) -> &[f64] {
        match self {
            Reference::Constant(x) => x,
            Reference::Trajectory(xs) => xs.row_slice(t.min(xs.rows() - 1)),
        }
    }

    fn width(&self) -> usize {
        match self {
            Reference::Constant(x) => x.len(),
            Reference::Trajectory(xs) => xs.cols(),
        }
    }
}

/// Quadratic tracking objective on the physical state.
#[derive(Clone, Debug, PartialEq)]
pub struct LqrProblem {
    /// `[n, n]`, symmetric positive semidefinite.
    pub q: Tensor,
    /// `[m, m]`, symmetric positive definite.
    pub r: Tensor,
    pub reference: Reference,
}

impl LqrProblem {
    pub fn validate(&self, n: usize, m: usize) -> Result<()> {
        if self.q.dims() != (n, n) || self.r.dims() != (m, m) || self.reference.width() != n {
            return Err(Error::dim(
                "LqrProblem",
                format!(
                    "Q {:?}, R {:?}, reference width {} for n = {n}, m = {m}",
                    self.q.shape(),
                    self.r.shape(),
                    self.reference.width()
                ),
            ));
        }
        if self.q.max_abs_diff(&self.q.transpose()) > 1e-12 * self.q.max_abs().max(1.0) {
            return Err(Error::Contract("Q must be symmetric".into()));
        }
        let floor = -1e-12 * self.q.max_abs().max(1.0);
        if symmetric_eigenvalues(&self.q).iter().any(|&e| e < floor) {
            return Err(Error::Contract("Q must be positive semidefinite".into()));
        }
        cholesky(&self.r).map_err(|_| Error::Contract("R must be symmetric positive definite".into()))?;
        Ok(())
    }

    /// `(x − x_des)ᵀ Q (x − x_des) + uᵀ R u`.
    pub fn stage_cost(&self, x: &[f64], x_des: &[f64], u: &[f64]) -> f64 {
        let e: Vec<f64> = x.iter().zip(x_des).map(|(a, b)| a - b).collect();
        quad(&self.q, &e) + quad(&self.r, u)
    }
}

fn quad(m: &Tensor, v: &[f64]) -> f64 {
    let n = v.len();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            s += v[i] * m.get(i, j) * v[j];
        }
    }
    s
}

/// Realized closed-loop trajectory.
#[derive(Clone, Debug, PartialEq)]
pub struct RunResult {
    /// `T'+1` states including the initial and the final one, where `T' = T`
    /// unless the run diverged.
    pub states: Vec<Vec<f64>>,
    /// `T'` applied controls.
    pub controls: Vec<Vec<f64>>,
    pub stage_costs: Vec<f64>,
    /// Sum of stage costs, or `+∞` after a divergence.
    pub total_cost: f64,
    pub diverged: bool,
}

impl RunResult {
    pub fn final_state(&self) -> &[f64] {
        self.states.last().expect("a run holds its initial state")
    }

    /// `t, x…, u…, stage_cost, cumulative_cost`, one row per applied control.
    pub fn to_csv(&self) -> String {
        let n = self.states[0].len();
        let m = self.controls.first().map_or(0, Vec::len);
        let mut out = String::from("t");
        for i in 0..n {
            write!(out, ",x{i}").unwrap();
        }
        for j in 0..m {
            write!(out, ",u{j}").unwrap();
        }
        out.push_str(",stage_cost,cumulative_cost\n");
        let mut cumulative = 0.0;
        for (t, stage) in self.stage_costs.iter().enumerate() {
            cumulative += stage;
            write!(out, "{t}").unwrap();
            for v in self.states[t].iter().chain(&self.controls[t]) {
                write!(out, ",{v}").unwrap();
            }
            writeln!(out, ",{stage},{cumulative}").unwrap();
        }
        out
    }
}

/// Compute the gain once and run the closed loop for `steps` steps.
pub fn run_control(
    env: &Environment,
    model: &dyn LiftedLinearModel,
    problem: &LqrProblem,
    x0: &[f64],
    steps: usize,
) -> Result<(LqrGain, RunResult)> {
    let gain = gain_for(model, problem)?;
    let run = run_with_gain(env, model, problem, &gain, x0, steps)?;
    Ok((gain, run))
}

/// LQR gain of `model` for the lifted objective of `problem`.
pub fn gain_for(model: &dyn LiftedLinearModel, problem: &LqrProblem) -> Result<LqrGain> {
    gain_for_with(model, problem, DARE_TOL, DARE_MAX_ITER)
}

/// [`gain_for`] with an explicit Riccati tolerance and iteration cap.
pub fn gain_for_with(
    model: &dyn LiftedLinearModel,
    problem: &LqrProblem,
    tol: f64,
    max_iter: usize,
) -> Result<LqrGain> {
    problem.validate(model.state_dim(), model.control_dim())?;
    let q_hat = lift_cost(&problem.q, model.lifted_dim())?;
    lqr_gain_with(model.a_matrix(), model.b_matrix(), &q_hat, &problem.r, tol, max_iter)
}

/// Closed loop `embed → û = −K(z − z_des) → recover → step`.
pub fn run_with_gain(
    env: &Environment,
    model: &dyn LiftedLinearModel,
    problem: &LqrProblem,
    gain: &LqrGain,
    x0: &[f64],
    steps: usize,
) -> Result<RunResult> {
    let (n, m) = (env.state_dim(), env.control_dim());
    if model.state_dim() != n || model.control_dim() != m || x0.len() != n {
        return Err(Error::dim("run_control", "model, environment and initial state disagree"));
    }
    problem.validate(n, m)?;
    let bounds = env.spec().control_bounds.clone();
    let mut x = x0.to_vec();
    let mut states = vec![x.clone()];
    let mut controls = Vec::with_capacity(steps);
    let mut stage_costs = Vec::with_capacity(steps);
    let mut diverged = false;
    for t in 0..steps {
        let x_des = problem.reference.at(t);
        let z = model.lift(&x)?;
        let z_des = model.lift(x_des)?;
        let err: Vec<f64> = z.iter().zip(&z_des).map(|(a, b)| a - b).collect();
        let u_hat: Vec<f64> = (0..m)
            .map(|i| -gain.k.row_slice(i).iter().zip(&err).map(|(k, e)| k * e).sum::<f64>())
            .collect();
        let u = recover_control(model, &x, &u_hat, &bounds)?;
        let stage = problem.stage_cost(&x, x_des, &u);
        match env.step(&x, &u) {
            Ok(next) if stage.is_finite() => {
                controls.push(u);
                stage_costs.push(stage);
                states.push(next.clone());
                x = next;
            }
            Ok(_) | Err(Error::Integration { .. }) => {
                diverged = true;
                break;
            }
            Err(e) => return Err(e),
        }
    }
    let total_cost = if diverged {
        f64::INFINITY
    } else {
        stage_costs.iter().sum()
    };
    Ok(RunResult {
        states,
        controls,
        stage_costs,
        total_cost,
        diverged,
    })
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::diffcore::{Activation, Mlp};
    use crate::koopman::Architecture;

    fn model(variant: Variant, seed: u64) -> KoopmanModel {
        let arch = Architecture {
            variant,
            state_dim: 2,
            control_dim: 1,
            embed_dim: 3,
            hidden: vec![8],
            activation: Activation::Tanh,
        };
        KoopmanModel::new(&arch, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
    }

    fn constant_gain(value: f64) -> Mlp {
        let mut net = Mlp::zeros(&[2, 8, 1], Activation::Tanh).unwrap();
        net.layers_mut()[1].bias = Tensor::scalar(value);
        net
    }

    const BOUNDS: [(f64, f64); 1] = [(-8.0, 8.0)];

    #[test]
    fn dkuc_recovery_is_identity() {
        let m = model(Variant::Dkuc, 1);
        assert_eq!(recover_control(&m, &[0.1, 0.2], &[3.5], &BOUNDS).unwrap(), vec![3.5]);
        assert_eq!(recover_control(&m, &[0.1, 0.2], &[30.0], &BOUNDS).unwrap(), vec![8.0]);
    }

    #[test]
    fn dkac_recovery_divides_and_clamps() {
        let mut m = model(Variant::Dkac, 2);
        m.control_net = Some(constant_gain(2.0));
        assert_eq!(recover_control(&m, &[0.0, 0.0], &[6.0], &BOUNDS).unwrap(), vec![3.0]);
        m.control_net = Some(constant_gain(1e-9));
        assert_eq!(m.invert_control(&[0.0, 0.0], &[1.0]).unwrap(), vec![1000.0]);
        assert_eq!(recover_control(&m, &[0.0, 0.0], &[1.0], &BOUNDS).unwrap(), vec![8.0]);
        m.control_net = Some(constant_gain(-1e-9));
        assert_eq!(m.invert_control(&[0.0, 0.0], &[1.0]).unwrap(), vec![-1000.0]);
    }

    #[test]
    fn dkn_recovery_is_unsupported() {
        let m = model(Variant::Dkn, 3);
        assert!(matches!(
            recover_control(&m, &[0.0, 0.0], &[1.0], &BOUNDS),
            Err(Error::UnsupportedVariant(_))
        ));
    }

    #[test]
    fn encode_then_recover_round_trips() {
        let m = model(Variant::Dkac, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let x = [rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)];
            let u = [rng.gen_range(-5.0..5.0)];
            if m.control_gain(&x).unwrap()[0].abs() < MIN_GAIN {
                continue;
            }
            let uh = m.encode_control(&x, &u).unwrap();
            let back = m.invert_control(&x, &uh).unwrap();
            assert!((back[0] - u[0]).abs() < 1e-9);
        }
    }

    #[test]
    fn lifted_quadratic_matches_physical() {
        let q = Tensor::from_rows(&[vec![2.0, 0.3], vec![0.3, 1.0]]).unwrap();
        let qh = lift_cost(&q, 6).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..50 {
            let z: Vec<f64> = (0..6).map(|_| rng.gen_range(-2.0..2.0)).collect();
            assert!((quad(&qh, &z) - quad(&q, &z[..2])).abs() < 1e-12);
        }
    }

    #[test]
    fn starting_at_goal_costs_nothing() {
        let env = Environment::by_name("damping_pendulum").unwrap();
        let m = model(Variant::Dkuc, 7);
        let mut stable = m.clone();
        stable.a = Tensor::eye(5).scale(0.9);
        let problem = LqrProblem {
            q: Tensor::eye(2),
            r: Tensor::scalar(1.0),
            reference: Reference::Constant(vec![0.0, 0.0]),
        };
        let (_, run) = run_control(&env, &stable, &problem, &[0.0, 0.0], 50).unwrap();
        assert!(run.controls.iter().flatten().all(|u| u.abs() < 1e-12));
        assert!(run.total_cost < 1e-20);
        assert_eq!(run.states.len(), 51);
        let csv = run.to_csv();
        assert_eq!(csv.lines().count(), 51);
        assert!(csv.starts_with("t,x0,x1,u0,stage_cost,cumulative_cost\n"));
    }

    #[test]
    fn invalid_problem_rejected() {
        let bad_q = LqrProblem {
            q: Tensor::diag(&[1.0, -1.0]),
            r: Tensor::scalar(1.0),
            reference: Reference::Constant(vec![0.0, 0.0]),
        };
        assert!(bad_q.validate(2, 1).is_err());
        let bad_r = LqrProblem {
            r: Tensor::scalar(0.0),
            q: Tensor::eye(2),
            ..bad_q.clone()
        };
        assert!(bad_r.validate(2, 1).is_err());
    }

    #[test]
    fn total_is_sum_of_stage_costs() {
        let env = Environment::by_name("damping_pendulum").unwrap();
        let mut m = model(Variant::Dkuc, 8);
        m.a = Tensor::eye(5).scale(0.95);
        let problem = LqrProblem {
            q: Tensor::eye(2),
            r: Tensor::scalar(0.1),
            reference: Reference::Constant(vec![0.0, 0.0]),
        };
        let (_, run) = run_control(&env, &m, &problem, &[0.5, 0.0], 40).unwrap();
        let sum: f64 = run.stage_costs.iter().sum();
        assert_eq!(run.total_cost, sum);
    }
}

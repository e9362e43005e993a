use std::f64::consts::{FRAC_PI_6, PI};

use crate::control::Reference;
use crate::dynamics::Environment;
use crate::error::{Error, Result};
use crate::eval::ControlTask;

/// Riccati iteration cap for the standard tasks. Learned models have modes
/// close to the unit circle, where the fixed-point iteration converges
/// slowly.
pub const TASK_DARE_MAX_ITER: usize = 1_000_000;

/// The regulation task each environment is benchmarked on.
pub fn standard_task(env: &Environment) -> Result<ControlTask> {
    let task = |x0: &[f64], goal: &[f64], q: &[f64], r: f64, steps: usize| ControlTask {
        x0: x0.to_vec(),
        reference: Reference::Constant(goal.to_vec()),
        q_diag: q.to_vec(),
        r_scale: r,
        steps,
        dare_max_iter: TASK_DARE_MAX_ITER,
    };
    Ok(match env.name() {
        "damping_pendulum" => task(&[1.0, 0.0], &[0.0, 0.0], &[1.0, 0.1], 0.1, 500),
        "pendulum" => task(&[2.5, 0.0], &[PI, 0.0], &[1.0, 0.1], 0.1, 500),
        "mountaincar" => task(&[-0.9, 0.0], &[-FRAC_PI_6, 0.0], &[1.0, 1.0], 0.1, 500),
        "cartpole" => task(&[0.5, 0.0, 0.1, 0.0], &[0.0; 4], &[1.0, 0.1, 1.0, 0.1], 0.1, 500),
        "double_pendulum" => task(&[0.5, -0.3, 0.0, 0.0], &[0.0; 4], &[10.0, 10.0, 1.0, 1.0], 0.1, 500),
        other => return Err(Error::UnknownEnv(other.to_string())),
    })
}

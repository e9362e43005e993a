//! Step every environment under a fixed control and watch the pendulum's energy.

use deep_koopman::dynamics::{Dynamics, Environment, ENV_NAMES};

fn main() {
    for name in ENV_NAMES {
        let env = Environment::by_name(name).unwrap();
        let spec = env.spec();
        let mut x: Vec<f64> = spec.sample_region.iter().map(|(lo, hi)| 0.25 * (lo + hi) + 0.1 * (hi - lo)).collect();
        let u: Vec<f64> = spec.control_bounds.iter().map(|(_, hi)| 0.2 * hi).collect();
        println!("{name}: n={} m={} dt={}", env.state_dim(), env.control_dim(), env.dt());
        println!("  x0  = {x:.3?}");
        for _ in 0..100 {
            x = env.step(&x, &u).unwrap();
        }
        println!("  x100 = {x:.3?}  (u = {u:.2?})");
    }

    // Damping off, no input: RK4 at dt = 0.02 nearly conserves energy.
    let mut env = Environment::by_name("damping_pendulum").unwrap();
    env.set_param("b", 0.0).unwrap();
    let energy = |x: &[f64]| 0.5 * x[1] * x[1] - 9.81 * x[0].cos();
    let mut x = vec![1.0, 0.0];
    let e0 = energy(&x);
    for _ in 0..500 {
        x = env.step(&x, &[0.0]).unwrap();
    }
    println!("frictionless pendulum, 10 s: relative energy drift {:.2e}", ((energy(&x) - e0) / e0).abs());
}

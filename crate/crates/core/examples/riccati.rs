//! Solve discrete Riccati equations: the scalar golden-ratio case and a double integrator.

use deep_koopman::control::{lqr_gain, solve_dare, DARE_MAX_ITER, DARE_TOL};
use deep_koopman::diffcore::Tensor;

fn main() {
    // A = B = Q = R = 1: P² = P + 1, so P is the golden ratio and K = 1/φ.
    let one = Tensor::eye(1);
    let sol = solve_dare(&one, &one, &one, &one, DARE_TOL, DARE_MAX_ITER).unwrap();
    let gain = lqr_gain(&one, &one, &one, &one).unwrap();
    println!("scalar: P = {:.9}, K = {:.9} after {} iterations", sol.p.get(0, 0), gain.k.get(0, 0), sol.iterations);

    let dt = 0.1;
    let a = Tensor::from_rows(&[vec![1.0, dt], vec![0.0, 1.0]]).unwrap();
    let b = Tensor::column(&[0.5 * dt * dt, dt]);
    let q = Tensor::diag(&[1.0, 0.1]);
    let r = Tensor::diag(&[0.01]);
    let gain = lqr_gain(&a, &b, &q, &r).unwrap();
    println!(
        "double integrator: K = {:.4?}, closed-loop spectral radius {:.4}",
        gain.k.data(),
        gain.closed_loop_radius
    );

    let mut x = vec![1.0, 0.0];
    for t in 0..=60 {
        if t % 15 == 0 {
            println!("  t={t:2}  x = [{:+.4}, {:+.4}]", x[0], x[1]);
        }
        let u = -(gain.k.get(0, 0) * x[0] + gain.k.get(0, 1) * x[1]);
        x = vec![x[0] + dt * x[1] + 0.5 * dt * dt * u, x[1] + dt * u];
    }
}

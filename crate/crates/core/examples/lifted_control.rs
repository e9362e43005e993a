//! Train a DKAC model and steer the damping pendulum to the origin with lifted LQR.

use deep_koopman::cli::standard_task;
use deep_koopman::control::lifted_model;
use deep_koopman::datagen::collect;
use deep_koopman::dynamics::Environment;
use deep_koopman::eval::{control_benchmark, train_method, Method, MethodConfig};

fn main() {
    let env = Environment::by_name("damping_pendulum").unwrap();
    let train = collect(&env, 2000, 15, 11).unwrap();

    let mut config = MethodConfig::desk();
    config.embed_dim = 8;
    config.a_init = 0.0;
    config.train.epochs = 30;
    let trained = train_method(Method::Dkac, &env, &train, &config, 0).unwrap();
    let model = lifted_model(&trained.model).unwrap();

    let task = standard_task(&env).unwrap();
    println!("x0 = {:?}, Q = diag{:?}, R = {} I, {} steps", task.x0, task.q_diag, task.r_scale, task.steps);
    let outcome = control_benchmark(&[("dkac", &env, model, &task)]).unwrap().remove(0);
    println!(
        "status {}, total cost {:.2}, DARE iterations {}",
        outcome.status, outcome.total_cost, outcome.dare_iterations
    );
    println!("max final error {:.2e}, settled: {}", outcome.final_error.iter().fold(0.0f64, |a, b| a.max(b.abs())), outcome.settled(&env, 0.05));

    if let Some(run) = &outcome.run {
        for t in (0..run.controls.len()).step_by(50) {
            println!("  t={t:3}  x = {:+.3?}  u = {:+.3?}", run.states[t], run.controls[t]);
        }
    }
}

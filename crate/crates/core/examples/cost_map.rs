//! Closed-loop cost from a grid of initial damping-pendulum states.

use deep_koopman::cli::standard_task;
use deep_koopman::control::lifted_model;
use deep_koopman::datagen::collect;
use deep_koopman::dynamics::Environment;
use deep_koopman::eval::{cost_sweep, train_method, Method, MethodConfig, SweepGrid};

fn main() {
    let env = Environment::by_name("damping_pendulum").unwrap();
    let train = collect(&env, 2000, 15, 11).unwrap();
    let mut config = MethodConfig::desk();
    config.embed_dim = 8;
    config.a_init = 0.0;
    config.train.epochs = 30;
    let task = standard_task(&env).unwrap();
    let grid = SweepGrid { resolution: 9, extent: 4.0 };

    for method in [Method::Dkuc, Method::Dkac] {
        let trained = train_method(method, &env, &train, &config, 0).unwrap();
        let map = cost_sweep(&env, lifted_model(&trained.model).unwrap(), &task, grid).unwrap();
        println!("{method}: rows θ from -4 to 4, columns θ̇ from -4 to 4 (· marks divergence)");
        for i in 0..map.resolution() {
            let row: Vec<String> = (0..map.resolution())
                .map(|j| {
                    let c = map.cost(i, j);
                    if c.is_finite() { format!("{c:8.0}") } else { format!("{:>8}", "·") }
                })
                .collect();
            println!("  {:+.1} {}", map.thetas[i], row.join(""));
        }
        println!("  symmetry gap {:.3}\n", map.symmetry_gap());
    }
}

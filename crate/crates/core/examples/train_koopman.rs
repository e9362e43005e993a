//! Train DKUC, DKAC and DKN on the damping pendulum and compare their 15-step errors.
//!
//! Pass a trajectory count and epoch count to scale up, e.g.
//! `cargo run --release --example train_koopman -- 5000 100`.

use deep_koopman::datagen::collect;
use deep_koopman::dynamics::Environment;
use deep_koopman::eval::{prediction_benchmark, train_method, Method, MethodConfig, Predictor};

fn main() {
    let args: Vec<usize> = std::env::args().skip(1).map(|a| a.parse().unwrap()).collect();
    let n_traj = args.first().copied().unwrap_or(1000);
    let epochs = args.get(1).copied().unwrap_or(15);

    let env = Environment::by_name("damping_pendulum").unwrap();
    let train = collect(&env, n_traj, 15, 1).unwrap();
    let test = collect(&env, 200, 30, 2).unwrap();

    let mut config = MethodConfig::desk();
    config.hidden = vec![32, 32];
    config.train.epochs = epochs;

    let mut models = Vec::new();
    for method in [Method::Dkuc, Method::Dkac, Method::Dkn] {
        let trained = train_method(method, &env, &train, &config, 0).unwrap();
        let report = trained.report.as_ref().unwrap();
        println!(
            "{method}: {} gradient steps in {:.1} s, final train loss {:.3e}",
            report.gradient_steps,
            report.seconds,
            report.final_train_loss()
        );
        models.push((method, trained.model));
    }

    let entries: Vec<(&str, u64, &(dyn Predictor + Sync))> =
        models.iter().map(|(m, model)| (m.name(), 0, model as &(dyn Predictor + Sync))).collect();
    let report = prediction_benchmark(env.name(), &entries, &test, 30).unwrap();
    println!("\nmean state error by step:");
    println!("method      k=1        k=15       k=30");
    for m in &report.methods {
        let e = |k| m.at_step(k).0;
        println!("{:6}  {:.3e}  {:.3e}  {:.3e}", m.method, e(1), e(15), e(30));
    }
}

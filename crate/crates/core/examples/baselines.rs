//! Fit the RBF-lifted linear model and the direct network predictor on the pendulum.

use deep_koopman::baselines::{fit_krbf, KdnnModel};
use deep_koopman::datagen::collect;
use deep_koopman::diffcore::Activation;
use deep_koopman::dynamics::Environment;
use deep_koopman::eval::{prediction_benchmark, Oracle, Predictor};
use deep_koopman::koopman::{fit, TrainConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() {
    let env = Environment::by_name("pendulum").unwrap();
    let train = collect(&env, 1000, 15, 3).unwrap();
    let test = collect(&env, 200, 15, 4).unwrap();

    let krbf = fit_krbf(&train, 100, None, 0).unwrap();
    println!("krbf: {} centers, sigma {:.3}", krbf.lift.centers().len(), krbf.lift.sigma());

    let mut kdnn = KdnnModel::new(2, 1, &[64, 64], Activation::Tanh, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
    let config = TrainConfig {
        epochs: 20,
        ..TrainConfig::default()
    };
    let report = fit(&mut kdnn, &train, &config).unwrap();
    println!("kdnn: final train loss {:.3e}", report.final_train_loss());

    let oracle = Oracle(env.clone());
    let entries: [(&str, u64, &(dyn Predictor + Sync)); 3] =
        [("krbf", 0, &krbf), ("kdnn", 0, &kdnn), ("oracle", 0, &oracle)];
    let report = prediction_benchmark(env.name(), &entries, &test, 15).unwrap();
    for m in &report.methods {
        let (mean, std) = m.at_step(15);
        println!("{:6} step-15 error {mean:.3e} ± {std:.1e}", m.method);
    }
}

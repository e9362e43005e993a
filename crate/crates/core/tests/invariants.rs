mod common;

use common::{model, perturb_a, random_matrix, rng};
use deep_koopman::baselines::{fit_krbf, KdnnModel};
use deep_koopman::control::{recover_control, MIN_GAIN};
use deep_koopman::datagen::{collect, Dataset};
use deep_koopman::diffcore::{Activation, Tensor};
use deep_koopman::dynamics::{Dynamics, Environment, ENV_NAMES};
use deep_koopman::koopman::{fit, TrainConfig, Variant};
use deep_koopman::modelfile::SavedModel;
use proptest::prelude::*;
use rand::Rng;

fn variant() -> impl Strategy<Value = Variant> {
    prop_oneof![Just(Variant::Dkuc), Just(Variant::Dkac), Just(Variant::Dkn)]
}

fn env_name() -> impl Strategy<Value = &'static str> {
    prop::sample::select(ENV_NAMES.to_vec())
}

fn state(n: usize, scale: f64) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-scale..scale, n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn recovery_identity_is_exact(
        variant in variant(),
        d in 0usize..6,
        seed in any::<u64>(),
        x in state(3, 50.0),
    ) {
        let m = model(variant, 3, 2, d, &[7], seed);
        let z = m.embed(&x).unwrap();
        prop_assert_eq!(m.recover_state(&z).unwrap(), x);
    }

    #[test]
    fn encode_then_recover_round_trips(
        dkac in any::<bool>(),
        seed in any::<u64>(),
        x in state(2, 3.0),
        u in state(2, 5.0),
    ) {
        let variant = if dkac { Variant::Dkac } else { Variant::Dkuc };
        let m = model(variant, 2, 2, 3, &[6], seed);
        if dkac {
            let gain = m.control_gain(&x).unwrap();
            prop_assume!(gain.iter().all(|g| g.abs() >= MIN_GAIN));
        }
        let u_hat = m.encode_control(&x, &u).unwrap();
        let wide = [(-1e9, 1e9); 2];
        let back = recover_control(&m, &x, &u_hat, &wide).unwrap();
        for (a, b) in back.iter().zip(&u) {
            prop_assert!((a - b).abs() <= 1e-9 * b.abs().max(1.0), "{a} vs {b}");
        }
    }

    #[test]
    fn lifted_rollout_is_linear_in_the_initial_state(
        variant in variant(),
        d in 0usize..5,
        seed in any::<u64>(),
        alpha in -3.0f64..3.0,
        beta in -3.0f64..3.0,
    ) {
        let mut m = model(variant, 2, 1, d, &[5], seed);
        perturb_a(&mut m, 0.05, seed ^ 7);
        let l = m.lifted_dim();
        let mut r = rng(seed ^ 8);
        let encoded = random_matrix(15, 1, 1.0, &mut r);
        let z1: Vec<f64> = (0..l).map(|_| r.gen_range(-1.0..1.0)).collect();
        let z2: Vec<f64> = (0..l).map(|_| r.gen_range(-1.0..1.0)).collect();
        let mix: Vec<f64> = z1.iter().zip(&z2).map(|(a, b)| alpha * a + beta * b).collect();
        // With û fixed the rollout is affine; the zero start isolates the
        // forced response.
        let forced = m.rollout_lifted(&vec![0.0; l], &encoded).unwrap();
        let free = |z: &[f64]| m.rollout_lifted(z, &encoded).unwrap().sub(&forced).unwrap();
        let lhs = free(&mix);
        let rhs = free(&z1).scale(alpha).add(&free(&z2).scale(beta)).unwrap();
        prop_assert!(lhs.max_abs_diff(&rhs) < 1e-10, "gap {}", lhs.max_abs_diff(&rhs));
    }

    #[test]
    fn datasets_are_self_consistent(name in env_name(), seed in any::<u64>()) {
        let env = Environment::by_name(name).unwrap();
        let data = collect(&env, 3, 15, seed).unwrap();
        for t in &data.trajectories {
            for k in 0..t.horizon() {
                let next = env.step(t.states.row_slice(k), t.controls.row_slice(k)).unwrap();
                for (a, b) in next.iter().zip(t.states.row_slice(k + 1)) {
                    prop_assert!((a - b).abs() <= 1e-12, "{name} step {k}: {a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn larger_collections_extend_smaller_ones(name in env_name(), small in 1usize..5, extra in 1usize..4, seed in any::<u64>()) {
        let env = Environment::by_name(name).unwrap();
        let a = collect(&env, small, 6, seed).unwrap();
        let b = collect(&env, small + extra, 6, seed).unwrap();
        prop_assert_eq!(&a.trajectories[..], &b.trajectories[..small]);
    }

    #[test]
    fn dataset_files_round_trip_bit_exact(name in env_name(), n in 1usize..6, seed in any::<u64>()) {
        let env = Environment::by_name(name).unwrap();
        let data = collect(&env, n, 4, seed).unwrap();
        let bytes = data.to_bytes().unwrap();
        let back = Dataset::from_bytes(&bytes).unwrap();
        prop_assert_eq!(&back, &data);
        prop_assert_eq!(back.to_bytes().unwrap(), bytes);
    }

    #[test]
    fn model_files_round_trip_bit_exact(variant in variant(), d in 0usize..4, seed in any::<u64>(), kind in 0u8..3) {
        let saved = match kind {
            0 => SavedModel::Koopman(model(variant, 2, 1, d, &[4, 3], seed)),
            1 => {
                let env = Environment::by_name("damping_pendulum").unwrap();
                SavedModel::Krbf(fit_krbf(&collect(&env, 8, 3, seed).unwrap(), d, None, seed).unwrap())
            }
            _ => SavedModel::Kdnn(KdnnModel::new(2, 1, &[5], Activation::Relu, &mut rng(seed)).unwrap()),
        };
        let bytes = saved.to_bytes();
        let back = SavedModel::from_bytes(&bytes).unwrap();
        prop_assert_eq!(&back, &saved);
        prop_assert_eq!(back.to_bytes(), bytes);
    }

    #[test]
    fn stepping_is_deterministic(name in env_name(), seed in any::<u64>()) {
        let env = Environment::by_name(name).unwrap();
        let mut r = rng(seed);
        let x: Vec<f64> = env.spec().sample_region.iter().map(|&(lo, hi)| r.gen_range(lo..hi)).collect();
        let u: Vec<f64> = env.spec().control_bounds.iter().map(|&(lo, hi)| r.gen_range(lo..hi)).collect();
        prop_assert_eq!(env.step(&x, &u).unwrap(), env.step(&x, &u).unwrap());
    }
}

#[test]
fn krbf_without_centers_matches_one_step_dkuc_without_embedding() {
    let env = Environment::by_name("damping_pendulum").unwrap();
    let data = collect(&env, 400, 1, 11).unwrap();
    let krbf = fit_krbf(&data, 0, None, 0).unwrap();
    let mut dkuc = model(Variant::Dkuc, 2, 1, 0, &[4], 12);
    let config = TrainConfig {
        epochs: 4000,
        batch_size: data.len(),
        learning_rate: 1e-2,
        horizon: 1,
        gamma: 1.0,
        validation_fraction: 0.0,
        lr_decay: 0.997,
        ..TrainConfig::default()
    };
    fit(&mut dkuc, &data, &config).unwrap();
    let gap = dkuc.a.max_abs_diff(&krbf.a).max(dkuc.b.max_abs_diff(&krbf.b));
    assert!(gap < 1e-6, "A gap {}, B gap {}", dkuc.a.max_abs_diff(&krbf.a), dkuc.b.max_abs_diff(&krbf.b));
    let x = Tensor::row(&[0.3, -0.2]);
    assert_eq!(krbf.lift.lift(x.data()).unwrap(), x.data());
}

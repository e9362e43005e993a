mod common;

use common::{kstep_gradient_check, model, perturb_a, random_batch, random_matrix, relative_error, rng};
use deep_koopman::baselines::KdnnModel;
use deep_koopman::diffcore::{Activation, AdamConfig, AdamState, Graph, Mlp, Tensor};
use deep_koopman::koopman::{LossOptions, Variant};
use proptest::prelude::*;

fn variant() -> impl Strategy<Value = Variant> {
    prop_oneof![Just(Variant::Dkuc), Just(Variant::Dkac), Just(Variant::Dkn)]
}

/// Reverse-mode gradient of `Σ (mlp(x) − y)²` against central differences,
/// checked on every parameter entry.
fn mlp_gradient_error(mlp: &Mlp, x: &Tensor, y: &Tensor) -> f64 {
    let mut g = Graph::new();
    let vars = mlp.bind(&mut g).unwrap();
    let xin = g.input(x.clone()).unwrap();
    let target = g.input(y.clone()).unwrap();
    let out = vars.forward(&mut g, xin).unwrap();
    let diff = g.sub(out, target).unwrap();
    let sq = g.square(diff);
    let loss = g.sum(sq);
    g.forward().unwrap();
    let grads = g.backward(loss).unwrap();
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    let eval = |m: &Mlp| {
        let p = m.forward(x).unwrap();
        p.sub(y).unwrap().data().iter().map(|v| v * v).sum::<f64>()
    };
    for (pi, &var) in vars.vars().iter().enumerate() {
        let analytic = grads.get(var).unwrap();
        for k in 0..analytic.len() {
            let mut shifted = mlp.clone();
            shifted.params_mut()[pi].data_mut()[k] += h;
            let plus = eval(&shifted);
            shifted.params_mut()[pi].data_mut()[k] -= 2.0 * h;
            let minus = eval(&shifted);
            worst = worst.max(relative_error(analytic.data()[k], (plus - minus) / (2.0 * h), 1e-7));
        }
    }
    worst
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn mlp_gradients_match_central_differences(
        widths in prop::collection::vec(1usize..7, 2..5),
        batch in 1usize..5,
        seed in any::<u64>(),
    ) {
        let mut r = rng(seed);
        let mlp = Mlp::new(&widths, Activation::Tanh, &mut r).unwrap();
        let x = random_matrix(batch, widths[0], 1.5, &mut r);
        let y = random_matrix(batch, *widths.last().unwrap(), 1.0, &mut r);
        let err = mlp_gradient_error(&mlp, &x, &y);
        prop_assert!(err < 1e-4, "relative error {err}");
    }

    #[test]
    fn koopman_rollout_gradients_match_central_differences(
        variant in variant(),
        d in 0usize..4,
        seed in any::<u64>(),
    ) {
        let mut m = model(variant, 2, 1, d, &[5, 5], seed);
        perturb_a(&mut m, 0.05, seed ^ 1);
        let batch = random_batch(3, 15, 2, 1, seed ^ 2);
        let err = kstep_gradient_check(&m, &batch, &LossOptions::new(15, 0.8), 60, 1e-5, seed ^ 3);
        prop_assert!(err < 1e-4, "{variant:?} d={d}: relative error {err}");
    }

    #[test]
    fn kdnn_rollout_gradients_match_central_differences(seed in any::<u64>()) {
        let m = KdnnModel::new(2, 1, &[6, 6], Activation::Tanh, &mut rng(seed)).unwrap();
        let batch = random_batch(3, 15, 2, 1, seed ^ 5);
        let err = kstep_gradient_check(&m, &batch, &LossOptions::new(15, 0.8), 60, 1e-5, seed ^ 6);
        prop_assert!(err < 1e-4, "relative error {err}");
    }

    #[test]
    fn mlp_forward_is_pure(widths in prop::collection::vec(1usize..9, 2..5), seed in any::<u64>()) {
        let mut r = rng(seed);
        let mlp = Mlp::new(&widths, Activation::Relu, &mut r).unwrap();
        let x = random_matrix(4, widths[0], 2.0, &mut r);
        let a = mlp.forward(&x).unwrap();
        let b = mlp.forward(&x).unwrap();
        prop_assert_eq!(a.data(), b.data());
    }

    #[test]
    fn adam_ignores_zero_gradients(steps in 1usize..20, seed in any::<u64>()) {
        let mut r = rng(seed);
        let mut p = random_matrix(3, 4, 1.0, &mut r);
        let before = p.clone();
        let mut adam = AdamState::new(AdamConfig::default(), [&p]);
        for _ in 0..steps {
            adam.step(&mut [&mut p], &[Tensor::zeros(3, 4)]).unwrap();
        }
        prop_assert_eq!(p, before);
    }
}

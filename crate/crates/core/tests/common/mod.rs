#![allow(dead_code)]

use deep_koopman::datagen::{Dataset, StepBatch, Trajectory, UNIFORM_RANDOM_POLICY};
use deep_koopman::diffcore::{Activation, Tensor};
use deep_koopman::koopman::{Architecture, KStepTrainable, KoopmanModel, LossOptions, Variant};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_matrix(rows: usize, cols: usize, scale: f64, rng: &mut impl Rng) -> Tensor {
    Tensor::matrix(rows, cols, (0..rows * cols).map(|_| rng.gen_range(-scale..scale)).collect()).unwrap()
}

pub fn model(variant: Variant, n: usize, m: usize, d: usize, hidden: &[usize], seed: u64) -> KoopmanModel {
    let arch = Architecture {
        variant,
        state_dim: n,
        control_dim: m,
        embed_dim: d,
        hidden: hidden.to_vec(),
        activation: Activation::Tanh,
    };
    KoopmanModel::new(&arch, &mut rng(seed)).unwrap()
}

/// Nudge `A` away from the identity so rollouts exercise every entry.
pub fn perturb_a(model: &mut KoopmanModel, scale: f64, seed: u64) {
    let l = model.lifted_dim();
    let noise = random_matrix(l, l, scale, &mut rng(seed));
    model.a = model.a.add(&noise).unwrap();
}

pub fn random_batch(b: usize, k: usize, n: usize, m: usize, seed: u64) -> StepBatch {
    let mut r = rng(seed);
    StepBatch {
        states: (0..=k).map(|_| random_matrix(b, n, 1.0, &mut r)).collect(),
        controls: (0..k).map(|_| random_matrix(b, m, 1.0, &mut r)).collect(),
    }
}

/// Noiseless rollouts of `x' = A₀x + B₀u` from uniform states and controls.
pub fn linear_dataset(a0: &Tensor, b0: &Tensor, n_traj: usize, horizon: usize, seed: u64) -> Dataset {
    let (n, m) = (a0.rows(), b0.cols());
    let mut r = rng(seed);
    let trajectories = (0..n_traj)
        .map(|_| {
            let mut x: Vec<f64> = (0..n).map(|_| r.gen_range(-1.0..1.0)).collect();
            let mut states = x.clone();
            let mut controls = Vec::with_capacity(horizon * m);
            for _ in 0..horizon {
                let u: Vec<f64> = (0..m).map(|_| r.gen_range(-1.0..1.0)).collect();
                x = (0..n)
                    .map(|i| {
                        (0..n).map(|j| a0.get(i, j) * x[j]).sum::<f64>()
                            + (0..m).map(|j| b0.get(i, j) * u[j]).sum::<f64>()
                    })
                    .collect();
                states.extend(&x);
                controls.extend(u);
            }
            Trajectory {
                states: Tensor::matrix(horizon + 1, n, states).unwrap(),
                controls: Tensor::matrix(horizon, m, controls).unwrap(),
            }
        })
        .collect();
    Dataset {
        env: "linear".into(),
        state_dim: n,
        control_dim: m,
        dt: 1.0,
        horizon,
        seed,
        policy: UNIFORM_RANDOM_POLICY.into(),
        trajectories,
    }
}

/// `|a − f| / max(|a|, |f|, floor)`.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Worst relative error between the reverse-mode gradient of the K-step loss
/// and a central difference with step `h`, over `samples` parameter entries
/// drawn uniformly from all parameters.
pub fn kstep_gradient_check<M: KStepTrainable>(
    model: &M,
    batch: &StepBatch,
    options: &LossOptions,
    samples: usize,
    h: f64,
    seed: u64,
) -> f64 {
    let mut graph = model.build_loss(batch.batch_size(), options).unwrap();
    graph.set_batch(batch).unwrap();
    graph.evaluate().unwrap();
    let grads = graph.gradients().unwrap();
    let base: Vec<Tensor> = KStepTrainable::params(model).into_iter().cloned().collect();
    let sizes: Vec<usize> = base.iter().map(Tensor::len).collect();
    let total: usize = sizes.iter().sum();
    let mut r = rng(seed);
    let mut worst: f64 = 0.0;
    let mut eval = |params: &[Tensor]| {
        let refs: Vec<&Tensor> = params.iter().collect();
        graph.load_params(&refs).unwrap();
        graph.evaluate().unwrap()
    };
    for _ in 0..samples {
        let mut flat = r.gen_range(0..total);
        let mut p = 0;
        while flat >= sizes[p] {
            flat -= sizes[p];
            p += 1;
        }
        let mut shifted = base.clone();
        shifted[p].data_mut()[flat] += h;
        let plus = eval(&shifted);
        shifted[p].data_mut()[flat] -= 2.0 * h;
        let minus = eval(&shifted);
        let numeric = (plus - minus) / (2.0 * h);
        worst = worst.max(relative_error(grads[p].data()[flat], numeric, 1e-7));
    }
    worst
}

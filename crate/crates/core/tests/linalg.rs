mod common;

use common::{random_matrix, rng};
use deep_koopman::diffcore::{least_squares_fit, matmul_t, pinv, Tensor};
use proptest::prelude::*;

fn penrose_residuals(a: &Tensor) -> [f64; 4] {
    let p = pinv(a);
    let ap = a.matmul(&p).unwrap();
    let pa = p.matmul(a).unwrap();
    [
        ap.matmul(a).unwrap().max_abs_diff(a),
        pa.matmul(&p).unwrap().max_abs_diff(&p),
        ap.max_abs_diff(&ap.transpose()),
        pa.max_abs_diff(&pa.transpose()),
    ]
}

/// `Σ_k ‖y_k − K x_k‖²` with samples as rows of `x` and `y`.
fn objective(k: &Tensor, x: &Tensor, y: &Tensor) -> f64 {
    let pred = matmul_t(x, false, k, true).unwrap();
    pred.sub(y).unwrap().data().iter().map(|v| v * v).sum()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn pinv_satisfies_penrose_conditions(rows in 1usize..=64, cols in 1usize..=64, seed in any::<u64>()) {
        let a = random_matrix(rows, cols, 1.0, &mut rng(seed));
        for (i, r) in penrose_residuals(&a).iter().enumerate() {
            prop_assert!(*r < 1e-8, "condition {}: {r}", i + 1);
        }
    }

    #[test]
    fn pinv_of_rank_deficient_matrix(rows in 2usize..=40, cols in 2usize..=40, seed in any::<u64>()) {
        let mut r = rng(seed);
        let rank = rows.min(cols) / 2;
        let a = random_matrix(rows, rank.max(1), 1.0, &mut r)
            .matmul(&random_matrix(rank.max(1), cols, 1.0, &mut r))
            .unwrap();
        for (i, res) in penrose_residuals(&a).iter().enumerate() {
            prop_assert!(*res < 1e-8, "condition {}: {res}", i + 1);
        }
    }

    #[test]
    fn least_squares_fit_is_a_minimum(l in 1usize..8, out in 1usize..6, seed in any::<u64>()) {
        let mut r = rng(seed);
        let samples = 4 * l + 10;
        let x = random_matrix(samples, l, 1.0, &mut r);
        let y = random_matrix(samples, out, 1.0, &mut r);
        let p = matmul_t(&y, true, &x, false).unwrap().scale(1.0 / samples as f64);
        let g = matmul_t(&x, true, &x, false).unwrap().scale(1.0 / samples as f64);
        let k = least_squares_fit(&p, &g).unwrap();
        let best = objective(&k, &x, &y);
        for _ in 0..20 {
            let dir = random_matrix(out, l, 1.0, &mut r);
            let step = dir.scale(1e-3 / dir.frobenius());
            let worse = objective(&k.add(&step).unwrap(), &x, &y);
            prop_assert!(worse >= best - 1e-12 * best.max(1.0), "{worse} < {best}");
        }
    }
}

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::datagen::Dataset;
use crate::diffcore::tensor::gemm_into;
use crate::diffcore::{least_squares_fit, matmul_t, Tensor};
use crate::error::{Error, Result};
use crate::seed::derive_seed;

/// Default number of Gaussian centers.
pub const DEFAULT_CENTERS: usize = 100;

/// State-inclusive Gaussian RBF lifting `[x; exp(−‖x − c_j‖² / 2σ²)]`.
#[derive(Clone, Debug, PartialEq)]
pub struct RbfLift {
    state_dim: usize,
    /// One row per center.
    centers: Vec<Vec<f64>>,
    sigma: f64,
}

impl RbfLift {
    pub fn new(state_dim: usize, centers: Vec<Vec<f64>>, sigma: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::Contract(format!("RBF bandwidth must be positive, got {sigma}")));
        }
        for c in &centers {
            if c.len() != state_dim {
                return Err(Error::dim("RbfLift::new", format!("center of length {}, expected {state_dim}", c.len())));
            }
            if c.iter().any(|v| !v.is_finite()) {
                return Err(Error::Contract("RBF centers must be finite".into()));
            }
        }
        Ok(Self {
            state_dim,
            centers,
            sigma,
        })
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn centers(&self) -> &[Vec<f64>] {
        &self.centers
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// `n + c`.
    pub fn lifted_dim(&self) -> usize {
        self.state_dim + self.centers.len()
    }

    pub fn lift(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.state_dim {
            return Err(Error::dim("rbf_lift", format!("state of length {}, expected {}", x.len(), self.state_dim)));
        }
        let mut out = Vec::with_capacity(self.lifted_dim());
        self.lift_into(x, &mut out);
        Ok(out)
    }

    fn lift_into(&self, x: &[f64], out: &mut Vec<f64>) {
        out.extend_from_slice(x);
        let denom = 2.0 * self.sigma * self.sigma;
        for c in &self.centers {
            let d2: f64 = x.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum();
            out.push((-d2 / denom).exp());
        }
    }

    /// Lift every row of `x: [B, n]`.
    pub fn lift_batch(&self, x: &Tensor) -> Result<Tensor> {
        if x.cols() != self.state_dim {
            return Err(Error::dim("rbf_lift", "batch width mismatch"));
        }
        let mut data = Vec::with_capacity(x.rows() * self.lifted_dim());
        for r in 0..x.rows() {
            self.lift_into(x.row_slice(r), &mut data);
        }
        Tensor::matrix(x.rows(), self.lifted_dim(), data)
    }
}

/// Linear model on the RBF lifting, fitted in closed form.
#[derive(Clone, Debug, PartialEq)]
pub struct KrbfModel {
    pub lift: RbfLift,
    pub control_dim: usize,
    /// `[(n+c), (n+c)]`
    pub a: Tensor,
    /// `[(n+c), m]`
    pub b: Tensor,
}

/// Median of pairwise Euclidean distances between centers; 1 when fewer than
/// two centers exist or every distance is zero.
pub fn median_pairwise_distance(centers: &[Vec<f64>]) -> f64 {
    let mut d = Vec::with_capacity(centers.len() * centers.len().saturating_sub(1) / 2);
    for i in 0..centers.len() {
        for j in i + 1..centers.len() {
            let s: f64 = centers[i].iter().zip(&centers[j]).map(|(a, b)| (a - b) * (a - b)).sum();
            d.push(s.sqrt());
        }
    }
    if d.is_empty() {
        return 1.0;
    }
    d.sort_by(f64::total_cmp);
    let mid = d.len() / 2;
    let median = if d.len() % 2 == 0 { 0.5 * (d[mid - 1] + d[mid]) } else { d[mid] };
    if median > 0.0 {
        median
    } else {
        1.0
    }
}

/// Draw `count` distinct training states uniformly as centers.
pub fn sample_centers(dataset: &Dataset, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let states = dataset.all_states();
    let count = count.min(states.rows());
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "krbf_centers", 0));
    let mut picked = sample(&mut rng, states.rows(), count).into_vec();
    picked.sort_unstable();
    picked.into_iter().map(|r| states.row_slice(r).to_vec()).collect()
}

const CHUNK_ROWS: usize = 4096;

/// Fit `lift(x') ≈ A·lift(x) + B·u` by least squares over every transition.
/// `sigma = None` selects the median heuristic.
pub fn fit_krbf(dataset: &Dataset, centers: usize, sigma: Option<f64>, seed: u64) -> Result<KrbfModel> {
    if dataset.is_empty() {
        return Err(Error::Contract("cannot fit KRBF on an empty dataset".into()));
    }
    let c = sample_centers(dataset, centers, seed);
    let sigma = sigma.unwrap_or_else(|| median_pairwise_distance(&c));
    let lift = RbfLift::new(dataset.state_dim, c, sigma)?;
    fit_with_lift(dataset, lift)
}

/// Least-squares fit for a fixed lifting.
pub fn fit_with_lift(dataset: &Dataset, lift: RbfLift) -> Result<KrbfModel> {
    if dataset.state_dim != lift.state_dim() {
        return Err(Error::dim("fit_krbf", "dataset and lift disagree on the state dimension"));
    }
    let big_n = lift.lifted_dim();
    let m = dataset.control_dim;
    let w = big_n + m;
    let mut gram = vec![0.0; w * w];
    let mut cross = vec![0.0; big_n * w];
    let mut psi_rows: Vec<f64> = Vec::with_capacity(CHUNK_ROWS * w);
    let mut next_rows: Vec<f64> = Vec::with_capacity(CHUNK_ROWS * big_n);
    let mut count = 0usize;
    let mut lifted = Vec::with_capacity(big_n);

    let mut flush = |psi: &mut Vec<f64>, next: &mut Vec<f64>| -> Result<()> {
        let rows = psi.len() / w;
        if rows == 0 {
            return Ok(());
        }
        let psi_t = Tensor::matrix(rows, w, std::mem::take(psi))?;
        let next_t = Tensor::matrix(rows, big_n, std::mem::take(next))?;
        gemm_into(&psi_t, true, &psi_t, false, &mut gram, 1.0);
        gemm_into(&next_t, true, &psi_t, false, &mut cross, 1.0);
        Ok(())
    };

    for traj in &dataset.trajectories {
        for t in 0..traj.horizon() {
            lifted.clear();
            lift.lift_into(traj.states.row_slice(t), &mut lifted);
            psi_rows.extend_from_slice(&lifted);
            psi_rows.extend_from_slice(traj.controls.row_slice(t));
            lift.lift_into(traj.states.row_slice(t + 1), &mut next_rows);
            count += 1;
            if psi_rows.len() >= CHUNK_ROWS * w {
                flush(&mut psi_rows, &mut next_rows)?;
            }
        }
    }
    flush(&mut psi_rows, &mut next_rows)?;

    let inv = 1.0 / count as f64;
    let g = Tensor::matrix(w, w, gram.into_iter().map(|v| v * inv).collect())?.symmetrized();
    let p = Tensor::matrix(big_n, w, cross.into_iter().map(|v| v * inv).collect())?;
    let k = least_squares_fit(&p, &g)?;
    let a = k.slice_cols(0, big_n);
    let b = k.slice_cols(big_n, w);
    if !a.is_finite() || !b.is_finite() {
        return Err(Error::Contract("KRBF fit produced non-finite matrices".into()));
    }
    Ok(KrbfModel {
        lift,
        control_dim: m,
        a,
        b,
    })
}

impl KrbfModel {
    pub fn state_dim(&self) -> usize {
        self.lift.state_dim()
    }

    pub fn lifted_dim(&self) -> usize {
        self.lift.lifted_dim()
    }

    /// Predicted physical states for `x0: [B, n]` under `controls[k]: [B, m]`.
    pub fn rollout_batch(&self, x0: &Tensor, controls: &[Tensor]) -> Result<Vec<Tensor>> {
        let mut z = self.lift.lift_batch(x0)?;
        let n = self.state_dim();
        let mut out = Vec::with_capacity(controls.len());
        for (step, u) in controls.iter().enumerate() {
            z = matmul_t(&z, false, &self.a, true)?.add(&matmul_t(u, false, &self.b, true)?)?;
            if !z.is_finite() {
                return Err(Error::RolloutDivergence { step: step + 1 });
            }
            out.push(z.slice_cols(0, n));
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use rand::Rng;

    use super::*;
    use crate::datagen::Trajectory;

    fn linear_data(n_traj: usize, seed: u64) -> (Dataset, Tensor, Tensor) {
        let a0 = Tensor::from_rows(&[vec![0.9, 0.3], vec![-0.2, 0.7]]).unwrap();
        let b0 = Tensor::column(&[0.1, 1.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let trajectories = (0..n_traj)
            .map(|_| {
                let mut s = vec![rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)];
                let u: Vec<f64> = (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect();
                for t in 0..6 {
                    let (x0, x1) = (s[2 * t], s[2 * t + 1]);
                    s.push(0.9 * x0 + 0.3 * x1 + 0.1 * u[t]);
                    s.push(-0.2 * x0 + 0.7 * x1 + 1.0 * u[t]);
                }
                Trajectory {
                    states: Tensor::matrix(7, 2, s).unwrap(),
                    controls: Tensor::matrix(6, 1, u).unwrap(),
                }
            })
            .collect();
        let ds = Dataset {
            env: "linear".into(),
            state_dim: 2,
            control_dim: 1,
            dt: 1.0,
            horizon: 6,
            seed,
            policy: "uniform_random".into(),
            trajectories,
        };
        (ds, a0, b0)
    }

    #[test]
    fn feature_at_center_is_one_and_far_is_zero() {
        let lift = RbfLift::new(2, vec![vec![0.5, -0.5], vec![3.0, 3.0]], 0.4).unwrap();
        let f = lift.lift(&[0.5, -0.5]).unwrap();
        assert_eq!(f.len(), 4);
        assert_eq!(&f[..2], &[0.5, -0.5]);
        assert_eq!(f[2], 1.0);
        let far = lift.lift(&[1e3, -1e3]).unwrap();
        assert_eq!(&far[..2], &[1e3, -1e3]);
        assert!(far[2] < 1e-300 && far[3] < 1e-300);
        assert!(RbfLift::new(2, vec![], 0.0).is_err());
    }

    #[test]
    fn raw_state_lift_recovers_linear_system() {
        let (ds, a0, b0) = linear_data(40, 1);
        let model = fit_krbf(&ds, 0, None, 0).unwrap();
        assert!(model.a.max_abs_diff(&a0) < 1e-8);
        assert!(model.b.max_abs_diff(&b0) < 1e-8);
    }

    #[test]
    fn fit_ignores_trajectory_order() {
        let (ds, _, _) = linear_data(30, 2);
        let mut reversed = ds.clone();
        reversed.trajectories.reverse();
        let lift = RbfLift::new(2, sample_centers(&ds, 10, 3), 1.0).unwrap();
        let a = fit_with_lift(&ds, lift.clone()).unwrap();
        let b = fit_with_lift(&reversed, lift).unwrap();
        assert!(a.a.max_abs_diff(&b.a) < 1e-8);
        assert!(a.b.max_abs_diff(&b.b) < 1e-8);
    }

    #[test]
    fn median_heuristic() {
        let c = vec![vec![0.0, 0.0], vec![3.0, 4.0], vec![0.0, 1.0]];
        // distances 5, 1, √18 → median √18
        assert!((median_pairwise_distance(&c) - 18f64.sqrt()).abs() < 1e-15);
        assert_eq!(median_pairwise_distance(&c[..1]), 1.0);
    }

    #[test]
    fn centers_come_from_training_states() {
        let (ds, _, _) = linear_data(5, 4);
        let all = ds.all_states();
        let centers = sample_centers(&ds, 8, 5);
        assert_eq!(centers.len(), 8);
        for c in &centers {
            assert!((0..all.rows()).any(|r| all.row_slice(r) == c.as_slice()));
        }
        assert_eq!(centers, sample_centers(&ds, 8, 5));
    }
}

//! Dense linear algebra on small matrices: one-sided Jacobi SVD,
//! pseudoinverse, LU solves, Cholesky, symmetric eigenvalues and a spectral
//! radius estimate.

use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Relative cutoff below which singular values are treated as zero.
pub const PINV_RCOND: f64 = 1e-12;

const JACOBI_MAX_SWEEPS: usize = 80;

/// Thin SVD `A = U·diag(s)·Vᵀ`, singular values in descending order.
#[derive(Clone, Debug)]
pub struct Svd {
    /// `[rows, k]`
    pub u: Tensor,
    /// length `k = min(rows, cols)`
    pub s: Vec<f64>,
    /// `[cols, k]`
    pub v: Tensor,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn rotate(x: &mut [f64], y: &mut [f64], c: f64, s: f64) {
    for (xi, yi) in x.iter_mut().zip(y.iter_mut()) {
        let (a, b) = (*xi, *yi);
        *xi = c * a - s * b;
        *yi = s * a + c * b;
    }
}

fn pair_mut(v: &mut [Vec<f64>], p: usize, q: usize) -> (&mut Vec<f64>, &mut Vec<f64>) {
    debug_assert!(p < q);
    let (lo, hi) = v.split_at_mut(q);
    (&mut lo[p], &mut hi[0])
}

/// One-sided (Hestenes) Jacobi SVD.
pub fn svd(a: &Tensor) -> Svd {
    let (r, c) = a.dims();
    if r < c {
        let t = svd(&a.transpose());
        return Svd {
            u: t.v,
            s: t.s,
            v: t.u,
        };
    }
    let mut cols: Vec<Vec<f64>> = (0..c).map(|j| a.column_vec(j)).collect();
    let mut vcols: Vec<Vec<f64>> = (0..c)
        .map(|j| {
            let mut e = vec![0.0; c];
            e[j] = 1.0;
            e
        })
        .collect();

    let tol = f64::EPSILON;
    for _ in 0..JACOBI_MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..c {
            for q in p + 1..c {
                let alpha = dot(&cols[p], &cols[p]);
                let beta = dot(&cols[q], &cols[q]);
                let gamma = dot(&cols[p], &cols[q]);
                if gamma == 0.0 || gamma.abs() <= tol * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let cs = 1.0 / (1.0 + t * t).sqrt();
                let sn = cs * t;
                let (x, y) = pair_mut(&mut cols, p, q);
                rotate(x, y, cs, sn);
                let (x, y) = pair_mut(&mut vcols, p, q);
                rotate(x, y, cs, sn);
            }
        }
        if !rotated {
            break;
        }
    }

    let mut order: Vec<(usize, f64)> = cols
        .iter()
        .enumerate()
        .map(|(j, col)| (j, dot(col, col).sqrt()))
        .collect();
    order.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));

    let mut u = Tensor::zeros(r, c);
    let mut v = Tensor::zeros(c, c);
    let mut s = Vec::with_capacity(c);
    for (k, &(j, sigma)) in order.iter().enumerate() {
        s.push(sigma);
        if sigma > 0.0 {
            for i in 0..r {
                u.set(i, k, cols[j][i] / sigma);
            }
        }
        for i in 0..c {
            v.set(i, k, vcols[j][i]);
        }
    }
    Svd { u, s, v }
}

/// Moore–Penrose pseudoinverse via SVD, truncating singular values below
/// `PINV_RCOND · σ_max`.
pub fn pinv(m: &Tensor) -> Tensor {
    let (r, c) = m.dims();
    let Svd { u, s, v } = svd(m);
    let sigma_max = s.first().copied().unwrap_or(0.0);
    let mut out = Tensor::zeros(c, r);
    if sigma_max == 0.0 {
        return out;
    }
    let cutoff = PINV_RCOND * sigma_max;
    for (k, &sk) in s.iter().enumerate() {
        if sk <= cutoff {
            continue;
        }
        let inv = 1.0 / sk;
        for i in 0..c {
            let vik = v.get(i, k) * inv;
            if vik == 0.0 {
                continue;
            }
            let row = out.row_slice_mut(i);
            for (j, o) in row.iter_mut().enumerate() {
                *o += vik * u.get(j, k);
            }
        }
    }
    out
}

/// Closed-form least-squares operator `K = P·G†` from the cross-covariance
/// `P = mean(y xᵀ)` and the auto-covariance `G = mean(x xᵀ)`.
pub fn least_squares_fit(p: &Tensor, g: &Tensor) -> Result<Tensor> {
    let (gr, gc) = g.dims();
    if gr != gc || p.cols() != gr {
        return Err(Error::dim(
            "least_squares_fit",
            format!("P {:?} and G {:?} incompatible", p.shape(), g.shape()),
        ));
    }
    p.matmul(&pinv(g))
}

/// Solve `A·X = B` by LU with partial pivoting.
pub fn solve(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (n, nc) = a.dims();
    if n != nc || b.rows() != n {
        return Err(Error::dim(
            "solve",
            format!("A {:?}, B {:?}", a.shape(), b.shape()),
        ));
    }
    let m = b.cols();
    let mut lu = a.clone();
    let mut x = b.clone();
    let scale = a.max_abs().max(f64::MIN_POSITIVE);
    for k in 0..n {
        let (piv, pmax) = (k..n)
            .map(|i| (i, lu.get(i, k).abs()))
            .fold((k, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
        if pmax <= scale * 1e-14 {
            return Err(Error::Contract(format!("singular matrix (pivot {k})")));
        }
        if piv != k {
            for j in 0..n {
                let t = lu.get(k, j);
                lu.set(k, j, lu.get(piv, j));
                lu.set(piv, j, t);
            }
            for j in 0..m {
                let t = x.get(k, j);
                x.set(k, j, x.get(piv, j));
                x.set(piv, j, t);
            }
        }
        let d = lu.get(k, k);
        for i in k + 1..n {
            let f = lu.get(i, k) / d;
            if f == 0.0 {
                continue;
            }
            for j in k..n {
                lu.set(i, j, lu.get(i, j) - f * lu.get(k, j));
            }
            for j in 0..m {
                x.set(i, j, x.get(i, j) - f * x.get(k, j));
            }
        }
    }
    for k in (0..n).rev() {
        let d = lu.get(k, k);
        for j in 0..m {
            let mut acc = x.get(k, j);
            for i in k + 1..n {
                acc -= lu.get(k, i) * x.get(i, j);
            }
            x.set(k, j, acc / d);
        }
    }
    Ok(x)
}

pub fn inverse(a: &Tensor) -> Result<Tensor> {
    solve(a, &Tensor::eye(a.rows()))
}

/// Lower-triangular `L` with `A = L·Lᵀ`; fails unless `A` is symmetric
/// positive definite.
pub fn cholesky(a: &Tensor) -> Result<Tensor> {
    let (n, nc) = a.dims();
    if n != nc {
        return Err(Error::dim("cholesky", format!("{:?} is not square", a.shape())));
    }
    let scale = a.max_abs().max(1.0);
    for i in 0..n {
        for j in 0..i {
            if (a.get(i, j) - a.get(j, i)).abs() > 1e-12 * scale {
                return Err(Error::Contract("matrix is not symmetric".into()));
            }
        }
    }
    let mut l = Tensor::zeros(n, n);
    for j in 0..n {
        let mut d = a.get(j, j);
        for k in 0..j {
            d -= l.get(j, k) * l.get(j, k);
        }
        if d <= 0.0 || !d.is_finite() {
            return Err(Error::Contract("matrix is not positive definite".into()));
        }
        let d = d.sqrt();
        l.set(j, j, d);
        for i in j + 1..n {
            let mut s = a.get(i, j);
            for k in 0..j {
                s -= l.get(i, k) * l.get(j, k);
            }
            l.set(i, j, s / d);
        }
    }
    Ok(l)
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi, ascending.
pub fn symmetric_eigenvalues(a: &Tensor) -> Vec<f64> {
    let n = a.rows();
    let mut m = a.symmetrized();
    for _ in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m.get(i, j).powi(2))
            .sum();
        if off <= 1e-30 * m.frobenius().powi(2).max(f64::MIN_POSITIVE) {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m.get(p, q);
                if apq == 0.0 {
                    continue;
                }
                let theta = (m.get(q, q) - m.get(p, p)) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m.get(k, p);
                    let mkq = m.get(k, q);
                    m.set(k, p, c * mkp - s * mkq);
                    m.set(k, q, s * mkp + c * mkq);
                }
                for k in 0..n {
                    let mpk = m.get(p, k);
                    let mqk = m.get(q, k);
                    m.set(p, k, c * mpk - s * mqk);
                    m.set(q, k, s * mpk + c * mqk);
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| m.get(i, i)).collect();
    ev.sort_by(f64::total_cmp);
    ev
}

/// Spectral radius estimate `lim ‖M^(2^k)‖^(1/2^k)` by repeated squaring.
pub fn spectral_radius(m: &Tensor) -> f64 {
    let norm = m.frobenius();
    if norm == 0.0 {
        return 0.0;
    }
    let mut x = m.scale(1.0 / norm);
    let mut log_norm = norm.ln();
    let mut power = 1.0_f64;
    for _ in 0..40 {
        let sq = x.matmul(&x).expect("square matrix");
        let nrm = sq.frobenius();
        if nrm == 0.0 {
            return 0.0;
        }
        x = sq.scale(1.0 / nrm);
        log_norm = 2.0 * log_norm + nrm.ln();
        power *= 2.0;
    }
    (log_norm / power).exp()
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn random(rows: usize, cols: usize, seed: u64) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor::matrix(rows, cols, (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .unwrap()
    }

    #[test]
    fn pinv_identity_and_diagonal() {
        assert!(pinv(&Tensor::eye(4)).max_abs_diff(&Tensor::eye(4)) < 1e-15);
        let d = pinv(&Tensor::diag(&[2.0, 0.0]));
        assert!(d.max_abs_diff(&Tensor::diag(&[0.5, 0.0])) < 1e-15);
        assert_eq!(pinv(&Tensor::zeros(3, 2)), Tensor::zeros(2, 3));
    }

    #[test]
    fn pinv_left_inverse_of_full_rank_tall() {
        let m = random(10, 6, 3);
        let p = pinv(&m);
        assert!(p.matmul(&m).unwrap().max_abs_diff(&Tensor::eye(6)) < 1e-8);
    }

    #[test]
    fn svd_reconstructs() {
        for (r, c) in [(5, 3), (3, 5), (7, 7)] {
            let a = random(r, c, (r * 10 + c) as u64);
            let Svd { u, s, v } = svd(&a);
            let us = Tensor::matrix(
                u.rows(),
                u.cols(),
                (0..u.len()).map(|i| u.data()[i] * s[i % u.cols()]).collect(),
            )
            .unwrap();
            let back = us.matmul(&v.transpose()).unwrap();
            assert!(back.max_abs_diff(&a) < 1e-12);
            assert!(s.windows(2).all(|w| w[0] >= w[1]));
        }
    }

    #[test]
    fn least_squares_scalar_ratio() {
        let k = least_squares_fit(&Tensor::scalar(6.0 * 2.0), &Tensor::scalar(2.0 * 2.0)).unwrap();
        assert!((k.data()[0] - 3.0).abs() < 1e-15);
    }

    #[test]
    fn solve_and_inverse() {
        let a = Tensor::matrix(3, 3, vec![4., 1., 2., 0., 3., 1., 2., 1., 5.]).unwrap();
        let inv = inverse(&a).unwrap();
        assert!(a.matmul(&inv).unwrap().max_abs_diff(&Tensor::eye(3)) < 1e-14);
        assert!(solve(&Tensor::zeros(2, 2), &Tensor::eye(2)).is_err());
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        assert!(cholesky(&Tensor::diag(&[1.0, 2.0])).is_ok());
        assert!(cholesky(&Tensor::diag(&[1.0, -2.0])).is_err());
        assert!(cholesky(&Tensor::matrix(2, 2, vec![1.0, 0.5, 0.0, 1.0]).unwrap()).is_err());
    }

    #[test]
    fn symmetric_eigenvalues_known() {
        let a = Tensor::matrix(2, 2, vec![2.0, 1.0, 1.0, 2.0]).unwrap();
        let ev = symmetric_eigenvalues(&a);
        assert!((ev[0] - 1.0).abs() < 1e-12 && (ev[1] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn spectral_radius_rotation_and_jordan() {
        // rotation scaled by 0.9 has complex eigenvalues of modulus 0.9
        let (c, s) = (0.3_f64.cos() * 0.9, 0.3_f64.sin() * 0.9);
        let r = Tensor::matrix(2, 2, vec![c, -s, s, c]).unwrap();
        assert!((spectral_radius(&r) - 0.9).abs() < 1e-9);
        let j = Tensor::matrix(2, 2, vec![0.5, 1.0, 0.0, 0.5]).unwrap();
        assert!((spectral_radius(&j) - 0.5).abs() < 1e-9);
        assert!((spectral_radius(&Tensor::scalar(0.382)) - 0.382).abs() < 1e-12);
    }
}

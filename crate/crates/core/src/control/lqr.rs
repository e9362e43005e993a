use crate::diffcore::linalg::{cholesky, solve, spectral_radius, symmetric_eigenvalues};
use crate::diffcore::{matmul_t, Tensor};
use crate::error::{Error, Result};

pub const DARE_TOL: f64 = 1e-9;
pub const DARE_MAX_ITER: usize = 10_000;

/// Entries beyond this magnitude count as a diverging Riccati iteration.
const BLOW_UP: f64 = 1e14;

/// Converged Riccati solution.
#[derive(Clone, Debug, PartialEq)]
pub struct DareSolution {
    pub p: Tensor,
    pub iterations: usize,
    /// `‖P − 𝓡(P)‖_∞` of the returned iterate, absolute.
    pub residual: f64,
}

/// Feedback gain with the data that certifies it.
#[derive(Clone, Debug, PartialEq)]
pub struct LqrGain {
    /// `[m, N]`; the control law is `û = −K (z − z_des)`.
    pub k: Tensor,
    pub p: Tensor,
    pub iterations: usize,
    pub residual: f64,
    /// Spectral radius of `A − B K`.
    pub closed_loop_radius: f64,
}

/// `Q̂ = Cᵀ Q C` for `C = [I_n 0]` in a lifted space of dimension `lifted`.
pub fn lift_cost(q: &Tensor, lifted: usize) -> Result<Tensor> {
    let (n, nc) = q.dims();
    if n != nc || lifted < n {
        return Err(Error::dim("lift_cost", format!("Q {:?} in lifted dimension {lifted}", q.shape())));
    }
    let mut out = Tensor::zeros(lifted, lifted);
    for i in 0..n {
        for j in 0..n {
            out.set(i, j, q.get(i, j));
        }
    }
    Ok(out)
}

fn check_system(a: &Tensor, b: &Tensor, q: &Tensor, r: &Tensor) -> Result<()> {
    let (n, an) = a.dims();
    let (bn, m) = b.dims();
    if n != an || bn != n || q.dims() != (n, n) || r.dims() != (m, m) {
        return Err(Error::dim(
            "riccati",
            format!("A {:?}, B {:?}, Q {:?}, R {:?}", a.shape(), b.shape(), q.shape(), r.shape()),
        ));
    }
    cholesky(r).map_err(|_| Error::Contract("R must be symmetric positive definite".into()))?;
    Ok(())
}

/// One Riccati map `Q + AᵀPA − AᵀPB (R + BᵀPB)⁻¹ BᵀPA`, symmetrized.
fn riccati_map(a: &Tensor, b: &Tensor, q: &Tensor, r: &Tensor, p: &Tensor) -> Result<Tensor> {
    let pa = p.matmul(a)?;
    let pb = p.matmul(b)?;
    let atpa = matmul_t(a, true, &pa, false)?;
    let btpa = matmul_t(b, true, &pa, false)?;
    let s = r.add(&matmul_t(b, true, &pb, false)?)?;
    let x = solve(&s, &btpa)?;
    let correction = matmul_t(&btpa, true, &x, false)?;
    Ok(q.add(&atpa)?.sub(&correction)?.symmetrized())
}

/// Fixed-point Riccati iteration from `P₀ = Q`, stopped once successive
/// iterates differ by less than `tol · max(1, ‖P‖_∞)`.
pub fn solve_dare(a: &Tensor, b: &Tensor, q: &Tensor, r: &Tensor, tol: f64, max_iter: usize) -> Result<DareSolution> {
    check_system(a, b, q, r)?;
    let mut p = q.symmetrized();
    for it in 1..=max_iter {
        let next = riccati_map(a, b, q, r, &p).map_err(|e| match e {
            Error::Contract(msg) => Error::Unstabilizable(format!("Riccati step {it}: {msg}")),
            other => other,
        })?;
        if !next.is_finite() || next.max_abs() > BLOW_UP {
            return Err(Error::Unstabilizable(format!("Riccati iterate diverged at step {it}")));
        }
        let delta = next.max_abs_diff(&p);
        let scale = next.max_abs().max(1.0);
        p = next;
        if delta < tol * scale {
            let residual = riccati_map(a, b, q, r, &p)?.max_abs_diff(&p);
            return Ok(DareSolution {
                p,
                iterations: it,
                residual,
            });
        }
    }
    Err(Error::Unstabilizable(format!(
        "Riccati iteration did not reach {tol:e} within {max_iter} steps"
    )))
}

/// `K = (R + BᵀPB)⁻¹ BᵀPA` from a converged Riccati solution; fails when the
/// closed loop `A − BK` is not strictly stable.
pub fn lqr_gain(a: &Tensor, b: &Tensor, q: &Tensor, r: &Tensor) -> Result<LqrGain> {
    lqr_gain_with(a, b, q, r, DARE_TOL, DARE_MAX_ITER)
}

pub fn lqr_gain_with(a: &Tensor, b: &Tensor, q: &Tensor, r: &Tensor, tol: f64, max_iter: usize) -> Result<LqrGain> {
    let sol = solve_dare(a, b, q, r, tol, max_iter)?;
    let p = sol.p;
    let pa = p.matmul(a)?;
    let s = r.add(&matmul_t(b, true, &p.matmul(b)?, false)?)?;
    let k = solve(&s, &matmul_t(b, true, &pa, false)?)?;
    let closed = a.sub(&b.matmul(&k)?)?;
    let radius = spectral_radius(&closed);
    if !(radius < 1.0) {
        return Err(Error::Unstabilizable(format!(
            "closed-loop spectral radius {radius:.6} is not below 1"
        )));
    }
    Ok(LqrGain {
        k,
        p,
        iterations: sol.iterations,
        residual: sol.residual,
        closed_loop_radius: radius,
    })
}

/// Smallest eigenvalue of the symmetric part.
pub fn min_eigenvalue(p: &Tensor) -> f64 {
    symmetric_eigenvalues(p).first().copied().unwrap_or(0.0)
}

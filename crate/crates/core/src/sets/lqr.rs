use nalgebra::{DMatrix, SMatrix};

use crate::{Error, Result};

/// Discrete LQR gain with its Riccati certificate.
#[derive(Clone, Debug)]
pub struct Lqr<const N: usize, const M: usize> {
    /// `u = −K x`.
    pub k: SMatrix<f64, M, N>,
    pub p: SMatrix<f64, N, N>,
    pub iterations: usize,
    /// Max-abs residual of the Riccati equation at the returned `P`.
    pub residual: f64,
}

fn riccati_map<const N: usize, const M: usize>(
    a: &SMatrix<f64, N, N>,
    b: &SMatrix<f64, N, M>,
    q: &SMatrix<f64, N, N>,
    r: &SMatrix<f64, M, M>,
    p: &SMatrix<f64, N, N>,
) -> Option<(SMatrix<f64, N, N>, SMatrix<f64, M, N>)> {
    let bp = b.transpose() * p;
    let gain = (r + bp * b).cholesky()?.solve(&(bp * a));
    let next = q + a.transpose() * p * a - a.transpose() * p * b * gain;
    Some(((next + next.transpose()) * 0.5, gain))
}

/// Solves `P = Q + AᵀPA − AᵀPB(R + BᵀPB)⁻¹BᵀPA` by fixed-point iteration
/// from `P = Q`, then `K = (R + BᵀPB)⁻¹BᵀPA`.
pub fn lqr_gain<const N: usize, const M: usize>(
    a: &SMatrix<f64, N, N>,
    b: &SMatrix<f64, N, M>,
    q: &SMatrix<f64, N, N>,
    r: &SMatrix<f64, M, M>,
) -> Result<Lqr<N, M>> {
    const TOL: f64 = 1e-10;
    const MAX_ITER: usize = 1_000_000;
    if r.clone().cholesky().is_none() {
        return Err(Error::Riccati("R must be positive definite".into()));
    }
    let mut p = *q;
    for it in 1..=MAX_ITER {
        let (next, _) = riccati_map(a, b, q, r, &p)
            .ok_or_else(|| Error::Riccati("R + BᵀPB lost definiteness".into()))?;
        let change = (next - p).amax();
        p = next;
        if !p.iter().all(|v| v.is_finite()) || p.amax() > 1e14 {
            return Err(Error::Riccati(format!(
                "iteration diverged after {it} steps: (A, B) is not stabilizable"
            )));
        }
        if change <= TOL.max(1e-15 * p.amax()) {
            let (again, k) = riccati_map(a, b, q, r, &p).expect("checked above");
            return Ok(Lqr {
                k,
                p,
                iterations: it,
                residual: (again - p).amax(),
            });
        }
    }
    Err(Error::Riccati(format!(
        "no convergence within {MAX_ITER} iterations"
    )))
}

/// Largest eigenvalue magnitude.
pub fn spectral_radius<const N: usize>(a: &SMatrix<f64, N, N>) -> f64 {
    if N == 0 {
        return 0.0;
    }
    DMatrix::from_column_slice(N, N, a.as_slice())
        .complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

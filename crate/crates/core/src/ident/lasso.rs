//! ℓ1-regularized least squares by cyclic coordinate descent.
//!
//! Each column of `Ψ` is scaled to unit RMS and the target to unit RMS, so
//! the weight `h` is dimensionless:
//!
//! ```text
//! min_b  1/(2n) ‖ỹ − Z b‖² + h ‖b‖₁,   Z = Ψ diag(1/rms),  ỹ = y / rms(y)
//! ```
//!
//! The solver works on the Gram matrix `ZᵀZ/n`, so the twelve state
//! dimensions of one fit share a single factorization-free precomputation.

use nalgebra::{DMatrix, DVector};

use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LassoOptions {
    pub max_sweeps: usize,
    /// Stop when no coordinate moves by more than this (standardized units).
    pub tol: f64,
    /// Targets with RMS at or below this are treated as identically zero.
    pub zero_target: f64,
    /// Coordinate-descent sweeps before switching to the exact active-set
    /// refinement; the remainder of `max_sweeps` is a fallback.
    pub warmup_sweeps: usize,
}

impl Default for LassoOptions {
    fn default() -> Self {
        Self {
            max_sweeps: 10_000,
            tol: 1e-8,
            zero_target: 1e-10,
            warmup_sweeps: 200,
        }
    }
}

#[derive(Clone, Debug)]
pub struct LassoFit {
    /// Coefficients in the original (unscaled) units of `Ψ` and `y`.
    pub coeffs: DVector<f64>,
    pub sweeps: usize,
    /// Largest subgradient-condition violation, standardized units.
    pub kkt_violation: f64,
    pub residual_norm: f64,
}

/// Column-standardized Gram system shared by several targets.
#[derive(Clone, Debug)]
pub struct Standardized {
    gram: DMatrix<f64>,
    col_rms: DVector<f64>,
    psi: DMatrix<f64>,
}

impl Standardized {
    pub fn new(psi: DMatrix<f64>) -> Self {
        let n = psi.nrows().max(1) as f64;
        let col_rms = DVector::from_iterator(
            psi.ncols(),
            psi.column_iter().map(|c| (c.norm_squared() / n).sqrt()),
        );
        let inv = col_rms.map(|r| if r > 0.0 { 1.0 / r } else { 0.0 });
        let mut gram = psi.tr_mul(&psi) / n;
        for j in 0..gram.ncols() {
            for i in 0..gram.nrows() {
                gram[(i, j)] *= inv[i] * inv[j];
            }
        }
        Self {
            gram,
            col_rms,
            psi,
        }
    }

    pub fn n(&self) -> usize {
        self.psi.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.psi.ncols()
    }

    pub fn col_rms(&self) -> &DVector<f64> {
        &self.col_rms
    }

    /// Standardized correlation `Zᵀỹ/n` and `rms(y)`.
    fn correlation(&self, y: &DVector<f64>) -> (DVector<f64>, f64) {
        let n = self.n().max(1) as f64;
        let y_rms = (y.norm_squared() / n).sqrt();
        let mut c = self.psi.tr_mul(y) / n;
        for i in 0..c.len() {
            let s = self.col_rms[i] * y_rms;
            c[i] = if s > 0.0 { c[i] / s } else { 0.0 };
        }
        (c, y_rms)
    }

    /// Smallest `h` with the all-zero solution.
    pub fn h_max(&self, y: &DVector<f64>) -> f64 {
        self.correlation(y).0.amax()
    }

    /// Solves for one target. `warm` is in original units.
    pub fn solve(
        &self,
        y: &DVector<f64>,
        h: f64,
        warm: Option<&DVector<f64>>,
        opts: &LassoOptions,
    ) -> Result<LassoFit> {
        if y.len() != self.n() {
            return Err(Error::Dataset(format!(
                "target has {} rows, library has {}",
                y.len(),
                self.n()
            )));
        }
        if !(h >= 0.0 && h.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "h",
                reason: format!("regularization weight must be finite and non-negative, got {h}"),
            });
        }
        let p = self.ncols();
        let (c, y_rms) = self.correlation(y);
        if y_rms <= opts.zero_target {
            return Ok(LassoFit {
                coeffs: DVector::zeros(p),
                sweeps: 0,
                kkt_violation: 0.0,
                residual_norm: y.norm(),
            });
        }
        let usable: Vec<usize> = (0..p).filter(|&i| self.col_rms[i] > 0.0).collect();
        let mut b = DVector::zeros(p);
        if let Some(w) = warm {
            for &i in &usable {
                b[i] = w[i] * self.col_rms[i] / y_rms;
            }
        }
        let mut grad = &c - &self.gram * &b;
        let budget = opts.warmup_sweeps.min(opts.max_sweeps);
        let (mut sweeps, mut converged) = self.descend(&mut b, &mut grad, h, &usable, opts.tol, budget);
        if let Some(exact) = self.feature_sign(&b, &c, h, &usable) {
            b = exact;
            converged = true;
        }
        if !converged {
            let (more, done) =
                self.descend(&mut b, &mut grad, h, &usable, opts.tol, opts.max_sweeps - sweeps);
            sweeps += more;
            if !done {
                let r2 = 1.0 - 2.0 * b.dot(&c) + b.dot(&(&self.gram * &b));
                return Err(Error::NoConvergence {
                    iterations: sweeps,
                    residual_norm: y_rms * (self.n() as f64 * r2.max(0.0)).sqrt(),
                });
            }
        }
        let kkt = self.kkt(&b, &c, h, &usable);
        let coeffs = DVector::from_fn(p, |i, _| {
            if self.col_rms[i] > 0.0 {
                b[i] * y_rms / self.col_rms[i]
            } else {
                0.0
            }
        });
        Ok(LassoFit {
            residual_norm: (y - &self.psi * &coeffs).norm(),
            coeffs,
            sweeps,
            kkt_violation: kkt,
        })
    }

    fn sweep(
        &self,
        b: &mut DVector<f64>,
        grad: &mut DVector<f64>,
        h: f64,
        coords: impl Iterator<Item = usize>,
    ) -> f64 {
        let mut max_delta = 0.0f64;
        for i in coords {
            let z = grad[i] + self.gram[(i, i)] * b[i];
            let new = soft_threshold(z, h) / self.gram[(i, i)];
            let delta = new - b[i];
            if delta != 0.0 {
                grad.axpy(-delta, &self.gram.column(i), 1.0);
                b[i] = new;
                max_delta = max_delta.max(delta.abs());
            }
        }
        max_delta
    }

    /// Full sweeps to discover the support, inner sweeps over the support
    /// until it settles. Returns the sweeps spent and whether `tol` was met.
    fn descend(
        &self,
        b: &mut DVector<f64>,
        grad: &mut DVector<f64>,
        h: f64,
        usable: &[usize],
        tol: f64,
        budget: usize,
    ) -> (usize, bool) {
        let mut sweeps = 0;
        while sweeps < budget {
            let moved = self.sweep(b, grad, h, usable.iter().copied());
            sweeps += 1;
            if moved < tol {
                return (sweeps, true);
            }
            while sweeps < budget {
                let active: Vec<usize> = usable.iter().copied().filter(|&i| b[i] != 0.0).collect();
                let moved = self.sweep(b, grad, h, active.into_iter());
                sweeps += 1;
                if moved < tol {
                    break;
                }
            }
        }
        (sweeps, false)
    }

    fn objective(&self, b: &DVector<f64>, c: &DVector<f64>, h: f64) -> f64 {
        0.5 * b.dot(&(&self.gram * b)) - c.dot(b) + h * b.lp_norm(1)
    }

    /// Feature-sign search: exact solves on the current support and sign
    /// pattern, with a line search that drops coordinates crossing zero.
    /// Terminates at the exact optimum or returns `None`.
    fn feature_sign(
        &self,
        start: &DVector<f64>,
        c: &DVector<f64>,
        h: f64,
        usable: &[usize],
    ) -> Option<DVector<f64>> {
        const TOL: f64 = 1e-10;
        let p = start.len();
        let mut b = start.clone();
        let mut theta: Vec<f64> = b.iter().map(|v| if *v == 0.0 { 0.0 } else { v.signum() }).collect();
        let mut f = self.objective(&b, c, h);
        for _ in 0..(20 * p + 100) {
            let r = c - &self.gram * &b;
            let on_support_ok = usable
                .iter()
                .filter(|&&i| b[i] != 0.0)
                .all(|&i| (r[i] - h * theta[i]).abs() <= TOL);
            if on_support_ok {
                let worst = usable
                    .iter()
                    .copied()
                    .filter(|&i| b[i] == 0.0)
                    .map(|i| (i, r[i].abs() - h))
                    .max_by(|a, b| a.1.total_cmp(&b.1));
                match worst {
                    Some((i, v)) if v > TOL => theta[i] = r[i].signum(),
                    _ => return Some(b),
                }
            }
            let act: Vec<usize> = usable.iter().copied().filter(|&i| theta[i] != 0.0).collect();
            let k = act.len();
            let g = DMatrix::from_fn(k, k, |r, s| self.gram[(act[r], act[s])]);
            let rhs = DVector::from_fn(k, |r, _| c[act[r]] - h * theta[act[r]]);
            let sol = match g.clone().cholesky() {
                Some(ch) => ch.solve(&rhs),
                None => g.lu().solve(&rhs)?,
            };
            let mut target = b.clone();
            for (&i, &v) in act.iter().zip(sol.iter()) {
                target[i] = v;
            }
            // candidate step lengths: full step and every zero crossing
            let mut cands = vec![(1.0, None)];
            for &i in &act {
                if b[i] != 0.0 && target[i].signum() != b[i].signum() {
                    cands.push((b[i] / (b[i] - target[i]), Some(i)));
                }
            }
            let mut best: Option<(f64, DVector<f64>)> = None;
            for (t, zero) in cands {
                let mut cand = &b + (&target - &b) * t;
                if let Some(i) = zero {
                    cand[i] = 0.0;
                }
                let fc = self.objective(&cand, c, h);
                if best.as_ref().map_or(true, |(fb, _)| fc < *fb) {
                    best = Some((fc, cand));
                }
            }
            let (fb, nb) = best?;
            if !(fb <= f + 1e-15 * f.abs().max(1.0)) {
                return None;
            }
            f = fb;
            b = nb;
            for i in 0..p {
                theta[i] = if b[i] == 0.0 { 0.0 } else { b[i].signum() };
            }
        }
        None
    }

    fn kkt(&self, b: &DVector<f64>, c: &DVector<f64>, h: f64, usable: &[usize]) -> f64 {
        let r = c - &self.gram * b;
        usable
            .iter()
            .map(|&i| {
                if b[i] != 0.0 {
                    (r[i] - h * b[i].signum()).abs()
                } else {
                    (r[i].abs() - h).max(0.0)
                }
            })
            .fold(0.0, f64::max)
    }
}

fn soft_threshold(z: f64, h: f64) -> f64 {
    if z > h {
        z - h
    } else if z < -h {
        z + h
    } else {
        0.0
    }
}

/// One-shot regression of `y` on `Ψ` with weight `h` (default options).
pub fn sparse_regress(psi: &DMatrix<f64>, y: &DVector<f64>, h: f64) -> Result<DVector<f64>> {
    if psi.nrows() != y.len() {
        return Err(Error::Dataset(format!(
            "library has {} rows, target has {}",
            psi.nrows(),
            y.len()
        )));
    }
    Standardized::new(psi.clone())
        .solve(y, h, None, &LassoOptions::default())
        .map(|f| f.coeffs)
}

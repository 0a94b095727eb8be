//! Box algebra behind the tube: model Jacobians, the tube gain, adaptive
//! disturbance sets, RPI boxes, tightening and Lipschitz constants.

mod boxes;
mod lqr;
mod rpi;
mod tube;

pub use boxes::{tighten, tighten_input, BoxSet};
pub use lqr::{lqr_gain, spectral_radius, Lqr};
pub use rpi::{compute_rpi, monte_carlo_containment, RpiMap, RpiMethod, RpiSet};
pub use tube::{Tube, TubeSnapshot};

use nalgebra::{SMatrix, SVector};
use serde::{Deserialize, Serialize};

use crate::ident::{library_row, Term};
use crate::quadsim::{DiscreteModel, QuadParams};
use crate::{Error, Input, MatA, MatB, MatK, Result, State, NU, NX};

/// Benchmark state box.
pub fn state_constraints() -> BoxSet<NX> {
    let upper = State::from_row_slice(&[
        0.5, 0.5, 2.5, 1.0, 1.0, 2.5, 1.0, 1.0, 0.5, 10.0, 10.0, 10.0,
    ]);
    let mut lower = -upper;
    lower[2] = 1.5;
    BoxSet::new(lower, upper).expect("static box")
}

/// Benchmark input box: thrust in `[0, 0.4]` N, torques within ±0.02 N·m.
pub fn input_constraints() -> BoxSet<NU> {
    BoxSet::new(
        Input::new(0.0, -0.02, -0.02, -0.02),
        Input::new(0.4, 0.02, 0.02, 0.02),
    )
    .expect("static box")
}

fn central_difference(
    m: &dyn DiscreteModel,
    x: &State,
    u: &Input,
    h: f64,
) -> (MatA, MatB) {
    let mut a = MatA::zeros();
    let mut b = MatB::zeros();
    for j in 0..NX {
        let (mut xp, mut xm) = (*x, *x);
        xp[j] += h;
        xm[j] -= h;
        a.set_column(j, &((m.step(&xp, u) - m.step(&xm, u)) / (2.0 * h)));
    }
    for j in 0..NU {
        let (mut up, mut um) = (*u, *u);
        up[j] += h;
        um[j] -= h;
        b.set_column(j, &((m.step(x, &up) - m.step(x, &um)) / (2.0 * h)));
    }
    (a, b)
}

/// `∂f_d/∂x` and `∂f_d/∂u` by central differences with step `10⁻⁶`.
pub fn jacobian(m: &dyn DiscreteModel, x: &State, u: &Input) -> (MatA, MatB) {
    central_difference(m, x, u, 1e-6)
}

/// Richardson-extrapolated central differences (`h = 10⁻³` and `h/2`),
/// fourth-order accurate; used to cross-check [`jacobian`].
pub fn jacobian_richardson(m: &dyn DiscreteModel, x: &State, u: &Input) -> (MatA, MatB) {
    let (a1, b1) = central_difference(m, x, u, 1e-3);
    let (a2, b2) = central_difference(m, x, u, 5e-4);
    ((a2 * 4.0 - a1) / 3.0, (b2 * 4.0 - b1) / 3.0)
}

/// Tube feedback `u = û + K (x − x̂)` with a bound on `‖K‖`.
#[derive(Clone, Debug, PartialEq)]
pub struct TubeGain {
    /// Sign convention: `K = −K_lqr`, so `A + B K` is the closed loop.
    pub k: MatK,
    /// Frobenius norm of `K`, an upper bound on its spectral norm.
    pub bound: f64,
}

impl TubeGain {
    pub fn new(k: MatK) -> Self {
        Self {
            bound: k.norm(),
            k,
        }
    }

    pub fn zero() -> Self {
        Self::new(MatK::zeros())
    }

    pub fn closed_loop(&self, a: &MatA, b: &MatB) -> MatA {
        a + b * self.k
    }
}

/// LQR tube gain and terminal weight for a linearisation; fails unless the
/// closed loop is Schur stable.
pub fn tube_gain(
    a: &MatA,
    b: &MatB,
    q: &SMatrix<f64, NX, NX>,
    r: &SMatrix<f64, NU, NU>,
) -> Result<(TubeGain, MatA)> {
    let lqr = lqr_gain(a, b, q, r)?;
    let gain = TubeGain::new(-lqr.k);
    let rho = spectral_radius(&gain.closed_loop(a, b));
    if rho >= 1.0 {
        return Err(Error::NotContractive {
            spectral_radius: rho,
        });
    }
    Ok((gain, lqr.p))
}

/// Hover linearisation of a prediction model at position `p`.
pub fn hover_linearization(m: &dyn DiscreteModel, params: &QuadParams, p: [f64; 3]) -> (MatA, MatB) {
    let (_, a, b) = m.step_jacobian(&crate::quadsim::hover_state(p), &params.hover_input());
    (a, b)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DisturbanceConfig {
    /// Center smoothing gain λ.
    pub lambda: f64,
    /// Bound forgetting factor γ.
    pub gamma: f64,
    /// Hard cap on every half-width.
    pub cap: f64,
    /// Half-widths never decay below this.
    pub floor: f64,
    /// Update each half-width from its own residual instead of the ∞-norm.
    pub per_component: bool,
}

impl Default for DisturbanceConfig {
    fn default() -> Self {
        Self {
            lambda: 0.9,
            gamma: 0.95,
            cap: 0.1,
            floor: 1e-4,
            per_component: false,
        }
    }
}

impl DisturbanceConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |name: &'static str, v: f64| {
            if v > 0.0 && v < 1.0 {
                Ok(())
            } else {
                Err(Error::InvalidParameter {
                    name,
                    reason: format!("must lie in (0, 1), got {v}"),
                })
            }
        };
        unit("lambda", self.lambda)?;
        unit("gamma", self.gamma)?;
        if !(self.floor > 0.0 && self.floor <= self.cap && self.cap.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "cap",
                reason: format!("need 0 < floor ≤ cap, got {} and {}", self.floor, self.cap),
            });
        }
        Ok(())
    }
}

/// Adaptive hypercube `{d : |d − c| ≤ Δ̄}` of residual rates.
#[derive(Clone, Debug, PartialEq)]
pub struct DisturbanceSet {
    pub center: State,
    pub half_widths: State,
    pub cap: State,
    pub config: DisturbanceConfig,
    /// Running per-component maximum of `|sample − c|`, for diagnostics.
    pub max_residual: State,
}

impl DisturbanceSet {
    /// Starts at the cap (most conservative) with zero center.
    pub fn new(config: DisturbanceConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            center: State::zeros(),
            half_widths: State::repeat(config.cap),
            cap: State::repeat(config.cap),
            config,
            max_residual: State::zeros(),
        })
    }

    /// Fixed set that never adapts (`update` is the identity).
    pub fn fixed(half_width: f64) -> Self {
        Self {
            center: State::zeros(),
            half_widths: State::repeat(half_width),
            cap: State::repeat(half_width),
            config: DisturbanceConfig {
                cap: half_width,
                ..DisturbanceConfig::default()
            },
            max_residual: State::zeros(),
        }
    }

    /// `c ← λc + (1 − λ) d`.
    pub fn update_center(&self, sample: &State) -> Self {
        let lambda = self.config.lambda;
        Self {
            center: self.center * lambda + sample * (1.0 - lambda),
            ..self.clone()
        }
    }

    /// `Δ̄ ← γΔ̄ + (1 − γ)‖d − c‖_∞`, then clipped to `[floor, cap]`.
    pub fn update_bounds(&self, sample: &State) -> Self {
        let gamma = self.config.gamma;
        let dev = (sample - self.center).abs();
        let drive = if self.config.per_component {
            dev
        } else {
            State::repeat(dev.amax())
        };
        let raw = self.half_widths * gamma + drive * (1.0 - gamma);
        let half_widths = raw.zip_map(&self.cap, |h, c| h.min(c).max(self.config.floor.min(c)));
        Self {
            half_widths,
            max_residual: self.max_residual.sup(&dev),
            ..self.clone()
        }
    }

    pub fn update(&self, sample: &State) -> Self {
        self.update_center(sample).update_bounds(sample)
    }

    pub fn contains(&self, sample: &State) -> bool {
        (sample - self.center)
            .iter()
            .zip(self.half_widths.iter())
            .all(|(d, h)| d.abs() <= *h)
    }

    pub fn as_box(&self) -> BoxSet<NX> {
        BoxSet {
            lower: self.center - self.half_widths,
            upper: self.center + self.half_widths,
        }
    }
}

/// Box over-approximation of the ball `L_ξ‖Δξ‖·𝔹`.
pub fn learning_uncertainty(l_xi: f64, delta_xi_norm: f64) -> BoxSet<NX> {
    BoxSet::symmetric(State::repeat(l_xi.abs() * delta_xi_norm.abs()))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LipschitzCost {
    pub l_x: f64,
    pub l_u: f64,
}

/// `sup ‖W y‖₂` over the box `y ∈ [lo, hi]`: per-axis extremes when `W` is
/// diagonal, vertex enumeration otherwise.
fn sup_weighted_norm<const N: usize>(
    w: &SMatrix<f64, N, N>,
    lo: &SVector<f64, N>,
    hi: &SVector<f64, N>,
) -> f64 {
    let diagonal = (0..N).all(|i| (0..N).all(|j| i == j || w[(i, j)] == 0.0));
    if diagonal {
        return (0..N)
            .map(|i| (w[(i, i)] * lo[i]).abs().max((w[(i, i)] * hi[i]).abs()).powi(2))
            .sum::<f64>()
            .sqrt();
    }
    assert!(N <= 20, "vertex enumeration limited to 20 dimensions");
    (0..1usize << N)
        .map(|mask| {
            let y = SVector::<f64, N>::from_fn(|i, _| if mask >> i & 1 == 1 { hi[i] } else { lo[i] });
            (w * y).norm()
        })
        .fold(0.0, f64::max)
}

/// Lipschitz constants of `ℓ_c = ‖x − x_r‖²_Q + ‖u − u_r‖²_R` on `X × U`:
/// `|ℓ(x₁,u₁) − ℓ(x₂,u₂)| ≤ L_x‖x₁ − x₂‖ + L_u‖u₁ − u₂‖`.
pub fn lipschitz_cost<const N: usize, const M: usize>(
    q: &SMatrix<f64, N, N>,
    r: &SMatrix<f64, M, M>,
    x: &BoxSet<N>,
    u: &BoxSet<M>,
    x_ref: &SVector<f64, N>,
    u_ref: &SVector<f64, M>,
) -> LipschitzCost {
    // ℓ(x₁) − ℓ(x₂) = (x₁ − x₂)ᵀ Q (x₁ + x₂ − 2x_r) for symmetric Q
    let qs = (q + q.transpose()) * 0.5;
    let rs = (r + r.transpose()) * 0.5;
    LipschitzCost {
        l_x: sup_weighted_norm(&qs, &((x.lower - x_ref) * 2.0), &((x.upper - x_ref) * 2.0)),
        l_u: sup_weighted_norm(&rs, &((u.lower - u_ref) * 2.0), &((u.upper - u_ref) * 2.0)),
    }
}

/// Stage cost `‖x − x_r‖²_Q + ‖u − u_r‖²_R`.
pub fn stage_cost<const N: usize, const M: usize>(
    q: &SMatrix<f64, N, N>,
    r: &SMatrix<f64, M, M>,
    x: &SVector<f64, N>,
    u: &SVector<f64, M>,
    x_ref: &SVector<f64, N>,
    u_ref: &SVector<f64, M>,
) -> f64 {
    let dx = x - x_ref;
    let du = u - u_ref;
    (dx.transpose() * q * dx)[0] + (du.transpose() * r * du)[0]
}

/// Coefficient-Lipschitz constant of `Ψ(x, u) ξ`: the largest library-row
/// norm over the samples, times a safety factor of 1.5.
pub fn estimate_l_xi(terms: &[Term], samples: &[(State, Input)]) -> f64 {
    1.5 * samples
        .iter()
        .map(|(x, u)| library_row(terms, x, u).iter().map(|v| v * v).sum::<f64>().sqrt())
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests;

//! Box-shaped robust positively invariant sets for `e⁺ = A e + w`,
//! `|w| ≤ w̄` element-wise.
//!
//! When `|A|` (element-wise absolute value) is a contraction the interval
//! iteration `s ← |A| s + w̄` converges to a box that is one-step invariant.
//! Well-damped sampled-data loops often have `ρ(|A|) > 1` even though
//! `ρ(A) < 1`; there the box hull of the minimal RPI set,
//! `Σ_{i≥0} |Aⁱ| w̄`, is used instead. Its series is truncated at the first
//! `M` with `‖|Aᴹ|‖_∞ ≤ α`, and the tail is covered by a uniform pad, which
//! makes the box invariant under `M`-step transitions.

use nalgebra::{SMatrix, SVector};

use super::lqr::spectral_radius;
use crate::{Error, Result};

const INTERVAL_MAX_ITER: usize = 1_000_000;
const HULL_TAIL: f64 = 1e-3;
const HULL_MAX_STEPS: usize = 200_000;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum RpiMethod {
    /// One-step invariant box from the interval iteration.
    Interval { iterations: usize },
    /// Hull of the minimal RPI set, invariant over `steps` transitions.
    Hull { steps: usize },
}

/// Origin-centred box `|e| ≤ s`.
#[derive(Clone, Debug, PartialEq)]
pub struct RpiSet<const N: usize> {
    pub half_widths: SVector<f64, N>,
    pub method: RpiMethod,
    /// Smallest slack of the invariance certificate; non-negative when it holds.
    pub margin: f64,
}

impl<const N: usize> RpiSet<N> {
    pub fn contains(&self, e: &SVector<f64, N>) -> bool {
        e.iter()
            .zip(self.half_widths.iter())
            .all(|(v, s)| v.abs() <= *s)
    }

    pub fn max_half_width(&self) -> f64 {
        self.half_widths.max()
    }
}

#[derive(Clone, Debug)]
enum Kind<const N: usize> {
    Interval {
        abs_a: SMatrix<f64, N, N>,
    },
    Hull {
        /// `Σ_{i<M} |Aⁱ|`
        sum: SMatrix<f64, N, N>,
        /// `|Aᴹ|`
        tail: SMatrix<f64, N, N>,
        alpha: f64,
        steps: usize,
    },
}

/// Precomputed RPI operator for a fixed closed loop; applying it to a new
/// disturbance bound is cheap.
#[derive(Clone, Debug)]
pub struct RpiMap<const N: usize> {
    kind: Kind<N>,
    eps: f64,
    /// `ρ(A)` and `ρ(|A|)`.
    pub spectral_radius: f64,
    pub abs_spectral_radius: f64,
}

impl<const N: usize> RpiMap<N> {
    pub fn new(a_cl: &SMatrix<f64, N, N>, eps: f64) -> Result<Self> {
        if !(eps > 0.0 && eps < 1.0) {
            return Err(Error::InvalidParameter {
                name: "eps",
                reason: format!("must lie in (0, 1), got {eps}"),
            });
        }
        let abs_a = a_cl.abs();
        let rho_abs = spectral_radius(&abs_a);
        let rho = spectral_radius(a_cl);
        if !rho.is_finite() || !rho_abs.is_finite() {
            return Err(Error::NotContractive {
                spectral_radius: f64::INFINITY,
            });
        }
        let kind = if rho_abs < 1.0 {
            Kind::Interval { abs_a }
        } else if rho < 1.0 {
            let mut power = SMatrix::<f64, N, N>::identity();
            let mut sum = SMatrix::<f64, N, N>::zeros();
            let mut steps = 0;
            loop {
                sum += power.abs();
                power = a_cl * power;
                steps += 1;
                let alpha = power.abs().row_sum().max();
                if alpha <= HULL_TAIL {
                    break Kind::Hull {
                        sum,
                        tail: power.abs(),
                        alpha,
                        steps,
                    };
                }
                if steps >= HULL_MAX_STEPS {
                    return Err(Error::NotContractive {
                        spectral_radius: rho,
                    });
                }
            }
        } else {
            return Err(Error::NotContractive {
                spectral_radius: rho_abs,
            });
        };
        Ok(Self {
            kind,
            eps,
            spectral_radius: rho,
            abs_spectral_radius: rho_abs,
        })
    }

    pub fn method_name(&self) -> &'static str {
        match self.kind {
            Kind::Interval { .. } => "interval",
            Kind::Hull { .. } => "hull",
        }
    }

    /// RPI box for the disturbance half-widths `w`.
    pub fn apply(&self, w: &SVector<f64, N>) -> Result<RpiSet<N>> {
        if w.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidParameter {
                name: "w",
                reason: "disturbance half-widths must be finite and non-negative".into(),
            });
        }
        let (s, method) = match &self.kind {
            Kind::Interval { abs_a } => {
                let mut s = SVector::<f64, N>::zeros();
                let mut it = 0;
                loop {
                    let next = abs_a * s + w;
                    let step = next - s;
                    s = next;
                    it += 1;
                    // below ε absolutely and relative to each component
                    let settled = (0..N).all(|i| step[i] <= self.eps * s[i].min(1.0));
                    let change = step.amax();
                    if settled {
                        break;
                    }
                    if it >= INTERVAL_MAX_ITER {
                        return Err(Error::NoConvergence {
                            iterations: it,
                            residual_norm: change,
                        });
                    }
                }
                (s * (1.0 + self.eps), RpiMethod::Interval { iterations: it })
            }
            Kind::Hull {
                sum, alpha, steps, ..
            } => {
                let partial = sum * w;
                let pad = alpha * partial.amax() / (1.0 - alpha);
                (
                    partial.add_scalar(pad),
                    RpiMethod::Hull { steps: *steps },
                )
            }
        };
        let margin = self.certificate_margin(&s, w);
        Ok(RpiSet {
            half_widths: s,
            method,
            margin,
        })
    }

    /// Interval: `min (s(1 + 2ε) − |A|s − w)`. Hull: `min (s − |Aᴹ|s − Σ|Aⁱ|w)`.
    pub fn certificate_margin(&self, s: &SVector<f64, N>, w: &SVector<f64, N>) -> f64 {
        if N == 0 {
            return 0.0;
        }
        match &self.kind {
            Kind::Interval { abs_a } => (s * (1.0 + 2.0 * self.eps) - abs_a * s - w).min(),
            Kind::Hull { sum, tail, .. } => (s - tail * s - sum * w).min(),
        }
    }
}

/// RPI box for `e⁺ = A_cl e + w`, `|w| ≤ w` (combined disturbance and
/// learning-uncertainty half-widths).
pub fn compute_rpi<const N: usize>(
    a_cl: &SMatrix<f64, N, N>,
    w: &SVector<f64, N>,
    eps: f64,
) -> Result<RpiSet<N>> {
    RpiMap::new(a_cl, eps)?.apply(w)
}

/// Fraction of `trajectories` error paths from `e = 0`, driven by
/// disturbances drawn uniformly (half of them at random box vertices) from
/// `|w| ≤ w̄`, that stay in `S` at every one of `steps` steps.
pub fn monte_carlo_containment<const N: usize, R: rand::Rng>(
    a_cl: &SMatrix<f64, N, N>,
    w: &SVector<f64, N>,
    s: &RpiSet<N>,
    trajectories: usize,
    steps: usize,
    rng: &mut R,
) -> f64 {
    let mut inside = 0usize;
    for t in 0..trajectories {
        let vertices = t % 2 == 0;
        let mut e = SVector::<f64, N>::zeros();
        let mut ok = true;
        for _ in 0..steps {
            let d = SVector::<f64, N>::from_fn(|i, _| {
                if vertices {
                    if rng.random::<bool>() {
                        w[i]
                    } else {
                        -w[i]
                    }
                } else {
                    rng.random_range(-1.0..=1.0) * w[i]
                }
            });
            e = a_cl * e + d;
            if !s.contains(&e) {
                ok = false;
                break;
            }
        }
        inside += ok as usize;
    }
    inside as f64 / trajectories.max(1) as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{Matrix1, Matrix2, Vector1, Vector2};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn scalar_geometric_series() {
        let s = compute_rpi(&Matrix1::new(0.5), &Vector1::new(0.1), 1e-10).unwrap();
        assert!((s.half_widths[0] - 0.2).abs() < 1e-9);
        assert!(s.margin >= 0.0);
    }

    #[test]
    fn zero_dynamics_give_the_disturbance_box() {
        let w = Vector2::new(0.3, 0.05);
        let s = compute_rpi(&Matrix2::zeros(), &w, 1e-10).unwrap();
        assert!((s.half_widths - w).amax() <= 2e-10 * w.amax());
    }

    #[test]
    fn unstable_loop_is_rejected_with_its_radius() {
        match compute_rpi(&Matrix1::new(1.2), &Vector1::new(0.1), 1e-10) {
            Err(Error::NotContractive { spectral_radius }) => {
                assert!((spectral_radius - 1.2).abs() < 1e-12)
            }
            other => panic!("{other:?}"),
        }
    }

    // ρ(A) = 0.95 but ρ(|A|) > 1: rotation-like coupling
    fn oscillatory() -> Matrix2<f64> {
        let t: f64 = 0.9;
        Matrix2::new(t.cos(), -t.sin(), t.sin(), t.cos()) * 0.95
    }

    #[test]
    fn hull_branch_covers_trajectories() {
        let a = oscillatory();
        assert!(spectral_radius(&a.abs()) > 1.0);
        let w = Vector2::new(0.01, 0.02);
        let map = RpiMap::new(&a, 1e-10).unwrap();
        assert_eq!(map.method_name(), "hull");
        let s = map.apply(&w).unwrap();
        assert!(s.margin >= 0.0, "{}", s.margin);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let rate = monte_carlo_containment(&a, &w, &s, 2000, 300, &mut rng);
        assert_eq!(rate, 1.0);
    }

    #[test]
    fn zero_disturbance_gives_zero_box() {
        for a in [Matrix2::new(0.5, 0.1, 0.0, 0.3), oscillatory()] {
            let s = compute_rpi(&a, &Vector2::zeros(), 1e-10).unwrap();
            assert_eq!(s.half_widths, Vector2::zeros());
        }
    }

    proptest! {
        #[test]
        fn interval_certificate_holds(
            a in prop::array::uniform4(-0.45f64..0.45),
            w in prop::array::uniform2(0.0f64..1.0),
        ) {
            let a = Matrix2::new(a[0], a[1], a[2], a[3]);
            let w = Vector2::new(w[0], w[1]);
            let s = compute_rpi(&a, &w, 1e-10).unwrap();
            let interval = matches!(s.method, RpiMethod::Interval { .. });
            prop_assert!(interval);
            let lhs = a.abs() * s.half_widths + w;
            for i in 0..2 {
                prop_assert!(lhs[i] <= s.half_widths[i] * (1.0 + 2e-10) + 1e-15);
            }
        }

        #[test]
        fn interval_box_contains_sampled_paths(
            a in prop::array::uniform4(-0.45f64..0.45),
            seed in 0u64..1000,
        ) {
            let a = Matrix2::new(a[0], a[1], a[2], a[3]);
            let w = Vector2::new(0.1, 0.2);
            let s = compute_rpi(&a, &w, 1e-10).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            prop_assert_eq!(monte_carlo_containment(&a, &w, &s, 50, 50, &mut rng), 1.0);
        }

        #[test]
        fn half_widths_are_monotone_in_the_disturbance(
            w in prop::array::uniform2(0.0f64..1.0),
            k in 1.0f64..3.0,
        ) {
            let a = oscillatory();
            let w = Vector2::new(w[0], w[1]);
            let map = RpiMap::new(&a, 1e-10).unwrap();
            let s1 = map.apply(&w).unwrap();
            let s2 = map.apply(&(w * k)).unwrap();
            prop_assert!((s2.half_widths - s1.half_widths).min() >= -1e-15);
        }
    }
}

//! Reference trajectories over a fixed time window.

use serde::{Deserialize, Serialize};

use nalgebra::Vector3;

use crate::quadsim::euler_rate_matrix;
use crate::sets::BoxSet;
use crate::{idx, Error, Result, State, NX};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrajectoryKind {
    Helical,
    Spline,
    Lemniscate,
    Hover,
}

impl TrajectoryKind {
    pub const BENCHMARK: [Self; 3] = [Self::Helical, Self::Spline, Self::Lemniscate];

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Helical => "helical",
            Self::Spline => "spline",
            Self::Lemniscate => "lemniscate",
            Self::Hover => "hover",
        }
    }

    /// Unscaled position, velocity and acceleration at `t`.
    pub fn raw(&self, t: f64) -> ([f64; 3], [f64; 3], [f64; 3]) {
        let (s, c) = t.sin_cos();
        let (s2, c2) = (2.0 * t).sin_cos();
        match self {
            Self::Helical => (
                [t, s + 0.1 * (3.0 * t).sin(), c2],
                [1.0, c + 0.3 * (3.0 * t).cos(), -2.0 * s2],
                [0.0, -s - 0.9 * (3.0 * t).sin(), -4.0 * c2],
            ),
            Self::Spline => (
                [2.0 * s, 2.0 * c2, 0.5 * t],
                [2.0 * c, -4.0 * s2, 0.5],
                [-2.0 * s, -8.0 * c2, 0.0],
            ),
            Self::Lemniscate => ([s * c, s * s, s * c], [c2, s2, c2], [-2.0 * s2, 2.0 * c2, -2.0 * s2]),
            Self::Hover => ([0.0; 3], [0.0; 3], [0.0; 3]),
        }
    }
}

impl std::fmt::Display for TrajectoryKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for TrajectoryKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        [Self::Helical, Self::Spline, Self::Lemniscate, Self::Hover]
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown trajectory `{s}`")))
    }
}

/// A trajectory mapped per axis by `p = offset + gain · raw(t)`.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryRef {
    pub kind: TrajectoryKind,
    pub duration: f64,
    pub offset: [f64; 3],
    pub gain: [f64; 3],
    /// With a gravity value, reference states carry the roll, pitch and body
    /// rates that realise the reference acceleration; without, they are level.
    pub gravity: Option<f64>,
}

const GRID: usize = 2001;

impl TrajectoryRef {
    /// Printed formulas, unscaled.
    pub fn raw(kind: TrajectoryKind, duration: f64) -> Self {
        Self {
            kind,
            duration,
            offset: [0.0; 3],
            gain: [1.0; 3],
            gravity: None,
        }
    }

    /// Scales each axis so its range over the window spans `fraction` of the
    /// box half-width on either side of the box centre.
    pub fn fitted(kind: TrajectoryKind, duration: f64, bounds: &BoxSet<NX>, fraction: f64) -> Self {
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for i in 0..GRID {
            let t = duration * i as f64 / (GRID - 1) as f64;
            let (p, ..) = kind.raw(t);
            for a in 0..3 {
                lo[a] = lo[a].min(p[a]);
                hi[a] = hi[a].max(p[a]);
            }
        }
        let mut offset = [0.0; 3];
        let mut gain = [0.0; 3];
        for a in 0..3 {
            let center = 0.5 * (bounds.lower[a] + bounds.upper[a]);
            let half = 0.5 * (bounds.upper[a] - bounds.lower[a]);
            let span = 0.5 * (hi[a] - lo[a]);
            gain[a] = if span > 1e-12 { fraction * half / span } else { 0.0 };
            offset[a] = center - gain[a] * 0.5 * (hi[a] + lo[a]);
        }
        Self {
            kind,
            duration,
            offset,
            gain,
            gravity: None,
        }
    }

    /// Trims attitudes to the acceleration under gravity `g`.
    pub fn with_gravity(mut self, g: f64) -> Self {
        self.gravity = Some(g);
        self
    }

    /// Position, velocity and yaw at `t` (clamped to the window).
    pub fn reference(&self, t: f64) -> ([f64; 3], [f64; 3], f64) {
        let t = t.clamp(0.0, self.duration);
        let (p, v, _) = self.kind.raw(t);
        (
            std::array::from_fn(|a| self.offset[a] + self.gain[a] * p[a]),
            std::array::from_fn(|a| self.gain[a] * v[a]),
            0.0,
        )
    }

    pub fn acceleration(&self, t: f64) -> [f64; 3] {
        if !(0.0..=self.duration).contains(&t) {
            return [0.0; 3];
        }
        let (.., a) = self.kind.raw(t);
        std::array::from_fn(|i| self.gain[i] * a[i])
    }

    /// Roll and pitch whose thrust axis produces the reference acceleration
    /// at zero yaw; level without gravity.
    pub fn attitude(&self, t: f64) -> (f64, f64) {
        let Some(g) = self.gravity else {
            return (0.0, 0.0);
        };
        let a = self.acceleration(t.clamp(0.0, self.duration));
        let f = [a[0], a[1], a[2] + g];
        let theta = f[0].atan2(f[2]);
        let phi = (-f[1]).atan2(f[0].hypot(f[2]));
        (phi, theta)
    }

    /// Reference state: position, velocity, trimmed attitude and the body
    /// rates of its time derivative.
    pub fn state(&self, t: f64) -> State {
        let (p, v, yaw) = self.reference(t);
        let mut x = State::zeros();
        for a in 0..3 {
            x[idx::PX + a] = p[a];
            x[idx::VX + a] = v[a];
        }
        x[idx::PSI] = yaw;
        if self.gravity.is_some() {
            let (phi, theta) = self.attitude(t);
            let h = 1e-5;
            let (p1, t1) = self.attitude(t + h);
            let (p0, t0) = self.attitude(t - h);
            let rates = Vector3::new((p1 - p0) / (2.0 * h), (t1 - t0) / (2.0 * h), 0.0);
            let w = euler_rate_matrix(phi, theta)
                .try_inverse()
                .map_or(Vector3::zeros(), |e| e * rates);
            x[idx::PHI] = phi;
            x[idx::THETA] = theta;
            for a in 0..3 {
                x[idx::WX + a] = w[a];
            }
        }
        x
    }

    /// Smallest box containing `base` and the reference position/velocity
    /// over the window with `margin` to spare.
    pub fn enclosing_box(&self, base: &BoxSet<NX>, margin: f64) -> BoxSet<NX> {
        let mut out = base.clone();
        for i in 0..GRID {
            let x = self.state(self.duration * i as f64 / (GRID - 1) as f64);
            for j in idx::POS.chain(idx::VEL) {
                out.lower[j] = out.lower[j].min(x[j] - margin);
                out.upper[j] = out.upper[j].max(x[j] + margin);
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sets::state_constraints;

    #[test]
    fn printed_values_at_zero() {
        let h = TrajectoryRef::raw(TrajectoryKind::Helical, 10.0);
        assert_eq!(h.reference(0.0).0, [0.0, 0.0, 1.0]);
        let l = TrajectoryRef::raw(TrajectoryKind::Lemniscate, 10.0);
        assert_eq!(l.reference(0.0).0, [0.0, 0.0, 0.0]);
    }

    #[test]
    fn velocity_matches_finite_differences() {
        let xb = state_constraints();
        for kind in TrajectoryKind::BENCHMARK {
            for traj in [TrajectoryRef::raw(kind, 10.0), TrajectoryRef::fitted(kind, 10.0, &xb, 0.6)] {
                for i in 1..100 {
                    let t = 0.1 * i as f64 - 0.013;
                    let h = 1e-5;
                    let (p1, ..) = traj.reference(t + h);
                    let (p0, ..) = traj.reference(t - h);
                    let (_, v, _) = traj.reference(t);
                    for a in 0..3 {
                        let fd = (p1[a] - p0[a]) / (2.0 * h);
                        assert!((fd - v[a]).abs() < 1e-6, "{kind} t={t} axis {a}");
                    }
                }
            }
        }
    }

    #[test]
    fn fitted_references_stay_inside_the_box() {
        let xb = state_constraints();
        for kind in TrajectoryKind::BENCHMARK {
            let traj = TrajectoryRef::fitted(kind, 10.0, &xb, 0.6);
            for i in 0..=1000 {
                let x = traj.state(0.01 * i as f64);
                assert!(xb.contains(&x), "{kind} leaves the box at step {i}");
                for a in 0..3 {
                    let c = 0.5 * (xb.lower[a] + xb.upper[a]);
                    assert!((x[a] - c).abs() <= 0.3 + 1e-9);
                }
            }
        }
    }

    #[test]
    fn acceleration_matches_finite_differences() {
        let xb = state_constraints();
        for kind in TrajectoryKind::BENCHMARK {
            let traj = TrajectoryRef::fitted(kind, 10.0, &xb, 0.6);
            for i in 1..100 {
                let t = 0.1 * i as f64 - 0.013;
                let h = 1e-5;
                let (_, v1, _) = traj.reference(t + h);
                let (_, v0, _) = traj.reference(t - h);
                let acc = traj.acceleration(t);
                for a in 0..3 {
                    assert!(((v1[a] - v0[a]) / (2.0 * h) - acc[a]).abs() < 1e-5, "{kind} t={t} axis {a}");
                }
            }
        }
    }

    #[test]
    fn trimmed_attitude_realises_the_acceleration() {
        use crate::quadsim::{ContinuousModel, QuadModel, QuadParams};
        let params = QuadParams::default();
        let model = QuadModel::new(params);
        for kind in TrajectoryKind::BENCHMARK {
            let traj = TrajectoryRef::fitted(kind, 10.0, &state_constraints(), 0.6).with_gravity(params.gravity);
            for i in 0..50 {
                let t = 0.2 * i as f64 + 0.05;
                let x = traj.state(t);
                let acc = traj.acceleration(t);
                let thrust = params.mass * (acc[0].powi(2) + acc[1].powi(2) + (acc[2] + params.gravity).powi(2)).sqrt();
                let d = model.deriv(&x, &crate::Input::new(thrust, 0.0, 0.0, 0.0));
                for a in 0..3 {
                    assert!((d[idx::VX + a] - acc[a]).abs() < 1e-9, "{kind} t={t} axis {a}");
                }
                // Euler rates of the state reproduce the attitude derivative
                let h = 1e-5;
                let (p1, q1) = traj.attitude(t + h);
                let (p0, q0) = traj.attitude(t - h);
                assert!((d[idx::PHI] - (p1 - p0) / (2.0 * h)).abs() < 1e-6);
                assert!((d[idx::THETA] - (q1 - q0) / (2.0 * h)).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn level_without_gravity() {
        let traj = TrajectoryRef::fitted(TrajectoryKind::Spline, 10.0, &state_constraints(), 0.6);
        let x = traj.state(1.3);
        assert_eq!(x[idx::PHI], 0.0);
        assert_eq!(x[idx::WY], 0.0);
    }

    #[test]
    fn out_of_window_time_is_clamped() {
        let traj = TrajectoryRef::raw(TrajectoryKind::Spline, 10.0);
        assert_eq!(traj.reference(12.0), traj.reference(10.0));
        assert_eq!(traj.reference(-1.0), traj.reference(0.0));
    }

    #[test]
    fn hover_sits_at_the_box_centre() {
        let traj = TrajectoryRef::fitted(TrajectoryKind::Hover, 10.0, &state_constraints(), 0.6);
        assert_eq!(traj.reference(3.0).0, [0.0, 0.0, 2.0]);
        assert_eq!(traj.reference(3.0).1, [0.0; 3]);
    }

    #[test]
    fn enclosing_box_covers_raw_helix() {
        let traj = TrajectoryRef::raw(TrajectoryKind::Helical, 10.0);
        let b = traj.enclosing_box(&state_constraints(), 0.5);
        assert!(b.upper[idx::PX] >= 10.5);
        assert!(b.lower[idx::PZ] <= -1.49);
        assert_eq!(b.upper[idx::PHI], 1.0);
    }

    #[test]
    fn names_round_trip() {
        for k in [TrajectoryKind::Helical, TrajectoryKind::Spline, TrajectoryKind::Lemniscate, TrajectoryKind::Hover] {
            assert_eq!(k.as_str().parse::<TrajectoryKind>().unwrap(), k);
        }
        assert!("circle".parse::<TrajectoryKind>().is_err());
    }
}

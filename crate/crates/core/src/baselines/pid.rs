//! Cascaded PID: position → velocity → acceleration → (thrust, attitude
//! setpoint), and attitude → body rate → angular acceleration → torque.

use serde::{Deserialize, Serialize};

use crate::quadsim::QuadParams;
use crate::sets::BoxSet;
use crate::{idx, Input, State, NU};

/// Gain vectors ordered `[x, y, z, φ, θ, ψ]` (outer) and
/// `[v_x, v_y, v_z, ω_x, ω_y, ω_z]` (inner).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PidGains {
    pub outer_kp: [f64; 6],
    pub outer_ki: [f64; 6],
    pub outer_kd: [f64; 6],
    pub inner_kp: [f64; 6],
    pub inner_ki: [f64; 6],
    pub inner_kd: [f64; 6],
}

impl Default for PidGains {
    fn default() -> Self {
        Self {
            outer_kp: [4.0, 4.0, 6.0, 150.0, 150.0, 80.0],
            outer_ki: [0.5, 0.5, 1.0, 20.0, 20.0, 10.0],
            outer_kd: [0.8, 0.8, 1.2, 2.0, 2.0, 1.5],
            inner_kp: [20.0, 20.0, 15.0, 30.0, 30.0, 25.0],
            inner_ki: [5.0, 5.0, 3.0, 5.0, 5.0, 4.0],
            inner_kd: [2.0, 2.0, 1.5, 0.5, 0.5, 0.3],
        }
    }
}

/// One PID channel with clamped output and conditional integration.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PidChannel {
    pub integral: f64,
    pub prev_error: f64,
    /// Last measurement, for derivative-on-measurement channels.
    pub prev_measurement: Option<f64>,
}

impl PidChannel {
    /// `Kp e + Ki (Σ e Δt) + Kd (e − e_prev)/Δt` including the current sample.
    pub fn raw(&self, kp: f64, ki: f64, kd: f64, e: f64, dt: f64) -> f64 {
        kp * e + ki * (self.integral + e * dt) + kd * (e - self.prev_error) / dt
    }

    /// Output clamped to `±limit`. The integral only accumulates while the
    /// output is unsaturated or the error drives it back inside.
    pub fn step(&mut self, gains: (f64, f64, f64), e: f64, dt: f64, limit: (f64, f64)) -> f64 {
        let (kp, ki, kd) = gains;
        let raw = self.raw(kp, ki, kd, e, dt);
        self.finish(raw, e, dt, limit)
    }

    /// Like [`PidChannel::step`] but differentiates `−y` instead of the
    /// error, so setpoint jumps from an outer loop do not kick the output.
    pub fn step_measured(
        &mut self,
        gains: (f64, f64, f64),
        e: f64,
        y: f64,
        dt: f64,
        limit: (f64, f64),
    ) -> f64 {
        let (kp, ki, kd) = gains;
        let dy = self.prev_measurement.map_or(0.0, |p| y - p);
        self.prev_measurement = Some(y);
        let raw = kp * e + ki * (self.integral + e * dt) - kd * dy / dt;
        self.finish(raw, e, dt, limit)
    }

    fn finish(&mut self, raw: f64, e: f64, dt: f64, limit: (f64, f64)) -> f64 {
        let out = raw.clamp(limit.0, limit.1);
        let winding_up = (raw > limit.1 && e > 0.0) || (raw < limit.0 && e < 0.0);
        if !winding_up {
            self.integral += e * dt;
        }
        self.prev_error = e;
        out
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct PidState {
    pub outer: [PidChannel; 6],
    pub inner: [PidChannel; 6],
}

/// Largest commanded tilt (rad).
const MAX_TILT: f64 = 0.35;
/// Largest commanded body rate (rad/s).
const MAX_RATE: f64 = 10.0;

/// One control step towards `reference` (position, velocity feedforward
/// and attitude taken from it; yaw from its ψ entry). Output saturated to
/// `input_box`.
pub fn pid_step(
    gains: &PidGains,
    st: &PidState,
    params: &QuadParams,
    input_box: &BoxSet<NU>,
    x: &State,
    reference: &State,
    dt: f64,
) -> (Input, PidState) {
    let mut st = st.clone();
    let g = params.gravity;
    let ch = |v: &[f64; 6], i: usize| v[i];
    let gain = |i: usize, inner: bool| {
        if inner {
            (ch(&gains.inner_kp, i), ch(&gains.inner_ki, i), ch(&gains.inner_kd, i))
        } else {
            (ch(&gains.outer_kp, i), ch(&gains.outer_ki, i), ch(&gains.outer_kd, i))
        }
    };
    let v_lim = [1.0, 1.0, 2.5];
    let thrust_max = input_box.upper[0];
    let az_max = thrust_max / params.mass - g;
    let a_lim = [(-g * MAX_TILT.tan(), g * MAX_TILT.tan()); 2];

    // translational cascade
    let mut acc = [0.0; 3];
    for i in 0..3 {
        let e = reference[idx::PX + i] - x[idx::PX + i];
        let v_sp = reference[idx::VX + i]
            + st.outer[i].step(gain(i, false), e, dt, (-v_lim[i], v_lim[i]));
        let ev = v_sp - x[idx::VX + i];
        let lim = if i < 2 { a_lim[i] } else { (-g, az_max) };
        acc[i] = st.inner[i].step_measured(gain(i, true), ev, x[idx::VX + i], dt, lim);
    }
    let (phi, theta, psi) = (x[idx::PHI], x[idx::THETA], x[idx::PSI]);
    let tilt = (phi.cos() * theta.cos()).max(0.5);
    let u1 = params.mass * (g + acc[2]) / tilt;
    let (s, c) = psi.sin_cos();
    let att_sp = [
        ((acc[0] * s - acc[1] * c) / g).clamp(-MAX_TILT, MAX_TILT),
        ((acc[0] * c + acc[1] * s) / g).clamp(-MAX_TILT, MAX_TILT),
        reference[idx::PSI],
    ];

    // rotational cascade
    let mut torque = [0.0; 3];
    for i in 0..3 {
        let e = att_sp[i] - x[idx::PHI + i];
        let rate_sp = reference[idx::WX + i]
            + st.outer[3 + i].step(gain(3 + i, false), e, dt, (-MAX_RATE, MAX_RATE));
        let er = rate_sp - x[idx::WX + i];
        let j = params.inertia[i];
        let lim = (input_box.lower[1 + i] / j, input_box.upper[1 + i] / j);
        torque[i] = j * st.inner[3 + i].step_measured(gain(3 + i, true), er, x[idx::WX + i], dt, lim);
    }
    let u = input_box.clamp(&Input::new(u1, torque[0], torque[1], torque[2]));
    (u, st)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadsim::hover_state;
    use crate::sets::input_constraints;

    #[test]
    fn hover_feedforward_at_zero_error() {
        let p = QuadParams::default();
        let x = hover_state([0.1, -0.2, 2.0]);
        let (u, _) = pid_step(&PidGains::default(), &PidState::default(), &p, &input_constraints(), &x, &x, 0.01);
        assert!((u - p.hover_input()).amax() < 1e-15);
    }

    #[test]
    fn first_step_raw_term() {
        let c = PidChannel::default();
        assert!((c.raw(4.0, 0.5, 0.8, 1.0, 0.01) - 84.005).abs() < 1e-12);
    }

    #[test]
    fn doubling_dt_halves_the_derivative() {
        let c = PidChannel {
            prev_error: 0.2,
            ..PidChannel::default()
        };
        let d1 = c.raw(0.0, 0.0, 1.0, 0.7, 0.01);
        let d2 = c.raw(0.0, 0.0, 1.0, 0.7, 0.02);
        assert!((d1 - 2.0 * d2).abs() < 1e-12);
    }

    #[test]
    fn integral_freezes_while_saturated() {
        let mut c = PidChannel::default();
        for _ in 0..100 {
            c.step((1.0, 1.0, 0.0), 5.0, 0.01, (-1.0, 1.0));
        }
        assert_eq!(c.integral, 0.0);
        c.step((1.0, 1.0, 0.0), 0.1, 0.01, (-1.0, 1.0));
        assert!(c.integral > 0.0);
    }

    #[test]
    fn x_and_y_errors_map_to_pitch_and_roll() {
        let p = QuadParams::default();
        let reference = hover_state([0.0, 0.0, 2.0]);
        let ub = input_constraints();
        let gains = PidGains::default();
        let mut xa = reference;
        xa[idx::PX] = -0.05;
        let mut xb = reference;
        xb[idx::PY] = -0.05;
        let (ua, _) = pid_step(&gains, &PidState::default(), &p, &ub, &xa, &reference, 0.01);
        let (ub_, _) = pid_step(&gains, &PidState::default(), &p, &ub, &xb, &reference, 0.01);
        // a +x demand pitches nose-down (+θ); a +y demand rolls (−φ)
        assert!(ua[2] > 0.0);
        assert!((ua[2] + ub_[1]).abs() < 1e-15);
        assert_eq!(ua[0], ub_[0]);
        assert_eq!(ua[1], 0.0);
        assert_eq!(ub_[2], 0.0);
    }

    #[test]
    fn closed_loop_regulates_to_a_setpoint() {
        use crate::quadsim::{plant_step, DrydenConfig, DrydenState};
        let p = QuadParams::default();
        let ub = input_constraints();
        let target = hover_state([0.1, -0.1, 2.1]);
        let mut x = hover_state([0.0, 0.0, 2.0]);
        let mut st = PidState::default();
        let calm = DrydenState::new(DrydenConfig::calm());
        for _ in 0..800 {
            let (u, s) = pid_step(&PidGains::default(), &st, &p, &ub, &x, &target, 0.01);
            st = s;
            x = plant_step(&p, &x, &u, &calm, 0.01).unwrap().state;
        }
        assert!((x - target).rows(0, 3).amax() < 5e-3, "{}", x);
    }
}

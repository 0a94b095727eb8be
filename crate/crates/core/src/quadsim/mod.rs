//! Ground-truth quadrotor plant.
//!
//! Inertial frame is z-up: gravity enters as `(0, 0, -g)` and thrust as
//! `R(Θ) e3 u1 / m`, with `R` the ZYX (yaw-pitch-roll) body-to-inertial
//! rotation.

mod dryden;
mod plant;
mod rk4;

pub use dryden::{dryden_step, DrydenConfig, DrydenState};
pub use plant::{plant_step, PlantStep};
pub use rk4::{rk4_step, ContinuousModel, DiscreteModel, Rk4};

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::{idx, Error, Input, MatA, MatB, Result, State};

/// Pitch magnitude closer than this to pi/2 is rejected as singular.
pub const SINGULARITY_TOL: f64 = 1e-6;
/// Normal-operation pitch envelope.
pub const THETA_MAX: f64 = std::f64::consts::FRAC_PI_4;

/// Physical parameters of the airframe.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QuadParams {
    pub mass: f64,
    pub gravity: f64,
    pub inertia: [f64; 3],
    pub arm_length: f64,
    /// Torque-to-thrust ratio of the rotors.
    pub kappa: f64,
}

impl Default for QuadParams {
    fn default() -> Self {
        // Crazyflie 2.1
        Self {
            mass: 0.027,
            gravity: 9.81,
            inertia: [1.4e-5, 1.4e-5, 2.17e-5],
            arm_length: 0.046,
            kappa: 3.15e-3,
        }
    }
}

impl QuadParams {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("mass", self.mass),
            ("gravity", self.gravity),
            ("inertia.xx", self.inertia[0]),
            ("inertia.yy", self.inertia[1]),
            ("inertia.zz", self.inertia[2]),
            ("arm_length", self.arm_length),
            ("kappa", self.kappa),
        ];
        for (name, v) in fields {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParameter {
                    name: "quad_params",
                    reason: format!("{name} must be strictly positive, got {v}"),
                });
            }
        }
        Ok(())
    }

    pub fn hover_thrust(&self) -> f64 {
        self.mass * self.gravity
    }

    pub fn hover_input(&self) -> Input {
        Input::new(self.hover_thrust(), 0.0, 0.0, 0.0)
    }

    /// Thrust and torques produced by the four rotor forces `F1..F4`.
    pub fn mix(&self, forces: [f64; 4]) -> Input {
        let [f1, f2, f3, f4] = forces;
        Input::new(
            f1 + f2 + f3 + f4,
            self.arm_length * (f2 - f4),
            self.arm_length * (f3 - f1),
            self.kappa * (f1 - f2 + f3 - f4),
        )
    }
}

/// Body-to-inertial rotation for ZYX Euler angles `(φ, θ, ψ)`.
pub fn rotation(phi: f64, theta: f64, psi: f64) -> Matrix3<f64> {
    let (sf, cf) = phi.sin_cos();
    let (st, ct) = theta.sin_cos();
    let (sp, cp) = psi.sin_cos();
    Matrix3::new(
        ct * cp,
        sf * st * cp - cf * sp,
        cf * st * cp + sf * sp,
        ct * sp,
        sf * st * sp + cf * cp,
        cf * st * sp - sf * cp,
        -st,
        sf * ct,
        cf * ct,
    )
}

/// Maps body rates to Euler-angle rates.
pub fn euler_rate_matrix(phi: f64, theta: f64) -> Matrix3<f64> {
    let (sf, cf) = phi.sin_cos();
    let (st, ct) = theta.sin_cos();
    let tt = st / ct;
    Matrix3::new(1.0, sf * tt, cf * tt, 0.0, cf, -sf, 0.0, sf / ct, cf / ct)
}

fn check_pitch(theta: f64) -> Result<()> {
    if !theta.is_finite() || theta.abs() >= std::f64::consts::FRAC_PI_2 - SINGULARITY_TOL {
        return Err(Error::Singularity {
            pitch: theta.abs(),
            tol: SINGULARITY_TOL,
        });
    }
    Ok(())
}

/// Rigid-body state derivative, rejecting the Euler-rate singularity.
pub fn continuous_dynamics(x: &State, u: &Input, p: &QuadParams) -> Result<State> {
    check_pitch(x[idx::THETA])?;
    Ok(QuadModel::new(*p).deriv(x, u))
}

/// First-principles model, usable wherever a [`ContinuousModel`] is expected.
#[derive(Clone, Copy, Debug)]
pub struct QuadModel {
    pub params: QuadParams,
}

impl QuadModel {
    pub fn new(params: QuadParams) -> Self {
        Self { params }
    }
}

impl ContinuousModel for QuadModel {
    fn deriv(&self, x: &State, u: &Input) -> State {
        let p = &self.params;
        let (phi, theta, psi) = (x[idx::PHI], x[idx::THETA], x[idx::PSI]);
        let w = Vector3::new(x[idx::WX], x[idx::WY], x[idx::WZ]);
        let [jx, jy, jz] = p.inertia;

        let r = rotation(phi, theta, psi);
        let acc = r.column(2) * (u[0] / p.mass) - Vector3::new(0.0, 0.0, p.gravity);
        let ang_rate = euler_rate_matrix(phi, theta) * w;
        let wdot = Vector3::new(
            (u[1] - (jz - jy) * w.y * w.z) / jx,
            (u[2] - (jx - jz) * w.z * w.x) / jy,
            (u[3] - (jy - jx) * w.x * w.y) / jz,
        );

        let mut d = State::zeros();
        d.fixed_rows_mut::<3>(0).copy_from(&x.fixed_rows::<3>(3));
        d.fixed_rows_mut::<3>(3).copy_from(&acc);
        d.fixed_rows_mut::<3>(6).copy_from(&ang_rate);
        d.fixed_rows_mut::<3>(9).copy_from(&wdot);
        d
    }

    fn deriv_jacobian(&self, x: &State, u: &Input) -> (State, MatA, MatB) {
        let p = &self.params;
        let (phi, theta, psi) = (x[idx::PHI], x[idx::THETA], x[idx::PSI]);
        let (wx, wy, wz) = (x[idx::WX], x[idx::WY], x[idx::WZ]);
        let [jx, jy, jz] = p.inertia;
        let (sf, cf) = phi.sin_cos();
        let (st, ct) = theta.sin_cos();
        let (sp, cp) = psi.sin_cos();
        let thrust = u[0] / p.mass;

        let mut a = MatA::zeros();
        let mut b = MatB::zeros();

        for i in 0..3 {
            a[(i, 3 + i)] = 1.0;
        }

        // thrust direction R e3
        let dir = [cf * st * cp + sf * sp, cf * st * sp - sf * cp, cf * ct];
        a[(idx::VX, idx::PHI)] = (-sf * st * cp + cf * sp) * thrust;
        a[(idx::VX, idx::THETA)] = cf * ct * cp * thrust;
        a[(idx::VX, idx::PSI)] = (-cf * st * sp + sf * cp) * thrust;
        a[(idx::VY, idx::PHI)] = (-sf * st * sp - cf * cp) * thrust;
        a[(idx::VY, idx::THETA)] = cf * ct * sp * thrust;
        a[(idx::VY, idx::PSI)] = (cf * st * cp + sf * sp) * thrust;
        a[(idx::VZ, idx::PHI)] = -sf * ct * thrust;
        a[(idx::VZ, idx::THETA)] = -cf * st * thrust;
        for i in 0..3 {
            b[(3 + i, 0)] = dir[i] / p.mass;
        }

        // Euler kinematics
        let tt = st / ct;
        let sec2 = 1.0 / (ct * ct);
        let q = sf * wy + cf * wz;
        let q_phi = cf * wy - sf * wz;
        a[(idx::PHI, idx::PHI)] = q_phi * tt;
        a[(idx::PHI, idx::THETA)] = q * sec2;
        a[(idx::PHI, idx::WX)] = 1.0;
        a[(idx::PHI, idx::WY)] = sf * tt;
        a[(idx::PHI, idx::WZ)] = cf * tt;
        a[(idx::THETA, idx::PHI)] = -q;
        a[(idx::THETA, idx::WY)] = cf;
        a[(idx::THETA, idx::WZ)] = -sf;
        a[(idx::PSI, idx::PHI)] = q_phi / ct;
        a[(idx::PSI, idx::THETA)] = q * st * sec2;
        a[(idx::PSI, idx::WY)] = sf / ct;
        a[(idx::PSI, idx::WZ)] = cf / ct;

        // Euler equations
        a[(idx::WX, idx::WY)] = -(jz - jy) * wz / jx;
        a[(idx::WX, idx::WZ)] = -(jz - jy) * wy / jx;
        a[(idx::WY, idx::WX)] = -(jx - jz) * wz / jy;
        a[(idx::WY, idx::WZ)] = -(jx - jz) * wx / jy;
        a[(idx::WZ, idx::WX)] = -(jy - jx) * wy / jz;
        a[(idx::WZ, idx::WY)] = -(jy - jx) * wx / jz;
        b[(idx::WX, 1)] = 1.0 / jx;
        b[(idx::WY, 2)] = 1.0 / jy;
        b[(idx::WZ, 3)] = 1.0 / jz;

        (self.deriv(x, u), a, b)
    }
}

/// Exact hover state at a given position.
pub fn hover_state(position: [f64; 3]) -> State {
    let mut x = State::zeros();
    x[idx::PX] = position[0];
    x[idx::PY] = position[1];
    x[idx::PZ] = position[2];
    x
}

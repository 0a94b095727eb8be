//! Sparse-identification tube MPC for a quadrotor.
//!
//! The crate is organised the way the control loop runs:
//!
//! * [`quadsim`] is the ground-truth plant (rigid body, Dryden wind, RK4).
//! * [`ident`] learns a sparse residual model `Ψ(x, u) ξ` from flight data.
//! * [`sets`] holds the box algebra behind the tube: adaptive disturbance
//!   sets, RPI boxes, constraint tightening, LQR and Lipschitz constants.
//! * [`mpc`] solves the finite-horizon problem over a learned model.
//! * [`baselines`] carries the comparison controllers (PID, nominal MPC,
//!   fixed-tube MPC and an MLP-model MPC).
//! * [`harness`] wires everything into closed-loop experiments, metrics
//!   and file export.

pub mod baselines;
pub mod error;
pub mod harness;
pub mod ident;
pub mod model_file;
pub mod mpc;
pub mod quadsim;
pub mod sets;

pub use error::{Error, Result};

use nalgebra::{SMatrix, SVector};

/// Number of state components: position, velocity, Euler angles, body rates.
pub const NX: usize = 12;
/// Number of inputs: total thrust and three body torques.
pub const NU: usize = 4;

/// Quadrotor state `[P; v; Θ; ω]`.
pub type State = SVector<f64, NX>;
/// Input `[u1 (thrust, N); u2, u3, u4 (torques, N·m)]`.
pub type Input = SVector<f64, NU>;
/// State Jacobian block.
pub type MatA = SMatrix<f64, NX, NX>;
/// Input Jacobian block.
pub type MatB = SMatrix<f64, NX, NU>;
/// Feedback gain mapping state errors to inputs.
pub type MatK = SMatrix<f64, NU, NX>;

/// Index helpers for the state vector.
pub mod idx {
    pub const PX: usize = 0;
    pub const PY: usize = 1;
    pub const PZ: usize = 2;
    pub const VX: usize = 3;
    pub const VY: usize = 4;
    pub const VZ: usize = 5;
    pub const PHI: usize = 6;
    pub const THETA: usize = 7;
    pub const PSI: usize = 8;
    pub const WX: usize = 9;
    pub const WY: usize = 10;
    pub const WZ: usize = 11;

    pub const POS: std::ops::Range<usize> = 0..3;
    pub const VEL: std::ops::Range<usize> = 3..6;
    pub const ANG: std::ops::Range<usize> = 6..9;
    pub const RATE: std::ops::Range<usize> = 9..12;
}

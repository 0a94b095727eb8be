//! Finite-horizon tracking MPC over a discrete prediction model, solved by
//! Gauss-Newton single shooting with exact input bounds and penalised
//! state and terminal constraints.

mod qp;

use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector, SMatrix};
use serde::{Deserialize, Serialize};

use crate::quadsim::DiscreteModel;
use crate::sets::{lqr_gain, BoxSet, TubeGain};
use crate::{Error, Input, MatA, MatB, MatK, Result, State, NU, NX};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MpcConfig {
    pub horizon: usize,
    /// Diagonal of the state weight.
    pub q: [f64; NX],
    /// Diagonal of the input weight.
    pub r: [f64; NU],
    pub dt: f64,
    /// Input step tolerance, relative to each input's half-range.
    pub tol: f64,
    pub max_iter: usize,
    /// Weight of the quadratic penalty on state and terminal violations.
    pub slack_weight: f64,
    /// Violations (relative to the box half-width) below this count as zero.
    pub zero_slack: f64,
    /// Violations above this make the solve infeasible-hard.
    pub hard_slack: f64,
}

impl Default for MpcConfig {
    fn default() -> Self {
        Self {
            horizon: 15,
            q: [10.0, 10.0, 10.0, 5.0, 5.0, 5.0, 2.0, 2.0, 2.0, 1.0, 1.0, 1.0],
            r: [0.1; NU],
            dt: 0.01,
            tol: 1e-4,
            max_iter: 100,
            slack_weight: 1e6,
            zero_slack: 1e-4,
            hard_slack: 1e-2,
        }
    }
}

impl MpcConfig {
    pub fn q_matrix(&self) -> SMatrix<f64, NX, NX> {
        SMatrix::from_diagonal(&State::from_row_slice(&self.q))
    }

    pub fn r_matrix(&self) -> SMatrix<f64, NU, NU> {
        SMatrix::from_diagonal(&Input::from_row_slice(&self.r))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |name, reason: String| Err(Error::InvalidParameter { name, reason });
        if self.horizon == 0 {
            return bad("horizon", "must be at least 1".into());
        }
        if self.q.iter().any(|v| !(*v >= 0.0)) {
            return bad("q", "weights must be non-negative".into());
        }
        if self.r.iter().any(|v| !(*v > 0.0)) {
            return bad("r", "weights must be positive".into());
        }
        if !(self.dt > 0.0) || !(self.tol > 0.0) || self.max_iter == 0 {
            return bad("dt", "dt, tol and max_iter must be positive".into());
        }
        Ok(())
    }
}

/// Terminal cost `V_f = ‖x − x_r‖²_P`, set `{V_f ≤ α}` and local law
/// `κ_f(x) = u_r + K (x − x_r)`.
#[derive(Clone, Debug, PartialEq)]
pub struct TerminalIngredients {
    pub p: MatA,
    pub alpha: f64,
    pub k: MatK,
    pub u_ref: Input,
}

impl TerminalIngredients {
    pub fn value(&self, x: &State, x_ref: &State) -> f64 {
        let e = x - x_ref;
        (e.transpose() * self.p * e)[0]
    }

    pub fn contains(&self, x: &State, x_ref: &State) -> bool {
        self.value(x, x_ref) <= self.alpha
    }

    pub fn kappa(&self, x: &State, x_ref: &State) -> Input {
        self.u_ref + self.k * (x - x_ref)
    }
}

const ALPHA_CAP: f64 = 1e9;

/// Largest `α` with `{eᵀPe ≤ α}` around `x_ref` inside `state_box` and its
/// `κ_f` image inside `input_box`, given `P⁻¹` and the terminal gain.
pub fn terminal_alpha(
    p_inv: &MatA,
    k: &MatK,
    state_box: &BoxSet<NX>,
    input_box: &BoxSet<NU>,
    x_ref: &State,
    u_ref: &Input,
) -> Result<f64> {
    let mut alpha = ALPHA_CAP;
    for i in 0..NX {
        let room = (state_box.upper[i] - x_ref[i]).min(x_ref[i] - state_box.lower[i]);
        if room <= 0.0 {
            return Err(Error::EmptyTerminalSet(format!(
                "reference lies on or outside the state bound on axis {i}"
            )));
        }
        if p_inv[(i, i)] > 0.0 {
            alpha = alpha.min(room * room / p_inv[(i, i)]);
        }
    }
    for j in 0..NU {
        let room = (input_box.upper[j] - u_ref[j]).min(u_ref[j] - input_box.lower[j]);
        if room <= 0.0 {
            return Err(Error::EmptyTerminalSet(format!(
                "reference input lies on or outside the bound on input {j}"
            )));
        }
        let row = k.row(j);
        let spread = (row * p_inv * row.transpose())[0];
        if spread > 0.0 {
            alpha = alpha.min(room * room / spread);
        }
    }
    if !(alpha > 0.0) {
        return Err(Error::EmptyTerminalSet(format!("level {alpha}")));
    }
    Ok(alpha)
}

/// LQR terminal weight and the largest level set that fits, centred at
/// `x_ref`, inside `X_S` while its `κ_f` image stays inside `U_S`.
///
/// Both fits have closed forms: `max eᵢ` over `{eᵀPe ≤ α}` is
/// `√(α (P⁻¹)ᵢᵢ)`, and `max (Ke)ⱼ` is `√(α kⱼᵀP⁻¹kⱼ)`.
pub fn terminal_ingredients(
    a: &MatA,
    b: &MatB,
    cfg: &MpcConfig,
    state_box: &BoxSet<NX>,
    input_box: &BoxSet<NU>,
    x_ref: &State,
    u_ref: &Input,
) -> Result<TerminalIngredients> {
    let lqr = lqr_gain(a, b, &cfg.q_matrix(), &cfg.r_matrix())?;
    let k = -lqr.k;
    let p_inv = lqr
        .p
        .cholesky()
        .ok_or_else(|| Error::Riccati("terminal weight is not positive definite".into()))?
        .inverse();
    let alpha = terminal_alpha(&p_inv, &k, state_box, input_box, x_ref, u_ref)?;
    Ok(TerminalIngredients {
        p: lqr.p,
        alpha,
        k,
        u_ref: *u_ref,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SolveStatus {
    Optimal,
    FeasibleWithSlack,
    MaxIter,
    InfeasibleHard,
}

impl SolveStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Optimal => "optimal",
            Self::FeasibleWithSlack => "feasible-with-slack",
            Self::MaxIter => "max-iter",
            Self::InfeasibleHard => "infeasible-hard",
        }
    }
}

impl std::fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for SolveStatus {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        [
            Self::Optimal,
            Self::FeasibleWithSlack,
            Self::MaxIter,
            Self::InfeasibleHard,
        ]
        .into_iter()
        .find(|v| v.as_str() == s)
        .ok_or_else(|| Error::Config(format!("unknown solver status `{s}`")))
    }
}

#[derive(Clone, Debug)]
pub struct MpcSolution {
    pub inputs: Vec<Input>,
    pub states: Vec<State>,
    /// `Σ ℓ + V_f` without penalty terms.
    pub cost: f64,
    pub penalty: f64,
    pub status: SolveStatus,
    pub iterations: usize,
    pub solve_time: Duration,
    /// Largest state violation relative to the box half-width.
    pub max_violation: f64,
    /// `max(0, √V_f(x̂_N) − √α)`.
    pub terminal_violation: f64,
}

/// One instance of the finite-horizon problem.
pub struct Ocp<'a> {
    pub model: &'a dyn DiscreteModel,
    /// Reference states for stages `0..=N`.
    pub refs: &'a [State],
    pub u_ref: Input,
    pub state_box: &'a BoxSet<NX>,
    pub input_box: &'a BoxSet<NU>,
    pub terminal: &'a TerminalIngredients,
    /// Enforce `x̂_N ∈ 𝕏_f` (tube controllers); otherwise only `V_f` is used.
    pub terminal_constraint: bool,
    pub config: &'a MpcConfig,
}

struct Rollout {
    states: Vec<State>,
    jac: Vec<(MatA, MatB)>,
}

impl Ocp<'_> {
    fn n(&self) -> usize {
        self.config.horizon
    }

    fn rollout(&self, x0: &State, u: &[Input], jacobians: bool) -> Result<Rollout> {
        let mut states = Vec::with_capacity(u.len() + 1);
        let mut jac = Vec::with_capacity(if jacobians { u.len() } else { 0 });
        states.push(*x0);
        for (i, ui) in u.iter().enumerate() {
            let next = if jacobians {
                let (next, a, b) = self.model.step_jacobian(&states[i], ui);
                jac.push((a, b));
                next
            } else {
                self.model.step(&states[i], ui)
            };
            if !next.iter().all(|v| v.is_finite()) {
                return Err(Error::Solver {
                    step: i,
                    reason: "prediction left the finite range".into(),
                });
            }
            states.push(next);
        }
        Ok(Rollout { states, jac })
    }

    fn violation(&self, x: &State) -> State {
        let b = self.state_box;
        State::from_fn(|i, _| (x[i] - b.upper[i]).max(b.lower[i] - x[i]).max(0.0))
    }

    /// `max(0, ‖x_N − x_r‖_P − √α)`: the norm form keeps the residual
    /// close to linear in the inputs, which Gauss-Newton needs.
    fn terminal_excess(&self, x_n: &State) -> f64 {
        if self.terminal_constraint {
            let v = self.terminal.value(x_n, &self.refs[self.n()]);
            (v.sqrt() - self.terminal.alpha.sqrt()).max(0.0)
        } else {
            0.0
        }
    }

    /// (cost, penalty)
    fn merit(&self, states: &[State], u: &[Input]) -> (f64, f64) {
        let q = &self.config.q;
        let r = &self.config.r;
        let n = self.n();
        let mut cost = 0.0;
        let mut penalty = 0.0;
        for i in 0..n {
            let e = states[i] - self.refs[i];
            let du = u[i] - self.u_ref;
            cost += (0..NX).map(|j| q[j] * e[j] * e[j]).sum::<f64>();
            cost += (0..NU).map(|j| r[j] * du[j] * du[j]).sum::<f64>();
        }
        cost += self.terminal.value(&states[n], &self.refs[n]);
        for x in &states[1..] {
            penalty += self.violation(x).norm_squared();
        }
        penalty += self.terminal_excess(&states[n]).powi(2);
        (cost, self.config.slack_weight * penalty)
    }

    fn normalized_violation(&self, states: &[State]) -> f64 {
        let half = self.state_box.half_widths();
        states[1..]
            .iter()
            .map(|x| {
                let v = self.violation(x);
                (0..NX)
                    .map(|i| v[i] / half[i].max(1e-9))
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max)
    }

    /// Gauss-Newton Hessian and gradient of the merit in the inputs.
    ///
    /// With `G` the stacked sensitivities `∂x_i/∂u` and `W` the block
    /// diagonal of stage curvatures, `H = 2R + 2GᵀWG` and `g = 2RΔu + 2Gᵀw`.
    fn quadratic_model(&self, ro: &Rollout, u: &[Input]) -> (DMatrix<f64>, DVector<f64>) {
        let n = self.n();
        let nv = NU * n;
        let rho = self.config.slack_weight;
        let q = self.config.q_matrix();
        let mut h = DMatrix::<f64>::zeros(nv, nv);
        let mut g = DVector::<f64>::zeros(nv);
        for i in 0..n {
            for j in 0..NU {
                let k = NU * i + j;
                h[(k, k)] += 2.0 * self.config.r[j];
                g[k] += 2.0 * self.config.r[j] * (u[i][j] - self.u_ref[j]);
            }
        }
        // row block i − 1 holds ∂x_i/∂u; only its first NU·i columns are nonzero
        let mut sens = DMatrix::<f64>::zeros(NX * n, nv);
        let mut weighted = DMatrix::<f64>::zeros(NX * n, nv);
        let mut grad = DVector::<f64>::zeros(NX * n);
        for i in 1..=n {
            let (a, b) = &ro.jac[i - 1];
            let row = NX * (i - 1);
            let cols = NU * (i - 1);
            if cols > 0 {
                let prev = sens.view((row - NX, 0), (NX, cols)).clone_owned();
                let next = a * prev;
                sens.view_mut((row, 0), (NX, cols)).copy_from(&next);
            }
            sens.view_mut((row, cols), (NX, NU)).copy_from(b);

            let x = &ro.states[i];
            let e = x - self.refs[i];
            let viol = self.violation(x);
            let mut w: MatA = if i == n { self.terminal.p } else { q };
            let mut grad_x = w * e;
            if i == n {
                let excess = self.terminal_excess(x);
                if excess > 0.0 {
                    // radial residual c·Lᵀe with LLᵀ = P and c = 1 − √α/‖e‖_P:
                    // its norm is the excess, its gradient 2ρc·Pe is exact and
                    // 2ρc²·P is the Gauss-Newton curvature
                    let c = excess / self.terminal.value(x, &self.refs[n]).sqrt();
                    w += self.terminal.p * (rho * c * c);
                    grad_x += self.terminal.p * e * (rho * c);
                }
            }
            for c in 0..NX {
                if viol[c] > 0.0 {
                    w[(c, c)] += rho;
                    let sign = if x[c] > self.state_box.upper[c] { 1.0 } else { -1.0 };
                    grad_x[c] += rho * sign * viol[c];
                }
            }
            let block = sens.view((row, 0), (NX, NU * i));
            let wb = DMatrix::from_column_slice(NX, NX, w.as_slice()) * block;
            weighted.view_mut((row, 0), (NX, NU * i)).copy_from(&wb);
            grad.rows_mut(row, NX).copy_from(&grad_x);
        }
        let sens_t = sens.transpose();
        h.gemm(2.0, &sens_t, &weighted, 1.0);
        g.gemv(2.0, &sens_t, &grad, 1.0);
        (h, g)
    }
}

/// Solves the finite-horizon problem from `x0`; `warm` seeds the inputs.
pub fn solve_ocp(x0: &State, ocp: &Ocp<'_>, warm: Option<&[Input]>) -> Result<MpcSolution> {
    let start = Instant::now();
    let cfg = ocp.config;
    let n = ocp.n();
    if ocp.refs.len() != n + 1 {
        return Err(Error::InvalidParameter {
            name: "refs",
            reason: format!("need {} reference states, got {}", n + 1, ocp.refs.len()),
        });
    }
    if !x0.iter().all(|v| v.is_finite()) {
        return Err(Error::Solver {
            step: 0,
            reason: "initial state is not finite".into(),
        });
    }
    let ub = ocp.input_box;
    let mut u: Vec<Input> = (0..n)
        .map(|i| {
            let seed = warm.and_then(|w| w.get(i)).copied().unwrap_or(ocp.u_ref);
            ub.clamp(&seed)
        })
        .collect();
    let scale = ub.half_widths().map(|v| v.max(1e-12));
    let mut ro = match ocp.rollout(x0, &u, true) {
        Ok(ro) => ro,
        Err(_) if warm.is_some() => {
            u = vec![ub.clamp(&ocp.u_ref); n];
            ocp.rollout(x0, &u, true)?
        }
        Err(e) => return Err(e),
    };
    let (mut cost, mut penalty) = ocp.merit(&ro.states, &u);
    let mut converged = false;
    let mut iterations = 0;
    while iterations < cfg.max_iter {
        iterations += 1;
        let (mut h, g) = ocp.quadratic_model(&ro, &u);
        let damping = 1e-10 * h.diagonal().amax();
        for k in 0..NU * n {
            h[(k, k)] += damping;
        }
        let lo = DVector::from_fn(NU * n, |k, _| ub.lower[k % NU] - u[k / NU][k % NU]);
        let hi = DVector::from_fn(NU * n, |k, _| ub.upper[k % NU] - u[k / NU][k % NU]);
        let qp = qp::solve_box_qp(&h, &g, &lo, &hi, 20 * NU * n).ok_or_else(|| Error::Solver {
            step: iterations,
            reason: "Gauss-Newton Hessian lost definiteness".into(),
        })?;
        let delta = qp.x;
        let slope = g.dot(&delta);
        let merit0 = cost + penalty;
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..30 {
            let trial: Vec<Input> = (0..n)
                .map(|i| ub.clamp(&(u[i] + Input::from_fn(|j, _| t * delta[NU * i + j]))))
                .collect();
            // a trial that leaves the finite range is rejected like any other
            let Ok(tr) = ocp.rollout(x0, &trial, false) else {
                t *= 0.5;
                continue;
            };
            let (c, p) = ocp.merit(&tr.states, &trial);
            if c + p <= merit0 + 1e-4 * t * slope.min(0.0) || c + p < merit0 * (1.0 - 1e-14) {
                accepted = Some((trial, c, p));
                break;
            }
            t *= 0.5;
        }
        let step_size = (0..NU * n)
            .map(|k| (t * delta[k]).abs() / scale[k % NU])
            .fold(0.0, f64::max);
        log::trace!(
            "iter {iterations}: merit {:.6e} penalty {:.3e} slope {:.3e} t {t:.3e} step {step_size:.3e} qp {}",
            merit0,
            penalty,
            slope,
            qp.iterations
        );
        match accepted {
            Some((trial, c, p)) => {
                let gain = merit0 - (c + p);
                u = trial;
                cost = c;
                penalty = p;
                ro = ocp.rollout(x0, &u, true)?;
                if step_size <= cfg.tol || gain <= 1e-12 * (1.0 + merit0) {
                    converged = true;
                    break;
                }
            }
            None => {
                // no descent along the Gauss-Newton direction: stationary to
                // working precision
                converged = step_size <= cfg.tol.sqrt() || slope.abs() <= 1e-10 * (1.0 + merit0);
                break;
            }
        }
    }
    let max_violation = ocp.normalized_violation(&ro.states);
    let terminal_violation = ocp.terminal_excess(&ro.states[n]);
    log::trace!(
        "done: violation {max_violation:.3e} terminal value {:.3e} alpha {:.3e}",
        ocp.terminal.value(&ro.states[n], &ocp.refs[n]),
        ocp.terminal.alpha
    );
    let status = if max_violation > cfg.hard_slack {
        SolveStatus::InfeasibleHard
    } else if !converged {
        SolveStatus::MaxIter
    } else if max_violation > cfg.zero_slack
        || terminal_violation > cfg.zero_slack * ocp.terminal.alpha.sqrt().max(1e-9)
    {
        SolveStatus::FeasibleWithSlack
    } else {
        SolveStatus::Optimal
    };
    Ok(MpcSolution {
        inputs: u,
        states: ro.states,
        cost,
        penalty,
        status,
        iterations,
        solve_time: start.elapsed(),
        max_violation,
        terminal_violation,
    })
}

/// `u = û*(0) + K (x − x̂*(0))`, saturated to `U`; the flag reports whether
/// saturation was active.
pub fn tube_control(
    sol: &MpcSolution,
    x: &State,
    gain: &TubeGain,
    input_box: &BoxSet<NU>,
) -> (Input, bool) {
    let raw = sol.inputs[0] + gain.k * (x - sol.states[0]);
    let u = input_box.clamp(&raw);
    (u, u != raw)
}

/// Drops the first stage and appends `κ_f(x̂_N)` with its successor state.
pub fn shift_warm_start(
    sol: &MpcSolution,
    term: &TerminalIngredients,
    model: &dyn DiscreteModel,
    x_ref_end: &State,
) -> MpcSolution {
    let last = *sol.states.last().expect("non-empty prediction");
    let u_tail = term.kappa(&last, x_ref_end);
    let mut inputs: Vec<Input> = sol.inputs.iter().skip(1).copied().collect();
    inputs.push(u_tail);
    let mut states: Vec<State> = sol.states.iter().skip(1).copied().collect();
    states.push(model.step(&last, &u_tail));
    MpcSolution {
        inputs,
        states,
        iterations: 0,
        solve_time: Duration::ZERO,
        ..sol.clone()
    }
}

/// `x(k+1) − f̂ᵈ(x(k), u(k))` in state units.
pub fn realized_disturbance(
    x_next: &State,
    x: &State,
    u: &Input,
    model: &dyn DiscreteModel,
) -> State {
    x_next - model.step(x, u)
}

/// Prediction model shifted by a constant residual rate: `f̂ᵈ(x, u) + dt·c`.
pub struct OffsetModel<'a> {
    pub inner: &'a dyn DiscreteModel,
    pub offset: State,
}

impl DiscreteModel for OffsetModel<'_> {
    fn dt(&self) -> f64 {
        self.inner.dt()
    }

    fn step(&self, x: &State, u: &Input) -> State {
        self.inner.step(x, u) + self.offset * self.inner.dt()
    }

    fn step_jacobian(&self, x: &State, u: &Input) -> (State, MatA, MatB) {
        let (next, a, b) = self.inner.step_jacobian(x, u);
        (next + self.offset * self.inner.dt(), a, b)
    }
}

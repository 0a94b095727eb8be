use std::sync::Arc;
use std::time::Instant;

use super::config::{ControllerKind, ExperimentConfig};
use super::controllers::build_controller;
use super::trajectory::TrajectoryKind;
use crate::baselines::MlpModel;
use crate::mpc::SolveStatus;
use crate::quadsim::{plant_step, DrydenState};
use crate::sets::{input_constraints, lipschitz_cost};
use crate::{Error, Input, Result, State};

/// One control step.
#[derive(Clone, Debug, PartialEq)]
pub struct StepRecord {
    pub k: usize,
    pub t: f64,
    pub state: State,
    pub nominal: State,
    pub reference: State,
    pub input: Input,
    /// Realized disturbance in rate units.
    pub disturbance: State,
    /// `V*_N` (NaN without an optimiser).
    pub cost: f64,
    pub status: Option<SolveStatus>,
    pub iterations: usize,
    /// Solver wall time in milliseconds (NaN without an optimiser).
    pub solve_ms: f64,
    /// Largest RPI half-width in force (NaN without a tube).
    pub tube_max: f64,
    /// `D(k+1)` centre and half-widths (NaN without an adaptive set).
    pub set_center: State,
    pub set_bound: State,
    pub contained: Option<bool>,
    pub model_version: u64,
    pub set_version: Option<u64>,
    pub learned: bool,
    /// `x(k)` lies outside `X`.
    pub state_violation: bool,
    pub saturated: bool,
}

/// Closed-loop trace with the constants its audits need.
#[derive(Clone, Debug, PartialEq)]
pub struct RunLog {
    pub controller: ControllerKind,
    pub trajectory: TrajectoryKind,
    pub seed: u64,
    pub dt: f64,
    /// Cost Lipschitz constants over `X × U`.
    pub l_x: f64,
    pub l_u: f64,
    /// Tube gain bound `K̄` (0 without a tube).
    pub k_bar: f64,
    pub records: Vec<StepRecord>,
    pub wall_time: f64,
}

/// `N + 1` reference states from step `k`.
pub fn reference_window(cfg: &ExperimentConfig, traj: &super::TrajectoryRef, k: usize) -> Vec<State> {
    (0..=cfg.mpc.horizon)
        .map(|j| traj.state((k + j) as f64 * cfg.dt))
        .collect()
}

/// Runs one `(controller, trajectory, seed)` cell. The wind realisation is
/// drawn from `seed`; the run is a pure function of its arguments.
pub fn run_closed_loop(
    cfg: &ExperimentConfig,
    kind: ControllerKind,
    trajectory: TrajectoryKind,
    seed: u64,
    net: Option<Arc<MlpModel>>,
) -> Result<RunLog> {
    cfg.validate()?;
    let start = Instant::now();
    let traj = cfg.trajectory(trajectory);
    let xbox = cfg.state_box(trajectory);
    let mut ctrl = build_controller(kind, cfg, xbox.clone(), net)?;
    let mut x = cfg.initial_state(&traj);
    let mut wind = DrydenState::new(cfg.wind.for_seed(seed));
    let ubox = input_constraints();
    // worst case over references inside X × U: measure from a corner
    let lc = lipschitz_cost(&cfg.mpc.q_matrix(), &cfg.mpc.r_matrix(), &xbox, &ubox, &xbox.lower, &ubox.lower);
    let mut log = RunLog {
        controller: kind,
        trajectory,
        seed,
        dt: cfg.dt,
        l_x: lc.l_x,
        l_u: lc.l_u,
        k_bar: ctrl.tube_bound().map_or(0.0, |(k, _)| k),
        records: Vec::with_capacity(cfg.steps()),
        wall_time: 0.0,
    };
    for k in 0..cfg.steps() {
        let refs = reference_window(cfg, &traj, k);
        let at = |e: Error| Error::Solver {
            step: k,
            reason: e.to_string(),
        };
        let tube_max = ctrl.tube_bound().map_or(f64::NAN, |(_, s)| s);
        let d = ctrl.control(k, &x, &refs).map_err(at)?;
        let step = plant_step(&cfg.params, &x, &d.input, &wind, cfg.dt).map_err(at)?;
        let obs = ctrl.observe(k, &x, &d.input, &step.state).map_err(at)?;
        let (set_center, set_bound) = obs.set.unwrap_or((State::repeat(f64::NAN), State::repeat(f64::NAN)));
        log.records.push(StepRecord {
            k,
            t: k as f64 * cfg.dt,
            state: x,
            nominal: d.nominal,
            reference: refs[0],
            input: d.input,
            disturbance: obs.disturbance,
            cost: d.cost.unwrap_or(f64::NAN),
            status: d.status,
            iterations: d.iterations,
            solve_ms: d.solve_time.map_or(f64::NAN, |t| t.as_secs_f64() * 1e3),
            tube_max,
            set_center,
            set_bound,
            contained: obs.contained,
            model_version: obs.model_version,
            set_version: obs.set_version,
            learned: obs.learned.is_some(),
            state_violation: !xbox.contains(&x),
            saturated: d.saturated,
        });
        x = step.state;
        wind = step.wind;
    }
    log.wall_time = start.elapsed().as_secs_f64();
    Ok(log)
}

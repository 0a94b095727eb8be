//! The five closed-loop controllers behind one interface.

use std::sync::Arc;
use std::time::Duration;

use super::config::{ControllerKind, ExperimentConfig};
use crate::baselines::{pid_step, MlpModel, PidGains, PidState};
use crate::ident::{Learner, PimlModel};
use crate::mpc::{
    realized_disturbance, shift_warm_start, solve_ocp, terminal_alpha, tube_control, MpcConfig,
    MpcSolution, Ocp, OffsetModel, SolveStatus, TerminalIngredients,
};
use crate::quadsim::{DiscreteModel, QuadParams};
use crate::sets::{
    estimate_l_xi, hover_linearization, input_constraints, learning_uncertainty, tube_gain, BoxSet,
    DisturbanceSet, Tube, TubeGain, TubeSnapshot,
};
use crate::{Error, Input, MatA, Result, State, NU, NX};

/// What a controller did at one step.
#[derive(Clone, Debug)]
pub struct Decision {
    pub input: Input,
    /// `x̂*(0|k)`; the measured state for controllers without a nominal.
    pub nominal: State,
    /// Optimal value `V*_N`.
    pub cost: Option<f64>,
    pub status: Option<SolveStatus>,
    pub iterations: usize,
    pub solve_time: Option<Duration>,
    /// The applied input hit a bound of `U`.
    pub saturated: bool,
}

/// What a controller learned from one transition.
#[derive(Clone, Debug)]
pub struct Observation {
    /// `(x⁺ − f̂ᵈ(x, u)) / dt` under the controller's prediction model.
    pub disturbance: State,
    /// Whether the sample fell in `D(k)` (before the update).
    pub contained: Option<bool>,
    /// `D(k+1)`.
    pub set: Option<(State, State)>,
    /// RPI half-widths in force for the next step.
    pub tube: Option<State>,
    pub model_version: u64,
    /// Model version the set and tube updates of this step were built on.
    pub set_version: Option<u64>,
    /// Model swapped at this step, with the applied update norm.
    pub learned: Option<f64>,
}

pub trait Controller {
    fn kind(&self) -> ControllerKind;

    /// Input at step `k` from state `x`; `refs` holds `N + 1` reference
    /// states starting at step `k`.
    fn control(&mut self, k: usize, x: &State, refs: &[State]) -> Result<Decision>;

    /// Feeds back the transition `x → x_next` under `u`.
    fn observe(&mut self, k: usize, x: &State, u: &Input, x_next: &State) -> Result<Observation>;

    /// Tube currently in force, if any.
    fn tube(&self) -> Option<&TubeSnapshot> {
        None
    }

    /// `(K̄, s_max)` of the tube currently in force.
    fn tube_bound(&self) -> Option<(f64, f64)> {
        None
    }
}

fn rate_disturbance(model: &dyn DiscreteModel, x: &State, u: &Input, x_next: &State) -> State {
    realized_disturbance(x_next, x, u, model) / model.dt()
}

pub struct PidController {
    gains: PidGains,
    state: PidState,
    params: QuadParams,
    input_box: BoxSet<NU>,
    nominal: PimlModel,
}

impl PidController {
    pub fn new(cfg: &ExperimentConfig) -> Self {
        Self {
            gains: cfg.pid.clone(),
            state: PidState::default(),
            params: cfg.params,
            input_box: input_constraints(),
            nominal: PimlModel::nominal(cfg.params, cfg.dt),
        }
    }
}

impl Controller for PidController {
    fn kind(&self) -> ControllerKind {
        ControllerKind::Pid
    }

    fn control(&mut self, _k: usize, x: &State, refs: &[State]) -> Result<Decision> {
        let dt = self.nominal.dt();
        let (u, st) = pid_step(&self.gains, &self.state, &self.params, &self.input_box, x, &refs[0], dt);
        self.state = st;
        let saturated = (0..NU).any(|i| u[i] <= self.input_box.lower[i] || u[i] >= self.input_box.upper[i]);
        Ok(Decision {
            input: u,
            nominal: *x,
            cost: None,
            status: None,
            iterations: 0,
            solve_time: None,
            saturated,
        })
    }

    fn observe(&mut self, _k: usize, x: &State, u: &Input, x_next: &State) -> Result<Observation> {
        Ok(Observation {
            disturbance: rate_disturbance(&self.nominal, x, u, x_next),
            contained: None,
            set: None,
            tube: None,
            model_version: 0,
            set_version: None,
            learned: None,
        })
    }
}

/// Terminal weight, gain and cached `P⁻¹` for per-step level refits.
#[derive(Clone, Debug)]
struct Terminal {
    ingredients: TerminalIngredients,
    p_inv: MatA,
}

impl Terminal {
    fn new(p: MatA, gain: &TubeGain, u_ref: Input) -> Result<Self> {
        let p_inv = p
            .cholesky()
            .ok_or_else(|| Error::Riccati("terminal weight is not positive definite".into()))?
            .inverse();
        Ok(Self {
            ingredients: TerminalIngredients {
                p,
                alpha: 0.0,
                k: gain.k,
                u_ref,
            },
            p_inv,
        })
    }

    /// Level for the boxes at hand. When the terminal reference has no room
    /// inside them the level collapses to a sliver instead of failing.
    fn refit(&mut self, xb: &BoxSet<NX>, ub: &BoxSet<NU>, x_ref: &State) -> f64 {
        let ing = &mut self.ingredients;
        ing.alpha = terminal_alpha(&self.p_inv, &ing.k, xb, ub, x_ref, &ing.u_ref).unwrap_or_else(|e| {
            log::debug!("terminal set: {e}");
            1e-12
        });
        ing.alpha
    }
}

/// Hover linearization of the nominal physics, its LQR gain and `P`.
pub(super) fn hover_design(cfg: &ExperimentConfig, model: &dyn DiscreteModel) -> Result<(MatA, TubeGain, MatA)> {
    let (a, b) = hover_linearization(model, &cfg.params, [0.0, 0.0, 2.0]);
    let (gain, p) = tube_gain(&a, &b, &cfg.mpc.q_matrix(), &cfg.mpc.r_matrix())?;
    Ok((gain.closed_loop(&a, &b), gain, p))
}

fn mpc_decision(sol: &MpcSolution, input: Input, saturated: bool) -> Decision {
    Decision {
        input,
        nominal: sol.states[0],
        cost: Some(sol.cost),
        status: Some(sol.status),
        iterations: sol.iterations,
        solve_time: Some(sol.solve_time),
        saturated,
    }
}

/// Prediction model of an untightened MPC baseline.
enum Nominal {
    Physics(PimlModel),
    Network(Arc<MlpModel>),
}

impl Nominal {
    fn model(&self) -> &dyn DiscreteModel {
        match self {
            Self::Physics(m) => m,
            Self::Network(m) => m.as_ref(),
        }
    }
}

/// Certainty-equivalent MPC on the full constraint set with a terminal
/// cost only: SMPC with the physics model, NN-MPC with the network.
pub struct NominalMpc {
    kind: ControllerKind,
    model: Nominal,
    physics: PimlModel,
    config: MpcConfig,
    state_box: BoxSet<NX>,
    input_box: BoxSet<NU>,
    terminal: TerminalIngredients,
    warm: Option<Vec<Input>>,
}

impl NominalMpc {
    pub fn smpc(cfg: &ExperimentConfig, state_box: BoxSet<NX>) -> Result<Self> {
        Self::build(ControllerKind::Smpc, Nominal::Physics(PimlModel::nominal(cfg.params, cfg.dt)), cfg, state_box)
    }

    pub fn nn_mpc(cfg: &ExperimentConfig, state_box: BoxSet<NX>, net: Arc<MlpModel>) -> Result<Self> {
        Self::build(ControllerKind::NnMpc, Nominal::Network(net), cfg, state_box)
    }

    fn build(kind: ControllerKind, model: Nominal, cfg: &ExperimentConfig, state_box: BoxSet<NX>) -> Result<Self> {
        let physics = PimlModel::nominal(cfg.params, cfg.dt);
        let (_, gain, p) = hover_design(cfg, &physics)?;
        Ok(Self {
            kind,
            model,
            physics,
            config: cfg.mpc.clone(),
            state_box,
            input_box: input_constraints(),
            terminal: TerminalIngredients {
                p,
                alpha: f64::INFINITY,
                k: gain.k,
                u_ref: cfg.params.hover_input(),
            },
            warm: None,
        })
    }
}

impl Controller for NominalMpc {
    fn kind(&self) -> ControllerKind {
        self.kind
    }

    fn control(&mut self, _k: usize, x: &State, refs: &[State]) -> Result<Decision> {
        let model = self.model.model();
        let ocp = Ocp {
            model,
            refs,
            u_ref: self.terminal.u_ref,
            state_box: &self.state_box,
            input_box: &self.input_box,
            terminal: &self.terminal,
            terminal_constraint: false,
            config: &self.config,
        };
        let sol = solve_ocp(x, &ocp, self.warm.as_deref())?;
        let u = sol.inputs[0];
        let warm = shift_warm_start(&sol, &self.terminal, model, &refs[refs.len() - 1]);
        // hover-hold restart after an infeasible-hard solve
        self.warm = (sol.status != SolveStatus::InfeasibleHard).then_some(warm.inputs);
        Ok(mpc_decision(&sol, u, false))
    }

    fn observe(&mut self, _k: usize, x: &State, u: &Input, x_next: &State) -> Result<Observation> {
        Ok(Observation {
            disturbance: rate_disturbance(&self.physics, x, u, x_next),
            contained: None,
            set: None,
            tube: None,
            model_version: 0,
            set_version: None,
            learned: None,
        })
    }
}

/// Tube MPC over the physics-plus-residual model.
///
/// In adaptive mode (the proposed controller) the disturbance set follows
/// the realized residuals, the error dynamics are relinearized along the
/// nominal trajectory, and the RPI tube and tightened constraints are
/// recomputed every step. In fixed mode (FT-MPC) `D` is frozen at its cap,
/// centred at zero, and the tube is computed once at startup.
pub struct TubeMpc {
    adaptive: bool,
    model: PimlModel,
    learner: Option<Learner>,
    config: MpcConfig,
    dist: DisturbanceSet,
    tube: Tube,
    snapshot: TubeSnapshot,
    terminal: Terminal,
    l_xi: f64,
    delta_xi: f64,
    warm: Option<Vec<Input>>,
    /// `(x̂*(0|k), û*(0|k))` for the relinearization.
    last_nominal: Option<(State, Input)>,
}

impl TubeMpc {
    pub fn proposed(cfg: &ExperimentConfig, state_box: BoxSet<NX>) -> Result<Self> {
        Self::build(cfg, state_box, true)
    }

    pub fn fixed_tube(cfg: &ExperimentConfig, state_box: BoxSet<NX>) -> Result<Self> {
        Self::build(cfg, state_box, false)
    }

    fn build(cfg: &ExperimentConfig, state_box: BoxSet<NX>, adaptive: bool) -> Result<Self> {
        let model = PimlModel::nominal(cfg.params, cfg.dt);
        let (a_cl, gain, p) = hover_design(cfg, &model)?;
        let u_ref = cfg.params.hover_input();
        let mut tube = Tube::new(&a_cl, gain.clone(), state_box, input_constraints(), u_ref, cfg.dt, cfg.rpi_eps)?;
        tube.keep = cfg.tube_keep;
        let dist = if adaptive {
            DisturbanceSet::new(cfg.disturbance.clone())?
        } else {
            DisturbanceSet::fixed(cfg.disturbance.cap)
        };
        let snapshot = tube.refresh(&dist, &learning_uncertainty(0.0, 0.0))?;
        Ok(Self {
            adaptive,
            model,
            learner: cfg.learning.then(|| Learner::new(cfg.learner.clone(), cfg.dt)),
            config: cfg.mpc.clone(),
            dist,
            tube,
            snapshot,
            terminal: Terminal::new(p, &gain, u_ref)?,
            l_xi: 0.0,
            delta_xi: 0.0,
            warm: None,
            last_nominal: None,
        })
    }

    pub fn disturbance_set(&self) -> &DisturbanceSet {
        &self.dist
    }

    pub fn gain(&self) -> &TubeGain {
        &self.tube.gain
    }

    fn relearn(&mut self, k: usize) -> Option<f64> {
        let learner = self.learner.as_mut()?;
        if !learner.due(k) {
            return None;
        }
        match learner.learn() {
            Ok(event) => {
                self.model.residual = learner.model();
                let data = learner.data();
                let samples: Vec<(State, Input)> =
                    data.states.iter().copied().zip(data.inputs.iter().copied()).collect();
                self.l_xi = estimate_l_xi(self.model.residual.terms(), &samples);
                self.delta_xi = event.delta_norm;
                Some(event.delta_norm)
            }
            Err(e) => {
                log::warn!("step {k}: learning skipped: {e}");
                None
            }
        }
    }

    fn adapt(&mut self, sample: &State) -> Result<()> {
        self.dist = self.dist.update(sample);
        if let Some((xh, uh)) = self.last_nominal {
            let (_, a, b) = self.model.step_jacobian(&xh, &uh);
            let a_cl = self.tube.gain.closed_loop(&a, &b);
            if let Err(e) = self.tube.set_closed_loop(&a_cl) {
                log::debug!("keeping the previous error dynamics: {e}");
            }
        }
        let u_xi = learning_uncertainty(self.l_xi, self.delta_xi);
        self.snapshot = self.tube.refresh(&self.dist, &u_xi)?;
        Ok(())
    }
}

impl Controller for TubeMpc {
    fn kind(&self) -> ControllerKind {
        if self.adaptive {
            ControllerKind::Proposed
        } else {
            ControllerKind::FtMpc
        }
    }

    fn control(&mut self, _k: usize, x: &State, refs: &[State]) -> Result<Decision> {
        let snap = &self.snapshot;
        self.terminal
            .refit(&snap.state_box, &snap.input_box, &refs[refs.len() - 1]);
        let center = if self.adaptive { self.dist.center } else { State::zeros() };
        let model = OffsetModel {
            inner: &self.model,
            offset: center,
        };
        let ocp = Ocp {
            model: &model,
            refs,
            u_ref: self.terminal.ingredients.u_ref,
            state_box: &snap.state_box,
            input_box: &snap.input_box,
            terminal: &self.terminal.ingredients,
            terminal_constraint: true,
            config: &self.config,
        };
        let sol = solve_ocp(x, &ocp, self.warm.as_deref())?;
        let (u, saturated) = tube_control(&sol, x, &self.tube.gain, &self.tube.input_box);
        let warm = shift_warm_start(&sol, &self.terminal.ingredients, &model, &refs[refs.len() - 1]);
        // hover-hold restart after an infeasible-hard solve
        self.warm = (sol.status != SolveStatus::InfeasibleHard).then_some(warm.inputs);
        self.last_nominal = Some((sol.states[0], sol.inputs[0]));
        Ok(mpc_decision(&sol, u, saturated))
    }

    fn observe(&mut self, k: usize, x: &State, u: &Input, x_next: &State) -> Result<Observation> {
        let sample = rate_disturbance(&self.model, x, u, x_next);
        let contained = self.dist.contains(&sample);
        if let Some(learner) = self.learner.as_mut() {
            learner.push(*x, *u, self.model.residual_target(x, u, x_next));
        }
        // the model swap precedes the set and tube updates of the same step
        let learned = self.relearn(k);
        if self.adaptive {
            self.adapt(&sample)?;
        }
        Ok(Observation {
            disturbance: sample,
            contained: Some(contained),
            set: Some((self.dist.center, self.dist.half_widths)),
            tube: Some(self.snapshot.rpi.half_widths),
            model_version: self.model.residual.version(),
            set_version: self.adaptive.then(|| self.model.residual.version()),
            learned,
        })
    }

    fn tube(&self) -> Option<&TubeSnapshot> {
        Some(&self.snapshot)
    }

    fn tube_bound(&self) -> Option<(f64, f64)> {
        Some((self.tube.gain.bound, self.snapshot.rpi.max_half_width()))
    }
}

/// Builds the controller for one run. NN-MPC needs a trained network.
pub fn build_controller(
    kind: ControllerKind,
    cfg: &ExperimentConfig,
    state_box: BoxSet<NX>,
    net: Option<Arc<MlpModel>>,
) -> Result<Box<dyn Controller>> {
    Ok(match kind {
        ControllerKind::Pid => Box::new(PidController::new(cfg)),
        ControllerKind::Smpc => Box::new(NominalMpc::smpc(cfg, state_box)?),
        ControllerKind::NnMpc => {
            let net = net.ok_or_else(|| Error::Config("nn-mpc needs a trained network".into()))?;
            Box::new(NominalMpc::nn_mpc(cfg, state_box, net)?)
        }
        ControllerKind::FtMpc => Box::new(TubeMpc::fixed_tube(cfg, state_box)?),
        ControllerKind::Proposed => Box::new(TubeMpc::proposed(cfg, state_box)?),
    })
}

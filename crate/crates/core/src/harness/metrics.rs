use super::config::{ControllerKind, ExperimentConfig};
use super::run::RunLog;
use super::trajectory::TrajectoryKind;
use crate::mpc::SolveStatus;
use crate::sets::stage_cost;
use crate::{idx, Input, NU, NX};
use nalgebra::SMatrix;

/// Settings shared by every metric computation of a bench.
#[derive(Clone, Debug)]
pub struct MetricsOptions {
    /// Steps excluded from RMSE and containment.
    pub burn_in: usize,
    pub q: SMatrix<f64, NX, NX>,
    pub r: SMatrix<f64, NU, NU>,
    pub u_ref: Input,
}

impl MetricsOptions {
    pub fn from_config(cfg: &ExperimentConfig) -> Self {
        Self {
            burn_in: cfg.burn_in_steps(),
            q: cfg.mpc.q_matrix(),
            r: cfg.mpc.r_matrix(),
            u_ref: cfg.params.hover_input(),
        }
    }

    pub fn with_burn_in(mut self, steps: usize) -> Self {
        self.burn_in = steps;
        self
    }
}

/// Per-run figures.
#[derive(Clone, Debug, PartialEq)]
pub struct RunMetrics {
    pub controller: ControllerKind,
    pub trajectory: TrajectoryKind,
    pub seed: u64,
    /// `√mean ‖P − P_ref‖²` after burn-in (m).
    pub position_rmse: f64,
    /// Same over the Euler angles (rad).
    pub attitude_rmse: f64,
    /// `max |P_z − P_z,ref|` after burn-in (m).
    pub max_altitude_error: f64,
    pub mean_solve_ms: f64,
    pub worst_solve_ms: f64,
    pub infeasible_hard: usize,
    pub max_iter: usize,
    pub with_slack: usize,
    /// Fraction of post-burn-in disturbance samples inside `D(k)`.
    pub containment: Option<f64>,
    /// Fraction of steps violating the ISS descent bound.
    pub iss_violations: Option<f64>,
    /// Largest `Δ̄ᵢ(k)` over the run.
    pub max_bound: Option<f64>,
    pub state_violations: usize,
    pub saturated: usize,
    pub steps: usize,
}

fn rms(v: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = v.fold((0.0, 0usize), |(s, n), e| (s + e, n + 1));
    if n == 0 {
        0.0
    } else {
        (sum / n as f64).sqrt()
    }
}

fn finite_mean(v: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = v.filter(|x| x.is_finite()).fold((0.0, 0usize), |(s, n), e| (s + e, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        sum / n as f64
    }
}

/// Fraction of steps `k` with
/// `V*(k+1) − V*(k) > −ℓ(x(k), u(k)) + L_x s(k) + L_u K̄ s(k)`.
pub fn iss_violation_rate(log: &RunLog, opts: &MetricsOptions) -> Option<f64> {
    let rec = &log.records;
    let mut checked = 0usize;
    let mut bad = 0usize;
    for w in rec.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        if !(a.cost.is_finite() && b.cost.is_finite()) {
            continue;
        }
        let s = if a.tube_max.is_finite() { a.tube_max } else { 0.0 };
        let ell = stage_cost(&opts.q, &opts.r, &a.state, &a.input, &a.reference, &opts.u_ref);
        let bound = -ell + log.l_x * s + log.l_u * log.k_bar * s;
        checked += 1;
        if b.cost - a.cost > bound {
            bad += 1;
        }
    }
    (checked > 0).then(|| bad as f64 / checked as f64)
}

pub fn compute_metrics(log: &RunLog, opts: &MetricsOptions) -> RunMetrics {
    let post = || log.records.iter().skip(opts.burn_in);
    let pos_err = |r: &super::run::StepRecord| (r.state.rows(0, 3) - r.reference.rows(0, 3)).norm_squared();
    let att_err = |r: &super::run::StepRecord| (r.state.rows(6, 3) - r.reference.rows(6, 3)).norm_squared();
    let count = |s: SolveStatus| log.records.iter().filter(|r| r.status == Some(s)).count();
    let contained: Vec<bool> = post().filter_map(|r| r.contained).collect();
    let bounds: Vec<f64> = log
        .records
        .iter()
        .flat_map(|r| r.set_bound.iter().copied())
        .filter(|v| v.is_finite())
        .collect();
    RunMetrics {
        controller: log.controller,
        trajectory: log.trajectory,
        seed: log.seed,
        position_rmse: rms(post().map(pos_err)),
        attitude_rmse: rms(post().map(att_err)),
        max_altitude_error: post()
            .map(|r| (r.state[idx::PZ] - r.reference[idx::PZ]).abs())
            .fold(0.0, f64::max),
        mean_solve_ms: finite_mean(log.records.iter().map(|r| r.solve_ms)),
        worst_solve_ms: log
            .records
            .iter()
            .map(|r| r.solve_ms)
            .filter(|v| v.is_finite())
            .fold(f64::NAN, f64::max),
        infeasible_hard: count(SolveStatus::InfeasibleHard),
        max_iter: count(SolveStatus::MaxIter),
        with_slack: count(SolveStatus::FeasibleWithSlack),
        containment: (!contained.is_empty())
            .then(|| contained.iter().filter(|&&c| c).count() as f64 / contained.len() as f64),
        iss_violations: iss_violation_rate(log, opts),
        max_bound: (!bounds.is_empty()).then(|| bounds.iter().copied().fold(0.0, f64::max)),
        state_violations: log.records.iter().filter(|r| r.state_violation).count(),
        saturated: log.records.iter().filter(|r| r.saturated).count(),
        steps: log.records.len(),
    }
}

/// Seed-averaged figures of one `(controller, trajectory)` cell.
#[derive(Clone, Debug, PartialEq)]
pub struct CellSummary {
    pub controller: ControllerKind,
    pub trajectory: TrajectoryKind,
    pub seeds: usize,
    pub position_rmse: f64,
    pub position_rmse_std: f64,
    pub attitude_rmse: f64,
    pub max_altitude_error: f64,
    pub mean_solve_ms: f64,
    pub worst_solve_ms: f64,
    pub infeasible_hard: usize,
    pub containment: Option<f64>,
    pub iss_violations: Option<f64>,
    pub max_bound: Option<f64>,
    pub state_violations: usize,
}

fn mean_opt(v: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let xs: Vec<f64> = v.flatten().collect();
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

/// Groups runs by `(controller, trajectory)` in first-seen order.
pub fn summarize(runs: &[RunMetrics]) -> Vec<CellSummary> {
    let mut keys: Vec<(ControllerKind, TrajectoryKind)> = Vec::new();
    for r in runs {
        if !keys.contains(&(r.controller, r.trajectory)) {
            keys.push((r.controller, r.trajectory));
        }
    }
    keys.into_iter()
        .map(|(c, t)| {
            let cell: Vec<&RunMetrics> = runs.iter().filter(|r| r.controller == c && r.trajectory == t).collect();
            let n = cell.len() as f64;
            let mean = |f: &dyn Fn(&RunMetrics) -> f64| cell.iter().map(|r| f(r)).sum::<f64>() / n;
            let rmse = mean(&|r| r.position_rmse);
            let var = cell.iter().map(|r| (r.position_rmse - rmse).powi(2)).sum::<f64>() / n;
            CellSummary {
                controller: c,
                trajectory: t,
                seeds: cell.len(),
                position_rmse: rmse,
                position_rmse_std: var.sqrt(),
                attitude_rmse: mean(&|r| r.attitude_rmse),
                max_altitude_error: cell.iter().map(|r| r.max_altitude_error).fold(0.0, f64::max),
                mean_solve_ms: mean(&|r| r.mean_solve_ms),
                worst_solve_ms: cell.iter().map(|r| r.worst_solve_ms).fold(f64::NAN, f64::max),
                infeasible_hard: cell.iter().map(|r| r.infeasible_hard).sum(),
                containment: mean_opt(cell.iter().map(|r| r.containment)),
                iss_violations: mean_opt(cell.iter().map(|r| r.iss_violations)),
                max_bound: cell.iter().filter_map(|r| r.max_bound).reduce(f64::max),
                state_violations: cell.iter().map(|r| r.state_violations).sum(),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::run::StepRecord;
    use crate::{Input, State};

    fn record(k: usize, offset: [f64; 3]) -> StepRecord {
        let reference = crate::quadsim::hover_state([0.0, 0.0, 2.0]);
        let mut state = reference;
        for a in 0..3 {
            state[a] += offset[a];
        }
        StepRecord {
            k,
            t: k as f64 * 0.01,
            state,
            nominal: state,
            reference,
            input: Input::zeros(),
            disturbance: State::zeros(),
            cost: f64::NAN,
            status: None,
            iterations: 0,
            solve_ms: f64::NAN,
            tube_max: f64::NAN,
            set_center: State::repeat(f64::NAN),
            set_bound: State::repeat(f64::NAN),
            contained: None,
            model_version: 0,
            set_version: None,
            learned: false,
            state_violation: false,
            saturated: false,
        }
    }

    fn log(records: Vec<StepRecord>) -> RunLog {
        RunLog {
            controller: ControllerKind::Pid,
            trajectory: TrajectoryKind::Hover,
            seed: 0,
            dt: 0.01,
            l_x: 1.0,
            l_u: 1.0,
            k_bar: 0.0,
            records,
            wall_time: 0.0,
        }
    }

    fn opts() -> MetricsOptions {
        MetricsOptions::from_config(&ExperimentConfig::default()).with_burn_in(0)
    }

    #[test]
    fn perfect_tracking_has_zero_rmse() {
        let m = compute_metrics(&log((0..10).map(|k| record(k, [0.0; 3])).collect()), &opts());
        assert_eq!(m.position_rmse, 0.0);
        assert_eq!(m.attitude_rmse, 0.0);
        assert_eq!(m.max_altitude_error, 0.0);
    }

    #[test]
    fn constant_x_offset() {
        let m = compute_metrics(&log((0..10).map(|k| record(k, [0.1, 0.0, 0.0])).collect()), &opts());
        assert!((m.position_rmse - 0.1).abs() < 1e-15);
    }

    #[test]
    fn two_step_rmse() {
        let m = compute_metrics(&log(vec![record(0, [0.0; 3]), record(1, [0.2, 0.0, 0.0])]), &opts());
        assert!((m.position_rmse - 0.02f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn burn_in_is_excluded() {
        let mut recs: Vec<StepRecord> = (0..10).map(|k| record(k, [0.0; 3])).collect();
        recs[0] = record(0, [5.0, 0.0, 5.0]);
        let m = compute_metrics(&log(recs), &opts().with_burn_in(1));
        assert_eq!(m.position_rmse, 0.0);
        assert_eq!(m.max_altitude_error, 0.0);
    }

    #[test]
    fn containment_and_status_counts() {
        let mut recs: Vec<StepRecord> = (0..4).map(|k| record(k, [0.0; 3])).collect();
        for (i, r) in recs.iter_mut().enumerate() {
            r.contained = Some(i != 2);
            r.status = Some(if i == 3 { SolveStatus::InfeasibleHard } else { SolveStatus::Optimal });
            r.solve_ms = (i + 1) as f64;
        }
        let m = compute_metrics(&log(recs), &opts());
        assert_eq!(m.containment, Some(0.75));
        assert_eq!(m.infeasible_hard, 1);
        assert_eq!(m.mean_solve_ms, 2.5);
        assert_eq!(m.worst_solve_ms, 4.0);
    }

    #[test]
    fn iss_monitor_flags_increases_beyond_the_bound() {
        let mut recs: Vec<StepRecord> = (0..3).map(|k| record(k, [0.0; 3])).collect();
        recs[0].cost = 1.0;
        recs[1].cost = 0.5; // descent
        recs[2].cost = 2.0; // ascent with zero slack
        for r in &mut recs {
            r.input = crate::quadsim::QuadParams::default().hover_input();
        }
        assert_eq!(iss_violation_rate(&log(recs.clone()), &opts()), Some(0.5));
        // a tube term large enough absorbs the ascent
        for r in &mut recs {
            r.tube_max = 10.0;
        }
        assert_eq!(iss_violation_rate(&log(recs), &opts()), Some(0.0));
    }

    #[test]
    fn summary_averages_over_seeds() {
        let a = compute_metrics(&log((0..4).map(|k| record(k, [0.1, 0.0, 0.0])).collect()), &opts());
        let b = RunMetrics {
            seed: 1,
            position_rmse: 0.3,
            ..a.clone()
        };
        let s = summarize(&[a, b]);
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].seeds, 2);
        assert!((s[0].position_rmse - 0.2).abs() < 1e-15);
        assert!((s[0].position_rmse_std - 0.1).abs() < 1e-15);
    }
}

use std::path::PathBuf;
use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::{ControllerKind, ExperimentConfig};
use super::controllers::hover_design;
use super::export::{run_file, write_metrics_csv, write_run_csv, write_runs_csv, write_table_csv};
use super::metrics::{compute_metrics, summarize, CellSummary, MetricsOptions, RunMetrics};
use super::plot::plot_run;
use super::run::run_closed_loop;
use super::trajectory::TrajectoryKind;
use crate::baselines::{mlp_train, MlpModel, Transitions};
use crate::ident::PimlModel;
use crate::quadsim::{hover_state, plant_step, DrydenState};
use crate::sets::input_constraints;
use crate::{Input, Result};

/// Flies the benchmark trajectories under the hover LQR law
/// `u = u_h + K (x − x_ref)` with uniform input dither until `n` transitions
/// are collected. Wind seeds start at `cfg.nn.seed`, away from the
/// evaluation seeds.
pub fn collect_transitions(cfg: &ExperimentConfig, n: usize) -> Result<Transitions> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.nn.seed);
    let ubox = input_constraints();
    let half = ubox.half_widths();
    let (_, gain, _) = hover_design(cfg, &PimlModel::nominal(cfg.params, cfg.dt))?;
    let u_hover = cfg.params.hover_input();
    let mut data = Transitions::default();
    let mut flight = 0u64;
    while data.len() < n {
        let kind = TrajectoryKind::BENCHMARK[flight as usize % 3];
        let traj = cfg.trajectory(kind);
        let mut x = cfg.initial_state(&traj);
        let mut wind = DrydenState::new(cfg.wind.for_seed(cfg.nn.seed + flight));
        for k in 0..cfg.steps() {
            if data.len() >= n {
                break;
            }
            let x_ref = traj.state(k as f64 * cfg.dt);
            let dither = Input::from_fn(|i, _| cfg.nn.dither * half[i] * rng.random_range(-1.0..=1.0));
            let u = ubox.clamp(&(u_hover + gain.k * (x - x_ref) + dither));
            let step = plant_step(&cfg.params, &x, &u, &wind, cfg.dt)?;
            data.push(x, u, step.state);
            x = step.state;
            wind = step.wind;
        }
        flight += 1;
    }
    Ok(data)
}

#[derive(Clone, Debug)]
pub struct NnReport {
    pub epochs: usize,
    pub validation_loss: f64,
    pub early_stopped: bool,
    /// One-step prediction RMSE on held-out transitions (state units).
    pub holdout_rmse: f64,
    pub seconds: f64,
}

/// Trains the NN-MPC model on `cfg.nn.samples` transitions and scores it on
/// `cfg.nn.holdout` more.
pub fn train_network(cfg: &ExperimentConfig) -> Result<(Arc<MlpModel>, NnReport)> {
    let start = Instant::now();
    let all = collect_transitions(cfg, cfg.nn.samples + cfg.nn.holdout)?;
    let (train, holdout) = all.split_at(cfg.nn.samples);
    let x_ref = hover_state([0.0, 0.0, 2.0]);
    let (model, rep) = mlp_train(&train, (&x_ref, &cfg.params.hover_input()), cfg.dt, &cfg.nn.train)?;
    let mut sq = 0.0;
    for i in 0..holdout.len() {
        sq += (model.predict(&holdout.states[i], &holdout.inputs[i]) - holdout.next[i]).norm_squared();
    }
    let holdout_rmse = (sq / (holdout.len().max(1) * crate::NX) as f64).sqrt();
    let report = NnReport {
        epochs: rep.epochs,
        validation_loss: rep.validation_loss,
        early_stopped: rep.early_stopped,
        holdout_rmse,
        seconds: start.elapsed().as_secs_f64(),
    };
    log::info!(
        "network: {} epochs, validation loss {:.3e}, holdout RMSE {:.3e}",
        report.epochs,
        report.validation_loss,
        report.holdout_rmse
    );
    Ok((Arc::new(model), report))
}

#[derive(Clone, Debug, Default)]
pub struct BenchOptions {
    /// Directory for metric tables (and logs/plots when requested).
    pub out_dir: Option<PathBuf>,
    /// Also write every run log as CSV.
    pub write_logs: bool,
}

#[derive(Clone, Debug)]
pub struct BenchResult {
    pub runs: Vec<RunMetrics>,
    pub cells: Vec<CellSummary>,
    pub network: Option<NnReport>,
    pub seconds: f64,
}

impl BenchResult {
    pub fn cell(&self, c: ControllerKind, t: TrajectoryKind) -> Option<&CellSummary> {
        self.cells.iter().find(|s| s.controller == c && s.trajectory == t)
    }
}

/// Runs every `(controller, trajectory, seed)` cell of `cfg` in order.
pub fn run_bench(cfg: &ExperimentConfig, opts: &BenchOptions) -> Result<BenchResult> {
    cfg.validate()?;
    let start = Instant::now();
    let (net, network) = if cfg.controllers.contains(&ControllerKind::NnMpc) {
        let (n, r) = train_network(cfg)?;
        (Some(n), Some(r))
    } else {
        (None, None)
    };
    if let Some(dir) = &opts.out_dir {
        std::fs::create_dir_all(dir).map_err(|e| crate::Error::io(dir, e))?;
    }
    let mopts = MetricsOptions::from_config(cfg);
    let mut runs = Vec::new();
    for &traj in &cfg.trajectories {
        for &kind in &cfg.controllers {
            for &seed in &cfg.seeds {
                let log = run_closed_loop(cfg, kind, traj, seed, net.clone())?;
                let m = compute_metrics(&log, &mopts);
                log::info!(
                    "{kind:>8} {traj:>10} seed {seed}: rmse {:.4} m, {:.2} ms/solve, {:.1} s",
                    m.position_rmse,
                    m.mean_solve_ms,
                    log.wall_time
                );
                if let Some(dir) = &opts.out_dir {
                    if opts.write_logs {
                        write_run_csv(&log, &run_file(dir, &log))?;
                    }
                    if cfg.plots {
                        plot_run(&log, dir)?;
                    }
                }
                runs.push(m);
            }
        }
    }
    let cells = summarize(&runs);
    if let Some(dir) = &opts.out_dir {
        write_runs_csv(&runs, &dir.join("runs.csv"))?;
        write_metrics_csv(&cells, &dir.join("metrics.csv"))?;
        write_table_csv(&cells, &dir.join("table.csv"))?;
    }
    Ok(BenchResult {
        runs,
        cells,
        network,
        seconds: start.elapsed().as_secs_f64(),
    })
}



use piml_tube::harness::{
    compute_metrics, read_run_csv, run_bench, run_closed_loop, run_file, write_run_csv, BenchOptions, ControllerKind,
    ExperimentConfig, MetricsOptions, RunLog, TrajectoryKind, WindConfig,
};
use piml_tube::mpc::SolveStatus;

fn short(duration: f64) -> ExperimentConfig {
    ExperimentConfig {
        duration,
        burn_in: 0.5,
        ..ExperimentConfig::default()
    }
}

fn calm(mut cfg: ExperimentConfig) -> ExperimentConfig {
    cfg.wind = WindConfig {
        intensity: 0.0,
        ..WindConfig::default()
    };
    cfg.learning = false;
    cfg
}

/// Records with the wall-clock fields cleared.
fn timeless(log: &RunLog) -> RunLog {
    let mut out = log.clone();
    out.wall_time = 0.0;
    for r in &mut out.records {
        if r.solve_ms.is_finite() {
            r.solve_ms = 0.0;
        }
    }
    out
}

#[test]
fn identical_seeds_give_identical_logs() {
    let cfg = short(2.0);
    for kind in [ControllerKind::Pid, ControllerKind::Proposed] {
        let a = run_closed_loop(&cfg, kind, TrajectoryKind::Helical, 4, None).unwrap();
        let b = run_closed_loop(&cfg, kind, TrajectoryKind::Helical, 4, None).unwrap();
        assert_eq!(a.records.len(), cfg.steps());
        let (a, b) = (timeless(&a), timeless(&b));
        for (x, y) in a.records.iter().zip(&b.records) {
            assert_eq!(x.state, y.state, "{kind} step {}", x.k);
            assert_eq!(x.input, y.input);
            assert_eq!(x.disturbance, y.disturbance);
        }
    }
}

#[test]
fn hover_in_calm_air_is_held_exactly() {
    let cfg = calm(short(3.0));
    for kind in [ControllerKind::Pid, ControllerKind::Smpc, ControllerKind::FtMpc, ControllerKind::Proposed] {
        let log = run_closed_loop(&cfg, kind, TrajectoryKind::Hover, 0, None).unwrap();
        let last = log.records.last().unwrap();
        let err = (last.state.rows(0, 3) - last.reference.rows(0, 3)).norm();
        assert!(err < 1e-3, "{kind}: final position error {err}");
        assert!(log.records.iter().all(|r| r.status != Some(SolveStatus::InfeasibleHard)));
    }
}

#[test]
fn model_swaps_precede_set_updates() {
    let mut cfg = short(3.0);
    cfg.learner.n_min = 100;
    cfg.learner.min_rows = 50;
    let log = run_closed_loop(&cfg, ControllerKind::Proposed, TrajectoryKind::Spline, 2, None).unwrap();
    let swaps: Vec<usize> = log.records.iter().filter(|r| r.learned).map(|r| r.k).collect();
    assert!(!swaps.is_empty(), "no learn event in {} steps", log.records.len());
    let mut version = 0;
    for r in &log.records {
        assert_eq!(r.set_version, Some(r.model_version), "step {}", r.k);
        if r.learned {
            assert_eq!(r.model_version, version + 1, "step {}", r.k);
            assert_eq!(r.k % cfg.learner.t_learn, 0);
        } else {
            assert_eq!(r.model_version, version, "step {}", r.k);
        }
        version = r.model_version;
        assert!(r.set_bound.iter().all(|v| *v <= cfg.disturbance.cap));
    }
}

#[test]
fn run_csv_round_trips_and_reproduces_metrics() {
    let cfg = short(2.0);
    let dir = tempfile::tempdir().unwrap();
    let opts = MetricsOptions::from_config(&cfg);
    for kind in [ControllerKind::Pid, ControllerKind::Proposed] {
        let log = run_closed_loop(&cfg, kind, TrajectoryKind::Lemniscate, 1, None).unwrap();
        let path = run_file(dir.path(), &log);
        write_run_csv(&log, &path).unwrap();
        let back = read_run_csv(&path).unwrap();
        assert_eq!(back.records.len(), log.records.len());
        for (a, b) in log.records.iter().zip(&back.records) {
            assert_eq!(a.state, b.state);
            assert_eq!(a.reference, b.reference);
            assert_eq!(a.input, b.input);
            assert_eq!(a.status, b.status);
            assert_eq!(a.model_version, b.model_version);
            assert_eq!(a.cost.to_bits(), b.cost.to_bits());
        }
        let (m, n) = (compute_metrics(&log, &opts), compute_metrics(&back, &opts));
        assert_eq!(m.position_rmse, n.position_rmse);
        assert_eq!(m.attitude_rmse, n.attitude_rmse);
        assert_eq!(m.max_altitude_error, n.max_altitude_error);
        assert_eq!(m.containment, n.containment);
        assert_eq!(m.iss_violations, n.iss_violations);
    }
}

#[test]
fn plots_only_when_requested() {
    let mut cfg = short(1.0);
    cfg.controllers = vec![ControllerKind::Pid];
    cfg.trajectories = vec![TrajectoryKind::Hover];
    cfg.seeds = vec![0];
    let svgs = |dir: &std::path::Path| {
        std::fs::read_dir(dir)
            .unwrap()
            .filter(|e| e.as_ref().unwrap().path().extension().is_some_and(|x| x == "svg"))
            .count()
    };
    for plots in [false, true] {
        cfg.plots = plots;
        let dir = tempfile::tempdir().unwrap();
        let res = run_bench(
            &cfg,
            &BenchOptions {
                out_dir: Some(dir.path().to_path_buf()),
                write_logs: false,
            },
        )
        .unwrap();
        assert_eq!(res.cells.len(), 1);
        assert!(dir.path().join("metrics.csv").exists());
        assert_eq!(svgs(dir.path()) > 0, plots);
    }
}

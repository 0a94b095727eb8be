//! Closed-loop experiments: reference trajectories, the controller zoo,
//! the per-step loop, metrics, export and the benchmark runner.

mod bench;
mod config;
mod controllers;
mod design;
mod export;
mod metrics;
mod plot;
mod run;
mod trajectory;

pub use bench::{collect_transitions, run_bench, train_network, BenchOptions, BenchResult, NnReport};
pub use config::{ControllerKind, ExperimentConfig, NnConfig, ReferenceConfig, WindConfig};
pub use controllers::{
    build_controller, Controller, Decision, NominalMpc, Observation, PidController, TubeMpc,
};
pub use design::{identify_flight, simulate_open_loop, tube_design, TubeDesign};
pub use export::{
    comparison_table, flight_header, STATE_NAMES, read_flight_csv, write_flight_csv, FlightData, output_dir, read_run_csv, run_file, run_header, write_metrics_csv,
    write_run_csv, write_runs_csv, write_table_csv,
};
pub use metrics::{compute_metrics, iss_violation_rate, summarize, CellSummary, MetricsOptions, RunMetrics};
pub use plot::{line_chart, plot_run, Series};
pub use run::{reference_window, run_closed_loop, RunLog, StepRecord};
pub use trajectory::{TrajectoryKind, TrajectoryRef};

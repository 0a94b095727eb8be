use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};

use piml_tube::harness::{
    comparison_table, identify_flight, output_dir, read_flight_csv, run_bench, simulate_open_loop, tube_design,
    write_flight_csv, BenchOptions, ControllerKind, ExperimentConfig, TrajectoryKind, STATE_NAMES,
};
use piml_tube::ident::LearnedModel;
use piml_tube::model_file::{read_model, write_model};
use piml_tube::{Error, Result, NU, NX};

/// Sparse-identification tube MPC for a quadrotor: data flights,
/// identification, tube design and the controller benchmark.
#[derive(Parser, Debug)]
#[command(name = "piml-tube", version)]
struct Cli {
    /// Experiment config (TOML). Defaults apply to every absent field.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (default: $PIML_TUBE_OUT, else ./results).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Run length in seconds, overriding the config.
    #[arg(long, global = true)]
    duration: Option<f64>,
    /// Use the printed reference formulas and widen the state box.
    #[arg(long, global = true)]
    paper_raw: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Open-loop flight with dithered hover thrust, written as a flight CSV.
    Simulate(SimulateArgs),
    /// Fit the residual model to a flight CSV.
    Identify(IdentifyArgs),
    /// Tube design for a model: RPI half-widths and tightened boxes as CSV.
    Rpi(RpiArgs),
    /// Controllers × trajectories × seeds comparison.
    Bench(BenchArgs),
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[arg(long, default_value = "hover")]
    trajectory: TrajectoryKind,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Input dither as a fraction of each input's half-range.
    #[arg(long, default_value_t = 0.05)]
    dither: f64,
    /// Output file (default: <out>/flight.csv).
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct IdentifyArgs {
    /// Flight CSV: t, 12 states, 4 inputs.
    #[arg(long)]
    data: PathBuf,
    /// Model file to write (default: <out>/model.txt).
    #[arg(long)]
    model: Option<PathBuf>,
    /// Fit report to write (default: <out>/fit_report.csv).
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct RpiArgs {
    /// Model file; the first-principles model when absent.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Reference whose state box is tightened.
    #[arg(long, default_value = "helical")]
    trajectory: TrajectoryKind,
}

#[derive(Args, Debug)]
struct BenchArgs {
    /// `all` or a comma-separated list (pid, smpc, ft-mpc, nn-mpc, proposed).
    #[arg(long)]
    controllers: Option<String>,
    /// `all` or a comma-separated list (helical, spline, lemniscate, hover).
    #[arg(long)]
    trajectories: Option<String>,
    /// Number of seeds, run as 0..N.
    #[arg(long)]
    seeds: Option<u64>,
    /// Emit SVG plots.
    #[arg(long)]
    plots: bool,
    /// Write every run log as CSV.
    #[arg(long)]
    logs: bool,
}

fn parse_list<T: std::str::FromStr<Err = Error> + Copy>(s: &str, all: &[T]) -> Result<Vec<T>> {
    if s == "all" {
        return Ok(all.to_vec());
    }
    s.split(',').map(|p| p.trim().parse()).collect()
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(d) = cli.duration {
        cfg.duration = d;
    }
    cfg.reference.paper_raw |= cli.paper_raw;
    cfg.validate()?;
    Ok(cfg)
}

fn out_dir(cli: &Cli) -> Result<PathBuf> {
    let dir = cli.out.clone().unwrap_or_else(|| output_dir(Path::new("results")));
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    Ok(dir)
}

fn csv_out() -> csv::Writer<std::io::Stdout> {
    csv::Writer::from_writer(std::io::stdout())
}

fn io_err(what: &str) -> impl Fn(csv::Error) -> Error + '_ {
    move |e| Error::Config(format!("{what}: {e}"))
}

fn run(cli: Cli) -> Result<()> {
    let cfg = load_config(&cli)?;
    match &cli.command {
        Command::Simulate(a) => {
            let data = simulate_open_loop(&cfg, a.trajectory, a.seed, a.dither)?;
            let path = match &a.output {
                Some(p) => p.clone(),
                None => out_dir(&cli)?.join("flight.csv"),
            };
            write_flight_csv(&data, &path)?;
            println!("{} samples -> {}", data.t.len(), path.display());
        }
        Command::Identify(a) => {
            let data = read_flight_csv(&a.data)?;
            let (model, report, removed) = identify_flight(&cfg, &data)?;
            let dir = if a.model.is_none() || a.report.is_none() { Some(out_dir(&cli)?) } else { None };
            let model_path = a.model.clone().unwrap_or_else(|| dir.as_ref().unwrap().join("model.txt"));
            let report_path = a.report.clone().unwrap_or_else(|| dir.as_ref().unwrap().join("fit_report.csv"));
            write_model(&model, &model_path)?;
            let mut w = csv::Writer::from_path(&report_path).map_err(io_err("fit report"))?;
            w.write_record(["dimension", "residual_norm", "nonzeros", "sweeps", "kkt_violation"])
                .map_err(io_err("fit report"))?;
            for j in 0..NX {
                w.write_record([
                    STATE_NAMES[j].to_string(),
                    report.residual_norm[j].to_string(),
                    report.nonzeros[j].to_string(),
                    report.sweeps[j].to_string(),
                    report.kkt_violation[j].to_string(),
                ])
                .map_err(io_err("fit report"))?;
            }
            w.flush().map_err(|e| Error::io(&report_path, e))?;
            println!(
                "{} rows ({removed} outliers dropped), {} candidates, {} active terms, {} nonzeros -> {}",
                report.rows,
                report.candidates,
                model.terms().len(),
                model.nonzeros(),
                model_path.display()
            );
        }
        Command::Rpi(a) => {
            let model = match &a.model {
                Some(p) => read_model(p)?,
                None => LearnedModel::zero(),
            };
            let d = tube_design(&cfg, Arc::new(model), a.trajectory)?;
            let s = &d.snapshot;
            let mut w = csv_out();
            let e = io_err("stdout");
            w.write_record(["quantity", "component", "value"]).map_err(&e)?;
            for (q, v) in [
                ("spectral_radius", d.spectral_radius),
                ("tube_scale", s.scale),
                ("certificate_margin", d.margin),
                ("gain_bound", d.gain.bound),
            ] {
                w.write_record([q, "", &v.to_string()]).map_err(&e)?;
            }
            let inputs = ["u1", "u2", "u3", "u4"];
            for (q, names, vals) in [
                ("rpi_half_width", &STATE_NAMES[..], s.rpi.half_widths.as_slice()),
                ("state_lower", &STATE_NAMES[..], s.state_box.lower.as_slice()),
                ("state_upper", &STATE_NAMES[..], s.state_box.upper.as_slice()),
                ("input_lower", &inputs[..], s.input_box.lower.as_slice()),
                ("input_upper", &inputs[..], s.input_box.upper.as_slice()),
            ] {
                debug_assert!(vals.len() == NX || vals.len() == NU);
                for (n, v) in names.iter().zip(vals) {
                    w.write_record([q, n, &v.to_string()]).map_err(&e)?;
                }
            }
            w.flush().map_err(|e| Error::io("stdout", e))?;
        }
        Command::Bench(a) => {
            let mut cfg = cfg;
            if let Some(c) = &a.controllers {
                cfg.controllers = parse_list(c, &ControllerKind::ALL)?;
            }
            if let Some(t) = &a.trajectories {
                cfg.trajectories = parse_list(t, &TrajectoryKind::BENCHMARK)?;
            }
            if let Some(n) = a.seeds {
                cfg.seeds = (0..n).collect();
            }
            cfg.plots |= a.plots;
            let opts = BenchOptions {
                out_dir: Some(out_dir(&cli)?),
                write_logs: a.logs,
            };
            let res = run_bench(&cfg, &opts)?;
            let mut w = csv_out();
            for row in comparison_table(&res.cells) {
                w.write_record(&row).map_err(io_err("stdout"))?;
            }
            w.flush().map_err(|e| Error::io("stdout", e))?;
            let hard: usize = res.cells.iter().map(|c| c.infeasible_hard).sum();
            let mut err = std::io::stderr();
            let _ = writeln!(
                err,
                "{} runs in {:.1} s, {hard} infeasible-hard solves; tables in {}",
                res.runs.len(),
                res.seconds,
                opts.out_dir.as_ref().unwrap().display()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

//! CSV export of run logs and metric tables, and their readers.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use super::config::ControllerKind;
use super::metrics::{CellSummary, RunMetrics};
use super::run::{RunLog, StepRecord};
use crate::{Error, Input, Result, State, NU, NX};

pub const STATE_NAMES: [&str; NX] = [
    "px", "py", "pz", "vx", "vy", "vz", "phi", "theta", "psi", "wx", "wy", "wz",
];

fn vector_columns(prefix: &str, names: &[&str]) -> Vec<String> {
    names.iter().map(|n| format!("{prefix}{n}")).collect()
}

/// Column schema of the run CSV.
pub fn run_header() -> Vec<String> {
    let mut h = vec!["k".to_string(), "t".to_string()];
    h.extend(vector_columns("x_", &STATE_NAMES));
    h.extend(vector_columns("nom_", &STATE_NAMES));
    h.extend(vector_columns("ref_", &STATE_NAMES));
    h.extend(vector_columns("u", &["1", "2", "3", "4"]));
    h.extend(vector_columns("d_", &STATE_NAMES));
    for c in ["cost", "status", "iterations", "solve_ms", "tube_max"] {
        h.push(c.into());
    }
    h.extend(vector_columns("c_", &STATE_NAMES));
    h.extend(vector_columns("bound_", &STATE_NAMES));
    for c in ["contained", "model_version", "set_version", "learned", "state_violation", "saturated"] {
        h.push(c.into());
    }
    h
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map_or(String::new(), |v| v.to_string())
}

fn row(r: &StepRecord) -> Vec<String> {
    let mut out = vec![r.k.to_string(), r.t.to_string()];
    for v in [&r.state, &r.nominal, &r.reference] {
        out.extend(v.iter().map(f64::to_string));
    }
    out.extend(r.input.iter().map(f64::to_string));
    out.extend(r.disturbance.iter().map(f64::to_string));
    out.push(r.cost.to_string());
    out.push(opt(r.status));
    out.push(r.iterations.to_string());
    out.push(r.solve_ms.to_string());
    out.push(r.tube_max.to_string());
    out.extend(r.set_center.iter().map(f64::to_string));
    out.extend(r.set_bound.iter().map(f64::to_string));
    out.push(opt(r.contained));
    out.push(r.model_version.to_string());
    out.push(opt(r.set_version));
    for b in [r.learned, r.state_violation, r.saturated] {
        out.push(b.to_string());
    }
    out
}

fn io(path: &Path) -> impl Fn(std::io::Error) -> Error + '_ {
    move |e| Error::io(path, e)
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> Error + '_ {
    move |e| Error::Dataset(format!("{}: {e}", path.display()))
}

/// Writes the log as CSV. The first line is a `#` comment carrying the run
/// metadata; numbers use the shortest representation that parses back to
/// the same `f64`.
pub fn write_run_csv(log: &RunLog, path: &Path) -> Result<()> {
    let mut file = fs::File::create(path).map_err(io(path))?;
    writeln!(
        file,
        "# controller={} trajectory={} seed={} dt={} l_x={} l_u={} k_bar={} wall_time={}",
        log.controller, log.trajectory, log.seed, log.dt, log.l_x, log.l_u, log.k_bar, log.wall_time
    )
    .map_err(io(path))?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(run_header()).map_err(csv_err(path))?;
    for r in &log.records {
        w.write_record(row(r)).map_err(csv_err(path))?;
    }
    w.flush().map_err(io(path))?;
    Ok(())
}

fn parse<T: std::str::FromStr>(s: &str, what: &str) -> Result<T> {
    s.parse()
        .map_err(|_| Error::Dataset(format!("cannot parse `{s}` as {what}")))
}

fn parse_opt<T: std::str::FromStr>(s: &str, what: &str) -> Result<Option<T>> {
    if s.is_empty() {
        Ok(None)
    } else {
        parse(s, what).map(Some)
    }
}

pub fn read_run_csv(path: &Path) -> Result<RunLog> {
    let file = fs::File::open(path).map_err(io(path))?;
    let mut reader = BufReader::new(file);
    let mut meta = String::new();
    reader.read_line(&mut meta).map_err(io(path))?;
    let meta = meta
        .strip_prefix("# ")
        .ok_or_else(|| Error::Dataset(format!("{}: missing metadata line", path.display())))?;
    let field = |key: &str| -> Result<&str> {
        meta.split_whitespace()
            .find_map(|kv| kv.strip_prefix(key).and_then(|v| v.strip_prefix('=')))
            .ok_or_else(|| Error::Dataset(format!("{}: metadata lacks `{key}`", path.display())))
    };
    let mut log = RunLog {
        controller: field("controller")?.parse()?,
        trajectory: field("trajectory")?.parse()?,
        seed: parse(field("seed")?, "seed")?,
        dt: parse(field("dt")?, "dt")?,
        l_x: parse(field("l_x")?, "l_x")?,
        l_u: parse(field("l_u")?, "l_u")?,
        k_bar: parse(field("k_bar")?, "k_bar")?,
        wall_time: parse(field("wall_time")?, "wall_time")?,
        records: Vec::new(),
    };
    let mut csv = csv::Reader::from_reader(reader);
    let header: Vec<String> = csv.headers().map_err(csv_err(path))?.iter().map(String::from).collect();
    if header != run_header() {
        return Err(Error::Dataset(format!("{}: unexpected column schema", path.display())));
    }
    for rec in csv.records() {
        let rec = rec.map_err(csv_err(path))?;
        let mut c = Cursor { fields: rec.iter().collect(), at: 0 };
        let k = parse(c.next(), "step")?;
        let t = parse(c.next(), "time")?;
        let state = c.vector()?;
        let nominal = c.vector()?;
        let reference = c.vector()?;
        let mut input = Input::zeros();
        for i in 0..NU {
            input[i] = parse(c.next(), "input")?;
        }
        let disturbance = c.vector()?;
        let cost = parse(c.next(), "cost")?;
        let status = parse_opt(c.next(), "status")?;
        let iterations = parse(c.next(), "iterations")?;
        let solve_ms = parse(c.next(), "solve time")?;
        let tube_max = parse(c.next(), "tube width")?;
        let set_center = c.vector()?;
        let set_bound = c.vector()?;
        log.records.push(StepRecord {
            k,
            t,
            state,
            nominal,
            reference,
            input,
            disturbance,
            cost,
            status,
            iterations,
            solve_ms,
            tube_max,
            set_center,
            set_bound,
            contained: parse_opt(c.next(), "flag")?,
            model_version: parse(c.next(), "version")?,
            set_version: parse_opt(c.next(), "version")?,
            learned: parse(c.next(), "flag")?,
            state_violation: parse(c.next(), "flag")?,
            saturated: parse(c.next(), "flag")?,
        });
    }
    Ok(log)
}

struct Cursor<'a> {
    fields: Vec<&'a str>,
    at: usize,
}

impl<'a> Cursor<'a> {
    fn next(&mut self) -> &'a str {
        let f = self.fields.get(self.at).copied().unwrap_or_default();
        self.at += 1;
        f
    }

    fn vector(&mut self) -> Result<State> {
        let mut v = State::zeros();
        for i in 0..NX {
            v[i] = parse(self.next(), "number")?;
        }
        Ok(v)
    }
}

fn opt_num(v: Option<f64>) -> String {
    opt(v)
}

/// Per-run metrics, one row per `(controller, trajectory, seed)`.
pub fn write_runs_csv(runs: &[RunMetrics], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    w.write_record([
        "controller", "trajectory", "seed", "position_rmse", "attitude_rmse", "max_altitude_error",
        "mean_solve_ms", "worst_solve_ms", "infeasible_hard", "max_iter", "with_slack", "containment",
        "iss_violations", "max_bound", "state_violations", "saturated", "steps",
    ])
    .map_err(csv_err(path))?;
    for r in runs {
        w.write_record([
            r.controller.to_string(),
            r.trajectory.to_string(),
            r.seed.to_string(),
            r.position_rmse.to_string(),
            r.attitude_rmse.to_string(),
            r.max_altitude_error.to_string(),
            r.mean_solve_ms.to_string(),
            r.worst_solve_ms.to_string(),
            r.infeasible_hard.to_string(),
            r.max_iter.to_string(),
            r.with_slack.to_string(),
            opt_num(r.containment),
            opt_num(r.iss_violations),
            opt_num(r.max_bound),
            r.state_violations.to_string(),
            r.saturated.to_string(),
            r.steps.to_string(),
        ])
        .map_err(csv_err(path))?;
    }
    w.flush().map_err(io(path))?;
    Ok(())
}

/// Seed-averaged metrics, one row per `(controller, trajectory)`.
pub fn write_metrics_csv(cells: &[CellSummary], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    w.write_record([
        "controller", "trajectory", "seeds", "position_rmse", "position_rmse_std", "attitude_rmse",
        "max_altitude_error", "mean_solve_ms", "worst_solve_ms", "infeasible_hard", "containment",
        "iss_violations", "max_bound", "state_violations",
    ])
    .map_err(csv_err(path))?;
    for c in cells {
        w.write_record([
            c.controller.to_string(),
            c.trajectory.to_string(),
            c.seeds.to_string(),
            c.position_rmse.to_string(),
            c.position_rmse_std.to_string(),
            c.attitude_rmse.to_string(),
            c.max_altitude_error.to_string(),
            c.mean_solve_ms.to_string(),
            c.worst_solve_ms.to_string(),
            c.infeasible_hard.to_string(),
            opt_num(c.containment),
            opt_num(c.iss_violations),
            opt_num(c.max_bound),
            c.state_violations.to_string(),
        ])
        .map_err(csv_err(path))?;
    }
    w.flush().map_err(io(path))?;
    Ok(())
}

/// Comparison table: trajectories down, controllers across, RMSE in the
/// cells and the mean solve time in the last row.
pub fn comparison_table(cells: &[CellSummary]) -> Vec<Vec<String>> {
    let mut controllers: Vec<ControllerKind> = Vec::new();
    let mut trajectories = Vec::new();
    for c in cells {
        if !controllers.contains(&c.controller) {
            controllers.push(c.controller);
        }
        if !trajectories.contains(&c.trajectory) {
            trajectories.push(c.trajectory);
        }
    }
    let find = |c: ControllerKind, t| cells.iter().find(|s| s.controller == c && s.trajectory == t);
    let mut rows = vec![std::iter::once("trajectory".to_string())
        .chain(controllers.iter().map(|c| c.label().to_string()))
        .collect::<Vec<_>>()];
    for t in &trajectories {
        let mut row = vec![t.to_string()];
        for c in &controllers {
            row.push(find(*c, *t).map_or(String::new(), |s| format!("{:.4}", s.position_rmse)));
        }
        rows.push(row);
    }
    let mut timing = vec!["solve_ms".to_string()];
    for c in &controllers {
        let ts: Vec<f64> = cells
            .iter()
            .filter(|s| s.controller == *c)
            .map(|s| s.mean_solve_ms)
            .filter(|v| v.is_finite())
            .collect();
        timing.push(if ts.is_empty() {
            "-".into()
        } else {
            format!("{:.3}", ts.iter().sum::<f64>() / ts.len() as f64)
        });
    }
    rows.push(timing);
    rows
}

pub fn write_table_csv(cells: &[CellSummary], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    for row in comparison_table(cells) {
        w.write_record(&row).map_err(csv_err(path))?;
    }
    w.flush().map_err(io(path))?;
    Ok(())
}

/// File name of a run log inside an output directory.
pub fn run_file(dir: &Path, log: &RunLog) -> PathBuf {
    dir.join(format!("run_{}_{}_{}.csv", log.controller, log.trajectory, log.seed))
}

/// Output directory: `PIML_TUBE_OUT` when set, otherwise `default`.
pub fn output_dir(default: &Path) -> PathBuf {
    std::env::var_os("PIML_TUBE_OUT").map_or_else(|| default.to_path_buf(), PathBuf::from)
}

/// One flight as `(t, x, u)` rows: the `identify` input format.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FlightData {
    pub t: Vec<f64>,
    pub states: Vec<State>,
    pub inputs: Vec<Input>,
}

pub fn flight_header() -> Vec<String> {
    let mut h = vec!["t".to_string()];
    h.extend(vector_columns("", &STATE_NAMES));
    h.extend(vector_columns("u", &["1", "2", "3", "4"]));
    h
}

pub fn write_flight_csv(data: &FlightData, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    w.write_record(flight_header()).map_err(csv_err(path))?;
    for ((t, x), u) in data.t.iter().zip(&data.states).zip(&data.inputs) {
        let rec = std::iter::once(t.to_string())
            .chain(x.iter().map(f64::to_string))
            .chain(u.iter().map(f64::to_string));
        w.write_record(rec).map_err(csv_err(path))?;
    }
    w.flush().map_err(io(path))?;
    Ok(())
}

/// Reads `t`, 12 states and 4 inputs per row, in that column order. A
/// header row is expected; `#` lines are skipped.
pub fn read_flight_csv(path: &Path) -> Result<FlightData> {
    let mut r = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(csv_err(path))?;
    let mut data = FlightData::default();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(csv_err(path))?;
        if rec.len() != 1 + NX + NU {
            return Err(Error::Dataset(format!(
                "{} row {}: {} columns, expected {}",
                path.display(),
                i + 1,
                rec.len(),
                1 + NX + NU
            )));
        }
        let v: Vec<f64> = rec.iter().map(|s| parse(s, "a number")).collect::<Result<_>>()?;
        data.t.push(v[0]);
        data.states.push(State::from_column_slice(&v[1..1 + NX]));
        data.inputs.push(Input::from_column_slice(&v[1 + NX..]));
    }
    Ok(data)
}

//! Offline counterparts of the online loop: open-loop data flights, batch
//! identification from a flight file, and the tube design for a fixed model.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::ExperimentConfig;
use super::controllers::hover_design;
use super::export::FlightData;
use super::trajectory::TrajectoryKind;
use crate::ident::{fit, maybe_expand, preprocess, Dataset, FitReport, LearnedModel, LibrarySpec, PimlModel};
use crate::quadsim::{hover_state, plant_step, DrydenState};
use crate::sets::{input_constraints, learning_uncertainty, spectral_radius, DisturbanceSet, Tube, TubeGain, TubeSnapshot};
use crate::{Error, Input, MatA, Result};

/// Open-loop flight from hover at the start of `kind`'s reference: hover
/// thrust plus uniform dither of `dither` × each input's half-range. The
/// flight ends early (with a warning) if the plant leaves its envelope.
pub fn simulate_open_loop(
    cfg: &ExperimentConfig,
    kind: TrajectoryKind,
    seed: u64,
    dither: f64,
) -> Result<FlightData> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let half = input_constraints().half_widths();
    let ubox = input_constraints();
    let mut x = hover_state(cfg.trajectory(kind).reference(0.0).0);
    let mut wind = DrydenState::new(cfg.wind.for_seed(seed));
    let mut data = FlightData::default();
    for k in 0..=cfg.steps() {
        let u = ubox.clamp(&(cfg.params.hover_input() + Input::from_fn(|i, _| dither * half[i] * rng.random_range(-1.0..=1.0))));
        data.t.push(k as f64 * cfg.dt);
        data.states.push(x);
        data.inputs.push(u);
        match plant_step(&cfg.params, &x, &u, &wind, cfg.dt) {
            Ok(s) => {
                x = s.state;
                wind = s.wind;
            }
            Err(e) => {
                log::warn!("flight stopped at t = {:.2} s: {e}", k as f64 * cfg.dt);
                break;
            }
        }
    }
    Ok(data)
}

/// Fits the residual model to a recorded flight. Targets are the residual
/// rates of consecutive rows against the physics step, so the sample spacing
/// must equal `cfg.dt`.
pub fn identify_flight(cfg: &ExperimentConfig, data: &FlightData) -> Result<(LearnedModel, FitReport, usize)> {
    let n = data.states.len();
    if n < 3 || data.inputs.len() != n || data.t.len() != n {
        return Err(Error::Dataset(format!("need at least 3 aligned rows, got {n}")));
    }
    for w in data.t.windows(2) {
        if ((w[1] - w[0]) - cfg.dt).abs() > 1e-9 * cfg.dt.max(1.0) {
            return Err(Error::Dataset(format!(
                "sample spacing {} at t = {} differs from dt = {}",
                w[1] - w[0],
                w[0],
                cfg.dt
            )));
        }
    }
    let physics = PimlModel::nominal(cfg.params, cfg.dt);
    let targets = (0..n - 1)
        .map(|k| physics.residual_target(&data.states[k], &data.inputs[k], &data.states[k + 1]))
        .collect();
    let raw = Dataset::from_parts(data.states[..n - 1].to_vec(), data.inputs[..n - 1].to_vec(), targets, cfg.dt)?;
    let (clean, removed) = preprocess(&raw, cfg.learner.min_rows)?;
    let spec = maybe_expand(&LibrarySpec::base(cfg.learner.n_min), raw.len());
    let (model, report) = fit(&clean, &spec, &cfg.learner.fit, None)?;
    Ok((model, report, removed))
}

/// Hover LQR design and initial tube for a given residual model.
#[derive(Clone, Debug)]
pub struct TubeDesign {
    pub a_cl: MatA,
    pub gain: TubeGain,
    pub spectral_radius: f64,
    pub snapshot: TubeSnapshot,
    /// Certificate margin of the box actually in force (negative when the
    /// RPI box had to be scaled down to keep the tightening admissible).
    pub margin: f64,
}

/// The tube a tube controller starts from with `residual` as its model,
/// the initial disturbance set and no pending model update.
pub fn tube_design(cfg: &ExperimentConfig, residual: Arc<LearnedModel>, kind: TrajectoryKind) -> Result<TubeDesign> {
    cfg.validate()?;
    let model = PimlModel::new(cfg.params, cfg.dt, residual);
    let (a_cl, gain, _) = hover_design(cfg, &model)?;
    let mut tube = Tube::new(
        &a_cl,
        gain.clone(),
        cfg.state_box(kind),
        input_constraints(),
        cfg.params.hover_input(),
        cfg.dt,
        cfg.rpi_eps,
    )?;
    tube.keep = cfg.tube_keep;
    let snapshot = tube.refresh(&DisturbanceSet::new(cfg.disturbance.clone())?, &learning_uncertainty(0.0, 0.0))?;
    let margin = tube.map().certificate_margin(&snapshot.rpi.half_widths, &snapshot.w);
    Ok(TubeDesign {
        margin,
        spectral_radius: spectral_radius(&a_cl),
        a_cl,
        gain,
        snapshot,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::WindConfig;

    fn short() -> ExperimentConfig {
        ExperimentConfig {
            duration: 2.0,
            burn_in: 0.5,
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn calm_flight_identifies_a_zero_residual() {
        let cfg = ExperimentConfig {
            wind: WindConfig {
                intensity: 0.0,
                ..WindConfig::default()
            },
            ..short()
        };
        let data = simulate_open_loop(&cfg, TrajectoryKind::Hover, 3, 0.05).unwrap();
        assert_eq!(data.states.len(), cfg.steps() + 1);
        let (model, report, _) = identify_flight(&cfg, &data).unwrap();
        assert_eq!(model.nonzeros(), 0, "{:?}", model.terms());
        assert!(report.residual_norm.iter().all(|r| *r < 1e-9));
    }

    #[test]
    fn uneven_spacing_is_rejected() {
        let cfg = short();
        let mut data = simulate_open_loop(&cfg, TrajectoryKind::Hover, 1, 0.05).unwrap();
        data.t[5] += 1e-3;
        let err = identify_flight(&cfg, &data).unwrap_err().to_string();
        assert!(err.contains("spacing"), "{err}");
    }

    #[test]
    fn nominal_design_reports_the_margin_in_force() {
        let d = tube_design(&short(), Arc::new(LearnedModel::zero()), TrajectoryKind::Helical).unwrap();
        assert!(d.spectral_radius < 1.0);
        assert!(d.snapshot.scale > 0.0 && d.snapshot.scale <= 1.0);
        assert_eq!(d.margin >= -1e-12, d.snapshot.scale == 1.0);
        assert!(d.snapshot.rpi.half_widths.iter().all(|s| *s > 0.0));
    }
}

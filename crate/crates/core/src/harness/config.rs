use std::path::Path;

use serde::{Deserialize, Serialize};

use super::trajectory::{TrajectoryKind, TrajectoryRef};
use crate::baselines::{PidGains, TrainConfig};
use crate::ident::LearnerConfig;
use crate::mpc::MpcConfig;
use crate::quadsim::{hover_state, DrydenConfig, QuadParams};
use crate::sets::{state_constraints, BoxSet, DisturbanceConfig};
use crate::{Error, Result, State, NX};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ControllerKind {
    Pid,
    Smpc,
    FtMpc,
    NnMpc,
    Proposed,
}

impl ControllerKind {
    /// Column order of the comparison table.
    pub const ALL: [Self; 5] = [Self::Pid, Self::Smpc, Self::FtMpc, Self::NnMpc, Self::Proposed];

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Pid => "pid",
            Self::Smpc => "smpc",
            Self::FtMpc => "ft-mpc",
            Self::NnMpc => "nn-mpc",
            Self::Proposed => "proposed",
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Self::Pid => "PID",
            Self::Smpc => "SMPC",
            Self::FtMpc => "FT-MPC",
            Self::NnMpc => "NN-MPC",
            Self::Proposed => "Proposed",
        }
    }

    pub fn is_mpc(&self) -> bool {
        !matches!(self, Self::Pid)
    }
}

impl std::fmt::Display for ControllerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ControllerKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown controller `{s}`")))
    }
}

/// How the printed trajectories are placed in the state box.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReferenceConfig {
    /// Use the printed formulas unscaled and widen the state box around them.
    pub paper_raw: bool,
    /// Fraction of each position half-width the fitted reference spans.
    pub amplitude: f64,
    /// Extra room around a raw reference when widening the box.
    pub raw_margin: f64,
    /// Give reference states the attitude and rates that fly them, rather
    /// than a level attitude.
    pub trim_attitude: bool,
    /// Start on the reference state at t = 0 instead of hovering at its
    /// position.
    pub start_on_reference: bool,
}

impl Default for ReferenceConfig {
    fn default() -> Self {
        Self {
            paper_raw: false,
            amplitude: 0.6,
            raw_margin: 0.5,
            trim_attitude: true,
            start_on_reference: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WindConfig {
    pub dryden: DrydenConfig,
    /// Multiplies mean wind and turbulence intensity; 0 disables wind.
    pub intensity: f64,
}

impl Default for WindConfig {
    fn default() -> Self {
        Self {
            dryden: DrydenConfig::default(),
            intensity: 1.0,
        }
    }
}

impl WindConfig {
    pub fn for_seed(&self, seed: u64) -> DrydenConfig {
        if self.intensity == 0.0 {
            return DrydenConfig::calm();
        }
        self.dryden.clone().scaled(self.intensity).with_seed(seed)
    }
}

/// NN-MPC training: data collection and optimiser settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NnConfig {
    pub train: TrainConfig,
    /// Transitions collected for training.
    pub samples: usize,
    /// Held-out transitions for the reported one-step RMSE.
    pub holdout: usize,
    /// Uniform input dither added to the LQR exploration flights, as a
    /// fraction of each input's half-range.
    pub dither: f64,
    /// Seed offset of the collection flights (kept apart from test seeds).
    pub seed: u64,
}

impl Default for NnConfig {
    fn default() -> Self {
        Self {
            train: TrainConfig::default(),
            samples: 10_000,
            holdout: 2_000,
            dither: 0.25,
            seed: 10_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub controllers: Vec<ControllerKind>,
    pub trajectories: Vec<TrajectoryKind>,
    pub seeds: Vec<u64>,
    pub duration: f64,
    pub dt: f64,
    /// Initial window excluded from RMSE and containment statistics (s).
    pub burn_in: f64,
    pub params: QuadParams,
    pub wind: WindConfig,
    pub reference: ReferenceConfig,
    pub mpc: MpcConfig,
    pub learner: LearnerConfig,
    pub disturbance: DisturbanceConfig,
    /// Convergence tolerance of the RPI computation.
    pub rpi_eps: f64,
    /// Fraction of every constraint half-width a tightening must keep.
    pub tube_keep: f64,
    pub pid: PidGains,
    pub nn: NnConfig,
    /// Online model learning for the tube controllers.
    pub learning: bool,
    /// Emit SVG plots next to the CSV files.
    pub plots: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            controllers: ControllerKind::ALL.to_vec(),
            trajectories: TrajectoryKind::BENCHMARK.to_vec(),
            seeds: (0..5).collect(),
            duration: 10.0,
            dt: 0.01,
            burn_in: 2.0,
            params: QuadParams::default(),
            wind: WindConfig::default(),
            reference: ReferenceConfig::default(),
            mpc: MpcConfig::default(),
            learner: LearnerConfig::default(),
            disturbance: DisturbanceConfig::default(),
            rpi_eps: 1e-4,
            tube_keep: 0.5,
            pid: PidGains::default(),
            nn: NnConfig::default(),
            learning: true,
            plots: false,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn steps(&self) -> usize {
        (self.duration / self.dt).round() as usize
    }

    pub fn burn_in_steps(&self) -> usize {
        (self.burn_in / self.dt).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |name: &'static str, reason: &str| {
            Err(Error::InvalidParameter {
                name,
                reason: reason.into(),
            })
        };
        if !(self.dt > 0.0) {
            return bad("dt", "must be positive");
        }
        if !(self.duration > 0.0) {
            return bad("duration", "must be positive");
        }
        if !(self.burn_in >= 0.0 && self.burn_in < self.duration) {
            return bad("burn_in", "must lie in [0, duration)");
        }
        if (self.mpc.dt - self.dt).abs() > 1e-12 {
            return bad("mpc.dt", "must equal dt");
        }
        if !(self.rpi_eps > 0.0) {
            return bad("rpi_eps", "must be positive");
        }
        if !(self.tube_keep > 0.0 && self.tube_keep < 1.0) {
            return bad("tube_keep", "must lie in (0, 1)");
        }
        if !(self.reference.amplitude > 0.0 && self.reference.amplitude < 1.0) {
            return bad("reference.amplitude", "must lie in (0, 1)");
        }
        if !(self.wind.intensity >= 0.0) {
            return bad("wind.intensity", "must be non-negative");
        }
        self.params.validate()?;
        self.mpc.validate()?;
        self.disturbance.validate()?;
        Ok(())
    }

    /// State box the experiment runs in (widened in raw-reference mode).
    pub fn state_box(&self, kind: TrajectoryKind) -> BoxSet<NX> {
        let base = state_constraints();
        if self.reference.paper_raw {
            self.trajectory(kind).enclosing_box(&base, self.reference.raw_margin)
        } else {
            base
        }
    }

    /// Initial plant state for a run on `traj`.
    pub fn initial_state(&self, traj: &TrajectoryRef) -> State {
        if self.reference.start_on_reference {
            traj.state(0.0)
        } else {
            hover_state(traj.reference(0.0).0)
        }
    }

    /// Reference for `kind`, defined a horizon beyond the run so the last
    /// prediction windows see the trajectory rather than its clamped end.
    pub fn trajectory(&self, kind: TrajectoryKind) -> TrajectoryRef {
        let window = self.duration + self.mpc.horizon as f64 * self.dt;
        let traj = if self.reference.paper_raw {
            TrajectoryRef::raw(kind, window)
        } else {
            TrajectoryRef::fitted(kind, window, &state_constraints(), self.reference.amplitude)
        };
        if self.reference.trim_attitude {
            traj.with_gravity(self.params.gravity)
        } else {
            traj
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_round_trip() {
        let cfg = ExperimentConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.steps(), 1000);
        assert_eq!(cfg.burn_in_steps(), 200);
        let back = ExperimentConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn partial_file_keeps_defaults() {
        let cfg = ExperimentConfig::from_toml(
            "seeds = [3]\ncontrollers = [\"proposed\", \"ft-mpc\"]\n[disturbance]\nlambda = 0.8\n",
        )
        .unwrap();
        assert_eq!(cfg.seeds, vec![3]);
        assert_eq!(cfg.controllers, vec![ControllerKind::Proposed, ControllerKind::FtMpc]);
        assert_eq!(cfg.disturbance.lambda, 0.8);
        assert_eq!(cfg.disturbance.gamma, 0.95);
        assert_eq!(cfg.learner.t_learn, 50);
    }

    #[test]
    fn unknown_field_is_named() {
        let err = ExperimentConfig::from_toml("sedes = [1]\n").unwrap_err().to_string();
        assert!(err.contains("sedes"), "{err}");
    }

    #[test]
    fn invalid_values_are_named() {
        let err = ExperimentConfig::from_toml("dt = -1.0\n").unwrap_err().to_string();
        assert!(err.contains("dt"), "{err}");
    }

    #[test]
    fn raw_mode_widens_the_box() {
        let cfg = ExperimentConfig {
            reference: ReferenceConfig {
                paper_raw: true,
                ..ReferenceConfig::default()
            },
            ..ExperimentConfig::default()
        };
        let b = cfg.state_box(TrajectoryKind::Helical);
        assert!(b.upper[0] > 10.0);
    }

    #[test]
    fn controller_names_round_trip() {
        for k in ControllerKind::ALL {
            assert_eq!(k.as_str().parse::<ControllerKind>().unwrap(), k);
        }
    }
}

//! Physics-informed sparse identification.
//!
//! The learned part is a residual on top of the rigid-body model: the
//! discrete prediction model is
//!
//! ```text
//! x⁺ = RK4_phys(x, u) + dt · Ψ(x, u) ξ
//! ```
//!
//! so `ξ = 0` is exactly the first-principles model, and regression targets
//! are residual rates `(x⁺ − RK4_phys(x, u)) / dt`.

mod dataset;
mod lasso;
mod library;

pub use dataset::{differentiate, preprocess, Dataset};
pub use lasso::{sparse_regress, LassoFit, LassoOptions, Standardized};
pub use library::{build_library, library_row, maybe_expand, LibrarySpec, Term};

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::quadsim::{DiscreteModel, QuadModel, QuadParams, Rk4};
use crate::{Error, Input, MatA, MatB, Result, State, NX};

/// Sparse coefficients over an explicit term list; only terms with at least
/// one nonzero coefficient are kept.
#[derive(Clone, Debug, PartialEq)]
pub struct LearnedModel {
    terms: Vec<Term>,
    coeffs: Vec<State>,
    version: u64,
}

impl Default for LearnedModel {
    fn default() -> Self {
        Self::zero()
    }
}

impl LearnedModel {
    /// `ξ = 0`, version 0.
    pub fn zero() -> Self {
        Self {
            terms: Vec::new(),
            coeffs: Vec::new(),
            version: 0,
        }
    }

    /// `xi` is `terms.len() × 12`. All-zero rows are dropped.
    pub fn new(terms: Vec<Term>, xi: &DMatrix<f64>, version: u64) -> Result<Self> {
        if xi.nrows() != terms.len() || xi.ncols() != NX {
            return Err(Error::Dataset(format!(
                "coefficient matrix is {}×{}, expected {}×{NX}",
                xi.nrows(),
                xi.ncols(),
                terms.len()
            )));
        }
        let mut seen = std::collections::HashSet::new();
        if let Some(t) = terms.iter().find(|t| !seen.insert(**t)) {
            return Err(Error::Dataset(format!("duplicate term `{t}`")));
        }
        if xi.iter().any(|v| !v.is_finite()) {
            return Err(Error::Dataset("non-finite coefficient".into()));
        }
        let (terms, coeffs) = terms
            .into_iter()
            .enumerate()
            .map(|(k, t)| (t, State::from_fn(|j, _| xi[(k, j)])))
            .filter(|(_, c)| c.iter().any(|&v| v != 0.0))
            .unzip();
        Ok(Self {
            terms,
            coeffs,
            version,
        })
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn with_version(mut self, version: u64) -> Self {
        self.version = version;
        self
    }

    /// Dense `ξ` over the active terms.
    pub fn xi(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.terms.len(), NX, |k, j| self.coeffs[k][j])
    }

    /// `ξ` laid out over an arbitrary term list (zeros for absent terms).
    pub fn xi_over(&self, terms: &[Term]) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(terms.len(), NX);
        for (t, c) in self.terms.iter().zip(&self.coeffs) {
            if let Some(r) = terms.iter().position(|s| s == t) {
                out.row_mut(r).copy_from(&c.transpose());
            }
        }
        out
    }

    /// `Ψ(x, u) ξ`.
    pub fn evaluate(&self, x: &State, u: &Input) -> State {
        let mut out = State::zeros();
        for (t, c) in self.terms.iter().zip(&self.coeffs) {
            out.axpy(t.eval(x, u), c, 1.0);
        }
        out
    }

    /// `∂(Ψξ)/∂x`, `∂(Ψξ)/∂u`.
    pub fn jacobian(&self, x: &State, u: &Input) -> (MatA, MatB) {
        let mut a = MatA::zeros();
        let mut b = MatB::zeros();
        for (t, c) in self.terms.iter().zip(&self.coeffs) {
            let mut gx = State::zeros();
            let mut gu = Input::zeros();
            t.add_grad(x, u, 1.0, &mut gx, &mut gu);
            for (i, &g) in gx.iter().enumerate().filter(|(_, g)| **g != 0.0) {
                a.column_mut(i).axpy(g, c, 1.0);
            }
            for (j, &g) in gu.iter().enumerate().filter(|(_, g)| **g != 0.0) {
                b.column_mut(j).axpy(g, c, 1.0);
            }
        }
        (a, b)
    }

    pub fn nonzeros(&self) -> usize {
        self.coeffs
            .iter()
            .map(|c| c.iter().filter(|&&v| v != 0.0).count())
            .sum()
    }
}

/// Scales `delta` down to Frobenius norm `bound` if it is larger.
pub fn clip_update(delta: &DMatrix<f64>, bound: f64) -> DMatrix<f64> {
    let n = delta.norm();
    if n > bound && n > 0.0 {
        delta * (bound / n)
    } else {
        delta.clone()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    /// Dimensionless ℓ1 weight per state dimension.
    pub h: [f64; NX],
    pub max_sweeps: usize,
    pub tol: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        let o = LassoOptions::default();
        Self {
            h: [0.05; NX],
            max_sweeps: o.max_sweeps,
            tol: o.tol,
        }
    }
}

impl FitConfig {
    pub fn uniform(h: f64) -> Self {
        Self {
            h: [h; NX],
            ..Self::default()
        }
    }

    fn lasso(&self) -> LassoOptions {
        LassoOptions {
            max_sweeps: self.max_sweeps,
            tol: self.tol,
            ..LassoOptions::default()
        }
    }
}

/// Per-dimension diagnostics of one fit.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FitReport {
    pub candidates: usize,
    pub rows: usize,
    pub residual_norm: [f64; NX],
    pub nonzeros: [usize; NX],
    pub sweeps: [usize; NX],
    pub kkt_violation: [f64; NX],
}

/// Full-library coefficients before pruning.
#[derive(Clone, Debug)]
pub struct FullFit {
    pub terms: Vec<Term>,
    pub xi: DMatrix<f64>,
    pub report: FitReport,
}

/// One sparse regression per state dimension against `d.derivs`, warm
/// started from `warm` on the terms it shares with `spec`.
pub fn fit_full(
    d: &Dataset,
    spec: &LibrarySpec,
    cfg: &FitConfig,
    warm: Option<&LearnedModel>,
) -> Result<FullFit> {
    if d.is_empty() {
        return Err(Error::Dataset("cannot fit an empty dataset".into()));
    }
    if spec.is_empty() {
        return Err(Error::Dataset("library is empty".into()));
    }
    let terms = spec.terms().to_vec();
    let sys = Standardized::new(build_library(d, &terms));
    let warm_xi = warm.map(|m| m.xi_over(&terms));
    let opts = cfg.lasso();
    let mut xi = DMatrix::zeros(terms.len(), NX);
    let mut report = FitReport {
        candidates: terms.len(),
        rows: d.len(),
        ..FitReport::default()
    };
    for j in 0..NX {
        let y = DVector::from_iterator(d.len(), d.derivs.iter().map(|r| r[j]));
        let w = warm_xi.as_ref().map(|m| m.column(j).into_owned());
        let f = sys.solve(&y, cfg.h[j], w.as_ref(), &opts)?;
        report.residual_norm[j] = f.residual_norm;
        report.nonzeros[j] = f.coeffs.iter().filter(|&&v| v != 0.0).count();
        report.sweeps[j] = f.sweeps;
        report.kkt_violation[j] = f.kkt_violation;
        xi.set_column(j, &f.coeffs);
    }
    Ok(FullFit { terms, xi, report })
}

/// [`fit_full`] followed by pruning of terms that are zero in every dimension.
pub fn fit(
    d: &Dataset,
    spec: &LibrarySpec,
    cfg: &FitConfig,
    warm: Option<&LearnedModel>,
) -> Result<(LearnedModel, FitReport)> {
    let full = fit_full(d, spec, cfg, warm)?;
    let version = warm.map_or(1, |m| m.version + 1);
    Ok((LearnedModel::new(full.terms, &full.xi, version)?, full.report))
}

/// Settings of the online learning loop.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LearnerConfig {
    pub fit: FitConfig,
    /// Refit period in control steps.
    pub t_learn: usize,
    /// Dataset size that must be exceeded before learning (and expansion).
    pub n_min: usize,
    /// Frobenius-norm cap on a single coefficient update.
    pub xi_bound: f64,
    /// Rows that must survive outlier rejection for a refit to proceed.
    pub min_rows: usize,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        Self {
            fit: FitConfig::default(),
            t_learn: 50,
            n_min: 500,
            xi_bound: 1.0,
            min_rows: 100,
        }
    }
}

/// Outcome of a learn event.
#[derive(Clone, Debug)]
pub struct LearnEvent {
    pub version: u64,
    /// Norm of the applied (post-clip) update.
    pub delta_norm: f64,
    pub clipped: bool,
    pub active_terms: usize,
    pub removed_outliers: usize,
    pub report: FitReport,
}

/// Dataset, library and current model snapshot for Algorithm-1 style
/// periodic relearning.
#[derive(Clone, Debug)]
pub struct Learner {
    pub cfg: LearnerConfig,
    library: LibrarySpec,
    data: Dataset,
    model: Arc<LearnedModel>,
}

impl Learner {
    pub fn new(cfg: LearnerConfig, dt: f64) -> Self {
        Self {
            library: LibrarySpec::base(cfg.n_min),
            cfg,
            data: Dataset::new(dt),
            model: Arc::new(LearnedModel::zero()),
        }
    }

    pub fn model(&self) -> Arc<LearnedModel> {
        Arc::clone(&self.model)
    }

    pub fn library(&self) -> &LibrarySpec {
        &self.library
    }

    pub fn data(&self) -> &Dataset {
        &self.data
    }

    /// Appends one `(x, u, residual rate)` sample.
    pub fn push(&mut self, x: State, u: Input, residual_rate: State) {
        self.data.push(x, u, residual_rate);
    }

    /// Whether step `k` is a learn step.
    pub fn due(&self, k: usize) -> bool {
        self.cfg.t_learn > 0 && k % self.cfg.t_learn == 0 && self.data.len() > self.cfg.n_min
    }

    /// Refits, clips the coefficient change and publishes a new snapshot.
    pub fn learn(&mut self) -> Result<LearnEvent> {
        let (clean, removed) = preprocess(&self.data, self.cfg.min_rows)?;
        self.library = maybe_expand(&self.library, self.data.len());
        let full = fit_full(&clean, &self.library, &self.cfg.fit, Some(&self.model))?;
        let old = self.model.xi_over(&full.terms);
        let raw = &full.xi - &old;
        let delta = clip_update(&raw, self.cfg.xi_bound);
        let clipped = raw.norm() > self.cfg.xi_bound;
        let next = LearnedModel::new(full.terms, &(old + &delta), self.model.version + 1)?;
        let event = LearnEvent {
            version: next.version,
            delta_norm: delta.norm(),
            clipped,
            active_terms: next.terms.len(),
            removed_outliers: removed,
            report: full.report,
        };
        log::debug!(
            "learn event v{}: |dxi| = {:.4}{}, {} active terms",
            event.version,
            event.delta_norm,
            if clipped { " (clipped)" } else { "" },
            event.active_terms
        );
        self.model = Arc::new(next);
        Ok(event)
    }
}

/// Discrete physics-plus-residual prediction model.
#[derive(Clone, Debug)]
pub struct PimlModel {
    pub physics: Rk4<QuadModel>,
    pub residual: Arc<LearnedModel>,
}

impl PimlModel {
    pub fn new(params: QuadParams, dt: f64, residual: Arc<LearnedModel>) -> Self {
        Self {
            physics: Rk4::new(QuadModel::new(params), dt),
            residual,
        }
    }

    /// First-principles model only (`ξ = 0`).
    pub fn nominal(params: QuadParams, dt: f64) -> Self {
        Self::new(params, dt, Arc::new(LearnedModel::zero()))
    }

    /// Residual-rate regression target for an observed transition.
    pub fn residual_target(&self, x: &State, u: &Input, x_next: &State) -> State {
        (x_next - self.physics.step(x, u)) / self.physics.dt
    }
}

impl DiscreteModel for PimlModel {
    fn dt(&self) -> f64 {
        self.physics.dt
    }

    fn step(&self, x: &State, u: &Input) -> State {
        self.physics.step(x, u) + self.residual.evaluate(x, u) * self.physics.dt
    }

    fn step_jacobian(&self, x: &State, u: &Input) -> (State, MatA, MatB) {
        let (next, a, b) = self.physics.step_jacobian(x, u);
        if self.residual.terms.is_empty() {
            return (next, a, b);
        }
        let dt = self.physics.dt;
        let (ra, rb) = self.residual.jacobian(x, u);
        (
            next + self.residual.evaluate(x, u) * dt,
            a + ra * dt,
            b + rb * dt,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::idx;
    use crate::quadsim::{hover_state, plant_step, DrydenConfig, DrydenState};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_model_evaluates_to_zero() {
        let m = LearnedModel::zero();
        assert_eq!(m.evaluate(&State::repeat(0.3), &Input::repeat(0.1)), State::zeros());
    }

    #[test]
    fn seeded_coefficients_reproduce_known_system() {
        // ẋ_4 = 2 − 0.5 x_4 + x_1 u_2
        let terms = vec![Term::Const, Term::State(3), Term::StateInput(0, 1)];
        let mut xi = DMatrix::zeros(3, NX);
        xi[(0, 3)] = 2.0;
        xi[(1, 3)] = -0.5;
        xi[(2, 3)] = 1.0;
        let m = LearnedModel::new(terms, &xi, 1).unwrap();
        let mut x = State::zeros();
        x[0] = 0.7;
        x[3] = -1.2;
        let u = Input::new(0.0, 3.0, 0.0, 0.0);
        let d = m.evaluate(&x, &u);
        assert!((d[3] - 4.7).abs() < 1e-14);
        assert_eq!(d.iter().filter(|v| **v != 0.0).count(), 1);
    }

    #[test]
    fn zero_rows_are_pruned_and_shape_checked() {
        let terms = vec![Term::Const, Term::State(0)];
        let mut xi = DMatrix::zeros(2, NX);
        xi[(1, 5)] = 1.0;
        let m = LearnedModel::new(terms.clone(), &xi, 3).unwrap();
        assert_eq!(m.terms(), &[Term::State(0)]);
        assert_eq!(m.xi_over(&terms), xi);
        assert!(LearnedModel::new(terms, &DMatrix::zeros(3, NX), 0).is_err());
    }

    #[test]
    fn clip_cases() {
        let d = DMatrix::from_element(2, 2, 0.25);
        assert_eq!(clip_update(&d, 1.0), d);
        let d = DMatrix::from_element(2, 2, 1.0);
        let c = clip_update(&d, 1.0);
        assert!((c.norm() - 1.0).abs() < 1e-15);
        assert_eq!(clip_update(&DMatrix::zeros(3, 3), 1.0), DMatrix::zeros(3, 3));
    }

    proptest! {
        #[test]
        fn clip_bounds_norm_and_keeps_direction(
            v in proptest::collection::vec(-10.0f64..10.0, 24),
            bound in 0.01f64..5.0,
        ) {
            let d = DMatrix::from_vec(2, 12, v);
            let c = clip_update(&d, bound);
            prop_assert!(c.norm() <= bound * (1.0 + 1e-12));
            let n = d.norm();
            if n > 0.0 {
                let cos = c.dot(&d) / (c.norm() * n);
                prop_assert!((cos - 1.0).abs() < 1e-12);
            }
        }

        #[test]
        fn residual_jacobian_matches_finite_differences(
            xs in proptest::collection::vec(-0.5f64..0.5, NX),
            us in proptest::collection::vec(-0.5f64..0.5, 4),
            seed in 0u64..100,
        ) {
            let spec = maybe_expand(&LibrarySpec::base(0), 1);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let xi = DMatrix::from_fn(spec.len(), NX, |_, _| {
                if rng.random_bool(0.1) { rng.random_range(-1.0..1.0) } else { 0.0 }
            });
            let m = LearnedModel::new(spec.terms().to_vec(), &xi, 1).unwrap();
            let x = State::from_vec(xs);
            let u = Input::from_vec(us);
            let (a, b) = m.jacobian(&x, &u);
            let h = 1e-6;
            for i in 0..NX {
                let mut p = x; p[i] += h;
                let mut q = x; q[i] -= h;
                let fd = (m.evaluate(&p, &u) - m.evaluate(&q, &u)) / (2.0 * h);
                prop_assert!((fd - a.column(i)).amax() < 1e-6);
            }
            for j in 0..4 {
                let mut p = u; p[j] += h;
                let mut q = u; q[j] -= h;
                let fd = (m.evaluate(&x, &p) - m.evaluate(&x, &q)) / (2.0 * h);
                prop_assert!((fd - b.column(j)).amax() < 1e-6);
            }
        }
    }

    /// Excited flight data from the true plant, targets as residual rates.
    fn flight_data(n: usize, wind: DrydenConfig, seed: u64) -> (Dataset, Vec<(State, Input, State)>) {
        let p = QuadParams::default();
        let dt = 0.01;
        let model = PimlModel::nominal(p, dt);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut w = DrydenState::new(wind.with_seed(seed));
        let mut x = hover_state([0.0, 0.0, 2.0]);
        let mut d = Dataset::new(dt);
        let mut transitions = Vec::new();
        for k in 0..n {
            // attitude-stabilized random excitation
            let mut u = p.hover_input();
            u[0] += 0.02 * (k as f64 * 0.05).sin() + rng.random_range(-0.01..0.01);
            for a in 0..3 {
                let kp = [3e-4, 3e-4, 2e-4][a];
                let kd = [4e-5, 4e-5, 3e-5][a];
                u[1 + a] = -kp * x[idx::PHI + a] - kd * x[idx::WX + a] + rng.random_range(-5e-5..5e-5);
            }
            u[0] -= 0.05 * (x[idx::PZ] - 2.0) + 0.02 * x[idx::VZ];
            let s = plant_step(&p, &x, &u, &w, dt).unwrap();
            d.push(x, u, model.residual_target(&x, &u, &s.state));
            transitions.push((x, u, s.state));
            x = s.state;
            w = s.wind;
        }
        (d, transitions)
    }

    #[test]
    fn all_zero_targets_give_zero_xi() {
        let (d, _) = flight_data(300, DrydenConfig::calm(), 1);
        assert!(d.derivs.iter().all(|r| r.amax() < 1e-9));
        let (m, report) = fit(&d, &LibrarySpec::base(500), &FitConfig::default(), None).unwrap();
        assert!(m.terms().is_empty(), "{:?}", m.terms());
        assert_eq!(report.nonzeros, [0; NX]);
    }

    #[test]
    fn refit_is_deterministic() {
        let (d, _) = flight_data(600, DrydenConfig::default(), 2);
        let spec = maybe_expand(&LibrarySpec::base(500), d.len());
        let (a, _) = fit(&d, &spec, &FitConfig::default(), None).unwrap();
        let (b, _) = fit(&d, &spec, &FitConfig::default(), None).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn learned_model_beats_physics_on_held_out_windy_data() {
        // steady wind plus drag is learnable; keep the turbulence light
        let mut wind = DrydenConfig::default();
        wind.sigma = wind.sigma.map(|s| 0.1 * s);
        let (train, _) = flight_data(800, wind.clone(), 3);
        let (_, test) = flight_data(400, wind, 4);
        let spec = maybe_expand(&LibrarySpec::base(500), train.len());
        let (m, report) = fit(&train, &spec, &FitConfig::uniform(0.01), None).unwrap();
        assert!(report.kkt_violation.iter().all(|&v| v < 1e-5), "{report:?}");
        let learned = PimlModel::new(QuadParams::default(), 0.01, Arc::new(m));
        let nominal = PimlModel::nominal(QuadParams::default(), 0.01);
        let rmse = |model: &PimlModel| {
            (test
                .iter()
                .map(|(x, u, xn)| (model.step(x, u) - xn).norm_squared())
                .sum::<f64>()
                / test.len() as f64)
                .sqrt()
        };
        let (e_learned, e_nominal) = (rmse(&learned), rmse(&nominal));
        assert!(e_learned < 0.5 * e_nominal, "{e_learned} vs {e_nominal}");
    }

    #[test]
    fn learned_model_matches_true_model_on_noisy_nominal_data() {
        // true model is the physics; measurement noise on the next state
        let (_, train) = flight_data(800, DrydenConfig::calm(), 5);
        let (_, test) = flight_data(400, DrydenConfig::calm(), 6);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let nominal = PimlModel::nominal(QuadParams::default(), 0.01);
        let mut noisy = |v: &[(State, Input, State)]| -> Vec<(State, Input, State)> {
            v.iter()
                .map(|(x, u, xn)| (*x, *u, xn + State::from_fn(|_, _| rng.random_range(-1e-4..1e-4))))
                .collect()
        };
        let train = noisy(&train);
        let test = noisy(&test);
        let mut d = Dataset::new(0.01);
        for (x, u, xn) in &train {
            d.push(*x, *u, nominal.residual_target(x, u, xn));
        }
        let spec = maybe_expand(&LibrarySpec::base(500), d.len());
        let (m, _) = fit(&d, &spec, &FitConfig::default(), None).unwrap();
        let learned = PimlModel::new(QuadParams::default(), 0.01, Arc::new(m));
        let rmse = |model: &PimlModel| {
            (test.iter().map(|(x, u, xn)| (model.step(x, u) - xn).norm_squared()).sum::<f64>()
                / test.len() as f64)
                .sqrt()
        };
        assert!(rmse(&learned) <= 2.0 * rmse(&nominal));
    }

    #[test]
    fn learner_versions_and_clipping() {
        let cfg = LearnerConfig {
            xi_bound: 0.05,
            ..LearnerConfig::default()
        };
        let mut l = Learner::new(cfg, 0.01);
        let (d, _) = flight_data(700, DrydenConfig::default(), 9);
        for k in 0..d.len() {
            l.push(d.states[k], d.inputs[k], d.derivs[k]);
        }
        assert!(!l.due(49));
        assert!(l.due(650));
        let e1 = l.learn().unwrap();
        assert_eq!(e1.version, 1);
        assert!(e1.clipped);
        assert!(e1.delta_norm <= 0.05 + 1e-12);
        assert!(l.library().is_expanded());
        let e2 = l.learn().unwrap();
        assert_eq!(e2.version, 2);
        assert_eq!(l.model().version(), 2);
    }

    #[test]
    fn piml_jacobian_includes_residual() {
        let terms = vec![Term::StateState(3, 3), Term::SinInput(6, 0)];
        let mut xi = DMatrix::zeros(2, NX);
        xi[(0, 3)] = -0.3;
        xi[(1, 4)] = 0.8;
        let m = PimlModel::new(
            QuadParams::default(),
            0.01,
            Arc::new(LearnedModel::new(terms, &xi, 1).unwrap()),
        );
        let mut x = hover_state([0.1, 0.0, 2.0]);
        x[idx::VX] = 0.4;
        x[idx::PHI] = 0.2;
        let u = Input::new(0.3, 1e-4, 0.0, -1e-5);
        let (_, a, b) = m.step_jacobian(&x, &u);
        for i in 0..NX {
            let h = 1e-6;
            let mut p = x;
            p[i] += h;
            let mut q = x;
            q[i] -= h;
            let fd = (m.step(&p, &u) - m.step(&q, &u)) / (2.0 * h);
            assert!((fd - a.column(i)).amax() < 1e-6, "column {i}");
        }
        let h = 1e-7;
        let fd = (m.step(&x, &(u + Input::new(h, 0.0, 0.0, 0.0)))
            - m.step(&x, &(u - Input::new(h, 0.0, 0.0, 0.0))))
            / (2.0 * h);
        assert!((fd - b.column(0)).amax() < 1e-6);
    }
}

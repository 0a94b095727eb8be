//! Dryden turbulence (MIL-HDBK-1797B low-altitude form) driven by seeded
//! white noise.
//!
//! The longitudinal component uses the first-order shaping filter, the
//! lateral and vertical components the second-order one. Both are
//! discretised with the exact transition matrix and normalised so the
//! stationary standard deviation equals the configured intensity.

use nalgebra::{Matrix3, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::{idx, State};

const FT_PER_M: f64 = 3.280_839_895;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DrydenConfig {
    pub enabled: bool,
    /// Steady wind in the inertial frame (m/s).
    pub mean_wind: [f64; 3],
    /// Turbulence intensities σ_u, σ_v, σ_w (m/s).
    pub sigma: [f64; 3],
    /// Scale lengths L_u, L_v, L_w (m).
    pub length_scale: [f64; 3],
    /// Advection speed used to turn spatial scales into time constants (m/s).
    pub airspeed: f64,
    /// Linear aerodynamic drag per unit mass (1/s): the airframe feels
    /// `coupling · (v_wind − v)` on its velocity derivative.
    pub coupling: f64,
    /// Optional gust-to-body-rate coupling (rad/s² per m/s); zero disables.
    pub rate_coupling: f64,
    /// Turbulence samples are clipped to this many σ.
    pub ceiling_sigmas: f64,
    pub seed: u64,
}

impl Default for DrydenConfig {
    fn default() -> Self {
        Self::low_altitude(2.0, 7.7)
    }
}

impl DrydenConfig {
    /// Low-altitude parameters at `altitude` metres with wind speed `w20`
    /// (m/s at 20 ft): light turbulence is `w20 ≈ 7.7` (15 kt).
    pub fn low_altitude(altitude: f64, w20: f64) -> Self {
        let h = (altitude * FT_PER_M).max(1.0);
        let denom = 0.177 + 0.000823 * h;
        let l_w = h / FT_PER_M;
        let l_uv = h / denom.powf(1.2) / FT_PER_M;
        let sigma_w = 0.1 * w20;
        let sigma_uv = sigma_w / denom.powf(0.4);
        Self {
            enabled: true,
            mean_wind: [1.0, -0.5, 0.0],
            sigma: [sigma_uv, sigma_uv, sigma_w],
            length_scale: [l_uv, l_uv, l_w],
            airspeed: 2.0,
            coupling: 0.35,
            rate_coupling: 0.0,
            ceiling_sigmas: 3.0,
            seed: 0,
        }
    }

    /// Wind model that produces nothing at all.
    pub fn calm() -> Self {
        Self {
            enabled: false,
            mean_wind: [0.0; 3],
            sigma: [0.0; 3],
            ..Self::default()
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Multiplies mean wind and turbulence intensities by `k`.
    pub fn scaled(mut self, k: f64) -> Self {
        for i in 0..3 {
            self.mean_wind[i] *= k;
            self.sigma[i] *= k;
        }
        self
    }

    fn time_constant(&self, axis: usize) -> f64 {
        self.length_scale[axis] / self.airspeed.max(1e-6)
    }
}

/// Shaping-filter state and noise source for one realisation.
#[derive(Clone, Debug)]
pub struct DrydenState {
    pub config: DrydenConfig,
    long: f64,
    lat: [f64; 2],
    vert: [f64; 2],
    rng: ChaCha8Rng,
}

impl DrydenState {
    pub fn new(config: DrydenConfig) -> Self {
        let rng = ChaCha8Rng::seed_from_u64(config.seed);
        Self {
            config,
            long: 0.0,
            lat: [0.0; 2],
            vert: [0.0; 2],
            rng,
        }
    }

    /// Current turbulence velocity (m/s), excluding the mean wind.
    pub fn turbulence(&self) -> [f64; 3] {
        let c = &self.config;
        let ceil = |v: f64, s: f64| v.clamp(-c.ceiling_sigmas * s, c.ceiling_sigmas * s);
        [
            ceil(c.sigma[0] * self.long, c.sigma[0]),
            ceil(c.sigma[1] * second_order_output(&self.lat), c.sigma[1]),
            ceil(c.sigma[2] * second_order_output(&self.vert), c.sigma[2]),
        ]
    }

    /// Total wind velocity (m/s).
    pub fn wind(&self) -> [f64; 3] {
        let t = self.turbulence();
        let m = self.config.mean_wind;
        [m[0] + t[0], m[1] + t[1], m[2] + t[2]]
    }

    /// Disturbance acting on the state derivative for the current sample.
    pub fn disturbance(&self) -> State {
        let mut d = State::zeros();
        if !self.config.enabled {
            return d;
        }
        let w = self.wind();
        for i in 0..3 {
            d[idx::VX + i] = self.config.coupling * w[i];
        }
        if self.config.rate_coupling != 0.0 {
            let t = self.turbulence();
            d[idx::WX] = self.config.rate_coupling * t[1];
            d[idx::WY] = -self.config.rate_coupling * t[0];
        }
        d
    }
}

const SQRT3: f64 = 1.732_050_807_568_877_2;

fn second_order_output(z: &[f64; 2]) -> f64 {
    SQRT3 * z[0] + (1.0 - SQRT3) * z[1]
}

/// Unit-variance discrete first-order Gauss-Markov update.
fn first_order_update(x: f64, tau: f64, dt: f64, noise: f64) -> f64 {
    let a = (-dt / tau).exp();
    a * x + (1.0 - a * a).sqrt() * noise
}

/// Discrete second-order Dryden filter update, normalised so the output
/// `√3 z1 + (1 − √3) z2` has unit stationary variance.
fn second_order_update(z: [f64; 2], tau: f64, dt: f64, noise: f64) -> [f64; 2] {
    let a = (-dt / tau).exp();
    let r = dt / tau;
    // transition: z1' = a z1 + g n ; z2' = a r z1 + a z2
    let phi = [[a, 0.0], [a * r, a]];
    let g = 1.0 / second_order_gain(phi);
    [a * z[0] + g * noise, a * r * z[0] + a * z[1]]
}

/// Output standard deviation of the second-order filter under unit noise.
fn second_order_gain(phi: [[f64; 2]; 2]) -> f64 {
    // Stationary covariance P = Φ P Φᵀ + e1 e1ᵀ, unknowns (p11, p12, p22).
    let [[a11, a12], [a21, a22]] = phi;
    let m = Matrix3::new(
        1.0 - a11 * a11,
        -2.0 * a11 * a12,
        -a12 * a12,
        -a11 * a21,
        1.0 - (a11 * a22 + a12 * a21),
        -a12 * a22,
        -a21 * a21,
        -2.0 * a21 * a22,
        1.0 - a22 * a22,
    );
    let p = m
        .lu()
        .solve(&Vector3::new(1.0, 0.0, 0.0))
        .expect("stable Dryden filter");
    let c = [SQRT3, 1.0 - SQRT3];
    (c[0] * c[0] * p[0] + 2.0 * c[0] * c[1] * p[1] + c[1] * c[1] * p[2]).sqrt()
}

/// Advances the shaping filters by `dt` and returns the new state with its
/// disturbance sample (velocity block, optionally body rates; zero elsewhere).
pub fn dryden_step(w: &DrydenState, dt: f64) -> (DrydenState, State) {
    let mut next = w.clone();
    if !w.config.enabled || dt <= 0.0 {
        let d = next.disturbance();
        return (next, d);
    }
    let n: [f64; 3] = std::array::from_fn(|_| StandardNormal.sample(&mut next.rng));
    let c = &w.config;
    next.long = first_order_update(w.long, c.time_constant(0), dt, n[0]);
    next.lat = second_order_update(w.lat, c.time_constant(1), dt, n[1]);
    next.vert = second_order_update(w.vert, c.time_constant(2), dt, n[2]);
    let d = next.disturbance();
    (next, d)
}

use nalgebra::SVector;

use crate::{Input, MatA, MatB, Result, State, NU, NX};

/// Continuous-time model `ẋ = f(x, u)`.
pub trait ContinuousModel: Send + Sync {
    fn deriv(&self, x: &State, u: &Input) -> State;

    /// Derivative together with `∂f/∂x` and `∂f/∂u`. The default uses
    /// central differences; models with cheap analytic Jacobians override it.
    fn deriv_jacobian(&self, x: &State, u: &Input) -> (State, MatA, MatB) {
        let f = self.deriv(x, u);
        let mut a = MatA::zeros();
        let mut b = MatB::zeros();
        for j in 0..NX {
            let h = 1e-6 * (1.0 + x[j].abs());
            let (mut xp, mut xm) = (*x, *x);
            xp[j] += h;
            xm[j] -= h;
            a.set_column(j, &((self.deriv(&xp, u) - self.deriv(&xm, u)) / (2.0 * h)));
        }
        for j in 0..NU {
            let h = 1e-7 * (1.0 + u[j].abs());
            let (mut up, mut um) = (*u, *u);
            up[j] += h;
            um[j] -= h;
            b.set_column(j, &((self.deriv(x, &up) - self.deriv(x, &um)) / (2.0 * h)));
        }
        (f, a, b)
    }
}

impl<M: ContinuousModel + ?Sized> ContinuousModel for &M {
    fn deriv(&self, x: &State, u: &Input) -> State {
        (**self).deriv(x, u)
    }
    fn deriv_jacobian(&self, x: &State, u: &Input) -> (State, MatA, MatB) {
        (**self).deriv_jacobian(x, u)
    }
}

/// Discrete-time prediction model `x⁺ = f_d(x, u)`.
pub trait DiscreteModel: Send + Sync {
    fn dt(&self) -> f64;

    fn step(&self, x: &State, u: &Input) -> State;

    /// Next state and the Jacobians `∂f_d/∂x`, `∂f_d/∂u`.
    fn step_jacobian(&self, x: &State, u: &Input) -> (State, MatA, MatB);
}

/// One classical Runge-Kutta step with the input held over `[0, dt]`.
pub fn rk4_step<const N: usize, const M: usize, F>(
    f: F,
    x: &SVector<f64, N>,
    u: &SVector<f64, M>,
    dt: f64,
) -> Result<SVector<f64, N>>
where
    F: Fn(&SVector<f64, N>, &SVector<f64, M>) -> Result<SVector<f64, N>>,
{
    if !(dt >= 0.0) {
        return Err(crate::Error::InvalidParameter {
            name: "dt",
            reason: format!("must be non-negative, got {dt}"),
        });
    }
    if dt == 0.0 {
        return Ok(*x);
    }
    let k1 = f(x, u)?;
    let k2 = f(&(x + k1 * (0.5 * dt)), u)?;
    let k3 = f(&(x + k2 * (0.5 * dt)), u)?;
    let k4 = f(&(x + k3 * dt), u)?;
    Ok(x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0))
}

/// RK4 discretisation of a continuous model, with Jacobians propagated
/// through the four stages by the chain rule.
#[derive(Clone, Debug)]
pub struct Rk4<M> {
    pub model: M,
    pub dt: f64,
}

impl<M: ContinuousModel> Rk4<M> {
    pub fn new(model: M, dt: f64) -> Self {
        Self { model, dt }
    }
}

impl<M: ContinuousModel> DiscreteModel for Rk4<M> {
    fn dt(&self) -> f64 {
        self.dt
    }

    fn step(&self, x: &State, u: &Input) -> State {
        let h = self.dt;
        let f = |s: &State| self.model.deriv(s, u);
        let k1 = f(x);
        let k2 = f(&(x + k1 * (0.5 * h)));
        let k3 = f(&(x + k2 * (0.5 * h)));
        let k4 = f(&(x + k3 * h));
        x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0)
    }

    fn step_jacobian(&self, x: &State, u: &Input) -> (State, MatA, MatB) {
        let h = self.dt;
        let eye = MatA::identity();

        let (k1, a1, b1) = self.model.deriv_jacobian(x, u);
        let dk1x = a1;
        let dk1u = b1;

        let (k2, a2, b2) = self.model.deriv_jacobian(&(x + k1 * (0.5 * h)), u);
        let dk2x = a2 * (eye + dk1x * (0.5 * h));
        let dk2u = a2 * dk1u * (0.5 * h) + b2;

        let (k3, a3, b3) = self.model.deriv_jacobian(&(x + k2 * (0.5 * h)), u);
        let dk3x = a3 * (eye + dk2x * (0.5 * h));
        let dk3u = a3 * dk2u * (0.5 * h) + b3;

        let (k4, a4, b4) = self.model.deriv_jacobian(&(x + k3 * h), u);
        let dk4x = a4 * (eye + dk3x * h);
        let dk4u = a4 * dk3u * h + b4;

        let next = x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        let ax = eye + (dk1x + dk2x * 2.0 + dk3x * 2.0 + dk4x) * (h / 6.0);
        let bu = (dk1u + dk2u * 2.0 + dk3u * 2.0 + dk4u) * (h / 6.0);
        (next, ax, bu)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadsim::{QuadModel, QuadParams};
    use nalgebra::{Vector1, Vector2};

    fn decay(x: &Vector1<f64>, _u: &Vector1<f64>) -> Result<Vector1<f64>> {
        Ok(-x)
    }

    fn integrate_decay(dt: f64, t_end: f64) -> f64 {
        let steps = (t_end / dt).round() as usize;
        let mut x = Vector1::new(1.0);
        for _ in 0..steps {
            x = rk4_step(decay, &x, &Vector1::zeros(), dt).unwrap();
        }
        x[0]
    }

    #[test]
    fn single_step_matches_exponential() {
        let x = rk4_step(decay, &Vector1::new(1.0), &Vector1::zeros(), 0.1).unwrap();
        assert!((x[0] - (-0.1f64).exp()).abs() < 1e-7);
        assert!((x[0] - 0.904_837_418).abs() < 1e-7);
    }

    #[test]
    fn zero_step_is_identity() {
        let x0 = Vector2::new(0.3, -4.0);
        let x = rk4_step(|x: &Vector2<f64>, _: &Vector1<f64>| Ok(-x), &x0, &Vector1::zeros(), 0.0)
            .unwrap();
        assert_eq!(x, x0);
    }

    #[test]
    fn global_error_is_fourth_order() {
        let dts = [0.1, 0.05, 0.025, 0.0125];
        let errs: Vec<f64> = dts
            .iter()
            .map(|&dt| (integrate_decay(dt, 1.0) - (-1.0f64).exp()).abs())
            .collect();
        // least-squares slope of log(err) vs log(dt)
        let lx: Vec<f64> = dts.iter().map(|d| d.ln()).collect();
        let ly: Vec<f64> = errs.iter().map(|e| e.ln()).collect();
        let mx = lx.iter().sum::<f64>() / 4.0;
        let my = ly.iter().sum::<f64>() / 4.0;
        let num: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
        let den: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
        let slope = num / den;
        assert!((3.8..=4.2).contains(&slope), "slope {slope}");
        // halving dt cuts error by roughly 2^4
        let ratio = errs[0] / errs[1];
        assert!((14.0..18.0).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn negative_dt_rejected() {
        assert!(rk4_step(decay, &Vector1::new(1.0), &Vector1::zeros(), -0.1).is_err());
    }

    #[test]
    fn chain_rule_jacobian_matches_differences() {
        let p = QuadParams::default();
        let d = Rk4::new(QuadModel::new(p), 0.01);
        let x = State::from_column_slice(&[
            0.1, -0.2, 1.9, 0.3, -0.1, 0.2, 0.15, -0.25, 0.4, 1.5, -0.7, 0.9,
        ]);
        let u = Input::new(0.3, 1e-3, -2e-3, 5e-4);
        let (next, a, b) = d.step_jacobian(&x, &u);
        assert_eq!(next, d.step(&x, &u));
        for j in 0..NX {
            let h = 1e-6;
            let (mut xp, mut xm) = (x, x);
            xp[j] += h;
            xm[j] -= h;
            let col = (d.step(&xp, &u) - d.step(&xm, &u)) / (2.0 * h);
            assert!((a.column(j) - col).amax() < 1e-6, "column {j}");
        }
        for j in 0..NU {
            let h = 1e-8;
            let (mut up, mut um) = (u, u);
            up[j] += h;
            um[j] -= h;
            let col = (d.step(&x, &up) - d.step(&x, &um)) / (2.0 * h);
            assert!((b.column(j) - col).amax() < 1e-5 * (1.0 + col.amax()), "column {j}");
        }
    }
}

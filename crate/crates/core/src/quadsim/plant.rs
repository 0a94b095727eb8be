use super::{check_pitch, dryden_step, DrydenState, QuadModel, QuadParams, THETA_MAX};
use super::rk4::{rk4_step, ContinuousModel};
use crate::{idx, Input, Result, State};

/// Outcome of one true-plant step.
#[derive(Clone, Debug)]
pub struct PlantStep {
    pub state: State,
    pub wind: DrydenState,
    /// Wind disturbance held over the step (state-derivative units).
    pub disturbance: State,
    /// Pitch left the normal operating envelope `|θ| ≤ π/4`.
    pub envelope_exit: bool,
}

/// Advances the true plant by `dt`: RK4 of the rigid-body dynamics plus the
/// aerodynamic wind disturbance (zero-order hold over the step) and the
/// matching airframe drag. With wind disabled this is exactly the nominal
/// RK4 step.
pub fn plant_step(
    params: &QuadParams,
    x: &State,
    u: &Input,
    wind: &DrydenState,
    dt: f64,
) -> Result<PlantStep> {
    let model = QuadModel::new(*params);
    let (next_wind, disturbance) = dryden_step(wind, dt);
    let next = if wind.config.enabled {
        let drag = wind.config.coupling;
        rk4_step(
            |s: &State, u: &Input| {
                check_pitch(s[idx::THETA])?;
                let mut d = model.deriv(s, u) + disturbance;
                for i in idx::VEL {
                    d[i] -= drag * s[i];
                }
                Ok(d)
            },
            x,
            u,
            dt,
        )?
    } else {
        rk4_step(
            |s: &State, u: &Input| super::continuous_dynamics(s, u, params),
            x,
            u,
            dt,
        )?
    };
    let envelope_exit = next[idx::THETA].abs() > THETA_MAX;
    if envelope_exit {
        log::debug!("pitch {:.3} rad outside operating envelope", next[idx::THETA]);
    }
    Ok(PlantStep {
        state: next,
        wind: next_wind,
        disturbance,
        envelope_exit,
    })
}

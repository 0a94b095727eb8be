use super::{tighten, tighten_input, BoxSet, DisturbanceSet, RpiMap, RpiSet, TubeGain};
use crate::{Input, MatA, Result, State, NU, NX};

/// The `(D, S, 𝕏_S, 𝕌_S)` tuple the controller reads at one step.
#[derive(Clone, Debug)]
pub struct TubeSnapshot {
    pub center: State,
    pub half_widths: State,
    /// Per-step disturbance bound fed to the RPI map (state units).
    pub w: State,
    pub rpi: RpiSet<NX>,
    pub state_box: BoxSet<NX>,
    pub input_box: BoxSet<NU>,
    /// Factor applied to the RPI box to keep the tightening admissible
    /// (1 when the exact box fits).
    pub scale: f64,
    /// Set when the exact tightening was not admissible.
    pub fallback: bool,
}

/// Keeps the RPI operator for the current closed loop and publishes
/// tightened constraint sets.
///
/// A tightening is admissible when at least a fraction `keep` of every
/// state half-width, and of the input headroom on both sides of `u_ref`,
/// survives. An inadmissible tightening reuses the last admissible
/// snapshot; before there is one, the RPI box is scaled down to the
/// largest admissible multiple.
#[derive(Clone, Debug)]
pub struct Tube {
    pub gain: TubeGain,
    pub state_box: BoxSet<NX>,
    pub input_box: BoxSet<NU>,
    pub u_ref: Input,
    pub keep: f64,
    pub dt: f64,
    map: RpiMap<NX>,
    eps: f64,
    last: Option<TubeSnapshot>,
    pub fallbacks: usize,
}

impl Tube {
    pub fn new(
        a_cl: &MatA,
        gain: TubeGain,
        state_box: BoxSet<NX>,
        input_box: BoxSet<NU>,
        u_ref: Input,
        dt: f64,
        eps: f64,
    ) -> Result<Self> {
        Ok(Self {
            gain,
            state_box,
            input_box,
            u_ref,
            keep: 0.5,
            dt,
            map: RpiMap::new(a_cl, eps)?,
            eps,
            last: None,
            fallbacks: 0,
        })
    }

    pub fn map(&self) -> &RpiMap<NX> {
        &self.map
    }

    /// Re-linearised closed loop (after a model update).
    pub fn set_closed_loop(&mut self, a_cl: &MatA) -> Result<()> {
        self.map = RpiMap::new(a_cl, self.eps)?;
        Ok(())
    }

    pub fn last(&self) -> Option<&TubeSnapshot> {
        self.last.as_ref()
    }

    fn tightened(&self, s: &State) -> Option<(BoxSet<NX>, BoxSet<NU>)> {
        let xs = tighten(&self.state_box, s).ok()?;
        let us = tighten_input(&self.input_box, &self.gain.k, s).ok()?;
        let x_ok = (xs.half_widths() - self.state_box.half_widths() * self.keep).min() >= 0.0;
        let up = self.u_ref + (self.input_box.upper - self.u_ref) * self.keep;
        let down = self.u_ref - (self.u_ref - self.input_box.lower) * self.keep;
        let u_ok = (0..NU).all(|i| us.upper[i] >= up[i] && us.lower[i] <= down[i]);
        (x_ok && u_ok).then_some((xs, us))
    }

    /// Recomputes `S` for the rate-unit sets `D` and `Uξ` and tightens the
    /// constraints.
    pub fn refresh(&mut self, d: &DisturbanceSet, u_xi: &BoxSet<NX>) -> Result<TubeSnapshot> {
        let w = (d.half_widths + u_xi.half_widths()) * self.dt;
        let rpi = self.map.apply(&w)?;
        let snap = |rpi: RpiSet<NX>, (state_box, input_box), scale: f64| TubeSnapshot {
            center: d.center,
            half_widths: d.half_widths,
            w,
            rpi,
            state_box,
            input_box,
            scale,
            fallback: scale < 1.0,
        };
        if let Some(boxes) = self.tightened(&rpi.half_widths) {
            let out = snap(rpi, boxes, 1.0);
            self.last = Some(out.clone());
            return Ok(out);
        }
        self.fallbacks += 1;
        if let Some(prev) = &self.last {
            log::debug!("tightening inadmissible; keeping the previous tube");
            return Ok(TubeSnapshot {
                center: d.center,
                half_widths: d.half_widths,
                w,
                fallback: true,
                ..prev.clone()
            });
        }
        // bisection on the admissible scale; θ = 0 always works
        let (mut lo, mut hi) = (0.0, 1.0);
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if self.tightened(&(rpi.half_widths * mid)).is_some() {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        log::info!("initial tube scaled by {lo:.4} to keep constraints admissible");
        let scaled = RpiSet {
            half_widths: rpi.half_widths * lo,
            ..rpi
        };
        let boxes = self
            .tightened(&scaled.half_widths)
            .expect("zero tube is admissible");
        let out = snap(scaled, boxes, lo);
        self.last = Some(out.clone());
        Ok(out)
    }
}

use crate::{Error, Input, Result, State, NU, NX};

/// Flight snapshots `x̂`, inputs `û` and state derivatives `ẋ̂`, one row per
/// sample at a uniform sampling time.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Dataset {
    pub states: Vec<State>,
    pub inputs: Vec<Input>,
    /// Regression targets. Zero until [`differentiate`] (or a caller) fills them.
    pub derivs: Vec<State>,
    pub dt: f64,
}

impl Dataset {
    pub fn new(dt: f64) -> Self {
        Self {
            dt,
            ..Self::default()
        }
    }

    /// Snapshots without derivatives; run [`differentiate`] before fitting.
    pub fn from_snapshots(states: Vec<State>, inputs: Vec<Input>, dt: f64) -> Result<Self> {
        let n = states.len();
        Self::from_parts(states, inputs, vec![State::zeros(); n], dt)
    }

    pub fn from_parts(
        states: Vec<State>,
        inputs: Vec<Input>,
        derivs: Vec<State>,
        dt: f64,
    ) -> Result<Self> {
        if states.len() != inputs.len() || states.len() != derivs.len() {
            return Err(Error::Dataset(format!(
                "row counts differ: {} states, {} inputs, {} derivatives",
                states.len(),
                inputs.len(),
                derivs.len()
            )));
        }
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::InvalidParameter {
                name: "dt",
                reason: format!("sampling time must be positive, got {dt}"),
            });
        }
        Ok(Self {
            states,
            inputs,
            derivs,
            dt,
        })
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn push(&mut self, x: State, u: Input, deriv: State) {
        self.states.push(x);
        self.inputs.push(u);
        self.derivs.push(deriv);
    }

    /// Channel `c` of row `r`: states, then inputs, then derivatives.
    fn channel(&self, r: usize, c: usize) -> f64 {
        if c < NX {
            self.states[r][c]
        } else if c < NX + NU {
            self.inputs[r][c - NX]
        } else {
            self.derivs[r][c - NX - NU]
        }
    }

    fn keep_rows(&self, keep: &[bool]) -> Self {
        let pick = |v: &[State]| {
            v.iter()
                .zip(keep)
                .filter(|(_, &k)| k)
                .map(|(s, _)| *s)
                .collect::<Vec<_>>()
        };
        Self {
            states: pick(&self.states),
            inputs: self
                .inputs
                .iter()
                .zip(keep)
                .filter(|(_, &k)| k)
                .map(|(s, _)| *s)
                .collect(),
            derivs: pick(&self.derivs),
            dt: self.dt,
        }
    }
}

const CHANNELS: usize = 2 * NX + NU;

/// Drops non-finite rows, then rows where any channel lies more than three
/// sample standard deviations from that channel's mean. Channels with zero
/// variance never reject. Returns the cleaned dataset and the removal count.
pub fn preprocess(raw: &Dataset, min_rows: usize) -> Result<(Dataset, usize)> {
    let n = raw.len();
    if n < 3 {
        return Err(Error::Dataset(format!("need at least 3 rows, got {n}")));
    }
    let mut keep: Vec<bool> = (0..n)
        .map(|r| (0..CHANNELS).all(|c| raw.channel(r, c).is_finite()))
        .collect();
    let finite = keep.iter().filter(|&&k| k).count();
    if finite >= 2 {
        let mut mean = [0.0; CHANNELS];
        let mut m2 = [0.0; CHANNELS];
        let mut count = 0.0;
        // Welford
        for r in (0..n).filter(|&r| keep[r]) {
            count += 1.0;
            for c in 0..CHANNELS {
                let v = raw.channel(r, c);
                let d = v - mean[c];
                mean[c] += d / count;
                m2[c] += d * (v - mean[c]);
            }
        }
        let sd: Vec<f64> = m2.iter().map(|m| (m / (count - 1.0)).sqrt()).collect();
        for r in 0..n {
            if keep[r] {
                keep[r] = (0..CHANNELS)
                    .all(|c| sd[c] == 0.0 || (raw.channel(r, c) - mean[c]).abs() <= 3.0 * sd[c]);
            }
        }
    }
    let cleaned = raw.keep_rows(&keep);
    if cleaned.len() < min_rows.max(1) {
        return Err(Error::Dataset(format!(
            "only {} of {n} rows survive outlier rejection, need {min_rows}",
            cleaned.len()
        )));
    }
    let removed = n - cleaned.len();
    Ok((cleaned, removed))
}

/// Fills the derivative rows from the snapshots: central differences inside,
/// second-order one-sided stencils at both ends.
pub fn differentiate(d: &Dataset) -> Result<Dataset> {
    let n = d.len();
    if n < 3 {
        return Err(Error::Dataset(format!(
            "differentiation needs at least 3 rows, got {n}"
        )));
    }
    let x = &d.states;
    let h2 = 2.0 * d.dt;
    let mut derivs = Vec::with_capacity(n);
    derivs.push((-3.0 * x[0] + 4.0 * x[1] - x[2]) / h2);
    for k in 1..n - 1 {
        derivs.push((x[k + 1] - x[k - 1]) / h2);
    }
    derivs.push((3.0 * x[n - 1] - 4.0 * x[n - 2] + x[n - 3]) / h2);
    Ok(Dataset {
        states: d.states.clone(),
        inputs: d.inputs.clone(),
        derivs,
        dt: d.dt,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(n: usize, dt: f64, f: impl Fn(f64) -> f64) -> Dataset {
        let states = (0..n).map(|k| State::repeat(f(k as f64 * dt))).collect();
        Dataset::from_snapshots(states, vec![Input::zeros(); n], dt).unwrap()
    }

    #[test]
    fn linear_ramp_differentiates_exactly() {
        let d = differentiate(&ramp(20, 0.1, |t| t)).unwrap();
        for r in &d.derivs {
            assert!((r - State::repeat(1.0)).amax() < 1e-10);
        }
    }

    #[test]
    fn quadratic_is_exact_at_the_ends_too() {
        let d = differentiate(&ramp(10, 0.05, |t| 3.0 * t * t - t)).unwrap();
        for (k, r) in d.derivs.iter().enumerate() {
            let t = k as f64 * 0.05;
            assert!((r[0] - (6.0 * t - 1.0)).abs() < 1e-10);
        }
    }

    #[test]
    fn sine_derivative_error_is_small() {
        let dt = 0.01;
        let d = differentiate(&ramp(700, dt, f64::sin)).unwrap();
        let worst = d
            .derivs
            .iter()
            .enumerate()
            .map(|(k, r)| (r[4] - (k as f64 * dt).cos()).abs())
            .fold(0.0, f64::max);
        assert!(worst < 1e-4, "{worst}");
    }

    #[test]
    fn constant_signal_has_zero_derivative() {
        let d = differentiate(&ramp(5, 0.01, |_| 2.5)).unwrap();
        assert!(d.derivs.iter().all(|r| r.amax() == 0.0));
    }

    #[test]
    fn too_short_is_rejected() {
        assert!(differentiate(&ramp(2, 0.01, |t| t)).is_err());
        assert!(preprocess(&ramp(2, 0.01, |t| t), 1).is_err());
    }

    #[test]
    fn clean_data_is_unchanged() {
        let d = ramp(100, 0.01, |t| (7.0 * t).sin());
        let (out, removed) = preprocess(&d, 10).unwrap();
        assert_eq!(removed, 0);
        assert_eq!(out, d);
    }

    #[test]
    fn ten_sigma_row_is_removed() {
        let n = 200;
        let mut states: Vec<State> = (0..n)
            .map(|k| State::from_fn(|i, _| ((k * (i + 3)) as f64 * 0.37).sin()))
            .collect();
        // mean/sd of channel 3 without the outlier, then plant one at 10σ
        let vals: Vec<f64> = states.iter().map(|s| s[3]).collect();
        let m = vals.iter().sum::<f64>() / n as f64;
        let sd = (vals.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
        states[57][3] = m + 10.0 * sd;
        let d = Dataset::from_snapshots(states, vec![Input::zeros(); n], 0.01).unwrap();
        let (out, removed) = preprocess(&d, 10).unwrap();
        assert!(removed >= 1);
        assert!(out.states.iter().all(|s| s[3] < m + 5.0 * sd));
        // rows that were within 3σ of the contaminated statistics survive
        assert!(out.len() >= n - 3);
    }

    #[test]
    fn identical_rows_survive() {
        let d = ramp(50, 0.01, |_| 1.0);
        let (out, removed) = preprocess(&d, 50).unwrap();
        assert_eq!(removed, 0);
        assert_eq!(out.len(), 50);
    }

    #[test]
    fn non_finite_rows_are_dropped_and_floor_enforced() {
        let mut d = ramp(10, 0.01, |t| t);
        d.states[4][0] = f64::NAN;
        let (out, removed) = preprocess(&d, 5).unwrap();
        assert_eq!(removed, 1);
        assert_eq!(out.len(), 9);
        assert!(preprocess(&d, 10).is_err());
    }

    #[test]
    fn mismatched_rows_are_rejected() {
        assert!(Dataset::from_parts(vec![State::zeros()], vec![], vec![], 0.01).is_err());
    }
}

//! Primal active-set method for `min ½ δᵀHδ + gᵀδ` subject to `lo ≤ δ ≤ hi`,
//! `H` symmetric positive definite.

use nalgebra::{DMatrix, DVector};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Bound {
    Free,
    Lower,
    Upper,
}

pub(crate) struct BoxQp {
    pub x: DVector<f64>,
    pub iterations: usize,
}

/// Solves the box QP from the feasible start `clamp(0)`. Returns `None` if
/// `H` is not positive definite on a free subspace.
pub(crate) fn solve_box_qp(
    h: &DMatrix<f64>,
    g: &DVector<f64>,
    lo: &DVector<f64>,
    hi: &DVector<f64>,
    max_iter: usize,
) -> Option<BoxQp> {
    let n = g.len();
    let mut x = DVector::from_fn(n, |i, _| 0f64.clamp(lo[i], hi[i]));
    // start with the bounds the origin already sits on and the gradient
    // pushes against; the multiplier test releases any wrong guess
    let mut state: Vec<Bound> = (0..n)
        .map(|i| {
            if lo[i] == hi[i] || (x[i] == lo[i] && g[i] > 0.0) {
                Bound::Lower
            } else if x[i] == hi[i] && g[i] < 0.0 {
                Bound::Upper
            } else {
                Bound::Free
            }
        })
        .collect();
    for it in 1..=max_iter {
        let free: Vec<usize> = (0..n).filter(|&i| state[i] == Bound::Free).collect();
        // Newton step on the free variables, bound ones held fixed
        let grad = h * &x + g;
        let mut target = x.clone();
        if !free.is_empty() {
            let hff = DMatrix::from_fn(free.len(), free.len(), |a, b| h[(free[a], free[b])]);
            let rhs = DVector::from_fn(free.len(), |a, _| -grad[free[a]]);
            let step = hff.cholesky()?.solve(&rhs);
            for (a, &i) in free.iter().enumerate() {
                target[i] += step[a];
            }
        }
        // longest feasible fraction of the step
        let mut t = 1.0;
        let mut blocking = None;
        for &i in &free {
            let d = target[i] - x[i];
            if d < 0.0 && x[i] + d < lo[i] {
                let ti = (lo[i] - x[i]) / d;
                if ti < t {
                    t = ti;
                    blocking = Some((i, Bound::Lower));
                }
            } else if d > 0.0 && x[i] + d > hi[i] {
                let ti = (hi[i] - x[i]) / d;
                if ti < t {
                    t = ti;
                    blocking = Some((i, Bound::Upper));
                }
            }
        }
        for &i in &free {
            x[i] += t * (target[i] - x[i]);
        }
        if let Some((i, b)) = blocking {
            state[i] = b;
            x[i] = if b == Bound::Lower { lo[i] } else { hi[i] };
            continue;
        }
        // stationary on the free set: release the bound with the worst multiplier
        let grad = h * &x + g;
        let mut worst = (0.0, None);
        for i in 0..n {
            if lo[i] == hi[i] {
                continue;
            }
            let pull = match state[i] {
                Bound::Lower => -grad[i],
                Bound::Upper => grad[i],
                Bound::Free => 0.0,
            };
            if pull > worst.0 {
                worst = (pull, Some(i));
            }
        }
        let scale = 1e-12 * (1.0 + grad.amax());
        match worst {
            (p, Some(i)) if p > scale => state[i] = Bound::Free,
            _ => return Some(BoxQp { x, iterations: it }),
        }
    }
    Some(BoxQp {
        x,
        iterations: max_iter,
    })
}

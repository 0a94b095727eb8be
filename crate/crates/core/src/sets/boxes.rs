use nalgebra::{SMatrix, SVector};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Axis-aligned box `{x : lower ≤ x ≤ upper}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxSet<const N: usize> {
    pub lower: SVector<f64, N>,
    pub upper: SVector<f64, N>,
}

impl<const N: usize> BoxSet<N> {
    pub fn new(lower: SVector<f64, N>, upper: SVector<f64, N>) -> Result<Self> {
        for i in 0..N {
            if !(lower[i] <= upper[i]) {
                return Err(Error::EmptySet {
                    axis: i,
                    lower: lower[i],
                    upper: upper[i],
                });
            }
        }
        Ok(Self { lower, upper })
    }

    /// Origin-centered box with the given half-widths.
    pub fn symmetric(half: SVector<f64, N>) -> Self {
        Self {
            lower: -half.abs(),
            upper: half.abs(),
        }
    }

    pub fn center(&self) -> SVector<f64, N> {
        (self.lower + self.upper) * 0.5
    }

    pub fn half_widths(&self) -> SVector<f64, N> {
        (self.upper - self.lower) * 0.5
    }

    pub fn contains(&self, x: &SVector<f64, N>) -> bool {
        self.contains_tol(x, 0.0)
    }

    pub fn contains_tol(&self, x: &SVector<f64, N>, tol: f64) -> bool {
        (0..N).all(|i| x[i] >= self.lower[i] - tol && x[i] <= self.upper[i] + tol)
    }

    pub fn clamp(&self, x: &SVector<f64, N>) -> SVector<f64, N> {
        SVector::from_fn(|i, _| x[i].clamp(self.lower[i], self.upper[i]))
    }

    /// Pontryagin difference with the origin-centered box of half-widths `s`.
    pub fn erode(&self, s: &SVector<f64, N>) -> Result<Self> {
        Self::new(self.lower + s.abs(), self.upper - s.abs())
    }

    /// Minkowski sum with the origin-centered box of half-widths `s`.
    pub fn dilate(&self, s: &SVector<f64, N>) -> Self {
        Self {
            lower: self.lower - s.abs(),
            upper: self.upper + s.abs(),
        }
    }

    /// Signed distance to the nearest face (negative outside).
    pub fn margin(&self, x: &SVector<f64, N>) -> f64 {
        (0..N)
            .map(|i| (x[i] - self.lower[i]).min(self.upper[i] - x[i]))
            .fold(f64::INFINITY, f64::min)
    }
}

/// `X ⊖ S` for an origin-centered tube of half-widths `s`.
pub fn tighten<const N: usize>(x: &BoxSet<N>, s: &SVector<f64, N>) -> Result<BoxSet<N>> {
    x.erode(s)
}

/// `U ⊖ K S`: the box hull of `K S` has half-widths `|K| s`.
pub fn tighten_input<const N: usize, const M: usize>(
    u: &BoxSet<M>,
    k: &SMatrix<f64, M, N>,
    s: &SVector<f64, N>,
) -> Result<BoxSet<M>> {
    u.erode(&(k.abs() * s.abs()))
}

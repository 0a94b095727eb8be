use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;

use super::Dataset;
use crate::{idx, Error, Input, Result, State, NU, NX};

/// A candidate function of `(x, u)`. Indices are zero-based internally and
/// one-based in the text form (`x1..x12`, `u1..u4`).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Term {
    Const,
    State(usize),
    Input(usize),
    StateState(usize, usize),
    StateInput(usize, usize),
    Sin(usize),
    Cos(usize),
    SinInput(usize, usize),
}

impl Term {
    pub fn eval(&self, x: &State, u: &Input) -> f64 {
        match *self {
            Term::Const => 1.0,
            Term::State(i) => x[i],
            Term::Input(j) => u[j],
            Term::StateState(i, j) => x[i] * x[j],
            Term::StateInput(i, j) => x[i] * u[j],
            Term::Sin(i) => x[i].sin(),
            Term::Cos(i) => x[i].cos(),
            Term::SinInput(i, j) => x[i].sin() * u[j],
        }
    }

    /// Accumulates `w · ∂term/∂(x, u)` into `gx`, `gu`.
    pub fn add_grad(&self, x: &State, u: &Input, w: f64, gx: &mut State, gu: &mut Input) {
        match *self {
            Term::Const => {}
            Term::State(i) => gx[i] += w,
            Term::Input(j) => gu[j] += w,
            Term::StateState(i, j) => {
                gx[i] += w * x[j];
                gx[j] += w * x[i];
            }
            Term::StateInput(i, j) => {
                gx[i] += w * u[j];
                gu[j] += w * x[i];
            }
            Term::Sin(i) => gx[i] += w * x[i].cos(),
            Term::Cos(i) => gx[i] -= w * x[i].sin(),
            Term::SinInput(i, j) => {
                gx[i] += w * x[i].cos() * u[j];
                gu[j] += w * x[i].sin();
            }
        }
    }

    fn valid(&self) -> bool {
        match *self {
            Term::Const => true,
            Term::State(i) | Term::Sin(i) | Term::Cos(i) => i < NX,
            Term::Input(j) => j < NU,
            Term::StateState(i, j) => i <= j && j < NX,
            Term::StateInput(i, j) | Term::SinInput(i, j) => i < NX && j < NU,
        }
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Term::Const => write!(f, "1"),
            Term::State(i) => write!(f, "x{}", i + 1),
            Term::Input(j) => write!(f, "u{}", j + 1),
            Term::StateState(i, j) => write!(f, "x{}*x{}", i + 1, j + 1),
            Term::StateInput(i, j) => write!(f, "x{}*u{}", i + 1, j + 1),
            Term::Sin(i) => write!(f, "sin(x{})", i + 1),
            Term::Cos(i) => write!(f, "cos(x{})", i + 1),
            Term::SinInput(i, j) => write!(f, "sin(x{})*u{}", i + 1, j + 1),
        }
    }
}

fn parse_var(s: &str) -> Option<(char, usize)> {
    let kind = s.chars().next()?;
    let n: usize = s.get(1..)?.parse().ok()?;
    let limit = match kind {
        'x' => NX,
        'u' => NU,
        _ => return None,
    };
    (1..=limit).contains(&n).then(|| (kind, n - 1))
}

fn parse_trig(s: &str) -> Option<(bool, usize)> {
    let (is_sin, rest) = if let Some(r) = s.strip_prefix("sin(") {
        (true, r)
    } else {
        (false, s.strip_prefix("cos(")?)
    };
    match parse_var(rest.strip_suffix(')')?)? {
        ('x', i) => Some((is_sin, i)),
        _ => None,
    }
}

impl FromStr for Term {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("unrecognised library term `{s}`"));
        let s = s.trim();
        if s == "1" {
            return Ok(Term::Const);
        }
        let term = match s.split_once('*') {
            None => match parse_trig(s) {
                Some((true, i)) => Term::Sin(i),
                Some((false, i)) => Term::Cos(i),
                None => match parse_var(s).ok_or_else(bad)? {
                    ('x', i) => Term::State(i),
                    (_, j) => Term::Input(j),
                },
            },
            Some((a, b)) => {
                let (kb, jb) = parse_var(b).ok_or_else(bad)?;
                if let Some((true, i)) = parse_trig(a) {
                    if kb != 'u' {
                        return Err(bad());
                    }
                    Term::SinInput(i, jb)
                } else {
                    match (parse_var(a).ok_or_else(bad)?, kb) {
                        (('x', i), 'x') => Term::StateState(i, jb),
                        (('x', i), 'u') => Term::StateInput(i, jb),
                        _ => return Err(bad()),
                    }
                }
            }
        };
        if term.valid() {
            Ok(term)
        } else {
            Err(bad())
        }
    }
}

/// Ordered, duplicate-free candidate list with a one-shot expansion trigger.
#[derive(Clone, Debug, PartialEq)]
pub struct LibrarySpec {
    terms: Vec<Term>,
    pub n_min: usize,
    expanded: bool,
}

impl LibrarySpec {
    /// Rigid-body base family: constant, states, inputs and all pairwise
    /// state⊗state (i ≤ j) and state⊗input products.
    pub fn base(n_min: usize) -> Self {
        let mut terms = vec![Term::Const];
        terms.extend((0..NX).map(Term::State));
        terms.extend((0..NU).map(Term::Input));
        for i in 0..NX {
            terms.extend((i..NX).map(|j| Term::StateState(i, j)));
        }
        for i in 0..NX {
            terms.extend((0..NU).map(|j| Term::StateInput(i, j)));
        }
        Self {
            terms,
            n_min,
            expanded: false,
        }
    }

    /// A caller-chosen term list. The constant must come first if present.
    pub fn custom(terms: Vec<Term>, n_min: usize) -> Result<Self> {
        let mut seen = std::collections::HashSet::new();
        for (k, t) in terms.iter().enumerate() {
            if !t.valid() || !seen.insert(*t) {
                return Err(Error::Config(format!("invalid or duplicate term `{t}`")));
            }
            if *t == Term::Const && k != 0 {
                return Err(Error::Config("constant term must be first".into()));
            }
        }
        Ok(Self {
            terms,
            n_min,
            expanded: false,
        })
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn is_expanded(&self) -> bool {
        self.expanded
    }

    fn append_expansion(&mut self) {
        let mut extra = Vec::new();
        for a in idx::ANG {
            extra.push(Term::Sin(a));
            extra.push(Term::Cos(a));
        }
        for a in idx::ANG {
            extra.extend((0..NU).map(|j| Term::SinInput(a, j)));
        }
        for t in extra {
            if !self.terms.contains(&t) {
                self.terms.push(t);
            }
        }
        self.expanded = true;
    }
}

/// Appends the trigonometric families once the dataset holds more than
/// `n_min` samples; afterwards (or below the threshold) returns the spec unchanged.
pub fn maybe_expand(spec: &LibrarySpec, n_samples: usize) -> LibrarySpec {
    let mut out = spec.clone();
    if n_samples > spec.n_min && !spec.expanded {
        out.append_expansion();
        log::debug!("library expanded to {} terms at {n_samples} samples", out.len());
    }
    out
}

/// One library row `Ψ(x, u)`.
pub fn library_row(terms: &[Term], x: &State, u: &Input) -> Vec<f64> {
    terms.iter().map(|t| t.eval(x, u)).collect()
}

/// The `n_s × n_cf` library matrix, columns in spec order.
pub fn build_library(d: &Dataset, terms: &[Term]) -> DMatrix<f64> {
    DMatrix::from_fn(d.len(), terms.len(), |r, c| {
        terms[c].eval(&d.states[r], &d.inputs[r])
    })
}

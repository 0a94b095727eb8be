//! Plain-text model files.
//!
//! ```text
//! piml-tube-model 1
//! version 7
//! terms 2
//! x4 -0.31 0 0 0 0 0 0 0 0 0 0 0
//! sin(x7)*u1 0 0 0 1.25e-3 0 0 0 0 0 0 0 0
//! ```
//!
//! One row per term: the descriptor, then its 12 coefficients. Numbers are
//! written in shortest round-trip form, so reading a file back reproduces
//! every coefficient bit for bit. Blank lines and `#` comments are ignored.

use std::path::Path;

use nalgebra::DMatrix;

use crate::ident::{LearnedModel, Term};
use crate::{Error, Result, NX};

const MAGIC: &str = "piml-tube-model";
const FORMAT: u32 = 1;

pub fn model_to_string(model: &LearnedModel) -> String {
    let xi = model.xi();
    let mut out = format!("{MAGIC} {FORMAT}\nversion {}\nterms {}\n", model.version(), model.terms().len());
    for (k, t) in model.terms().iter().enumerate() {
        out.push_str(&t.to_string());
        for j in 0..NX {
            out.push(' ');
            out.push_str(&format!("{:?}", xi[(k, j)]));
        }
        out.push('\n');
    }
    out
}

pub fn model_from_str(text: &str) -> Result<LearnedModel> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
        .filter(|(_, l)| !l.is_empty());
    let err = |line: usize, reason: String| Error::ModelFile { line, reason };
    let mut header = |key: &str| -> Result<(usize, String)> {
        let (n, l) = lines.next().ok_or_else(|| err(0, format!("missing `{key}` line")))?;
        match l.split_once(' ') {
            Some((k, v)) if k == key => Ok((n, v.trim().to_string())),
            _ => Err(err(n, format!("expected `{key} <value>`, found `{l}`"))),
        }
    };
    let (n, fmt) = header(MAGIC)?;
    if fmt != FORMAT.to_string() {
        return Err(err(n, format!("unsupported format `{fmt}`")));
    }
    let (n, v) = header("version")?;
    let version: u64 = v.parse().map_err(|_| err(n, format!("bad version `{v}`")))?;
    let (n, c) = header("terms")?;
    let count: usize = c.parse().map_err(|_| err(n, format!("bad term count `{c}`")))?;

    let mut terms = Vec::with_capacity(count);
    let mut xi = DMatrix::zeros(count, NX);
    for k in 0..count {
        let (n, l) = lines
            .next()
            .ok_or_else(|| err(0, format!("expected {count} term rows, found {k}")))?;
        let mut fields = l.split_whitespace();
        let name = fields.next().unwrap_or_default();
        let term: Term = name.parse().map_err(|e: Error| err(n, e.to_string()))?;
        let values: Vec<&str> = fields.collect();
        if values.len() != NX {
            return Err(err(n, format!("term `{name}` has {} coefficients, expected {NX}", values.len())));
        }
        for (j, v) in values.iter().enumerate() {
            xi[(k, j)] = v.parse().map_err(|_| err(n, format!("bad coefficient `{v}`")))?;
        }
        terms.push(term);
    }
    if let Some((n, l)) = lines.next() {
        return Err(err(n, format!("trailing content `{l}`")));
    }
    LearnedModel::new(terms, &xi, version).map_err(|e| err(0, e.to_string()))
}

pub fn write_model(model: &LearnedModel, path: &Path) -> Result<()> {
    std::fs::write(path, model_to_string(model)).map_err(|e| Error::io(path, e))
}

pub fn read_model(path: &Path) -> Result<LearnedModel> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    model_from_str(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample() -> LearnedModel {
        let terms = vec![Term::State(3), Term::SinInput(6, 0), Term::StateState(0, 11)];
        let mut xi = DMatrix::zeros(3, NX);
        xi[(0, 3)] = -0.31;
        xi[(1, 4)] = 1.25e-3;
        xi[(2, 11)] = std::f64::consts::PI * 1e-17;
        LearnedModel::new(terms, &xi, 7).unwrap()
    }

    #[test]
    fn round_trip_is_exact() {
        let m = sample();
        let text = model_to_string(&m);
        assert_eq!(model_from_str(&text).unwrap(), m);
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.txt");
        write_model(&sample(), &path).unwrap();
        assert_eq!(read_model(&path).unwrap(), sample());
    }

    #[test]
    fn comments_and_blank_lines_are_ignored() {
        let text = format!("# fitted offline\n\n{}", model_to_string(&sample()).replace("terms", "# note\nterms"));
        assert_eq!(model_from_str(&text).unwrap(), sample());
    }

    #[test]
    fn errors_name_the_line() {
        let text = model_to_string(&sample()).replace("sin(x7)*u1", "tan(x7)");
        match model_from_str(&text) {
            Err(Error::ModelFile { line, .. }) => assert_eq!(line, 5),
            other => panic!("{other:?}"),
        }
        let short = "piml-tube-model 1\nversion 1\nterms 1\nx1 1 2 3\n";
        assert!(model_from_str(short).unwrap_err().to_string().contains("3 coefficients"));
        assert!(model_from_str("piml-tube-model 9\n").is_err());
    }

    #[test]
    fn zero_model_round_trips() {
        let z = LearnedModel::zero();
        assert_eq!(model_from_str(&model_to_string(&z)).unwrap(), z);
    }

    proptest! {
        #[test]
        fn arbitrary_coefficients_round_trip(vals in prop::collection::vec(prop::num::f64::NORMAL | prop::num::f64::SUBNORMAL | prop::num::f64::ZERO, 2 * NX), version in any::<u64>()) {
            let xi = DMatrix::from_row_slice(2, NX, &vals);
            let m = LearnedModel::new(vec![Term::Const, Term::Cos(8)], &xi, version).unwrap();
            prop_assert_eq!(model_from_str(&model_to_string(&m)).unwrap(), m);
        }
    }
}

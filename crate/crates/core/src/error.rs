use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("Euler-rate singularity: |pitch| = {pitch:.6} rad is within {tol:e} of pi/2")]
    Singularity { pitch: f64, tol: f64 },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("dataset error: {0}")]
    Dataset(String),

    #[error("sparse regression did not converge after {iterations} sweeps (residual norm {residual_norm:e})")]
    NoConvergence { iterations: usize, residual_norm: f64 },

    #[error("Riccati iteration failed: {0}")]
    Riccati(String),

    #[error("RPI iteration does not contract: spectral radius {spectral_radius:.6} >= 1")]
    NotContractive { spectral_radius: f64 },

    #[error("tightened set is empty along axis {axis} (lower {lower:e} > upper {upper:e})")]
    EmptySet { axis: usize, lower: f64, upper: f64 },

    #[error("terminal set is empty: {0}")]
    EmptyTerminalSet(String),

    #[error("solver failure at step {step}: {reason}")]
    Solver { step: usize, reason: String },

    #[error("training diverged at epoch {epoch}")]
    TrainingDiverged { epoch: usize },

    #[error("model file parse error at line {line}: {reason}")]
    ModelFile { line: usize, reason: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}

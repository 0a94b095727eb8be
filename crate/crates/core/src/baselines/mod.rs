//! Comparison controllers and the black-box model they need.

pub mod mlp;
pub mod pid;

pub use mlp::{mlp_train, MlpModel, Network, TrainConfig, TrainReport, Transitions};
pub use pid::{pid_step, PidChannel, PidGains, PidState};

//! Optimization loop: scene setup, per-iteration view sampling, rendering,
//! cross-grained contrast, and decoupled-decay Adam updates on the step
//! schedule. Also evaluation over an orbit of fixed views.

mod adamw;
mod config;
mod eval;
mod scene;
mod step;
mod train;

pub use adamw::{adamw_step, AdamWParams, OptimizerState};
pub use config::{lr_at, FineRows, TrainConfig};
pub use eval::{evaluate, view_name, EvalReport, EvalSpec, ObjectReport};
pub use scene::{ClusterReport, ParseReport, PhraseReport, Scene, SetupSpec};
pub use step::{derive_seed, step_loss, Lighting, LossSpec, StepBatch};
pub use train::{
    checkpoint_path, loss_and_grads, metrics_csv, train, train_from, MetricRow, TrainOutput, TrainState, METRICS_HEADER,
    STATE_FORMAT,
};

#[cfg(test)]
mod tests;

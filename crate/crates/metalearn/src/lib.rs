//! Gradient-based meta-learning engine.
//!
//! The outer loop optimizes a shared initialization (and per-weight step
//! sizes) so that one or a few inner gradient steps on a task's support
//! set produce good query predictions. Three ingredients are kept
//! strictly separate:
//!
//! - [`TaskModel`] — how a model turns weights plus a batch into a loss;
//! - [`build_inner_update`] / [`inner_update`] — the within-task
//!   adaptation step (graph-level during training, numeric at evaluation);
//! - [`meta_step`] / [`meta_train`] — the outer loop that differentiates
//!   through adaptation and descends.
//!
//! Whether adaptation touches the whole network or only a prediction
//! module over frozen embeddings is decided by which weights are in the
//! trainable set — frozen encoders enter graphs as constants via
//! [`pretrain`]'s `RepresentationHandle` and are structurally invisible
//! to both loops.

mod config;
mod error;
mod inner;
mod meta;
mod pretrain;
mod task;

pub use config::{InnerLoopConfig, InnerScope, MetaConfig, PretrainConfig, PretrainObjective};
pub use error::{MetaError, Result};
pub use inner::{build_inner_update, inner_update, InnerBuild};
pub use meta::{
    apply_regularization, meta_step, meta_train, MetricsRow, StepMetrics, TaskSource, TrainState,
};
pub use pretrain::{pretrain, PretrainNetwork, PretrainOutcome};
pub use task::{
    accuracy, embedded_task_source, episode_to_embedded_pair, episode_to_pair, image_task_source,
    AbpModel, AmlModel, QuadraticToy, TaskBatch, TaskModel, TaskPair,
};

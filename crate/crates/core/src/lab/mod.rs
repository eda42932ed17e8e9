//! Desk-scale prompt tuning: a frozen toy classifier, synthetic task
//! families, the trainer, metrics and the few-shot sampler.

pub mod metrics;
pub mod model;
pub mod sampler;
pub mod seed;
pub mod task;
pub mod train;

pub use metrics::{evaluate, MetricReport};
pub use model::{init_id_for_seed, ModelConfig, ToyModel};
pub use sampler::sample_shots;
pub use task::{
    make_task_family, make_task_family_with, Example, FamilyConfig, Split, TaskSpec, ToyTask,
};
pub use train::{tune_multi, tune_on, tune_prompt, Budget, TrainConfig};

//! Manifest-driven experiment grids: training, cross-initialization,
//! similarity, combination and few-shot recipes.
//!
//! Every recipe writes its reports under the manifest's output directory
//! and a `run.json` [`RunRecord`]. Reports are byte-identical across reruns
//! of the same manifest; only the timing in `run.json` changes.

pub mod combine;
pub mod cross_init;
pub mod fewshot;
pub mod lab;
pub mod manifest;
pub mod record;
pub mod similarity;
pub mod train;

pub use combine::{cmd_combine_eval, CombineOutput, CombineRow};
pub use cross_init::{cmd_cross_init, CrossInitOutput, CrossInitRow, CrossInitSummary, ScoreKind};
pub use fewshot::{cmd_fewshot, FewShotOutput, FewShotRow, FewShotSummary};
pub use lab::Lab;
pub use manifest::{ExperimentManifest, FamilySection, Method};
pub use record::{CellRecord, RunRecord};
pub use similarity::{cmd_similarity, Heatmap, SimilarityOutput};
pub use train::{cmd_train, TrainRow};

//! Task prompt vectors: element-wise arithmetic over tuned soft prompts.
//!
//! * [`store`] reads and writes the TPV1 tensor format with JSON sidecars.
//! * [`algebra`] creates, applies, negates and combines task prompt vectors.
//! * [`geometry`] measures cosine similarity across tasks and initializations.
//! * [`lab`] is a small frozen model on which prompts can actually be tuned.
//! * [`stats`] holds the significance tests used for result tables.
//! * [`experiments`] runs manifest-driven grids over all of the above.

pub mod algebra;
pub mod error;
pub mod experiments;
pub mod geometry;
pub mod lab;
pub mod prompt;
pub mod stats;
pub mod store;

pub use error::{Error, Result};
pub use prompt::{Shape, SoftPrompt, TaskPromptVector};

//! Soft prompts and task prompt vectors.
//!
//! Both are dense `prompt_len x embed_dim` matrices of `f32` stored row-major,
//! carrying the provenance needed to tell which random initialization and
//! which task(s) produced them.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

/// Row/column dimensions of a prompt-shaped tensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub struct Shape {
    pub prompt_len: usize,
    pub embed_dim: usize,
}

impl Shape {
    pub fn new(prompt_len: usize, embed_dim: usize) -> Result<Self> {
        if prompt_len == 0 || embed_dim == 0 {
            return Err(Error::ZeroDimension {
                prompt_len,
                embed_dim,
            });
        }
        Ok(Self {
            prompt_len,
            embed_dim,
        })
    }

    pub fn len(&self) -> usize {
        self.prompt_len * self.embed_dim
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn as_tuple(&self) -> (usize, usize) {
        (self.prompt_len, self.embed_dim)
    }

    pub(crate) fn ensure_eq(&self, other: Shape, context: &str) -> Result<()> {
        if *self != other {
            return Err(Error::ShapeMismatch {
                context: context.to_string(),
                expected: self.as_tuple(),
                found: other.as_tuple(),
            });
        }
        Ok(())
    }
}

/// Index of the first NaN/Inf entry, if any.
pub fn first_non_finite(values: &[f32]) -> Option<usize> {
    values.iter().position(|v| !v.is_finite())
}

fn validated(shape: Shape, weights: &[f32]) -> Result<()> {
    if weights.len() != shape.len() {
        return Err(Error::WeightCount {
            prompt_len: shape.prompt_len,
            embed_dim: shape.embed_dim,
            expected: shape.len(),
            actual: weights.len(),
        });
    }
    if let Some(index) = first_non_finite(weights) {
        return Err(Error::NonFinite {
            index,
            offset: None,
        });
    }
    Ok(())
}

/// A trainable soft prompt. `task_id == None` marks an untrained initialization.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftPrompt {
    shape: Shape,
    weights: Vec<f32>,
    init_id: String,
    task_id: Option<String>,
    pub meta: BTreeMap<String, String>,
}

impl SoftPrompt {
    pub fn new(
        prompt_len: usize,
        embed_dim: usize,
        weights: Vec<f32>,
        init_id: impl Into<String>,
    ) -> Result<Self> {
        let shape = Shape::new(prompt_len, embed_dim)?;
        validated(shape, &weights)?;
        Ok(Self {
            shape,
            weights,
            init_id: init_id.into(),
            task_id: None,
            meta: BTreeMap::new(),
        })
    }

    pub fn zeros(prompt_len: usize, embed_dim: usize, init_id: impl Into<String>) -> Result<Self> {
        Self::new(
            prompt_len,
            embed_dim,
            vec![0.0; prompt_len * embed_dim],
            init_id,
        )
    }

    pub fn with_task(mut self, task_id: impl Into<String>) -> Self {
        self.task_id = Some(task_id.into());
        self
    }

    pub fn with_meta(mut self, key: impl Into<String>, value: impl Into<String>) -> Self {
        self.meta.insert(key.into(), value.into());
        self
    }

    /// Replaces the weights, keeping provenance. The new weights must have the same shape.
    pub fn with_weights(mut self, weights: Vec<f32>) -> Result<Self> {
        validated(self.shape, &weights)?;
        self.weights = weights;
        Ok(self)
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn prompt_len(&self) -> usize {
        self.shape.prompt_len
    }

    pub fn embed_dim(&self) -> usize {
        self.shape.embed_dim
    }

    pub fn weights(&self) -> &[f32] {
        &self.weights
    }

    pub fn row(&self, i: usize) -> &[f32] {
        let d = self.shape.embed_dim;
        &self.weights[i * d..(i + 1) * d]
    }

    pub fn init_id(&self) -> &str {
        &self.init_id
    }

    pub fn task_id(&self) -> Option<&str> {
        self.task_id.as_deref()
    }

    pub fn is_trained(&self) -> bool {
        self.task_id.is_some()
    }

    pub(crate) fn set_task_id(&mut self, task_id: Option<String>) {
        self.task_id = task_id;
    }
}

/// Element-wise delta between a tuned prompt and the initialization it was tuned from.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskPromptVector {
    shape: Shape,
    delta: Vec<f32>,
    init_id: String,
    task_ids: Vec<String>,
    pub scale_history: Vec<f64>,
    pub meta: BTreeMap<String, String>,
}

impl TaskPromptVector {
    pub fn new(
        prompt_len: usize,
        embed_dim: usize,
        delta: Vec<f32>,
        init_id: impl Into<String>,
        task_ids: Vec<String>,
    ) -> Result<Self> {
        let shape = Shape::new(prompt_len, embed_dim)?;
        validated(shape, &delta)?;
        if task_ids.is_empty() {
            return Err(Error::Empty(
                "task prompt vector needs at least one task id",
            ));
        }
        Ok(Self {
            shape,
            delta,
            init_id: init_id.into(),
            task_ids,
            scale_history: Vec::new(),
            meta: BTreeMap::new(),
        })
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn delta(&self) -> &[f32] {
        &self.delta
    }

    pub fn init_id(&self) -> &str {
        &self.init_id
    }

    pub fn task_ids(&self) -> &[String] {
        &self.task_ids
    }

    /// Task ids joined with `+`, the label used for combined vectors.
    pub fn task_label(&self) -> String {
        self.task_ids.join("+")
    }

    pub fn is_combination(&self) -> bool {
        self.task_ids.len() > 1
    }

    pub fn is_zero(&self) -> bool {
        self.delta.iter().all(|v| *v == 0.0)
    }
}

//! Cosine-similarity analysis over flattened prompts and task prompt vectors.

use std::collections::BTreeMap;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance used by the literal "omit cosines equal to one" rule.
pub const EXACT_ONE_TOL: f64 = 1e-9;

fn dot(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(x, y)| *x as f64 * *y as f64).sum()
}

fn norm(a: &[f32]) -> f64 {
    dot(a, a).sqrt()
}

/// Cosine similarity accumulated in f64 and clamped to `[-1, 1]`.
pub fn cosine(a: &[f32], b: &[f32]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::ShapeMismatch {
            context: "cosine".into(),
            expected: (1, a.len()),
            found: (1, b.len()),
        });
    }
    if a.is_empty() {
        return Err(Error::Empty("cosine of empty vectors"));
    }
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 {
        return Err(Error::ZeroVector { index: Some(0) });
    }
    if nb == 0.0 {
        return Err(Error::ZeroVector { index: Some(1) });
    }
    Ok((dot(a, b) / (na * nb)).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimilarityKind {
    TaskPrompt,
    TaskPromptVector,
}

impl SimilarityKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            SimilarityKind::TaskPrompt => "task_prompt",
            SimilarityKind::TaskPromptVector => "task_prompt_vector",
        }
    }
}

/// A flattened tensor tagged with the task and initialization that produced it.
#[derive(Debug, Clone, Copy)]
pub struct LabeledTensor<'a> {
    pub task_id: &'a str,
    pub init_id: &'a str,
    pub values: &'a [f32],
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct AxisLabel {
    pub task_id: String,
    pub init_id: String,
}

impl std::fmt::Display for AxisLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}:{}", self.task_id, self.init_id)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityReport {
    pub kind: SimilarityKind,
    pub axis_labels: Vec<AxisLabel>,
    pub matrix: Vec<Vec<f64>>,
}

impl SimilarityReport {
    pub fn len(&self) -> usize {
        self.axis_labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.axis_labels.is_empty()
    }

    pub fn max_asymmetry(&self) -> f64 {
        let n = self.len();
        (0..n)
            .flat_map(|i| (0..n).map(move |j| (i, j)))
            .map(|(i, j)| (self.matrix[i][j] - self.matrix[j][i]).abs())
            .fold(0.0, f64::max)
    }

    pub fn max_diagonal_error(&self) -> f64 {
        (0..self.len())
            .map(|i| (self.matrix[i][i] - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// Rows and columns headed by `task:init`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec![String::new()];
        header.extend(self.axis_labels.iter().map(ToString::to_string));
        w.write_record(&header)?;
        for (label, row) in self.axis_labels.iter().zip(&self.matrix) {
            let mut rec = vec![label.to_string()];
            rec.extend(row.iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}

/// Full cosine matrix over `items`, diagonal included.
pub fn pairwise_similarity(
    items: &[LabeledTensor<'_>],
    kind: SimilarityKind,
) -> Result<SimilarityReport> {
    if items.len() < 2 {
        return Err(Error::invalid(format!(
            "pairwise similarity needs at least 2 items, got {}",
            items.len()
        )));
    }
    let len = items[0].values.len();
    for (i, it) in items.iter().enumerate() {
        if it.values.len() != len {
            return Err(Error::ShapeMismatch {
                context: format!("item {i} ({}:{})", it.task_id, it.init_id),
                expected: (1, len),
                found: (1, it.values.len()),
            });
        }
    }
    let norms: Vec<f64> = items.par_iter().map(|it| norm(it.values)).collect();
    if let Some(i) = norms.iter().position(|n| *n == 0.0) {
        return Err(Error::ZeroVector { index: Some(i) });
    }
    let n = items.len();
    let upper: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            (i..n)
                .map(|j| {
                    (dot(items[i].values, items[j].values) / (norms[i] * norms[j])).clamp(-1.0, 1.0)
                })
                .collect()
        })
        .collect();
    let mut matrix = vec![vec![0.0; n]; n];
    for (i, row) in upper.iter().enumerate() {
        for (k, v) in row.iter().enumerate() {
            matrix[i][i + k] = *v;
            matrix[i + k][i] = *v;
        }
    }
    Ok(SimilarityReport {
        kind,
        axis_labels: items
            .iter()
            .map(|it| AxisLabel {
                task_id: it.task_id.to_string(),
                init_id: it.init_id.to_string(),
            })
            .collect(),
        matrix,
    })
}

/// How a tensor compared with itself is kept out of the aggregate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelfPairPolicy {
    /// Skip cells whose two axes carry the same `(task_id, init_id)`.
    #[default]
    ByIdentity,
    /// Skip every cell whose cosine equals 1 within [`EXACT_ONE_TOL`].
    OmitExactOnes,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskPairAggregate {
    pub task_a: String,
    pub task_b: String,
    pub mean: f64,
    pub count: usize,
    pub excluded: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateSimilarity {
    pub kind: SimilarityKind,
    pub policy: SelfPairPolicy,
    pub tasks: Vec<String>,
    pub pairs: Vec<TaskPairAggregate>,
    /// Tasks seen under a single initialization, which have no same-task pair.
    #[serde(default)]
    pub skipped_same_task: Vec<String>,
}

impl AggregateSimilarity {
    pub fn get(&self, a: &str, b: &str) -> Option<&TaskPairAggregate> {
        self.pairs
            .iter()
            .find(|p| (p.task_a == a && p.task_b == b) || (p.task_a == b && p.task_b == a))
    }

    /// Task-by-task matrix of means, for heatmaps.
    pub fn matrix(&self) -> Vec<Vec<f64>> {
        self.tasks
            .iter()
            .map(|a| {
                self.tasks
                    .iter()
                    .map(|b| self.get(a, b).map_or(f64::NAN, |p| p.mean))
                    .collect()
            })
            .collect()
    }

    /// Mean over same-task pairs and mean over cross-task pairs, weighting
    /// each task pair equally.
    pub fn same_vs_cross(&self) -> (f64, f64) {
        let mean = |it: Vec<f64>| it.iter().sum::<f64>() / it.len() as f64;
        let same = self
            .pairs
            .iter()
            .filter(|p| p.task_a == p.task_b)
            .map(|p| p.mean)
            .collect();
        let cross = self
            .pairs
            .iter()
            .filter(|p| p.task_a != p.task_b)
            .map(|p| p.mean)
            .collect();
        (mean(same), mean(cross))
    }
}

/// Mean cosine per unordered task pair over all admissible init pairs.
pub fn aggregate_cross_init(
    report: &SimilarityReport,
    policy: SelfPairPolicy,
) -> Result<AggregateSimilarity> {
    let mut tasks: Vec<String> = Vec::new();
    for l in &report.axis_labels {
        if !tasks.contains(&l.task_id) {
            tasks.push(l.task_id.clone());
        }
    }
    let index: BTreeMap<&str, usize> = tasks
        .iter()
        .enumerate()
        .map(|(i, t)| (t.as_str(), i))
        .collect();
    // (sum, count, excluded) keyed by ordered task index pair
    let mut acc: BTreeMap<(usize, usize), (f64, usize, usize)> = BTreeMap::new();
    let n = report.len();
    for i in 0..n {
        for j in i..n {
            let (li, lj) = (&report.axis_labels[i], &report.axis_labels[j]);
            let (a, b) = (index[li.task_id.as_str()], index[lj.task_id.as_str()]);
            let key = (a.min(b), a.max(b));
            let v = report.matrix[i][j];
            let skip = match policy {
                SelfPairPolicy::ByIdentity => li == lj,
                SelfPairPolicy::OmitExactOnes => (v - 1.0).abs() <= EXACT_ONE_TOL,
            };
            let e = acc.entry(key).or_insert((0.0, 0, 0));
            if skip {
                e.2 += 1;
            } else {
                e.0 += v;
                e.1 += 1;
            }
        }
    }
    let mut pairs = Vec::new();
    let mut skipped_same_task = Vec::new();
    for a in 0..tasks.len() {
        for b in a..tasks.len() {
            let (sum, count, excluded) = acc.get(&(a, b)).copied().unwrap_or((0.0, 0, 0));
            if count == 0 {
                let single_init = a == b
                    && report
                        .axis_labels
                        .iter()
                        .filter(|l| l.task_id == tasks[a])
                        .count()
                        == 1;
                if single_init {
                    skipped_same_task.push(tasks[a].clone());
                    continue;
                }
                return Err(Error::NoAdmissiblePairs(tasks[a].clone(), tasks[b].clone()));
            }
            pairs.push(TaskPairAggregate {
                task_a: tasks[a].clone(),
                task_b: tasks[b].clone(),
                mean: sum / count as f64,
                count,
                excluded,
            });
        }
    }
    Ok(AggregateSimilarity {
        kind: report.kind,
        policy,
        tasks,
        pairs,
        skipped_same_task,
    })
}

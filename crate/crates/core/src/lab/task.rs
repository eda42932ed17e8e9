//! Synthetic classification tasks and task families.
//!
//! Each class owns a small set of "topic" tokens. A sequence of class `c`
//! draws every position from the class set with probability `signal_rate`
//! and uniformly from the vocabulary otherwise. Tasks in a family share some
//! or all of their class token sets, controlled by the similarity knob.

use std::io::{BufRead, Write};

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lab::seed::derive_seed;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Example {
    pub tokens: Vec<u32>,
    pub label: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" | "validation" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::invalid(format!("unknown split `{other}`"))),
        }
    }
}

/// Shape of the data every task in a family is generated with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TaskSpec {
    pub num_labels: usize,
    pub seq_len: usize,
    pub vocab_size: usize,
    /// Size of each class's topic-token set.
    pub class_tokens: usize,
    /// Probability that a position is drawn from the class token set.
    pub signal_rate: f64,
    pub train_size: usize,
    pub val_size: usize,
    pub test_size: usize,
    /// Relative class frequencies; uniform when absent.
    pub class_weights: Option<Vec<f64>>,
}

impl Default for TaskSpec {
    fn default() -> Self {
        Self {
            num_labels: 2,
            seq_len: 20,
            vocab_size: 256,
            class_tokens: 4,
            signal_rate: 0.7,
            train_size: 1000,
            val_size: 200,
            test_size: 500,
            class_weights: None,
        }
    }
}

impl TaskSpec {
    fn validate(&self) -> Result<()> {
        if self.num_labels < 2 || self.seq_len == 0 || self.class_tokens == 0 {
            return Err(Error::invalid(
                "task needs >= 2 labels, seq_len > 0, class_tokens > 0",
            ));
        }
        if self.class_tokens > self.vocab_size {
            return Err(Error::invalid("class_tokens exceeds vocabulary"));
        }
        if !(0.0..=1.0).contains(&self.signal_rate) {
            return Err(Error::invalid("signal_rate must lie in [0, 1]"));
        }
        if let Some(w) = &self.class_weights {
            if w.len() != self.num_labels
                || w.iter().any(|x| !x.is_finite() || *x < 0.0)
                || w.iter().sum::<f64>() <= 0.0
            {
                return Err(Error::invalid(
                    "class_weights must be non-negative with one entry per label",
                ));
            }
        }
        Ok(())
    }

    fn weights(&self) -> Vec<f64> {
        self.class_weights
            .clone()
            .unwrap_or_else(|| vec![1.0; self.num_labels])
    }
}

/// Where a class's token set came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ClassSource {
    /// Drawn from the family-wide stream for this class slot.
    Shared { family_seed: u64, class: usize },
    /// Drawn from a stream private to one task.
    Own { task_seed: u64, class: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassProfile {
    pub source: ClassSource,
    pub tokens: Vec<u32>,
}

/// Largest-remainder apportionment of `total` items over `weights`.
/// Ties in the remainder go to the lower index.
pub fn apportion(total: usize, weights: &[f64]) -> Vec<usize> {
    let sum: f64 = weights.iter().sum();
    if weights.is_empty() || sum <= 0.0 {
        return vec![0; weights.len()];
    }
    let quotas: Vec<f64> = weights.iter().map(|w| total as f64 * w / sum).collect();
    let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    // descending remainder, stable on index
    order.sort_by(|&a, &b| {
        let (ra, rb) = (quotas[a] - quotas[a].floor(), quotas[b] - quotas[b].floor());
        rb.total_cmp(&ra)
    });
    for &i in order.iter().take(total.saturating_sub(assigned)) {
        counts[i] += 1;
    }
    counts
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyTask {
    pub id: String,
    pub spec: TaskSpec,
    pub data_seed: u64,
    pub similarity_knob: f64,
    /// `classes[p]` generates examples labelled `label_of_profile[p]`.
    pub classes: Vec<ClassProfile>,
    pub label_of_profile: Vec<usize>,
    pub train: Vec<Example>,
    pub val: Vec<Example>,
    pub test: Vec<Example>,
}

fn draw_token_set(seed: u64, spec: &TaskSpec) -> Vec<u32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vocab: Vec<u32> = (0..spec.vocab_size as u32).collect();
    let mut set: Vec<u32> = vocab
        .choose_multiple(&mut rng, spec.class_tokens)
        .copied()
        .collect();
    set.sort_unstable();
    set
}

impl ToyTask {
    /// Builds a task from explicit class profiles and generates its splits.
    pub fn generate(
        id: impl Into<String>,
        spec: TaskSpec,
        classes: Vec<ClassProfile>,
        label_of_profile: Vec<usize>,
        data_seed: u64,
        similarity_knob: f64,
    ) -> Result<Self> {
        spec.validate()?;
        if classes.len() != spec.num_labels || label_of_profile.len() != spec.num_labels {
            return Err(Error::invalid(
                "one class profile and label per class required",
            ));
        }
        let mut seen = label_of_profile.clone();
        seen.sort_unstable();
        if seen != (0..spec.num_labels).collect::<Vec<_>>() {
            return Err(Error::invalid("label_of_profile must be a permutation"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(data_seed);
        let mut task = Self {
            id: id.into(),
            data_seed,
            similarity_knob,
            classes,
            label_of_profile,
            train: Vec::new(),
            val: Vec::new(),
            test: Vec::new(),
            spec,
        };
        task.train = task.sample_split(task.spec.train_size, &mut rng);
        task.val = task.sample_split(task.spec.val_size, &mut rng);
        task.test = task.sample_split(task.spec.test_size, &mut rng);
        Ok(task)
    }

    fn sample_split(&self, n: usize, rng: &mut ChaCha8Rng) -> Vec<Example> {
        let counts = apportion(n, &self.spec.weights());
        let mut labels: Vec<usize> = counts
            .iter()
            .enumerate()
            .flat_map(|(l, c)| std::iter::repeat_n(l, *c))
            .collect();
        labels.shuffle(rng);
        labels
            .into_iter()
            .map(|label| Example {
                tokens: self.sample_tokens(self.profile_of_label(label), rng),
                label,
            })
            .collect()
    }

    fn sample_tokens(&self, profile: usize, rng: &mut ChaCha8Rng) -> Vec<u32> {
        let set = &self.classes[profile].tokens;
        (0..self.spec.seq_len)
            .map(|_| {
                if rng.random_bool(self.spec.signal_rate) {
                    set[rng.random_range(0..set.len())]
                } else {
                    rng.random_range(0..self.spec.vocab_size as u32)
                }
            })
            .collect()
    }

    pub fn num_labels(&self) -> usize {
        self.spec.num_labels
    }

    pub fn profile_of_label(&self, label: usize) -> usize {
        self.label_of_profile
            .iter()
            .position(|l| *l == label)
            .expect("label_of_profile is a permutation")
    }

    pub fn split(&self, split: Split) -> &[Example] {
        match split {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
        }
    }

    /// Per-label token log-likelihood of a sequence under the generator.
    pub fn log_likelihoods(&self, tokens: &[u32]) -> Vec<f64> {
        let v = self.spec.vocab_size as f64;
        let k = self.spec.class_tokens as f64;
        let s = self.spec.signal_rate;
        (0..self.num_labels())
            .map(|label| {
                let set = &self.classes[self.profile_of_label(label)].tokens;
                tokens
                    .iter()
                    .map(|t| {
                        let in_set = if set.binary_search(t).is_ok() {
                            s / k
                        } else {
                            0.0
                        };
                        (in_set + (1.0 - s) / v).ln()
                    })
                    .sum()
            })
            .collect()
    }

    /// Bayes-optimal label under the task's own generator (class priors included).
    pub fn bayes_predict(&self, tokens: &[u32]) -> usize {
        let w = self.spec.weights();
        let total: f64 = w.iter().sum();
        let scores: Vec<f64> = self
            .log_likelihoods(tokens)
            .into_iter()
            .enumerate()
            .map(|(l, ll)| ll + (w[l] / total).ln())
            .collect();
        crate::lab::model::argmax(&scores)
    }

    /// Writes one split as JSON lines: `{"tokens": [...], "label": n}`.
    pub fn write_jsonl<W: Write>(&self, split: Split, mut out: W) -> Result<()> {
        for ex in self.split(split) {
            serde_json::to_writer(&mut out, ex)?;
            out.write_all(b"\n").map_err(|e| Error::io("<jsonl>", e))?;
        }
        Ok(())
    }
}

pub fn read_jsonl<R: BufRead>(input: R) -> Result<Vec<Example>> {
    let mut out = Vec::new();
    for line in input.lines() {
        let line = line.map_err(|e| Error::io("<jsonl>", e))?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line)?);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FamilyConfig {
    pub base_seed: u64,
    pub similarity_knob: f64,
    pub task: TaskSpec,
    /// Give task `k` the labels of the shared structure rotated by `k`.
    pub relabel: bool,
}

impl Default for FamilyConfig {
    fn default() -> Self {
        Self {
            base_seed: 0,
            similarity_knob: 1.0,
            task: TaskSpec::default(),
            relabel: false,
        }
    }
}

/// Number of class slots a task shares with the family at a given knob.
pub fn shared_class_count(num_labels: usize, knob: f64) -> usize {
    ((knob * num_labels as f64).round() as usize).min(num_labels)
}

pub fn make_task_family(
    base_seed: u64,
    n_tasks: usize,
    similarity_knob: f64,
) -> Result<Vec<ToyTask>> {
    make_task_family_with(
        &FamilyConfig {
            base_seed,
            similarity_knob,
            ..FamilyConfig::default()
        },
        n_tasks,
    )
}

/// Tasks `t0..t{n-1}`. With knob 1 every class token set comes from the
/// family stream; with knob 0 every task draws its own; in between the first
/// `round(knob * num_labels)` classes are shared.
pub fn make_task_family_with(cfg: &FamilyConfig, n_tasks: usize) -> Result<Vec<ToyTask>> {
    if n_tasks == 0 {
        return Err(Error::invalid("a task family needs at least one task"));
    }
    if !(0.0..=1.0).contains(&cfg.similarity_knob) {
        return Err(Error::invalid(format!(
            "similarity knob {} outside [0, 1]",
            cfg.similarity_knob
        )));
    }
    cfg.task.validate()?;
    let l = cfg.task.num_labels;
    let shared = shared_class_count(l, cfg.similarity_knob);
    (0..n_tasks)
        .map(|k| {
            let task_seed = derive_seed(&[cfg.base_seed, 0x7A5C, k as u64]);
            let classes = (0..l)
                .map(|c| {
                    let source = if c < shared {
                        ClassSource::Shared {
                            family_seed: cfg.base_seed,
                            class: c,
                        }
                    } else {
                        ClassSource::Own {
                            task_seed,
                            class: c,
                        }
                    };
                    let stream = match source {
                        ClassSource::Shared { family_seed, class } => {
                            derive_seed(&[family_seed, 0x5A4E, class as u64])
                        }
                        ClassSource::Own { task_seed, class } => {
                            derive_seed(&[task_seed, class as u64])
                        }
                    };
                    ClassProfile {
                        source,
                        tokens: draw_token_set(stream, &cfg.task),
                    }
                })
                .collect();
            let rot = if cfg.relabel { k % l } else { 0 };
            let label_of_profile = (0..l).map(|p| (p + rot) % l).collect();
            ToyTask::generate(
                format!("t{k}"),
                cfg.task.clone(),
                classes,
                label_of_profile,
                derive_seed(&[cfg.base_seed, 0xDA7A, k as u64]),
                cfg.similarity_knob,
            )
        })
        .collect()
}

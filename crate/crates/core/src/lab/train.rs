//! Prompt tuning with a decoupled-weight-decay Adam optimizer and linear warmup.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lab::model::{prompt_f64, ToyModel};
use crate::lab::seed::derive_seed;
use crate::lab::task::{Example, ToyTask};
use crate::prompt::SoftPrompt;

/// Shot counts with a prescribed few-shot batch size.
pub const FEW_SHOT_SCHEDULE: [(usize, usize); 9] = [
    (5, 2),
    (10, 2),
    (25, 2),
    (50, 8),
    (100, 8),
    (250, 8),
    (500, 16),
    (750, 16),
    (1000, 16),
];

pub const FEW_SHOT_UPDATE_STEPS: usize = 1000;

pub fn few_shot_batch_size(shots: usize) -> Option<usize> {
    FEW_SHOT_SCHEDULE
        .iter()
        .find(|(s, _)| *s == shots)
        .map(|(_, b)| *b)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Budget {
    Epochs(usize),
    Steps(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub warmup_steps: usize,
    pub budget: Budget,
    pub batch_size: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.3,
            weight_decay: 1e-5,
            warmup_steps: 500,
            budget: Budget::Epochs(10),
            batch_size: 32,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// Fixed 1000 update steps with the schedule's batch size. Zero shots
    /// means no updates at all.
    pub fn few_shot(&self, shots: usize) -> Result<Self> {
        if shots == 0 {
            return Ok(Self {
                budget: Budget::Steps(0),
                ..self.clone()
            });
        }
        let batch_size = few_shot_batch_size(shots).ok_or_else(|| {
            Error::invalid(format!("{shots} shots is not on the few-shot schedule"))
        })?;
        Ok(Self {
            budget: Budget::Steps(FEW_SHOT_UPDATE_STEPS),
            batch_size,
            ..self.clone()
        })
    }

    pub fn validate(&self) -> Result<()> {
        let positive = self.learning_rate > 0.0
            && self.weight_decay >= 0.0
            && self.batch_size > 0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.eps > 0.0;
        if !positive {
            return Err(Error::invalid(format!("invalid training config {self:?}")));
        }
        Ok(())
    }

    fn lr_at(&self, step: usize) -> f64 {
        if self.warmup_steps == 0 {
            self.learning_rate
        } else {
            self.learning_rate * ((step + 1) as f64 / self.warmup_steps as f64).min(1.0)
        }
    }
}

/// Endless stream of mini-batches over one dataset, reshuffled every epoch.
struct BatchStream<'a> {
    data: &'a [Example],
    order: Vec<usize>,
    cursor: usize,
    batch_size: usize,
    rng: ChaCha8Rng,
}

impl<'a> BatchStream<'a> {
    fn new(data: &'a [Example], batch_size: usize, seed: u64) -> Self {
        let mut s = Self {
            data,
            order: (0..data.len()).collect(),
            cursor: 0,
            batch_size,
            rng: ChaCha8Rng::seed_from_u64(seed),
        };
        s.order.shuffle(&mut s.rng);
        s
    }

    fn batches_per_epoch(&self) -> usize {
        self.data.len().div_ceil(self.batch_size)
    }

    fn next_batch(&mut self) -> Vec<Example> {
        if self.cursor >= self.order.len() {
            self.order.shuffle(&mut self.rng);
            self.cursor = 0;
        }
        let end = (self.cursor + self.batch_size).min(self.order.len());
        let batch = self.order[self.cursor..end]
            .iter()
            .map(|&i| self.data[i].clone())
            .collect();
        self.cursor = end;
        batch
    }
}

struct AdamW {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl AdamW {
    fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64, cfg: &TrainConfig) {
        self.t += 1;
        let bc1 = 1.0 - cfg.beta1.powi(self.t);
        let bc2 = 1.0 - cfg.beta2.powi(self.t);
        for i in 0..params.len() {
            params[i] -= lr * cfg.weight_decay * params[i];
            self.m[i] = cfg.beta1 * self.m[i] + (1.0 - cfg.beta1) * grad[i];
            self.v[i] = cfg.beta2 * self.v[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= lr * m_hat / (v_hat.sqrt() + cfg.eps);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub steps: usize,
    pub final_loss: Option<f64>,
}

/// Tunes `init` on the given datasets, taking batches round-robin across them.
/// Returns the tuned prompt stamped with `task_id`.
pub fn tune_on(
    model: &ToyModel,
    init: &SoftPrompt,
    datasets: &[&[Example]],
    task_id: &str,
    cfg: &TrainConfig,
) -> Result<(SoftPrompt, TrainLog)> {
    cfg.validate()?;
    if let Some(t) = init.task_id() {
        return Err(Error::UnexpectedTaskId(t.to_string()));
    }
    let mut streams: Vec<BatchStream> = datasets
        .iter()
        .enumerate()
        .filter(|(_, d)| !d.is_empty())
        .map(|(i, d)| BatchStream::new(d, cfg.batch_size, derive_seed(&[cfg.seed, i as u64])))
        .collect();
    let total_steps = match cfg.budget {
        Budget::Steps(n) => n,
        Budget::Epochs(e) => {
            e * streams
                .iter()
                .map(BatchStream::batches_per_epoch)
                .sum::<usize>()
        }
    };
    if total_steps > 0 && streams.is_empty() {
        return Err(Error::Empty("training data"));
    }
    let mut params = prompt_f64(init);
    let mut opt = AdamW::new(params.len());
    let mut last = None;
    for step in 0..total_steps {
        let k = step % streams.len();
        let batch = streams[k].next_batch();
        let (loss, grad) = model.loss_and_grad_raw(&params, init.prompt_len(), &batch)?;
        if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::Diverged { step });
        }
        opt.step(&mut params, &grad, cfg.lr_at(step), cfg);
        last = Some(loss);
    }
    let weights: Vec<f32> = params.iter().map(|v| *v as f32).collect();
    if weights.iter().any(|v| !v.is_finite()) {
        return Err(Error::Diverged { step: total_steps });
    }
    let tuned = init
        .clone()
        .with_weights(weights)?
        .with_task(task_id)
        .with_meta("steps", total_steps.to_string());
    Ok((
        tuned,
        TrainLog {
            steps: total_steps,
            final_loss: last,
        },
    ))
}

/// Prompt tuning on one task's training split. Only the prompt changes.
pub fn tune_prompt(
    model: &ToyModel,
    init: &SoftPrompt,
    task: &ToyTask,
    cfg: &TrainConfig,
) -> Result<SoftPrompt> {
    Ok(tune_on(model, init, &[&task.train], &task.id, cfg)?.0)
}

/// One prompt on several tasks' training sets at once, batches interleaved
/// round-robin by task.
pub fn tune_multi(
    model: &ToyModel,
    init: &SoftPrompt,
    tasks: &[&ToyTask],
    cfg: &TrainConfig,
) -> Result<SoftPrompt> {
    let data: Vec<&[Example]> = tasks.iter().map(|t| t.train.as_slice()).collect();
    let id = tasks
        .iter()
        .map(|t| t.id.as_str())
        .collect::<Vec<_>>()
        .join("+");
    Ok(tune_on(model, init, &data, &id, cfg)?.0)
}

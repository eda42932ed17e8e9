use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lab::model::ToyModel;
use crate::lab::task::{Split, ToyTask};
use crate::prompt::SoftPrompt;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub exact_match: f64,
    pub macro_f1: f64,
    pub n: usize,
}

pub fn exact_match(pred: &[usize], gold: &[usize]) -> f64 {
    let hits = pred.iter().zip(gold).filter(|(p, g)| p == g).count();
    hits as f64 / gold.len() as f64
}

/// Unweighted mean of per-class F1 over all `num_labels` classes. A class
/// with no true positives scores 0, including classes absent everywhere.
pub fn macro_f1(pred: &[usize], gold: &[usize], num_labels: usize) -> f64 {
    let mut tp = vec![0usize; num_labels];
    let mut fp = vec![0usize; num_labels];
    let mut fn_ = vec![0usize; num_labels];
    for (&p, &g) in pred.iter().zip(gold) {
        if p == g {
            tp[p] += 1;
        } else {
            fp[p] += 1;
            fn_[g] += 1;
        }
    }
    let f1: f64 = (0..num_labels)
        .map(|c| {
            let denom = 2 * tp[c] + fp[c] + fn_[c];
            if tp[c] == 0 {
                0.0
            } else {
                2.0 * tp[c] as f64 / denom as f64
            }
        })
        .sum();
    f1 / num_labels as f64
}

pub fn score(pred: &[usize], gold: &[usize], num_labels: usize) -> Result<MetricReport> {
    if gold.is_empty() {
        return Err(Error::Empty("evaluation split"));
    }
    if let Some(&bad) = pred.iter().chain(gold).find(|l| **l >= num_labels) {
        return Err(Error::LabelOutOfRange {
            label: bad,
            num_labels,
        });
    }
    Ok(MetricReport {
        exact_match: exact_match(pred, gold),
        macro_f1: macro_f1(pred, gold, num_labels),
        n: gold.len(),
    })
}

pub fn evaluate(
    model: &ToyModel,
    prompt: &SoftPrompt,
    task: &ToyTask,
    split: Split,
) -> Result<MetricReport> {
    let data = task.split(split);
    if data.is_empty() {
        return Err(Error::Empty("evaluation split"));
    }
    let pred = model.predict(prompt, data)?;
    let gold: Vec<usize> = data.iter().map(|e| e.label).collect();
    score(&pred, &gold, task.num_labels())
}

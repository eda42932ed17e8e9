#![allow(dead_code)]

pub mod fixtures;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tpv_core::lab::{Example, ToyModel, ToyTask};

pub const FD_EPS: f64 = 1e-3;

/// Central finite differences of the model loss over every prompt entry.
pub fn numeric_grad(
    model: &ToyModel,
    prompt: &[f64],
    prompt_len: usize,
    batch: &[Example],
) -> Vec<f64> {
    let mut x = prompt.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = x[i];
            x[i] = orig + FD_EPS;
            let up = model.loss_raw(&x, prompt_len, batch).unwrap();
            x[i] = orig - FD_EPS;
            let down = model.loss_raw(&x, prompt_len, batch).unwrap();
            x[i] = orig;
            (up - down) / (2.0 * FD_EPS)
        })
        .collect()
}

/// Largest entrywise `|a - n| / max(|a|, |n|, floor)`.
pub fn max_rel_err(analytic: &[f64], numeric: &[f64], floor: f64) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(floor))
        .fold(0.0, f64::max)
}

pub fn random_batch(
    rng: &mut ChaCha8Rng,
    size: usize,
    seq_len: usize,
    vocab: usize,
    labels: usize,
) -> Vec<Example> {
    (0..size)
        .map(|_| Example {
            tokens: (0..seq_len)
                .map(|_| rng.random_range(0..vocab as u32))
                .collect(),
            label: rng.random_range(0..labels),
        })
        .collect()
}

pub fn random_prompt(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    (0..len).map(|_| rng.random_range(-1.5..1.5)).collect()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Mean of the frozen token embeddings, with a trailing bias feature.
pub fn pooled_features(model: &ToyModel, tokens: &[u32]) -> Vec<f64> {
    let d = model.embed_dim();
    let mut out = vec![0.0; d + 1];
    for &t in tokens {
        for (o, v) in out.iter_mut().zip(model.embedding_row(t as usize)) {
            *o += *v as f64;
        }
    }
    out.iter_mut()
        .take(d)
        .for_each(|o| *o /= tokens.len() as f64);
    out[d] = 1.0;
    out
}

/// Binary logistic regression by full-batch gradient descent on pooled features.
pub fn logistic_accuracy(model: &ToyModel, task: &ToyTask) -> f64 {
    let feats = |exs: &[Example]| -> Vec<(Vec<f64>, f64)> {
        exs.iter()
            .map(|e| (pooled_features(model, &e.tokens), e.label as f64))
            .collect()
    };
    let train = feats(&task.train);
    let val = feats(&task.val);
    let mut w = vec![0.0; train[0].0.len()];
    for _ in 0..500 {
        let mut g = vec![0.0; w.len()];
        for (x, y) in &train {
            let z: f64 = x.iter().zip(&w).map(|(a, b)| a * b).sum();
            let err = 1.0 / (1.0 + (-z).exp()) - y;
            g.iter_mut().zip(x).for_each(|(gi, xi)| *gi += err * xi);
        }
        w.iter_mut()
            .zip(&g)
            .for_each(|(wi, gi)| *wi -= 1.0 * gi / train.len() as f64);
    }
    let hits = val
        .iter()
        .filter(|(x, y)| {
            let z: f64 = x.iter().zip(&w).map(|(a, b)| a * b).sum();
            (z > 0.0) as u8 as f64 == *y
        })
        .count();
    hits as f64 / val.len() as f64
}

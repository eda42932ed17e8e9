//! Frozen miniature classifier with a prepended soft prompt.
//!
//! `tokens -> embed -> [prompt rows ; token rows] -> mean-pool -> tanh MLP -> softmax`.
//! Only the prompt is trainable. Because pooling is a mean, every prompt row
//! receives the same gradient.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::lab::seed::derive_seed;
use crate::lab::task::Example;
use crate::prompt::SoftPrompt;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub embed_dim: usize,
    pub hidden: usize,
    pub num_labels: usize,
    pub seed: u64,
    /// Standard deviation of the hidden-layer weights, before `1/sqrt(embed_dim)` scaling.
    pub hidden_gain: f64,
    /// Standard deviation of the output-head weights, before `1/sqrt(hidden)` scaling.
    pub head_gain: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            vocab_size: 256,
            embed_dim: 32,
            hidden: 64,
            num_labels: 2,
            seed: 0,
            hidden_gain: 2.0,
            head_gain: 4.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ToyModel {
    config: ModelConfig,
    /// vocab_size x embed_dim
    embedding: Vec<f32>,
    /// embed_dim x hidden
    w1: Vec<f32>,
    b1: Vec<f32>,
    /// hidden x num_labels
    w2: Vec<f32>,
    b2: Vec<f32>,
}

/// Intermediate values of one forward pass, kept for backprop.
struct Pass {
    pooled_len: f64,
    hidden: Vec<f64>,
    probs: Vec<f64>,
    log_norm: f64,
    logits: Vec<f64>,
}

impl ToyModel {
    pub fn new(config: ModelConfig) -> Result<Self> {
        let ModelConfig {
            vocab_size: v,
            embed_dim: d,
            hidden: h,
            num_labels: l,
            seed,
            ..
        } = config;
        if v == 0 || d == 0 || h == 0 || l < 2 {
            return Err(Error::invalid(format!(
                "model dims must be positive with at least 2 labels: {config:?}"
            )));
        }
        let draw = |tag: u64, n: usize, std: f64| -> Vec<f32> {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(&[seed, tag]));
            let dist = Normal::new(0.0, std).expect("finite std");
            (0..n).map(|_| dist.sample(&mut rng) as f32).collect()
        };
        Ok(Self {
            embedding: draw(1, v * d, 1.0),
            w1: draw(2, d * h, config.hidden_gain / (d as f64).sqrt()),
            b1: draw(3, h, 0.1),
            w2: draw(4, h * l, config.head_gain / (h as f64).sqrt()),
            b2: vec![0.0; l],
            config,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn embed_dim(&self) -> usize {
        self.config.embed_dim
    }

    pub fn num_labels(&self) -> usize {
        self.config.num_labels
    }

    pub fn vocab_size(&self) -> usize {
        self.config.vocab_size
    }

    pub fn embedding_row(&self, token: usize) -> &[f32] {
        let d = self.config.embed_dim;
        &self.embedding[token * d..(token + 1) * d]
    }

    /// SHA-256 over every frozen parameter, hex encoded.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        for part in [&self.embedding, &self.w1, &self.b1, &self.w2, &self.b2] {
            for v in part.iter() {
                h.update(v.to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }

    fn check_prompt(&self, prompt_len: usize, weights: &[f64]) -> Result<()> {
        let d = self.config.embed_dim;
        if prompt_len == 0 || weights.len() != prompt_len * d {
            return Err(Error::ShapeMismatch {
                context: "prompt vs model embedding".into(),
                expected: (prompt_len, d),
                found: (prompt_len, weights.len() / prompt_len.max(1)),
            });
        }
        Ok(())
    }

    fn prompt_row_sum(&self, prompt_len: usize, weights: &[f64]) -> Vec<f64> {
        let d = self.config.embed_dim;
        let mut sum = vec![0.0; d];
        for row in weights.chunks_exact(d).take(prompt_len) {
            for (s, w) in sum.iter_mut().zip(row) {
                *s += w;
            }
        }
        sum
    }

    fn pass(&self, prompt_sum: &[f64], prompt_len: usize, tokens: &[u32]) -> Result<Pass> {
        let (d, h, l) = (
            self.config.embed_dim,
            self.config.hidden,
            self.config.num_labels,
        );
        if tokens.is_empty() {
            return Err(Error::Empty("token sequence"));
        }
        let mut pooled = prompt_sum.to_vec();
        for &t in tokens {
            if t as usize >= self.config.vocab_size {
                return Err(Error::TokenOutOfRange {
                    token: t,
                    vocab_size: self.config.vocab_size,
                });
            }
            for (p, e) in pooled.iter_mut().zip(self.embedding_row(t as usize)) {
                *p += *e as f64;
            }
        }
        let pooled_len = (prompt_len + tokens.len()) as f64;
        for p in pooled.iter_mut() {
            *p /= pooled_len;
        }
        let mut hidden: Vec<f64> = self.b1.iter().map(|b| *b as f64).collect();
        for (i, p) in pooled.iter().enumerate() {
            let row = &self.w1[i * h..(i + 1) * h];
            for (a, w) in hidden.iter_mut().zip(row) {
                *a += p * *w as f64;
            }
        }
        for a in hidden.iter_mut() {
            *a = a.tanh();
        }
        let mut logits: Vec<f64> = self.b2.iter().map(|b| *b as f64).collect();
        for (k, a) in hidden.iter().enumerate() {
            let row = &self.w2[k * l..(k + 1) * l];
            for (z, w) in logits.iter_mut().zip(row) {
                *z += a * *w as f64;
            }
        }
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum_exp: f64 = logits.iter().map(|z| (z - max).exp()).sum();
        let log_norm = max + sum_exp.ln();
        let probs = logits.iter().map(|z| (z - log_norm).exp()).collect();
        debug_assert_eq!(d, prompt_sum.len());
        Ok(Pass {
            pooled_len,
            hidden,
            probs,
            log_norm,
            logits,
        })
    }

    /// Label probabilities for one token sequence.
    pub fn forward(&self, prompt: &SoftPrompt, tokens: &[u32]) -> Result<Vec<f64>> {
        let w = prompt_f64(prompt);
        self.forward_raw(&w, prompt.prompt_len(), tokens)
    }

    pub fn forward_raw(
        &self,
        prompt: &[f64],
        prompt_len: usize,
        tokens: &[u32],
    ) -> Result<Vec<f64>> {
        self.check_prompt(prompt_len, prompt)?;
        let sum = self.prompt_row_sum(prompt_len, prompt);
        Ok(self.pass(&sum, prompt_len, tokens)?.probs)
    }

    /// Predicted labels, ties resolved toward the lower label index.
    pub fn predict(&self, prompt: &SoftPrompt, examples: &[Example]) -> Result<Vec<usize>> {
        let w = prompt_f64(prompt);
        let p = prompt.prompt_len();
        self.check_prompt(p, &w)?;
        let sum = self.prompt_row_sum(p, &w);
        examples
            .iter()
            .map(|ex| Ok(argmax(&self.pass(&sum, p, &ex.tokens)?.probs)))
            .collect()
    }

    /// Mean negative log-likelihood of the gold labels.
    pub fn loss_raw(&self, prompt: &[f64], prompt_len: usize, batch: &[Example]) -> Result<f64> {
        self.check_prompt(prompt_len, prompt)?;
        if batch.is_empty() {
            return Err(Error::Empty("batch"));
        }
        let sum = self.prompt_row_sum(prompt_len, prompt);
        let mut total = 0.0;
        for ex in batch {
            self.check_label(ex.label)?;
            let pass = self.pass(&sum, prompt_len, &ex.tokens)?;
            total += pass.log_norm - pass.logits[ex.label];
        }
        Ok(total / batch.len() as f64)
    }

    /// Loss and its analytic gradient with respect to the prompt weights.
    pub fn loss_and_grad_raw(
        &self,
        prompt: &[f64],
        prompt_len: usize,
        batch: &[Example],
    ) -> Result<(f64, Vec<f64>)> {
        self.check_prompt(prompt_len, prompt)?;
        if batch.is_empty() {
            return Err(Error::Empty("batch"));
        }
        let (d, h, l) = (
            self.config.embed_dim,
            self.config.hidden,
            self.config.num_labels,
        );
        let sum = self.prompt_row_sum(prompt_len, prompt);
        let scale = 1.0 / batch.len() as f64;
        let mut total = 0.0;
        // gradient w.r.t. the prompt row sum, shared by every row
        let mut g_sum = vec![0.0; d];
        let mut d_hidden = vec![0.0; h];
        for ex in batch {
            self.check_label(ex.label)?;
            let pass = self.pass(&sum, prompt_len, &ex.tokens)?;
            total += pass.log_norm - pass.logits[ex.label];
            // dL/dlogits = probs - onehot
            for (k, dh) in d_hidden.iter_mut().enumerate() {
                let row = &self.w2[k * l..(k + 1) * l];
                let mut acc = 0.0;
                for (j, w) in row.iter().enumerate() {
                    let g = pass.probs[j] - if j == ex.label { 1.0 } else { 0.0 };
                    acc += g * *w as f64;
                }
                let a = pass.hidden[k];
                *dh = acc * (1.0 - a * a);
            }
            let coef = scale / pass.pooled_len;
            for (i, g) in g_sum.iter_mut().enumerate() {
                let row = &self.w1[i * h..(i + 1) * h];
                let dp: f64 = row
                    .iter()
                    .zip(&d_hidden)
                    .map(|(w, dh)| *w as f64 * dh)
                    .sum();
                *g += coef * dp;
            }
        }
        let grad = g_sum.iter().copied().cycle().take(prompt_len * d).collect();
        Ok((total * scale, grad))
    }

    pub fn loss_and_grad(&self, prompt: &SoftPrompt, batch: &[Example]) -> Result<(f64, Vec<f64>)> {
        self.loss_and_grad_raw(&prompt_f64(prompt), prompt.prompt_len(), batch)
    }

    fn check_label(&self, label: usize) -> Result<()> {
        if label >= self.config.num_labels {
            return Err(Error::LabelOutOfRange {
                label,
                num_labels: self.config.num_labels,
            });
        }
        Ok(())
    }

    /// Prompt whose rows are embedding rows drawn uniformly with a seed derived from `init_id`.
    pub fn init_prompt(&self, prompt_len: usize, init_id: &str) -> Result<SoftPrompt> {
        use rand::Rng;
        let digest = Sha256::digest(init_id.as_bytes());
        let seed = u64::from_le_bytes(digest[..8].try_into().unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut weights = Vec::with_capacity(prompt_len * self.config.embed_dim);
        for _ in 0..prompt_len {
            let tok = rng.random_range(0..self.config.vocab_size);
            weights.extend_from_slice(self.embedding_row(tok));
        }
        SoftPrompt::new(prompt_len, self.config.embed_dim, weights, init_id)
    }
}

pub fn init_id_for_seed(seed: u64) -> String {
    format!("init-{seed}")
}

pub(crate) fn prompt_f64(prompt: &SoftPrompt) -> Vec<f64> {
    prompt.weights().iter().map(|v| *v as f64).collect()
}

pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model() -> ToyModel {
        ToyModel::new(ModelConfig {
            num_labels: 3,
            seed: 11,
            ..ModelConfig::default()
        })
        .unwrap()
    }

    fn ex(tokens: &[u32], label: usize) -> Example {
        Example {
            tokens: tokens.to_vec(),
            label,
        }
    }

    #[test]
    fn zero_everything_gives_uniform() {
        let mut m = model();
        m.embedding.iter_mut().for_each(|v| *v = 0.0);
        m.b1.iter_mut().for_each(|v| *v = 0.0);
        let p = SoftPrompt::zeros(4, 32, "z").unwrap();
        let probs = m.forward(&p, &[1, 2, 3]).unwrap();
        for q in &probs {
            approx::assert_abs_diff_eq!(*q, 1.0 / 3.0, epsilon = 1e-15);
        }
        let loss = m.loss_and_grad(&p, &[ex(&[1, 2], 2)]).unwrap().0;
        approx::assert_abs_diff_eq!(loss, 3.0f64.ln(), epsilon = 1e-12);
    }

    #[test]
    fn probabilities_sum_to_one() {
        let m = model();
        let p = m.init_prompt(8, "init-1").unwrap();
        for seq in [&[0u32, 5, 9][..], &[255], &[7; 20]] {
            let s: f64 = m.forward(&p, seq).unwrap().iter().sum();
            assert!((s - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn duplicated_prompt_rows_reweight_the_pool() {
        // Pool with P rows, then with the same rows twice; both must match
        // pooled = (k * sum(prompt) + sum(tokens)) / (k * P + S) pushed
        // through a hand-written MLP.
        let m = model();
        let p = m.init_prompt(3, "init-4").unwrap();
        let mut doubled = p.weights().to_vec();
        doubled.extend_from_slice(p.weights());
        let p2 = SoftPrompt::new(6, 32, doubled, "init-4").unwrap();
        let tokens = [3u32, 17, 42, 99];
        for (k, prompt) in [(1.0, &p), (2.0, &p2)] {
            let mut pooled = vec![0.0f64; 32];
            for r in 0..3 {
                for (d, v) in p.row(r).iter().enumerate() {
                    pooled[d] += k * *v as f64;
                }
            }
            for t in tokens {
                for (d, v) in m.embedding_row(t as usize).iter().enumerate() {
                    pooled[d] += *v as f64;
                }
            }
            let n = k * 3.0 + 4.0;
            pooled.iter_mut().for_each(|x| *x /= n);
            let direct = m.forward(prompt, &tokens).unwrap();
            let manual = {
                let mut hidden: Vec<f64> = m.b1.iter().map(|b| *b as f64).collect();
                for (i, x) in pooled.iter().enumerate() {
                    for (j, a) in hidden.iter_mut().enumerate() {
                        *a += x * m.w1[i * 64 + j] as f64;
                    }
                }
                let mut logits = [0.0; 3];
                for (j, a) in hidden.iter().enumerate() {
                    for (c, z) in logits.iter_mut().enumerate() {
                        *z += a.tanh() * m.w2[j * 3 + c] as f64;
                    }
                }
                let mx = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let e: Vec<f64> = logits.iter().map(|z| (z - mx).exp()).collect();
                let s: f64 = e.iter().sum();
                e.into_iter().map(|x| x / s).collect::<Vec<_>>()
            };
            for (a, b) in direct.iter().zip(&manual) {
                approx::assert_abs_diff_eq!(*a, *b, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn errors() {
        let m = model();
        let p = SoftPrompt::zeros(2, 16, "x").unwrap();
        assert!(matches!(
            m.forward(&p, &[1]),
            Err(Error::ShapeMismatch { .. })
        ));
        let p = SoftPrompt::zeros(2, 32, "x").unwrap();
        assert!(matches!(m.forward(&p, &[]), Err(Error::Empty(_))));
        assert!(matches!(
            m.forward(&p, &[256]),
            Err(Error::TokenOutOfRange { .. })
        ));
        assert!(matches!(
            m.loss_and_grad(&p, &[ex(&[1], 3)]),
            Err(Error::LabelOutOfRange { .. })
        ));
        assert!(matches!(m.loss_and_grad(&p, &[]), Err(Error::Empty(_))));
    }

    #[test]
    fn confident_prediction_has_near_zero_loss() {
        let mut m = model();
        m.b2 = vec![60.0, 0.0, 0.0];
        let p = m.init_prompt(4, "a").unwrap();
        let (loss, _) = m.loss_and_grad(&p, &[ex(&[1, 2, 3], 0)]).unwrap();
        assert!(loss < 1e-12, "{loss}");
    }

    #[test]
    fn init_rows_come_from_the_embedding_table() {
        let m = model();
        let p = m.init_prompt(5, "init-7").unwrap();
        for r in 0..5 {
            assert!((0..256).any(|t| m.embedding_row(t) == p.row(r)));
        }
        assert_eq!(p, m.init_prompt(5, "init-7").unwrap());
        assert_ne!(p.weights(), m.init_prompt(5, "init-8").unwrap().weights());
        assert!(!p.is_trained());
    }

    #[test]
    fn argmax_prefers_lower_index_on_ties() {
        assert_eq!(argmax(&[0.5, 0.5]), 0);
        assert_eq!(argmax(&[0.2, 0.4, 0.4]), 1);
    }
}

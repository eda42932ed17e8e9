use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::lab::task::{apportion, Example, ToyTask};

/// Per-class shot counts: `n_shots` overall, proportional to the training
/// split's class distribution (largest remainder, ties to the lower class).
pub fn shot_counts(task: &ToyTask, n_shots: usize) -> Result<Vec<usize>> {
    let available = task.train.len();
    if n_shots > available {
        return Err(Error::TooManyShots {
            requested: n_shots,
            available,
        });
    }
    let mut freq = vec![0.0; task.num_labels()];
    for ex in &task.train {
        freq[ex.label] += 1.0;
    }
    Ok(apportion(n_shots, &freq))
}

/// `n_shots` training examples in total (not per class), keeping the class
/// distribution. Deterministic per seed.
pub fn sample_shots(task: &ToyTask, n_shots: usize, seed: u64) -> Result<Vec<Example>> {
    let counts = shot_counts(task, n_shots)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = Vec::with_capacity(n_shots);
    for (label, &want) in counts.iter().enumerate() {
        let mut pool: Vec<&Example> = task.train.iter().filter(|e| e.label == label).collect();
        pool.shuffle(&mut rng);
        picked.extend(pool.into_iter().take(want).cloned());
    }
    picked.shuffle(&mut rng);
    Ok(picked)
}

//! Per-epoch input augmentation: shuffle each word list, and with
//! probability 1/2 keep only a random 50–100% prefix of it.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Augmentation {
    pub shuffle: bool,
    pub subset_limit: bool,
}

impl Default for Augmentation {
    fn default() -> Self {
        Self {
            shuffle: true,
            subset_limit: true,
        }
    }
}

/// `⌊fraction · len⌋`, never below one.
pub fn truncated_len(len: usize, fraction: f64) -> usize {
    ((len as f64 * fraction).floor() as usize).clamp(1, len.max(1))
}

pub fn augment_list<T: Clone>(items: &[T], aug: Augmentation, rng: &mut impl Rng) -> Vec<T> {
    let mut out = items.to_vec();
    if aug.shuffle {
        out.shuffle(rng);
    }
    if aug.subset_limit && rng.random_bool(0.5) {
        let fraction = rng.random_range(0.5..=1.0);
        out.truncate(truncated_len(out.len(), fraction));
    }
    out
}

/// Augments every list independently; list `i` draws from stream `i` of a
/// generator seeded with `epoch_seed`.
pub fn augment_batch<T: Clone>(lists: &[Vec<T>], aug: Augmentation, epoch_seed: u64) -> Vec<Vec<T>> {
    lists
        .iter()
        .enumerate()
        .map(|(i, l)| {
            let mut rng = ChaCha8Rng::seed_from_u64(epoch_seed);
            rng.set_stream(i as u64);
            augment_list(l, aug, &mut rng)
        })
        .collect()
}

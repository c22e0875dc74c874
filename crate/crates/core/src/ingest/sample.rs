use rand_chacha::ChaCha20Rng;
use rand_core::{RngCore, SeedableRng};
use serde::{Deserialize, Serialize};

use super::IngestError;
use crate::model::MrcInstance;

/// Identifies the sampling procedure below. Bump when it changes.
///
/// ChaCha20 seeded through `seed_from_u64`, partial Fisher-Yates over the
/// id-sorted population, bounded draws by rejection on `next_u64`.
pub const SAMPLER_ID: &str = "chacha20-fisher-yates-v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleSpec {
    pub size: usize,
    pub seed: u64,
}

fn below(rng: &mut ChaCha20Rng, bound: u64) -> u64 {
    debug_assert!(bound > 0);
    let limit = u64::MAX - u64::MAX % bound;
    loop {
        let x = rng.next_u64();
        if x < limit {
            return x % bound;
        }
    }
}

/// `k` distinct indices from `0..n`, in draw order.
pub fn sample_indices(n: usize, k: usize, seed: u64) -> Result<Vec<usize>, IngestError> {
    if k == 0 {
        return Err(IngestError::EmptySample);
    }
    if k > n {
        return Err(IngestError::SampleTooLarge { size: k, available: n });
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut pool: Vec<usize> = (0..n).collect();
    for i in 0..k {
        let j = i + below(&mut rng, (n - i) as u64) as usize;
        pool.swap(i, j);
    }
    pool.truncate(k);
    Ok(pool)
}

/// Seeded sample without replacement, returned in instance-id order.
///
/// The population is sorted by id first, so the result depends only on
/// the set of records, the size and the seed.
pub fn sample_subset(records: &[MrcInstance], spec: SampleSpec) -> Result<Vec<MrcInstance>, IngestError> {
    let mut population: Vec<&MrcInstance> = records.iter().collect();
    population.sort_by(|a, b| a.id.cmp(&b.id));
    let mut picked: Vec<MrcInstance> = sample_indices(population.len(), spec.size, spec.seed)?
        .into_iter()
        .map(|i| population[i].clone())
        .collect();
    picked.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(picked)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn indices_are_distinct_and_in_range() {
        let idx = sample_indices(50, 20, 3).unwrap();
        let mut sorted = idx.clone();
        sorted.sort_unstable();
        sorted.dedup();
        assert_eq!(sorted.len(), 20);
        assert!(idx.iter().all(|&i| i < 50));
    }

    #[test]
    fn exhaustive_sample_is_a_permutation() {
        let mut idx = sample_indices(10, 10, 99).unwrap();
        idx.sort_unstable();
        assert_eq!(idx, (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn oversized_and_empty_samples_fail() {
        assert!(matches!(sample_indices(3, 4, 0), Err(IngestError::SampleTooLarge { size: 4, available: 3 })));
        assert!(matches!(sample_indices(3, 0, 0), Err(IngestError::EmptySample)));
    }
}

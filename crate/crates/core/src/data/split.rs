//! Seeded train / validation / test partition.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row indices into the source batch.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
}

/// Test gets `⌊n/5⌋` rows, validation `⌊0.2·(n − test)⌋`, train the rest.
pub fn split(n: usize, seed: u64) -> Result<Split> {
    if n < 10 {
        return Err(Error::Config(format!("split needs at least 10 rows, got {n}")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let test = n / 5;
    let validation = (n - test) / 5;
    let rest = idx.split_off(test);
    let test_idx = idx;
    let (val_idx, train_idx) = rest.split_at(validation);
    Ok(Split {
        train: train_idx.to_vec(),
        validation: val_idx.to_vec(),
        test: test_idx,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn hundred_rows() {
        let s = split(100, 1).unwrap();
        assert_eq!((s.test.len(), s.validation.len(), s.train.len()), (20, 16, 64));
        assert_eq!(s, split(100, 1).unwrap());
        assert!(split(9, 1).is_err());
    }

    proptest! {
        #[test]
        fn sizes_and_conservation(n in 10usize..10_000, seed in any::<u64>()) {
            let s = split(n, seed).unwrap();
            let test = n / 5;
            prop_assert_eq!(s.test.len(), test);
            prop_assert_eq!(s.validation.len(), (n - test) / 5);
            let mut all: Vec<usize> = s.train.iter().chain(&s.validation).chain(&s.test).copied().collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
        }
    }
}

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::CorpusError;

pub const MIN_SPLIT_EXAMPLES: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSplit<T> {
    pub train: Vec<T>,
    pub validation: Vec<T>,
    pub test: Vec<T>,
    pub seed: u64,
}

impl<T> DatasetSplit<T> {
    pub fn sizes(&self) -> (usize, usize, usize) {
        (self.train.len(), self.validation.len(), self.test.len())
    }

    pub fn map<U>(self, mut f: impl FnMut(T) -> U) -> DatasetSplit<U> {
        DatasetSplit {
            train: self.train.into_iter().map(&mut f).collect(),
            validation: self.validation.into_iter().map(&mut f).collect(),
            test: self.test.into_iter().map(&mut f).collect(),
            seed: self.seed,
        }
    }
}

/// Train/validation/test sizes for `n` examples: `0.8n` and `0.1n` rounded
/// half up, test takes the rest.
pub fn split_sizes(n: usize) -> (usize, usize, usize) {
    let train = (8 * n + 5) / 10;
    let val = (n + 5) / 10;
    (train, val, n - train - val)
}

/// Seeded shuffle followed by an 80/10/10 slice.
pub fn split_dataset<T>(examples: Vec<T>, seed: u64) -> Result<DatasetSplit<T>, CorpusError> {
    let n = examples.len();
    if n < MIN_SPLIT_EXAMPLES {
        return Err(CorpusError::TooFewExamples(n));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut slots: Vec<Option<T>> = examples.into_iter().map(Some).collect();
    let mut shuffled = order.into_iter().map(|i| slots[i].take().expect("permutation"));
    let (tr, va, _) = split_sizes(n);
    let train = shuffled.by_ref().take(tr).collect();
    let validation = shuffled.by_ref().take(va).collect();
    let test = shuffled.collect();
    Ok(DatasetSplit {
        train,
        validation,
        test,
        seed,
    })
}

//! Seeded train/test splitting.

use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::Dataset;

/// Uniformly random split of the triples: `round(fraction * n)` go to the
/// training set, the rest to the test set. Both keep the full user/item
/// universe.
pub fn split(data: &Dataset, fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::InvalidFraction(fraction));
    }
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let cut = libm::round(fraction * data.len() as f64) as usize;
    let (train, test) = order.split_at(cut);
    let mut train = train.to_vec();
    let mut test = test.to_vec();
    train.sort_unstable();
    test.sort_unstable();
    Ok((data.subset(&train), data.subset(&test)))
}

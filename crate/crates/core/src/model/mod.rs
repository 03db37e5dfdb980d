//! Relaxed collaborative-hashing model and the matrix-factorization baseline.

mod factors;
mod objective;
mod rounding;
mod update;

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

pub use factors::{init_vector, EntityKind, FactorMatrices, FactorVector, FactorView};
pub use objective::{
    dch_loss, grad_item, grad_user, mf_grad_item, mf_grad_user, mf_loss, predict_relaxed, Objective,
};
pub use rounding::{coordinate_medians, round_codes, round_rows, round_with_medians};
pub use update::{norm, project, project_in_place, sgd_step, sgd_step_in_place};

/// Training hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Hyperparams {
    /// Code length `K` in bits (latent dimension).
    pub code_bits: usize,
    /// Weight of the bit-balance regularizer.
    pub lambda: f64,
    /// SGD learning rate.
    pub learning_rate: f64,
    /// Projection parameter; factors are kept in the ball of radius `1/sqrt(gamma)`.
    pub gamma: f64,
    /// Rating triples per minibatch.
    pub batch_size: usize,
    /// SGD operations per worker between synchronization barriers.
    pub sync_period: usize,
    /// Number of workers.
    pub workers: usize,
    /// Number of server shards.
    pub servers: usize,
    /// Passes over the training data.
    pub epochs: usize,
    /// Seed for initialization, partitioning and sampling.
    pub seed: u64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            code_bits: 10,
            lambda: 0.01,
            learning_rate: 0.001,
            gamma: 1.0,
            batch_size: 1000,
            sync_period: 2,
            workers: 4,
            servers: 4,
            epochs: 20,
            seed: 0,
        }
    }
}

impl Hyperparams {
    /// Checks every range constraint.
    pub fn validate(&self) -> Result<()> {
        let bad = |what| Err(Error::InvalidHyperparameter(what));
        if self.code_bits == 0 {
            return bad("code length K must be at least 1");
        }
        if self.batch_size == 0 {
            return bad("batch size must be at least 1");
        }
        if self.sync_period == 0 {
            return bad("synchronization period must be at least 1");
        }
        if self.workers == 0 {
            return bad("worker count must be at least 1");
        }
        if self.servers == 0 {
            return bad("server count must be at least 1");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning rate must be positive");
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return bad("gamma must be positive");
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad("lambda must be non-negative");
        }
        Ok(())
    }

    /// Projection radius `1/sqrt(gamma)`.
    pub fn radius(&self) -> f64 {
        1.0 / libm::sqrt(self.gamma)
    }
}

/// How raw ratings map into `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RatingScale {
    /// Stars in `[min, max]`, normalized as `(r - min) / (max - min)`.
    Stars {
        /// Lowest admissible rating.
        min: f64,
        /// Highest admissible rating.
        max: f64,
    },
    /// Implicit feedback in `{0, 1}`, used as is.
    Binary,
}

impl RatingScale {
    /// Netflix / MovieLens 1-5 stars.
    pub const FIVE_STARS: RatingScale = RatingScale::Stars { min: 1.0, max: 5.0 };

    /// Maps a raw rating into `[0, 1]`.
    pub fn normalize(&self, raw: f64) -> Result<f64> {
        match *self {
            RatingScale::Stars { min, max } => {
                if !(raw >= min && raw <= max) || max <= min {
                    return Err(Error::RatingOutOfScale(raw));
                }
                Ok((raw - min) / (max - min))
            }
            RatingScale::Binary => {
                if raw == 0.0 || raw == 1.0 {
                    Ok(raw)
                } else {
                    Err(Error::RatingOutOfScale(raw))
                }
            }
        }
    }

    /// Highest raw rating; items rated this high count as positives.
    pub fn max(&self) -> f64 {
        match *self {
            RatingScale::Stars { max, .. } => max,
            RatingScale::Binary => 1.0,
        }
    }
}

/// One observed interaction with its rating normalized into `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatingTriple {
    /// User index in `[0, M)`.
    pub user: u32,
    /// Item index in `[0, N)`.
    pub item: u32,
    /// Normalized rating.
    pub rating: f64,
}

impl RatingTriple {
    /// Convenience constructor.
    pub fn new(user: u32, item: u32, rating: f64) -> Self {
        RatingTriple { user, item, rating }
    }
}

/// A set of observed ratings over `M` users and `N` items.
///
/// `raw_ratings[t]` keeps the original-scale rating of `triples[t]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    num_users: usize,
    num_items: usize,
    triples: Vec<RatingTriple>,
    raw_ratings: Vec<f64>,
    scale: RatingScale,
    active_users: Vec<u32>,
    active_items: Vec<u32>,
}

impl Dataset {
    /// Builds a dataset, checking index ranges and computing the active sets.
    pub fn new(
        num_users: usize,
        num_items: usize,
        triples: Vec<RatingTriple>,
        raw_ratings: Vec<f64>,
        scale: RatingScale,
    ) -> Result<Self> {
        if triples.len() != raw_ratings.len() {
            return Err(Error::LengthMismatch {
                expected: triples.len(),
                found: raw_ratings.len(),
            });
        }
        let mut user_seen = vec![false; num_users];
        let mut item_seen = vec![false; num_items];
        for t in &triples {
            let (u, i) = (t.user as usize, t.item as usize);
            if u >= num_users {
                return Err(Error::IndexOutOfRange {
                    entity: "user",
                    index: u,
                    len: num_users,
                });
            }
            if i >= num_items {
                return Err(Error::IndexOutOfRange {
                    entity: "item",
                    index: i,
                    len: num_items,
                });
            }
            if !(0.0..=1.0).contains(&t.rating) {
                return Err(Error::RatingOutOfScale(t.rating));
            }
            user_seen[u] = true;
            item_seen[i] = true;
        }
        let collect = |seen: Vec<bool>| {
            seen.iter()
                .enumerate()
                .filter(|(_, &s)| s)
                .map(|(i, _)| i as u32)
                .collect::<Vec<_>>()
        };
        Ok(Dataset {
            num_users,
            num_items,
            active_users: collect(user_seen),
            active_items: collect(item_seen),
            triples,
            raw_ratings,
            scale,
        })
    }

    /// Builds a dataset from raw ratings, normalizing them with `scale`.
    pub fn from_raw(
        num_users: usize,
        num_items: usize,
        raw: &[(u32, u32, f64)],
        scale: RatingScale,
    ) -> Result<Self> {
        let mut triples = Vec::with_capacity(raw.len());
        let mut raws = Vec::with_capacity(raw.len());
        for &(u, i, r) in raw {
            triples.push(RatingTriple::new(u, i, scale.normalize(r)?));
            raws.push(r);
        }
        Dataset::new(num_users, num_items, triples, raws, scale)
    }

    /// Subset keeping the user/item universe, taking triples at `indices`.
    pub fn subset(&self, indices: &[usize]) -> Self {
        let triples = indices.iter().map(|&t| self.triples[t]).collect();
        let raws = indices.iter().map(|&t| self.raw_ratings[t]).collect();
        Dataset::new(self.num_users, self.num_items, triples, raws, self.scale)
            .expect("subset of a valid dataset is valid")
    }

    /// User count `M`.
    pub fn num_users(&self) -> usize {
        self.num_users
    }

    /// Item count `N`.
    pub fn num_items(&self) -> usize {
        self.num_items
    }

    /// Number of observed ratings.
    pub fn len(&self) -> usize {
        self.triples.len()
    }

    /// Whether there are no ratings.
    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }

    /// Normalized triples.
    pub fn triples(&self) -> &[RatingTriple] {
        &self.triples
    }

    /// Original-scale ratings aligned with [`Dataset::triples`].
    pub fn raw_ratings(&self) -> &[f64] {
        &self.raw_ratings
    }

    /// Rating scale the raw ratings were expressed in.
    pub fn scale(&self) -> RatingScale {
        self.scale
    }

    /// Users with at least one rating, ascending.
    pub fn active_users(&self) -> &[u32] {
        &self.active_users
    }

    /// Items with at least one rating, ascending.
    pub fn active_items(&self) -> &[u32] {
        &self.active_items
    }

    /// Per-user lists of `(item, raw rating)`, items ascending.
    pub fn items_by_user(&self) -> Vec<Vec<(u32, f64)>> {
        let mut lists = vec![Vec::new(); self.num_users];
        for (t, &raw) in self.triples.iter().zip(&self.raw_ratings) {
            lists[t.user as usize].push((t.item, raw));
        }
        for l in &mut lists {
            l.sort_by_key(|&(i, _)| i);
        }
        lists
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hyperparams_validation() {
        assert!(Hyperparams::default().validate().is_ok());
        let mut h = Hyperparams::default();
        h.code_bits = 0;
        assert!(h.validate().is_err());
        let mut h = Hyperparams::default();
        h.gamma = 0.0;
        assert!(h.validate().is_err());
        let mut h = Hyperparams::default();
        h.lambda = -1e-3;
        assert!(h.validate().is_err());
        let mut h = Hyperparams::default();
        h.sync_period = 0;
        assert!(h.validate().is_err());
        h = Hyperparams {
            gamma: 4.0,
            ..Hyperparams::default()
        };
        assert_eq!(h.radius(), 0.5);
    }

    #[test]
    fn star_normalization() {
        let s = RatingScale::FIVE_STARS;
        assert_eq!(s.normalize(5.0).unwrap(), 1.0);
        assert_eq!(s.normalize(3.0).unwrap(), 0.5);
        assert_eq!(s.normalize(1.0).unwrap(), 0.0);
        assert!(s.normalize(0.0).is_err());
        assert!(s.normalize(6.0).is_err());
        assert!(RatingScale::Binary.normalize(0.5).is_err());
    }

    #[test]
    fn active_sets_and_ranges() {
        let d = Dataset::from_raw(
            4,
            3,
            &[(0, 2, 5.0), (2, 2, 1.0), (2, 0, 3.0)],
            RatingScale::FIVE_STARS,
        )
        .unwrap();
        assert_eq!(d.active_users(), &[0, 2]);
        assert_eq!(d.active_items(), &[0, 2]);
        assert_eq!(d.raw_ratings(), &[5.0, 1.0, 3.0]);
        assert_eq!(d.triples()[2].rating, 0.5);
        assert!(Dataset::from_raw(1, 1, &[(1, 0, 5.0)], RatingScale::FIVE_STARS).is_err());
        let by_user = d.items_by_user();
        assert_eq!(by_user[2], vec![(0, 3.0), (2, 1.0)]);
    }
}

//! Synthetic rating data with low-rank structure.
//!
//! Users and items get Gaussian latent vectors plus biases; item popularity
//! follows a power law. Explicit data maps the latent scores onto 1..=5 stars
//! by global quantiles, so the star histogram matches the requested shares.
//! Implicit data keeps every sampled pair with rating 1.

use std::collections::BTreeSet;

use dch_core::{Dataset, RatingScale};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, StandardNormal};

/// Explicit stars or implicit (binary) feedback.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Feedback {
    /// 1..=5 stars with the given shares of each star, lowest first.
    Stars([f64; 5]),
    /// Every observed pair is a positive.
    Implicit,
}

/// Shape of a generated dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    /// User count.
    pub users: usize,
    /// Item count.
    pub items: usize,
    /// Target rating count.
    pub ratings: usize,
    /// Minimum ratings per user.
    pub min_per_user: usize,
    /// Dimension of the hidden taste vectors.
    pub latent_dim: usize,
    /// Exponent of the item popularity power law.
    pub popularity_skew: f64,
    /// Standard deviation of per-rating noise, relative to the signal.
    pub noise: f64,
    /// Rating kind.
    pub feedback: Feedback,
    /// Seed.
    pub seed: u64,
}

impl SynthSpec {
    /// 943 users, 1,682 items, 100,000 star ratings, at least 20 per user.
    pub fn movielens_100k(seed: u64) -> Self {
        SynthSpec {
            users: 943,
            items: 1682,
            ratings: 100_000,
            min_per_user: 20,
            latent_dim: 8,
            popularity_skew: 0.9,
            noise: 0.5,
            feedback: Feedback::Stars([0.06, 0.11, 0.27, 0.34, 0.22]),
            seed,
        }
    }

    /// Small dense star-rated dataset with `density` of all pairs observed.
    pub fn toy(users: usize, items: usize, density: f64, seed: u64) -> Self {
        let ratings = ((users * items) as f64 * density).round().max(1.0) as usize;
        SynthSpec {
            users,
            items,
            ratings,
            min_per_user: 1,
            latent_dim: 3,
            popularity_skew: 0.3,
            noise: 0.3,
            feedback: Feedback::Stars([0.1, 0.15, 0.3, 0.25, 0.2]),
            seed,
        }
    }

    /// Sparse implicit feedback at the given density.
    pub fn implicit(users: usize, items: usize, density: f64, seed: u64) -> Self {
        let ratings = ((users * items) as f64 * density).round().max(1.0) as usize;
        SynthSpec {
            users,
            items,
            ratings,
            min_per_user: 1,
            latent_dim: 8,
            popularity_skew: 1.0,
            noise: 0.5,
            feedback: Feedback::Implicit,
            seed,
        }
    }
}

fn gaussian_rows(rng: &mut ChaCha8Rng, rows: usize, dim: usize) -> Vec<Vec<f64>> {
    (0..rows)
        .map(|_| (0..dim).map(|_| StandardNormal.sample(rng)).collect())
        .collect()
}

/// Generates a dataset; triples are grouped by user, items ascending.
pub fn generate(spec: &SynthSpec) -> dch_core::Result<Dataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (m, n) = (spec.users, spec.items);
    let d = spec.latent_dim.max(1);
    let users = gaussian_rows(&mut rng, m, d);
    let items = gaussian_rows(&mut rng, n, d);

    // Popularity: a random permutation of power-law weights; popular items
    // also lean towards better ratings.
    let mut rank: Vec<usize> = (0..n).collect();
    rank.shuffle(&mut rng);
    let weight: Vec<f64> = rank
        .iter()
        .map(|&r| 1.0 / (r as f64 + 10.0).powf(spec.popularity_skew))
        .collect();
    let item_bias: Vec<f64> = rank
        .iter()
        .map(|&r| {
            let z: f64 = StandardNormal.sample(&mut rng);
            0.5 * z + 0.4 * (1.0 - 2.0 * r as f64 / n.max(1) as f64)
        })
        .collect();
    let user_bias: Vec<f64> = (0..m)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            0.4 * z
        })
        .collect();

    // Per-user activity: a floor plus a log-normal share of the rest.
    let cap = n.max(1);
    let floor = spec.min_per_user.min(cap);
    let spare = spec.ratings.saturating_sub(floor * m) as f64;
    let activity = LogNormal::new(0.0, 1.0).expect("valid log-normal");
    let shares: Vec<f64> = (0..m).map(|_| activity.sample(&mut rng)).collect();
    let total: f64 = shares.iter().sum::<f64>().max(f64::MIN_POSITIVE);
    let counts: Vec<usize> = shares
        .iter()
        .map(|s| (floor + (spare * s / total).round() as usize).min(cap))
        .collect();

    let mut pairs = Vec::with_capacity(spec.ratings);
    let mut scores = Vec::with_capacity(spec.ratings);
    let all: Vec<usize> = (0..n).collect();
    for (u, &count) in counts.iter().enumerate() {
        let chosen: BTreeSet<usize> = all
            .choose_multiple_weighted(&mut rng, count, |&j| weight[j])
            .expect("positive weights")
            .copied()
            .collect();
        for j in chosen {
            let dot: f64 = users[u].iter().zip(&items[j]).map(|(a, b)| a * b).sum();
            let noise: f64 = StandardNormal.sample(&mut rng);
            scores.push(dot / (d as f64).sqrt() + user_bias[u] + item_bias[j] + spec.noise * noise);
            pairs.push((u as u32, j as u32));
        }
    }

    match spec.feedback {
        Feedback::Implicit => {
            let raw: Vec<_> = pairs.iter().map(|&(u, j)| (u, j, 1.0)).collect();
            Dataset::from_raw(m, n, &raw, RatingScale::Binary)
        }
        Feedback::Stars(shares) => {
            let mut sorted = scores.clone();
            sorted.sort_by(f64::total_cmp);
            let total: f64 = shares.iter().sum();
            let mut cuts = Vec::with_capacity(4);
            let mut acc = 0.0;
            for s in &shares[..4] {
                acc += s / total;
                let idx =
                    ((acc * sorted.len() as f64) as usize).min(sorted.len().saturating_sub(1));
                cuts.push(sorted.get(idx).copied().unwrap_or(0.0));
            }
            let raw: Vec<_> = pairs
                .iter()
                .zip(&scores)
                .map(|(&(u, j), &s)| {
                    let stars = 1 + cuts.iter().filter(|&&c| s >= c).count();
                    (u, j, stars as f64)
                })
                .collect();
            Dataset::from_raw(m, n, &raw, RatingScale::FIVE_STARS)
        }
    }
}

/// Seeded random codes, uniformly distributed, for retrieval benchmarks.
pub fn random_codes(count: usize, bits: usize, seed: u64) -> Vec<dch_core::HashCode> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let bools: Vec<bool> = (0..bits).map(|_| rng.gen_bool(0.5)).collect();
            dch_core::HashCode::from_bools(&bools)
        })
        .collect()
}

/// Seeded random factors in `[-1, 1)`, row-major.
pub fn random_vectors(count: usize, dim: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count * dim).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn movielens_shape() {
        let data = generate(&SynthSpec::movielens_100k(1)).unwrap();
        assert_eq!(data.num_users(), 943);
        assert_eq!(data.num_items(), 1682);
        let n = data.len() as f64;
        assert!((n - 100_000.0).abs() < 2_000.0, "{n}");
        let per_user = data.items_by_user();
        assert!(per_user.iter().all(|l| l.len() >= 20));
        let fives = data.raw_ratings().iter().filter(|&&r| r == 5.0).count() as f64;
        assert!((fives / n - 0.22).abs() < 0.01, "{}", fives / n);
    }

    #[test]
    fn seeded() {
        let spec = SynthSpec::toy(20, 20, 0.5, 4);
        assert_eq!(generate(&spec).unwrap(), generate(&spec).unwrap());
        let other = SynthSpec { seed: 5, ..spec };
        assert_ne!(
            generate(&other).unwrap(),
            generate(&SynthSpec::toy(20, 20, 0.5, 4)).unwrap()
        );
    }

    #[test]
    fn implicit_is_binary() {
        let data = generate(&SynthSpec::implicit(300, 500, 0.01, 2)).unwrap();
        assert!(data.raw_ratings().iter().all(|&r| r == 1.0));
        assert!(data.triples().iter().all(|t| t.rating == 1.0));
        assert!((data.len() as f64 - 1500.0).abs() < 200.0);
    }
}

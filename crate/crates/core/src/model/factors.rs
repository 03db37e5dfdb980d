use alloc::vec;
use alloc::vec::Vec;
use core::ops::{Deref, DerefMut};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::update;
use super::Dataset;

/// A `K`-dimensional relaxed factor.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FactorVector(pub Vec<f64>);

impl FactorVector {
    /// Zero vector of dimension `dim`.
    pub fn zeros(dim: usize) -> Self {
        FactorVector(vec![0.0; dim])
    }

    /// Euclidean norm.
    pub fn norm(&self) -> f64 {
        update::norm(&self.0)
    }

    /// Consumes the wrapper.
    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for FactorVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for FactorVector {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

impl From<Vec<f64>> for FactorVector {
    fn from(v: Vec<f64>) -> Self {
        FactorVector(v)
    }
}

impl From<&[f64]> for FactorVector {
    fn from(v: &[f64]) -> Self {
        FactorVector(v.to_vec())
    }
}

/// Users or items.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EntityKind {
    /// A user factor `u_i`.
    User,
    /// An item factor `v_j`.
    Item,
}

/// Deterministic initial factor for one entity.
///
/// Coordinates are i.i.d. uniform on `[-0.5, 0.5)`. Every entity draws from
/// its own ChaCha stream, so the value does not depend on which shard
/// initializes it or in what order.
pub fn init_vector(seed: u64, kind: EntityKind, index: usize, dim: usize) -> FactorVector {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tag = match kind {
        EntityKind::User => 1u64 << 40,
        EntityKind::Item => 2u64 << 40,
    };
    rng.set_stream(tag | index as u64);
    FactorVector((0..dim).map(|_| rng.gen_range(-0.5..0.5)).collect())
}

/// Read access to factors and the balance aggregates, as needed by gradients.
///
/// Implemented by [`FactorMatrices`] and by pulled parameter snapshots.
pub trait FactorView {
    /// Latent dimension `K`.
    fn dim(&self) -> usize;
    /// Factor of user `i`, if available.
    fn user(&self, i: usize) -> Option<&[f64]>;
    /// Factor of item `j`, if available.
    fn item(&self, j: usize) -> Option<&[f64]>;
    /// Sum of active user factors, if available.
    fn user_sum(&self) -> Option<&[f64]>;
    /// Sum of active item factors, if available.
    fn item_sum(&self) -> Option<&[f64]>;
}

/// Dense user and item factors plus the sums over active entities.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorMatrices {
    dim: usize,
    users: Vec<f64>,
    items: Vec<f64>,
    user_active: Vec<bool>,
    item_active: Vec<bool>,
    user_sum: Vec<f64>,
    item_sum: Vec<f64>,
}

impl FactorMatrices {
    /// Zero factors; every entity counts as active.
    pub fn zeros(num_users: usize, num_items: usize, dim: usize) -> Self {
        FactorMatrices {
            dim,
            users: vec![0.0; num_users * dim],
            items: vec![0.0; num_items * dim],
            user_active: vec![true; num_users],
            item_active: vec![true; num_items],
            user_sum: vec![0.0; dim],
            item_sum: vec![0.0; dim],
        }
    }

    /// Seeded initialization over the user/item universe of `data`.
    pub fn random(data: &Dataset, dim: usize, seed: u64) -> Self {
        let mut users = Vec::with_capacity(data.num_users() * dim);
        for i in 0..data.num_users() {
            users.extend_from_slice(&init_vector(seed, EntityKind::User, i, dim));
        }
        let mut items = Vec::with_capacity(data.num_items() * dim);
        for j in 0..data.num_items() {
            items.extend_from_slice(&init_vector(seed, EntityKind::Item, j, dim));
        }
        let mut fm = FactorMatrices::from_rows(dim, users, items);
        fm.set_active(data);
        fm
    }

    /// Wraps row-major factor storage; all entities active.
    ///
    /// # Panics
    /// If either buffer length is not a multiple of `dim`.
    pub fn from_rows(dim: usize, users: Vec<f64>, items: Vec<f64>) -> Self {
        assert!(dim > 0 && users.len().is_multiple_of(dim) && items.len().is_multiple_of(dim));
        let m = users.len() / dim;
        let n = items.len() / dim;
        let mut fm = FactorMatrices {
            dim,
            users,
            items,
            user_active: vec![true; m],
            item_active: vec![true; n],
            user_sum: vec![0.0; dim],
            item_sum: vec![0.0; dim],
        };
        fm.recompute_sums();
        fm
    }

    /// Restricts the balance sums to the active users/items of `data`.
    pub fn set_active(&mut self, data: &Dataset) {
        self.user_active = vec![false; self.num_users()];
        self.item_active = vec![false; self.num_items()];
        for &u in data.active_users() {
            self.user_active[u as usize] = true;
        }
        for &i in data.active_items() {
            self.item_active[i as usize] = true;
        }
        self.recompute_sums();
    }

    /// Number of user rows.
    pub fn num_users(&self) -> usize {
        self.users.len() / self.dim
    }

    /// Number of item rows.
    pub fn num_items(&self) -> usize {
        self.items.len() / self.dim
    }

    /// All user factors, row-major.
    pub fn users(&self) -> &[f64] {
        &self.users
    }

    /// All item factors, row-major.
    pub fn items(&self) -> &[f64] {
        &self.items
    }

    /// Whether user `i` contributes to the balance sum.
    pub fn is_user_active(&self, i: usize) -> bool {
        self.user_active[i]
    }

    /// Whether item `j` contributes to the balance sum.
    pub fn is_item_active(&self, j: usize) -> bool {
        self.item_active[j]
    }

    /// Replaces a user factor, adjusting the sum by `new - old`.
    pub fn set_user(&mut self, i: usize, value: &[f64]) {
        let k = self.dim;
        let row = &mut self.users[i * k..(i + 1) * k];
        if self.user_active[i] {
            for ((s, old), new) in self.user_sum.iter_mut().zip(row.iter()).zip(value) {
                *s += new - old;
            }
        }
        row.copy_from_slice(value);
    }

    /// Replaces an item factor, adjusting the sum by `new - old`.
    pub fn set_item(&mut self, j: usize, value: &[f64]) {
        let k = self.dim;
        let row = &mut self.items[j * k..(j + 1) * k];
        if self.item_active[j] {
            for ((s, old), new) in self.item_sum.iter_mut().zip(row.iter()).zip(value) {
                *s += new - old;
            }
        }
        row.copy_from_slice(value);
    }

    /// Recomputes both sums from scratch, in ascending index order.
    pub fn recompute_sums(&mut self) {
        self.user_sum = sum_rows(&self.users, &self.user_active, self.dim);
        self.item_sum = sum_rows(&self.items, &self.item_active, self.dim);
    }

    /// Overrides the stored sums (used when the sums come from elsewhere).
    pub fn set_sums(&mut self, user_sum: &[f64], item_sum: &[f64]) {
        self.user_sum.copy_from_slice(user_sum);
        self.item_sum.copy_from_slice(item_sum);
    }

    /// Largest per-coordinate gap between stored and recomputed sums.
    pub fn sum_drift(&self) -> f64 {
        let u = sum_rows(&self.users, &self.user_active, self.dim);
        let v = sum_rows(&self.items, &self.item_active, self.dim);
        u.iter()
            .zip(&self.user_sum)
            .chain(v.iter().zip(&self.item_sum))
            .map(|(a, b)| libm::fabs(a - b))
            .fold(0.0, f64::max)
    }

    /// Projects every user and item factor into the `1/sqrt(gamma)` ball and
    /// recomputes the sums.
    pub fn project_all(&mut self, gamma: f64) {
        let k = self.dim;
        for row in self.users.chunks_mut(k).chain(self.items.chunks_mut(k)) {
            update::project_in_place(row, gamma);
        }
        self.recompute_sums();
    }

    /// Largest factor norm.
    pub fn max_norm(&self) -> f64 {
        self.users
            .chunks(self.dim)
            .chain(self.items.chunks(self.dim))
            .map(update::norm)
            .fold(0.0, f64::max)
    }
}

fn sum_rows(rows: &[f64], active: &[bool], dim: usize) -> Vec<f64> {
    let mut sum = vec![0.0; dim];
    for (row, _) in rows.chunks(dim).zip(active).filter(|(_, &a)| a) {
        for (s, x) in sum.iter_mut().zip(row) {
            *s += x;
        }
    }
    sum
}

impl FactorView for FactorMatrices {
    fn dim(&self) -> usize {
        self.dim
    }

    fn user(&self, i: usize) -> Option<&[f64]> {
        self.users.get(i * self.dim..(i + 1) * self.dim)
    }

    fn item(&self, j: usize) -> Option<&[f64]> {
        self.items.get(j * self.dim..(j + 1) * self.dim)
    }

    fn user_sum(&self) -> Option<&[f64]> {
        Some(&self.user_sum)
    }

    fn item_sum(&self) -> Option<&[f64]> {
        Some(&self.item_sum)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::RatingScale;

    #[test]
    fn init_is_seeded_and_bounded() {
        let a = init_vector(7, EntityKind::User, 3, 16);
        assert_eq!(a, init_vector(7, EntityKind::User, 3, 16));
        assert_ne!(a, init_vector(7, EntityKind::Item, 3, 16));
        assert_ne!(a, init_vector(8, EntityKind::User, 3, 16));
        assert!(a.iter().all(|x| (-0.5..0.5).contains(x)));
    }

    #[test]
    fn sums_cover_active_entities_only() {
        let d =
            Dataset::from_raw(3, 2, &[(0, 1, 5.0), (2, 1, 4.0)], RatingScale::FIVE_STARS).unwrap();
        let mut fm = FactorMatrices::random(&d, 4, 1);
        let expect: Vec<f64> = (0..4)
            .map(|k| fm.user(0).unwrap()[k] + fm.user(2).unwrap()[k])
            .collect();
        assert_eq!(fm.user_sum().unwrap(), &expect[..]);
        assert_eq!(fm.item_sum().unwrap(), fm.item(1).unwrap());

        fm.set_user(0, &[1.0, 1.0, 1.0, 1.0]);
        fm.set_user(1, &[9.0, 9.0, 9.0, 9.0]);
        assert!(fm.sum_drift() < 1e-12);
    }

    #[test]
    fn project_all_bounds_norms() {
        let mut fm = FactorMatrices::from_rows(2, vec![3.0, 4.0, 0.1, 0.1], vec![0.0, 2.0]);
        fm.project_all(1.0);
        assert!(fm.max_norm() <= 1.0);
        assert_eq!(fm.user(1).unwrap(), &[0.1, 0.1]);
        assert!(fm.sum_drift() == 0.0);
    }
}

use alloc::vec;

use crate::error::{Error, Result};

use super::{Dataset, FactorMatrices, FactorVector, FactorView, RatingTriple};

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn check_dims(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            expected: a.len(),
            found: b.len(),
        });
    }
    Ok(())
}

/// Relaxed similarity `1/2 + u·v / (2K)`, not clamped.
pub fn predict_relaxed(u: &[f64], v: &[f64]) -> Result<f64> {
    check_dims(u, v)?;
    Ok(relaxed(u, v))
}

#[inline]
fn relaxed(u: &[f64], v: &[f64]) -> f64 {
    0.5 + dot(u, v) / (2.0 * u.len() as f64)
}

fn check_shape(data: &Dataset, fm: &FactorMatrices) -> Result<()> {
    if fm.num_users() != data.num_users() {
        return Err(Error::LengthMismatch {
            expected: data.num_users(),
            found: fm.num_users(),
        });
    }
    if fm.num_items() != data.num_items() {
        return Err(Error::LengthMismatch {
            expected: data.num_items(),
            found: fm.num_items(),
        });
    }
    Ok(())
}

fn active_sum_sq(rows: &[f64], active: &[u32], dim: usize) -> f64 {
    let mut sum = vec![0.0; dim];
    for &i in active {
        let row = &rows[i as usize * dim..(i as usize + 1) * dim];
        for (s, x) in sum.iter_mut().zip(row) {
            *s += x;
        }
    }
    dot(&sum, &sum)
}

/// Collaborative-hashing objective on relaxed factors:
/// `Σ (r - 1/2 - u·v/(2K))² + λ (||Σ u_i||² + ||Σ v_j||²)`, with the sums
/// over the users and items that appear in `data`.
pub fn dch_loss(data: &Dataset, fm: &FactorMatrices, lambda: f64) -> Result<f64> {
    check_shape(data, fm)?;
    let mut loss = 0.0;
    for t in data.triples() {
        let (u, v) = factors(fm, t)?;
        let e = t.rating - relaxed(u, v);
        loss += e * e;
    }
    let dim = fm.dim();
    let reg = active_sum_sq(fm.users(), data.active_users(), dim)
        + active_sum_sq(fm.items(), data.active_items(), dim);
    Ok(loss + lambda * reg)
}

fn factors<'a, V: FactorView>(view: &'a V, t: &RatingTriple) -> Result<(&'a [f64], &'a [f64])> {
    let u = view.user(t.user as usize).ok_or(Error::MissingFactor {
        entity: "user",
        index: t.user as usize,
    })?;
    let v = view.item(t.item as usize).ok_or(Error::MissingFactor {
        entity: "item",
        index: t.item as usize,
    })?;
    Ok((u, v))
}

#[derive(Clone, Copy)]
enum Side {
    User,
    Item,
}

fn check_batch(side: Side, index: usize, batch: &[RatingTriple]) -> Result<()> {
    for t in batch {
        let owner = match side {
            Side::User => t.user as usize,
            Side::Item => t.item as usize,
        };
        if owner != index {
            return Err(Error::BatchEntityMismatch {
                expected: index,
                found: owner,
            });
        }
    }
    Ok(())
}

fn dch_grad<V: FactorView>(
    side: Side,
    index: usize,
    batch: &[RatingTriple],
    view: &V,
    lambda: f64,
) -> Result<FactorVector> {
    check_batch(side, index, batch)?;
    let k = view.dim();
    let mut g = FactorVector::zeros(k);
    let inv_k = 1.0 / k as f64;
    for t in batch {
        let (u, v) = factors(view, t)?;
        let e = t.rating - relaxed(u, v);
        let other = match side {
            Side::User => v,
            Side::Item => u,
        };
        for (gi, o) in g.iter_mut().zip(other) {
            *gi -= inv_k * e * o;
        }
    }
    if lambda != 0.0 {
        let (sum, entity) = match side {
            Side::User => (view.user_sum(), "user sum"),
            Side::Item => (view.item_sum(), "item sum"),
        };
        let sum = sum.ok_or(Error::MissingFactor { entity, index: 0 })?;
        check_dims(&g, sum)?;
        for (gi, s) in g.iter_mut().zip(sum) {
            *gi += 2.0 * lambda * s;
        }
    }
    Ok(g)
}

/// Gradient of the hashing objective w.r.t. `u_i` over the triples of user `i`:
/// `-(1/K) Σ_j (r_ij - 1/2 - u_i·v_j/(2K)) v_j + 2λ Σ u`.
///
/// The balance term uses whatever user sum `view` holds, which inside the
/// parameter-server runtime may lag by up to one synchronization period.
pub fn grad_user<V: FactorView>(
    user: usize,
    batch: &[RatingTriple],
    view: &V,
    lambda: f64,
) -> Result<FactorVector> {
    dch_grad(Side::User, user, batch, view, lambda)
}

/// Gradient of the hashing objective w.r.t. `v_j`; mirror of [`grad_user`].
pub fn grad_item<V: FactorView>(
    item: usize,
    batch: &[RatingTriple],
    view: &V,
    lambda: f64,
) -> Result<FactorVector> {
    dch_grad(Side::Item, item, batch, view, lambda)
}

/// Matrix-factorization loss `Σ (r - u·v)² + λ (Σ ||u_i||² + Σ ||v_j||²)`.
pub fn mf_loss(data: &Dataset, fm: &FactorMatrices, lambda: f64) -> Result<f64> {
    check_shape(data, fm)?;
    let mut loss = 0.0;
    for t in data.triples() {
        let (u, v) = factors(fm, t)?;
        let e = t.rating - dot(u, v);
        loss += e * e;
    }
    let reg: f64 = fm.users().iter().chain(fm.items()).map(|x| x * x).sum();
    Ok(loss + lambda * reg)
}

fn mf_grad<V: FactorView>(
    side: Side,
    index: usize,
    batch: &[RatingTriple],
    view: &V,
    lambda: f64,
) -> Result<FactorVector> {
    check_batch(side, index, batch)?;
    let own = match side {
        Side::User => view.user(index).ok_or(Error::MissingFactor {
            entity: "user",
            index,
        })?,
        Side::Item => view.item(index).ok_or(Error::MissingFactor {
            entity: "item",
            index,
        })?,
    };
    let mut g = FactorVector::zeros(view.dim());
    for t in batch {
        let (u, v) = factors(view, t)?;
        let e = t.rating - dot(u, v);
        let other = match side {
            Side::User => v,
            Side::Item => u,
        };
        for (gi, o) in g.iter_mut().zip(other) {
            *gi -= 2.0 * e * o;
        }
    }
    for (gi, x) in g.iter_mut().zip(own) {
        *gi += 2.0 * lambda * x;
    }
    Ok(g)
}

/// MF gradient w.r.t. `u_i`: `-2 Σ_j (r_ij - u_i·v_j) v_j + 2λ u_i`.
pub fn mf_grad_user<V: FactorView>(
    user: usize,
    batch: &[RatingTriple],
    view: &V,
    lambda: f64,
) -> Result<FactorVector> {
    mf_grad(Side::User, user, batch, view, lambda)
}

/// MF gradient w.r.t. `v_j`.
pub fn mf_grad_item<V: FactorView>(
    item: usize,
    batch: &[RatingTriple],
    view: &V,
    lambda: f64,
) -> Result<FactorVector> {
    mf_grad(Side::Item, item, batch, view, lambda)
}

/// The loss being minimized by a training run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Objective {
    /// Collaborative hashing with bit-balance weight `lambda`.
    Dch {
        /// Balance weight.
        lambda: f64,
    },
    /// Matrix factorization with L2 weight `lambda`.
    MatrixFactorization {
        /// L2 weight.
        lambda: f64,
    },
}

impl Objective {
    /// Whether gradients need the global factor sums.
    pub fn uses_balance_sums(&self) -> bool {
        matches!(self, Objective::Dch { lambda } if *lambda != 0.0)
    }

    /// Gradient w.r.t. one user over its triples in a minibatch.
    pub fn user_gradient<V: FactorView>(
        &self,
        user: usize,
        batch: &[RatingTriple],
        view: &V,
    ) -> Result<FactorVector> {
        match *self {
            Objective::Dch { lambda } => grad_user(user, batch, view, lambda),
            Objective::MatrixFactorization { lambda } => mf_grad_user(user, batch, view, lambda),
        }
    }

    /// Gradient w.r.t. one item over its triples in a minibatch.
    pub fn item_gradient<V: FactorView>(
        &self,
        item: usize,
        batch: &[RatingTriple],
        view: &V,
    ) -> Result<FactorVector> {
        match *self {
            Objective::Dch { lambda } => grad_item(item, batch, view, lambda),
            Objective::MatrixFactorization { lambda } => mf_grad_item(item, batch, view, lambda),
        }
    }

    /// Full-data loss.
    pub fn loss(&self, data: &Dataset, fm: &FactorMatrices) -> Result<f64> {
        match *self {
            Objective::Dch { lambda } => dch_loss(data, fm, lambda),
            Objective::MatrixFactorization { lambda } => mf_loss(data, fm, lambda),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::code::{similarity, HashCode};
    use crate::model::RatingScale;
    use alloc::vec::Vec;
    use proptest::prelude::*;

    fn one_pair(u: &[f64], v: &[f64], raw: f64) -> (Dataset, FactorMatrices) {
        let d = Dataset::from_raw(1, 1, &[(0, 0, raw)], RatingScale::Binary).unwrap();
        let fm = FactorMatrices::from_rows(u.len(), u.to_vec(), v.to_vec());
        (d, fm)
    }

    #[test]
    fn predict_examples() {
        assert_eq!(predict_relaxed(&[0.0; 3], &[0.0; 3]).unwrap(), 0.5);
        assert_eq!(predict_relaxed(&[1.0, 1.0], &[1.0, 1.0]).unwrap(), 1.0);
        assert_eq!(predict_relaxed(&[0.5, -0.5], &[1.0, 1.0]).unwrap(), 0.5);
        assert!(predict_relaxed(&[1.0], &[1.0, 1.0]).is_err());
    }

    #[test]
    fn loss_examples() {
        let (d, fm) = one_pair(&[1.0, 1.0], &[1.0, 1.0], 1.0);
        assert_eq!(dch_loss(&d, &fm, 0.0).unwrap(), 0.0);
        let (d, fm) = one_pair(&[0.0, 0.0], &[0.0, 0.0], 0.0);
        assert_eq!(dch_loss(&d, &fm, 0.0).unwrap(), 0.25);

        // two users sharing u = (1, 0); item factor zero so only the user sum counts
        let d = Dataset::from_raw(2, 1, &[(0, 0, 1.0), (1, 0, 1.0)], RatingScale::Binary).unwrap();
        let fm = FactorMatrices::from_rows(2, vec![1.0, 0.0, 1.0, 0.0], vec![0.0, 0.0]);
        let data_term = 2.0 * 0.25;
        let total = dch_loss(&d, &fm, 0.1).unwrap();
        assert!((total - data_term - 0.4).abs() < 1e-15);
    }

    #[test]
    fn gradient_examples() {
        let (_, fm) = one_pair(&[0.0], &[1.0], 1.0);
        assert_eq!(grad_user(0, &[], &fm, 0.0).unwrap().0, vec![0.0]);
        assert_eq!(grad_item(0, &[], &fm, 0.0).unwrap().0, vec![0.0]);
        let g = grad_user(0, &[RatingTriple::new(0, 0, 1.0)], &fm, 0.0).unwrap();
        assert_eq!(g.0, vec![-0.5]);

        let (_, fm) = one_pair(&[1.0], &[0.0], 0.0);
        let g = grad_item(0, &[RatingTriple::new(0, 0, 0.0)], &fm, 0.0).unwrap();
        assert_eq!(g.0, vec![0.5]);

        // empty batch leaves only the balance term
        let fm = FactorMatrices::from_rows(2, vec![0.25, -0.5], vec![0.0, 0.0]);
        let g = grad_user(0, &[], &fm, 0.5).unwrap();
        assert_eq!(g.0, vec![0.25, -0.5]);
    }

    #[test]
    fn batch_must_belong_to_entity() {
        let fm = FactorMatrices::zeros(2, 2, 2);
        let err = grad_user(0, &[RatingTriple::new(1, 0, 1.0)], &fm, 0.0).unwrap_err();
        assert_eq!(
            err,
            Error::BatchEntityMismatch {
                expected: 0,
                found: 1
            }
        );
    }

    #[test]
    fn mf_examples() {
        let (d, fm) = one_pair(&[1.0], &[1.0], 1.0);
        assert_eq!(mf_loss(&d, &fm, 0.0).unwrap(), 0.0);
        let b = [RatingTriple::new(0, 0, 1.0)];
        assert_eq!(mf_grad_user(0, &b, &fm, 0.0).unwrap().0, vec![0.0]);
        assert_eq!(mf_grad_item(0, &b, &fm, 0.0).unwrap().0, vec![0.0]);
    }

    proptest! {
        #[test]
        fn relaxed_prediction_matches_code_similarity(
            bits in prop::collection::vec(any::<bool>(), 1..80),
            other in prop::collection::vec(any::<bool>(), 80),
        ) {
            let k = bits.len();
            let a = HashCode::from_bools(&bits);
            let b = HashCode::from_bools(&other[..k]);
            let pred = predict_relaxed(&a.to_signs(), &b.to_signs()).unwrap();
            let sim = similarity(&a, &b).unwrap();
            if k.is_power_of_two() {
                prop_assert_eq!(pred, sim);
            } else {
                // 1/2 + a·b/(2K) and 1 - d/K round differently when K is not a power of two
                prop_assert!((pred - sim).abs() <= 2.0 * f64::EPSILON);
            }
        }
    }

    #[test]
    fn mf_gradient_scales_with_residual() {
        let d: Vec<RatingTriple> = vec![RatingTriple::new(0, 0, 0.0)];
        let fm = FactorMatrices::from_rows(1, vec![1.0], vec![2.0]);
        // residual -2, grad = -2 * (-2) * 2 = 8
        assert_eq!(mf_grad_user(0, &d, &fm, 0.0).unwrap().0, vec![8.0]);
    }
}

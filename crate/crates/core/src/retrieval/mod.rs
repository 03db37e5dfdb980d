//! Online recommendation over binary codes.
//!
//! Four exact Hamming-space methods share one code layout ([`CodeSet`]):
//! linear radius search, hash-table lookup over the Hamming ball, Hamming
//! ranking by popcount, and multi-index hashing. [`realvalued_topk`] is the
//! inner-product baseline that the hashing methods are benchmarked against.
//!
//! Ties are always broken by ascending item position.

mod ball;
mod lookup;
mod multi_index;
mod recommend;

use alloc::collections::BinaryHeap;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::code::{word_distance, CodeSet, HashCode};
use crate::error::{Error, Result};

pub use ball::ball_size;
pub use lookup::{lookup_search, HashIndex, Lookup, MAX_PROBES};
pub use multi_index::{multi_index_search, MultiIndex};
pub use recommend::{Method, Query, QueryParams, Recommendation, Recommender};

/// Items within Hamming distance `radius` of `query`, by linear scan.
///
/// Returns `(position, distance)` in ascending position order.
pub fn radius_search(query: &HashCode, items: &CodeSet, radius: u32) -> Result<Vec<(usize, u32)>> {
    items.check_query(query)?;
    let q = query.words();
    Ok((0..items.len())
        .filter_map(|p| {
            let d = word_distance(q, items.words(p));
            (d <= radius).then_some((p, d))
        })
        .collect())
}

/// The `k` items closest to `query`, ordered by `(distance, position)`.
///
/// Returns every item when `k` exceeds the set size.
pub fn hamming_rank_topk(query: &HashCode, items: &CodeSet, k: usize) -> Result<Vec<(usize, u32)>> {
    hamming_rank_topk_by(query, items, k, |_| true)
}

/// [`hamming_rank_topk`] restricted to positions for which `keep` holds.
///
/// Distances are bucketed (they lie in `[0, K]`), so the cost is one
/// popcount pass plus one selection pass, independent of `k`.
pub fn hamming_rank_topk_by<F>(
    query: &HashCode,
    items: &CodeSet,
    k: usize,
    keep: F,
) -> Result<Vec<(usize, u32)>>
where
    F: Fn(usize) -> bool,
{
    items.check_query(query)?;
    if k == 0 || items.is_empty() {
        return Ok(Vec::new());
    }
    let q = query.words();
    let mut counts = vec![0usize; items.bits() + 1];
    let mut scored: Vec<(u32, u32)> = Vec::with_capacity(items.len());
    if items.stride() == 1 {
        let q0 = q[0];
        for p in 0..items.len() {
            if keep(p) {
                let d = (q0 ^ items.words(p)[0]).count_ones();
                counts[d as usize] += 1;
                scored.push((p as u32, d));
            }
        }
    } else {
        for p in 0..items.len() {
            if keep(p) {
                let d = word_distance(q, items.words(p));
                counts[d as usize] += 1;
                scored.push((p as u32, d));
            }
        }
    }

    let k = k.min(scored.len());
    let mut cutoff = 0usize;
    let mut below = 0usize;
    while below + counts[cutoff] < k {
        below += counts[cutoff];
        cutoff += 1;
    }
    let mut at_cutoff = k - below;
    let mut out: Vec<(usize, u32)> = Vec::with_capacity(k);
    for &(p, d) in &scored {
        let d_us = d as usize;
        if d_us < cutoff {
            out.push((p as usize, d));
        } else if d_us == cutoff && at_cutoff > 0 {
            out.push((p as usize, d));
            at_cutoff -= 1;
        }
    }
    // positions are already ascending; a stable sort on distance finishes the order
    out.sort_by_key(|&(_, d)| d);
    Ok(out)
}

fn score_order(a: &(usize, f64), b: &(usize, f64)) -> Ordering {
    b.1.total_cmp(&a.1).then(a.0.cmp(&b.0))
}

/// The `k` items with the largest inner product `query · v_j`.
///
/// `items` is row-major with `query.len()` columns. Ties go to the lower
/// position.
pub fn realvalued_topk(query: &[f64], items: &[f64], k: usize) -> Result<Vec<(usize, f64)>> {
    realvalued_topk_by(query, items, k, |_| true)
}

/// [`realvalued_topk`] restricted to positions for which `keep` holds.
pub fn realvalued_topk_by<F>(
    query: &[f64],
    items: &[f64],
    k: usize,
    keep: F,
) -> Result<Vec<(usize, f64)>>
where
    F: Fn(usize) -> bool,
{
    let dim = query.len();
    if dim == 0 || !items.len().is_multiple_of(dim) {
        return Err(Error::LengthMismatch {
            expected: dim,
            found: items.len(),
        });
    }
    let n = items.len() / dim;
    // `+ 0.0` folds -0.0 into 0.0 so that the total order used for ties
    // agrees with numeric equality.
    let dot = |v: &[f64]| -> f64 { query.iter().zip(v).map(|(a, b)| a * b).sum::<f64>() + 0.0 };
    if k == 0 || n == 0 {
        return Ok(Vec::new());
    }
    if k.saturating_mul(8) >= n {
        let mut scored: Vec<(usize, f64)> = items
            .chunks_exact(dim)
            .enumerate()
            .filter(|(p, _)| keep(*p))
            .map(|(p, v)| (p, dot(v)))
            .collect();
        let k = k.min(scored.len());
        if k == 0 {
            return Ok(Vec::new());
        }
        if k < scored.len() {
            scored.select_nth_unstable_by(k - 1, score_order);
            scored.truncate(k);
        }
        scored.sort_unstable_by(score_order);
        return Ok(scored);
    }
    // Small k: one streaming pass keeping the k best in a heap whose top is
    // the current worst. Positions ascend, so an equal score never displaces.
    let mut heap: BinaryHeap<Ranked> = BinaryHeap::with_capacity(k + 1);
    for (p, v) in items.chunks_exact(dim).enumerate() {
        if !keep(p) {
            continue;
        }
        let s = dot(v);
        if heap.len() < k {
            heap.push(Ranked(p, s));
        } else if s > heap.peek().map_or(f64::NEG_INFINITY, |w| w.1) {
            heap.pop();
            heap.push(Ranked(p, s));
        }
    }
    let mut out: Vec<(usize, f64)> = heap.into_iter().map(|r| (r.0, r.1)).collect();
    out.sort_unstable_by(score_order);
    Ok(out)
}

/// Heap entry ordered so that the worst-ranked item compares greatest.
struct Ranked(usize, f64);

impl PartialEq for Ranked {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Ranked {}

impl PartialOrd for Ranked {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Ranked {
    fn cmp(&self, other: &Self) -> Ordering {
        score_order(&(self.0, self.1), &(other.0, other.1))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::format;

    fn set(codes: &[u64], bits: usize) -> CodeSet {
        let codes: Vec<_> = codes
            .iter()
            .map(|&w| HashCode::from_words(bits, vec![w]).unwrap())
            .collect();
        CodeSet::from_codes(bits, &codes, None).unwrap()
    }

    #[test]
    fn radius_examples() {
        let items = set(&[0b0000, 0b0001, 0b0011, 0b1111, 0b0000], 4);
        let q = HashCode::from_words(4, vec![0]).unwrap();
        assert_eq!(radius_search(&q, &items, 4).unwrap().len(), 5);
        assert_eq!(radius_search(&q, &items, 0).unwrap(), vec![(0, 0), (4, 0)]);
        assert_eq!(
            radius_search(&q, &items, 1).unwrap(),
            vec![(0, 0), (1, 1), (4, 0)]
        );
    }

    #[test]
    fn rank_examples() {
        let items = set(&[0b1111, 0b0001, 0b0000, 0b0011, 0b0000], 4);
        let q = HashCode::from_words(4, vec![0]).unwrap();
        let full = hamming_rank_topk(&q, &items, 5).unwrap();
        assert_eq!(full, vec![(2, 0), (4, 0), (1, 1), (3, 2), (0, 4)]);
        assert_eq!(hamming_rank_topk(&q, &items, 99).unwrap(), full);
        assert_eq!(hamming_rank_topk(&q, &items, 1).unwrap(), vec![(2, 0)]);
        assert_eq!(
            hamming_rank_topk(&q, &items, 3).unwrap(),
            full[..3].to_vec()
        );
        let filtered = hamming_rank_topk_by(&q, &items, 2, |p| p != 2).unwrap();
        assert_eq!(filtered, vec![(4, 0), (1, 1)]);
    }

    #[test]
    fn rank_rejects_wrong_length() {
        let items = set(&[0], 4);
        assert!(hamming_rank_topk(&HashCode::zeros(5), &items, 1).is_err());
    }

    #[test]
    fn realvalued_examples() {
        let items = [1.0, 0.0, 1.0, 0.0, 1.0, 0.0];
        assert_eq!(
            realvalued_topk(&[1.0, 1.0], &items, 2).unwrap(),
            vec![(0, 1.0), (1, 1.0)]
        );
        let items = [0.1, 0.2, 0.9, 0.1, 0.3, 0.3];
        assert_eq!(
            realvalued_topk(&[1.0, 1.0], &items, 1).unwrap(),
            vec![(1, 1.0)]
        );
        assert!(realvalued_topk(&[1.0, 1.0], &[1.0, 2.0, 3.0], 1).is_err());
        let all = realvalued_topk(&[1.0, 0.0], &items, 10).unwrap();
        assert_eq!(
            all.iter().map(|x| x.0).collect::<Vec<_>>(),
            vec![1, 2, 0],
            "{}",
            format!("{all:?}")
        );
    }
}

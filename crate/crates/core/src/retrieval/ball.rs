//! Enumeration of Hamming balls.

use alloc::vec::Vec;

/// `Σ_{d ≤ radius} C(bits, d)`, saturating.
pub fn ball_size(bits: usize, radius: usize) -> u128 {
    let mut total: u128 = 0;
    let mut c: u128 = 1;
    for d in 0..=radius.min(bits) {
        if d > 0 {
            c = match c.checked_mul((bits - d + 1) as u128) {
                Some(x) => x / d as u128,
                None => return u128::MAX,
            };
        }
        total = total.saturating_add(c);
    }
    total
}

/// Advances `idx` (strictly increasing, values `< n`) to the next
/// combination in lexicographic order. Returns `false` when exhausted.
fn next_combination(idx: &mut [usize], n: usize) -> bool {
    let d = idx.len();
    let mut p = d;
    while p > 0 {
        p -= 1;
        if idx[p] < n - d + p {
            idx[p] += 1;
            for q in p + 1..d {
                idx[q] = idx[q - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Calls `visit` on every code within `radius` of `base` (`bits` significant
/// bits), starting with `base` itself and growing outward by distance.
pub(crate) fn for_each_in_ball<F: FnMut(&[u64])>(
    base: &[u64],
    bits: usize,
    radius: usize,
    mut visit: F,
) {
    let mut probe = base.to_vec();
    visit(&probe);
    let mut idx: Vec<usize> = Vec::with_capacity(radius);
    for d in 1..=radius.min(bits) {
        idx.clear();
        idx.extend(0..d);
        loop {
            for &i in &idx {
                probe[i / 64] ^= 1u64 << (i % 64);
            }
            visit(&probe);
            for &i in &idx {
                probe[i / 64] ^= 1u64 << (i % 64);
            }
            if !next_combination(&mut idx, bits) {
                break;
            }
        }
    }
}

/// Single-word variant of [`for_each_in_ball`] for substrings of at most 64 bits.
pub(crate) fn for_each_in_word_ball<F: FnMut(u64)>(
    base: u64,
    bits: usize,
    radius: usize,
    mut visit: F,
) {
    visit(base);
    let mut idx: Vec<usize> = Vec::with_capacity(radius);
    for d in 1..=radius.min(bits) {
        idx.clear();
        idx.extend(0..d);
        loop {
            let mask = idx.iter().fold(0u64, |m, &i| m | 1u64 << i);
            visit(base ^ mask);
            if !next_combination(&mut idx, bits) {
                break;
            }
        }
    }
}

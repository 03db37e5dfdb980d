use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use crate::code::{word_distance, CodeSet, HashCode};
use crate::error::{Error, Result};

use super::ball::{ball_size, for_each_in_word_ball};
use super::lookup::MAX_PROBES;

/// Multi-index hashing: the code is cut into `m` contiguous substrings and
/// each substring gets its own table.
///
/// If two codes are within distance `r`, at least one of their `m` substring
/// pairs is within `floor(r / m)`, so probing each table with that smaller
/// radius finds every true neighbor.
#[derive(Debug, Clone)]
pub struct MultiIndex {
    bits: usize,
    /// `(start bit, length)` per substring; lengths differ by at most one.
    spans: Vec<(usize, usize)>,
    tables: Vec<BTreeMap<u64, Vec<u32>>>,
}

fn extract(words: &[u64], start: usize, len: usize) -> u64 {
    let w = start / 64;
    let off = start % 64;
    let mut v = words[w] >> off;
    if off + len > 64 {
        v |= words[w + 1] << (64 - off);
    }
    if len < 64 {
        v & ((1u64 << len) - 1)
    } else {
        v
    }
}

impl MultiIndex {
    /// Builds `m` substring tables over `items`.
    pub fn build(items: &CodeSet, m: usize) -> Result<Self> {
        let bits = items.bits();
        if m == 0 || m > bits || bits.div_ceil(m) > 64 {
            return Err(Error::InvalidSubcodes { subcodes: m, bits });
        }
        let (base, extra) = (bits / m, bits % m);
        let mut spans = Vec::with_capacity(m);
        let mut start = 0;
        for s in 0..m {
            let len = base + usize::from(s < extra);
            spans.push((start, len));
            start += len;
        }
        let mut tables = alloc::vec![BTreeMap::<u64, Vec<u32>>::new(); m];
        for p in 0..items.len() {
            let w = items.words(p);
            for (table, &(start, len)) in tables.iter_mut().zip(&spans) {
                table
                    .entry(extract(w, start, len))
                    .or_default()
                    .push(p as u32);
            }
        }
        Ok(MultiIndex {
            bits,
            spans,
            tables,
        })
    }

    /// Number of substrings `m`.
    pub fn subcodes(&self) -> usize {
        self.spans.len()
    }

    /// Substring boundaries as `(start, length)`.
    pub fn spans(&self) -> &[(usize, usize)] {
        &self.spans
    }

    /// Splits `code` into its substring values.
    pub fn substrings(&self, code: &HashCode) -> Vec<u64> {
        self.spans
            .iter()
            .map(|&(s, l)| extract(code.words(), s, l))
            .collect()
    }

    /// Candidate positions: union of substring-table hits within
    /// `floor(radius / m)`, ascending and deduplicated, plus the probe count.
    pub fn candidates(&self, query: &HashCode, radius: u32) -> Result<(Vec<usize>, u64)> {
        if query.bits() != self.bits {
            return Err(Error::LengthMismatch {
                expected: self.bits,
                found: query.bits(),
            });
        }
        let sub_radius = radius as usize / self.spans.len();
        let needed: u128 = self
            .spans
            .iter()
            .map(|&(_, len)| ball_size(len, sub_radius))
            .fold(0u128, u128::saturating_add);
        if needed > MAX_PROBES {
            return Err(Error::RadiusTooLarge {
                probes: needed,
                limit: MAX_PROBES,
            });
        }
        let mut found = Vec::new();
        let mut probes = 0u64;
        for (table, &(start, len)) in self.tables.iter().zip(&self.spans) {
            let q = extract(query.words(), start, len);
            for_each_in_word_ball(q, len, sub_radius, |probe| {
                probes += 1;
                if let Some(bucket) = table.get(&probe) {
                    found.extend(bucket.iter().map(|&p| p as usize));
                }
            });
        }
        found.sort_unstable();
        found.dedup();
        Ok((found, probes))
    }
}

/// Items within `radius` of `query` via multi-index candidate generation and
/// full-distance verification. Output is `(position, distance)`, ascending
/// position.
pub fn multi_index_search(
    query: &HashCode,
    index: &MultiIndex,
    items: &CodeSet,
    radius: u32,
) -> Result<Vec<(usize, u32)>> {
    items.check_query(query)?;
    let (candidates, _) = index.candidates(query, radius)?;
    Ok(candidates
        .into_iter()
        .filter_map(|p| {
            let d = word_distance(query.words(), items.words(p));
            (d <= radius).then_some((p, d))
        })
        .collect())
}

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use crate::code::{CodeSet, HashCode};
use crate::error::{Error, Result};

use super::ball::{ball_size, for_each_in_ball};

/// Refusal threshold for Hamming-ball enumeration.
pub const MAX_PROBES: u128 = 10_000_000;

/// Full-code hash table: each distinct code maps to the positions holding it.
#[derive(Debug, Clone)]
pub struct HashIndex {
    bits: usize,
    table: BTreeMap<Vec<u64>, Vec<u32>>,
}

/// Result of a table lookup.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Lookup {
    /// Matching positions, ascending.
    pub positions: Vec<usize>,
    /// Number of buckets probed.
    pub probes: u64,
}

impl HashIndex {
    /// Buckets every code of `items` under its full code.
    pub fn build(items: &CodeSet) -> Self {
        let mut table: BTreeMap<Vec<u64>, Vec<u32>> = BTreeMap::new();
        for p in 0..items.len() {
            table
                .entry(items.words(p).to_vec())
                .or_default()
                .push(p as u32);
        }
        HashIndex {
            bits: items.bits(),
            table,
        }
    }

    /// Code length of the indexed set.
    pub fn bits(&self) -> usize {
        self.bits
    }

    /// Number of distinct codes.
    pub fn bucket_count(&self) -> usize {
        self.table.len()
    }

    /// Bucket sizes, largest first; useful for judging lookup cost.
    pub fn bucket_sizes(&self) -> Vec<usize> {
        let mut sizes: Vec<usize> = self.table.values().map(Vec::len).collect();
        sizes.sort_unstable_by(|a, b| b.cmp(a));
        sizes
    }

    /// Probes every code within `radius` of `query`.
    pub fn lookup(&self, query: &HashCode, radius: u32) -> Result<Lookup> {
        if query.bits() != self.bits {
            return Err(Error::LengthMismatch {
                expected: self.bits,
                found: query.bits(),
            });
        }
        let probes_needed = ball_size(self.bits, radius as usize);
        if probes_needed > MAX_PROBES {
            return Err(Error::RadiusTooLarge {
                probes: probes_needed,
                limit: MAX_PROBES,
            });
        }
        let mut positions = Vec::new();
        let mut probes = 0u64;
        for_each_in_ball(query.words(), self.bits, radius as usize, |probe| {
            probes += 1;
            if let Some(bucket) = self.table.get(probe) {
                positions.extend(bucket.iter().map(|&p| p as usize));
            }
        });
        positions.sort_unstable();
        Ok(Lookup { positions, probes })
    }
}

/// Positions of items within `radius` of `query`, found by hash-table probes.
pub fn lookup_search(query: &HashCode, index: &HashIndex, radius: u32) -> Result<Vec<usize>> {
    Ok(index.lookup(query, radius)?.positions)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn set(words: &[u64], bits: usize) -> CodeSet {
        let codes: Vec<_> = words
            .iter()
            .map(|&w| HashCode::from_words(bits, vec![w]).unwrap())
            .collect();
        CodeSet::from_codes(bits, &codes, None).unwrap()
    }

    #[test]
    fn probe_counts() {
        let items = set(&[0b0000, 0b0001, 0b0110, 0b0000], 4);
        let index = HashIndex::build(&items);
        assert_eq!(index.bucket_count(), 3);
        assert_eq!(index.bucket_sizes(), vec![2, 1, 1]);
        let q = HashCode::from_words(4, vec![0]).unwrap();
        let r0 = index.lookup(&q, 0).unwrap();
        assert_eq!(r0.probes, 1);
        assert_eq!(r0.positions, vec![0, 3]);
        let r1 = index.lookup(&q, 1).unwrap();
        assert_eq!(r1.probes, 5);
        assert_eq!(r1.positions, vec![0, 1, 3]);
    }

    #[test]
    fn refuses_huge_balls() {
        let items = set(&[0], 64);
        let index = HashIndex::build(&items);
        let q = HashCode::zeros(64);
        assert!(matches!(
            index.lookup(&q, 6),
            Err(Error::RadiusTooLarge { .. })
        ));
        assert!(index.lookup(&q, 3).is_ok());
    }
}

//! Packed binary codes.
//!
//! A `K`-bit code stores coordinate `k` at bit `k % 64` of word `k / 64`
//! (little-endian bit order). A set bit encodes `+1`, a clear bit `-1`.
//! Padding bits past `K` are always zero, so XOR + popcount over whole
//! words yields the Hamming distance.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Number of 64-bit words needed for `bits` bits.
#[inline]
pub const fn words_for(bits: usize) -> usize {
    bits.div_ceil(64)
}

#[inline]
fn tail_mask(bits: usize) -> u64 {
    match bits % 64 {
        0 => u64::MAX,
        r => (1u64 << r) - 1,
    }
}

/// A `K`-bit binary code with `{-1, +1}` semantics.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct HashCode {
    bits: usize,
    words: Vec<u64>,
}

impl HashCode {
    /// All-`-1` code of length `bits`.
    pub fn zeros(bits: usize) -> Self {
        HashCode {
            bits,
            words: vec![0; words_for(bits)],
        }
    }

    /// Builds a code from raw words, rejecting set padding bits.
    pub fn from_words(bits: usize, words: Vec<u64>) -> Result<Self> {
        if words.len() != words_for(bits) {
            return Err(Error::LengthMismatch {
                expected: words_for(bits),
                found: words.len(),
            });
        }
        if let Some(last) = words.last() {
            if last & !tail_mask(bits) != 0 {
                return Err(Error::NonZeroPadding);
            }
        }
        Ok(HashCode { bits, words })
    }

    /// Sets bit `k` for every `true` entry.
    pub fn from_bools(bools: &[bool]) -> Self {
        let mut code = HashCode::zeros(bools.len());
        for (k, &b) in bools.iter().enumerate() {
            code.set(k, b);
        }
        code
    }

    /// `+1` for strictly positive entries, `-1` otherwise.
    pub fn from_signs(values: &[f64]) -> Self {
        let mut code = HashCode::zeros(values.len());
        for (k, &x) in values.iter().enumerate() {
            code.set(k, x > 0.0);
        }
        code
    }

    /// Code length `K`.
    #[inline]
    pub fn bits(&self) -> usize {
        self.bits
    }

    /// Packed words.
    #[inline]
    pub fn words(&self) -> &[u64] {
        &self.words
    }

    /// Whether coordinate `k` is `+1`.
    #[inline]
    pub fn get(&self, k: usize) -> bool {
        assert!(
            k < self.bits,
            "bit {k} out of range for {}-bit code",
            self.bits
        );
        self.words[k / 64] >> (k % 64) & 1 == 1
    }

    /// Sets coordinate `k` to `+1` (`true`) or `-1` (`false`).
    #[inline]
    pub fn set(&mut self, k: usize, value: bool) {
        assert!(
            k < self.bits,
            "bit {k} out of range for {}-bit code",
            self.bits
        );
        let mask = 1u64 << (k % 64);
        if value {
            self.words[k / 64] |= mask;
        } else {
            self.words[k / 64] &= !mask;
        }
    }

    /// Flips coordinate `k`.
    #[inline]
    pub fn flip(&mut self, k: usize) {
        assert!(k < self.bits);
        self.words[k / 64] ^= 1u64 << (k % 64);
    }

    /// Coordinates as `±1.0`.
    pub fn to_signs(&self) -> Vec<f64> {
        (0..self.bits)
            .map(|k| if self.get(k) { 1.0 } else { -1.0 })
            .collect()
    }

    /// Number of `+1` coordinates.
    pub fn count_ones(&self) -> u32 {
        self.words.iter().map(|w| w.count_ones()).sum()
    }
}

/// Popcount of the XOR of two equally long word slices.
#[inline]
pub fn word_distance(a: &[u64], b: &[u64]) -> u32 {
    a.iter().zip(b).map(|(x, y)| (x ^ y).count_ones()).sum()
}

/// Number of differing coordinates between two codes.
pub fn hamming_distance(a: &HashCode, b: &HashCode) -> Result<u32> {
    if a.bits != b.bits {
        return Err(Error::LengthMismatch {
            expected: a.bits,
            found: b.bits,
        });
    }
    Ok(word_distance(&a.words, &b.words))
}

/// Fraction of matching coordinates, `1 - d / K`.
///
/// Equal to `1/2 + a·b / (2K)` under `±1` semantics. It is evaluated as
/// `1 - d/K` so that the identity with [`hamming_distance`] holds bit for bit.
pub fn similarity(a: &HashCode, b: &HashCode) -> Result<f64> {
    let d = hamming_distance(a, b)?;
    if a.bits == 0 {
        return Ok(1.0);
    }
    Ok(1.0 - d as f64 / a.bits as f64)
}

/// A contiguous collection of equally long codes with external ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CodeSet {
    bits: usize,
    stride: usize,
    words: Vec<u64>,
    ids: Vec<String>,
}

impl CodeSet {
    /// Empty set of `bits`-bit codes.
    pub fn new(bits: usize) -> Self {
        CodeSet {
            bits,
            stride: words_for(bits),
            words: Vec::new(),
            ids: Vec::new(),
        }
    }

    /// Builds a set; ids default to the decimal position when `ids` is `None`.
    pub fn from_codes(bits: usize, codes: &[HashCode], ids: Option<Vec<String>>) -> Result<Self> {
        let mut set = CodeSet::new(bits);
        match ids {
            Some(ids) => {
                if ids.len() != codes.len() {
                    return Err(Error::LengthMismatch {
                        expected: codes.len(),
                        found: ids.len(),
                    });
                }
                for (code, id) in codes.iter().zip(ids) {
                    set.push(code, id)?;
                }
            }
            None => {
                for (pos, code) in codes.iter().enumerate() {
                    set.push(code, alloc::format!("{pos}"))?;
                }
            }
        }
        Ok(set)
    }

    /// Appends a code.
    pub fn push(&mut self, code: &HashCode, id: String) -> Result<()> {
        if code.bits != self.bits {
            return Err(Error::LengthMismatch {
                expected: self.bits,
                found: code.bits,
            });
        }
        self.words.extend_from_slice(&code.words);
        self.ids.push(id);
        Ok(())
    }

    /// Code length `K`.
    #[inline]
    pub fn bits(&self) -> usize {
        self.bits
    }

    /// Words per code.
    #[inline]
    pub fn stride(&self) -> usize {
        self.stride
    }

    /// Number of codes.
    #[inline]
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    /// Whether the set holds no codes.
    #[inline]
    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Packed words of the code at `pos`.
    #[inline]
    pub fn words(&self, pos: usize) -> &[u64] {
        &self.words[pos * self.stride..(pos + 1) * self.stride]
    }

    /// Owned copy of the code at `pos`.
    pub fn code(&self, pos: usize) -> HashCode {
        HashCode {
            bits: self.bits,
            words: self.words(pos).to_vec(),
        }
    }

    /// External id of the code at `pos`.
    #[inline]
    pub fn id(&self, pos: usize) -> &str {
        &self.ids[pos]
    }

    /// All external ids in position order.
    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    /// Iterates over the codes in position order.
    pub fn iter(&self) -> impl Iterator<Item = HashCode> + '_ {
        (0..self.len()).map(|p| self.code(p))
    }

    /// Position of the code with external id `id`, if present.
    pub fn position_of(&self, id: &str) -> Option<usize> {
        self.ids.iter().position(|x| x == id)
    }

    pub(crate) fn check_query(&self, query: &HashCode) -> Result<()> {
        if query.bits != self.bits {
            return Err(Error::LengthMismatch {
                expected: self.bits,
                found: query.bits,
            });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn code(signs: &[i8]) -> HashCode {
        HashCode::from_bools(&signs.iter().map(|&s| s > 0).collect::<Vec<_>>())
    }

    #[test]
    fn similarity_examples() {
        assert_eq!(
            similarity(&code(&[1, 1, 1]), &code(&[1, 1, 1])).unwrap(),
            1.0
        );
        assert_eq!(
            similarity(&code(&[1, 1, 1]), &code(&[-1, -1, -1])).unwrap(),
            0.0
        );
        assert_eq!(
            similarity(&code(&[1, 1, -1, -1]), &code(&[1, -1, -1, 1])).unwrap(),
            0.5
        );
    }

    #[test]
    fn similarity_length_mismatch() {
        let err = similarity(&HashCode::zeros(3), &HashCode::zeros(4)).unwrap_err();
        assert_eq!(
            err,
            Error::LengthMismatch {
                expected: 3,
                found: 4
            }
        );
    }

    #[test]
    fn distance_examples() {
        let a = code(&[1, -1, 1, -1, 1, 1, -1, -1]);
        assert_eq!(hamming_distance(&a, &a).unwrap(), 0);
        let mut c = a.clone();
        for k in 0..8 {
            c.flip(k);
        }
        assert_eq!(hamming_distance(&a, &c).unwrap(), 8);
        // 1010 vs 1001, written most significant coordinate first
        let x = code(&[-1, 1, -1, 1]);
        let y = code(&[1, -1, -1, 1]);
        assert_eq!(hamming_distance(&x, &y).unwrap(), 2);
    }

    #[test]
    fn padding_stays_zero() {
        let c = HashCode::from_bools(&[true; 70]);
        assert_eq!(c.words().len(), 2);
        assert_eq!(c.words()[1], 0b11_1111);
        assert_eq!(c.count_ones(), 70);
        assert_eq!(
            HashCode::from_words(3, vec![0b1000]).unwrap_err(),
            Error::NonZeroPadding
        );
    }

    #[test]
    fn code_set_round_trip() {
        let codes: Vec<_> = (0..5u64)
            .map(|i| HashCode::from_words(7, vec![i * 13 % 128]).unwrap())
            .collect();
        let set = CodeSet::from_codes(7, &codes, None).unwrap();
        assert_eq!(set.len(), 5);
        for (i, c) in codes.iter().enumerate() {
            assert_eq!(&set.code(i), c);
        }
        assert_eq!(set.id(3), "3");
        assert_eq!(set.position_of("4"), Some(4));
        assert!(set.clone().push(&HashCode::zeros(8), "x".into()).is_err());
    }
}

use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use dch_core::{CodeSet, HashCode};

use super::{create, open, IoError};

/// First four bytes of every code file.
pub const MAGIC: [u8; 4] = *b"DCH1";

const HEADER: u64 = 12;

/// Packed bytes per entity for `bits`-bit codes.
pub const fn code_bytes(bits: usize) -> usize {
    bits.div_ceil(8)
}

/// `<path>.ids`, the row-to-id sidecar.
pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".ids");
    PathBuf::from(s)
}

/// Writes the binary layout: magic, `K` and count as little-endian `u32`,
/// then `ceil(K/8)` bytes per entity, bit `k` of the code in bit `k % 8` of
/// byte `k / 8`.
pub fn write_codes<W: Write>(bits: usize, codes: &[HashCode], out: &mut W) -> Result<(), IoError> {
    if bits == 0 {
        return Err(IoError::ZeroLength);
    }
    let k = u32::try_from(bits)
        .map_err(|_| dch_core::Error::InvalidHyperparameter("code length exceeds u32"))?;
    let count = u32::try_from(codes.len())
        .map_err(|_| dch_core::Error::InvalidHyperparameter("too many codes"))?;
    out.write_all(&MAGIC)?;
    out.write_all(&k.to_le_bytes())?;
    out.write_all(&count.to_le_bytes())?;
    let width = code_bytes(bits);
    let mut row = Vec::with_capacity(width + 8);
    for code in codes {
        if code.bits() != bits {
            return Err(dch_core::Error::LengthMismatch {
                expected: bits,
                found: code.bits(),
            }
            .into());
        }
        row.clear();
        for w in code.words() {
            row.extend_from_slice(&w.to_le_bytes());
        }
        out.write_all(&row[..width])?;
    }
    Ok(())
}

/// Reads the binary layout back, checking length and padding bits.
pub fn read_codes<R: Read>(input: &mut R) -> Result<(usize, Vec<HashCode>), IoError> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    let actual = bytes.len() as u64;
    if bytes.len() < 4 || bytes[..4] != MAGIC {
        return Err(IoError::BadMagic);
    }
    if actual < HEADER {
        return Err(IoError::Truncated {
            expected: HEADER,
            actual,
        });
    }
    let bits = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes")) as usize;
    let count = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
    if bits == 0 {
        return Err(IoError::ZeroLength);
    }
    let width = code_bytes(bits);
    let expected = HEADER + (count as u64) * (width as u64);
    if actual < expected {
        return Err(IoError::Truncated { expected, actual });
    }
    if actual > expected {
        return Err(IoError::TrailingBytes { expected, actual });
    }
    let words = dch_core::code::words_for(bits);
    let mut codes = Vec::with_capacity(count);
    let mut padded = vec![0u8; words * 8];
    for (entity, row) in bytes[HEADER as usize..].chunks_exact(width).enumerate() {
        padded[..width].copy_from_slice(row);
        let w: Vec<u64> = padded
            .chunks_exact(8)
            .map(|c| u64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        codes.push(HashCode::from_words(bits, w).map_err(|_| IoError::NonZeroPadding { entity })?);
    }
    Ok((bits, codes))
}

/// Writes `set` to `path` and its ids to the sidecar.
pub fn save_codes(set: &CodeSet, path: &Path) -> Result<(), IoError> {
    let codes: Vec<HashCode> = set.iter().collect();
    let mut out = BufWriter::new(create(path)?);
    write_codes(set.bits(), &codes, &mut out)?;
    out.flush()?;
    let sidecar = sidecar_path(path);
    let mut ids = BufWriter::new(create(&sidecar)?);
    for id in set.ids() {
        writeln!(ids, "{id}")?;
    }
    ids.flush()?;
    Ok(())
}

/// Reads a code file; ids come from the sidecar, or are row indices when no
/// sidecar exists.
pub fn load_codes(path: &Path) -> Result<CodeSet, IoError> {
    let (bits, codes) = read_codes(&mut BufReader::new(open(path)?))?;
    let sidecar = sidecar_path(path);
    let ids = if sidecar.exists() {
        let ids = BufReader::new(open(&sidecar)?)
            .lines()
            .collect::<Result<Vec<_>, _>>()?;
        if ids.len() != codes.len() {
            return Err(IoError::SidecarMismatch {
                expected: codes.len(),
                found: ids.len(),
            });
        }
        Some(ids)
    } else {
        None
    };
    Ok(CodeSet::from_codes(bits, &codes, ids)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn encode(bits: usize, codes: &[HashCode]) -> Vec<u8> {
        let mut out = Vec::new();
        write_codes(bits, codes, &mut out).unwrap();
        out
    }

    #[test]
    fn all_ones_byte() {
        let bytes = encode(8, &[HashCode::from_bools(&[true; 8])]);
        assert_eq!(bytes.len(), 13);
        assert_eq!(&bytes[..4], b"DCH1");
        assert_eq!(&bytes[4..12], &[8, 0, 0, 0, 1, 0, 0, 0]);
        assert_eq!(bytes[12], 0xFF);
    }

    #[test]
    fn bit_order() {
        let mut bools = [false; 10];
        bools[0] = true;
        bools[9] = true;
        let bytes = encode(10, &[HashCode::from_bools(&bools)]);
        assert_eq!(&bytes[12..], &[0x01, 0x02]);
    }

    #[test]
    fn distinct_errors() {
        let codes = crate::synth::random_codes(3, 12, 1);
        let good = encode(12, &codes);
        assert_eq!(read_codes(&mut &good[..]).unwrap(), (12, codes));

        let mut bad = good.clone();
        bad[0] = b'X';
        assert!(matches!(read_codes(&mut &bad[..]), Err(IoError::BadMagic)));
        assert!(matches!(
            read_codes(&mut &good[..good.len() - 1]),
            Err(IoError::Truncated {
                expected: 18,
                actual: 17
            })
        ));
        let mut long = good.clone();
        long.push(0);
        assert!(matches!(
            read_codes(&mut &long[..]),
            Err(IoError::TrailingBytes {
                expected: 18,
                actual: 19
            })
        ));
        let mut pad = good.clone();
        pad[15] |= 0x80;
        assert!(matches!(
            read_codes(&mut &pad[..]),
            Err(IoError::NonZeroPadding { entity: 1 })
        ));
        let mut zero = good;
        zero[4] = 0;
        assert!(matches!(
            read_codes(&mut &zero[..]),
            Err(IoError::ZeroLength)
        ));
    }

    #[test]
    fn sidecar_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("items.codes");
        let codes = crate::synth::random_codes(100, 33, 2);
        let ids: Vec<String> = (0..100).map(|i| format!("item-{i}")).collect();
        let set = CodeSet::from_codes(33, &codes, Some(ids)).unwrap();
        save_codes(&set, &path).unwrap();
        assert_eq!(load_codes(&path).unwrap(), set);

        std::fs::remove_file(sidecar_path(&path)).unwrap();
        let bare = load_codes(&path).unwrap();
        assert_eq!(bare.id(7), "7");

        std::fs::write(sidecar_path(&path), "a\nb\n").unwrap();
        assert!(matches!(
            load_codes(&path),
            Err(IoError::SidecarMismatch {
                expected: 100,
                found: 2
            })
        ));
    }
}

use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use super::{create, open, IoError};

/// Row-major factor rows with their external ids.
#[derive(Debug, Clone, PartialEq)]
pub struct Factors {
    /// Row length.
    pub dim: usize,
    /// One id per row.
    pub ids: Vec<String>,
    /// `ids.len() * dim` values.
    pub values: Vec<f64>,
}

impl Factors {
    /// Row `r`.
    pub fn row(&self, r: usize) -> &[f64] {
        &self.values[r * self.dim..(r + 1) * self.dim]
    }
}

/// Writes one `id<TAB>v1<TAB>...<TAB>vK` line per row. Values use the
/// shortest representation that parses back to the same `f64`.
pub fn save_factors(
    path: &Path,
    dim: usize,
    ids: &[String],
    values: &[f64],
) -> Result<(), IoError> {
    assert_eq!(
        ids.len() * dim,
        values.len(),
        "factor buffer does not match ids"
    );
    let mut out = BufWriter::new(create(path)?);
    for (id, row) in ids.iter().zip(values.chunks_exact(dim.max(1))) {
        out.write_all(id.as_bytes())?;
        for v in row {
            write!(out, "\t{v:?}")?;
        }
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

/// Reads a file written by [`save_factors`]; every row must have the same
/// length.
pub fn load_factors(path: &Path) -> Result<Factors, IoError> {
    let mut dim = None;
    let mut ids = Vec::new();
    let mut values = Vec::new();
    for (n, line) in BufReader::new(open(path)?).lines().enumerate() {
        let line_no = n + 1;
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split('\t');
        let id = fields.next().unwrap_or_default();
        let before = values.len();
        for f in fields {
            let v: f64 = f.parse().map_err(|_| IoError::Malformed {
                line: line_no,
                reason: format!("factor value {f:?} is not a number"),
            })?;
            values.push(v);
        }
        let len = values.len() - before;
        match dim {
            None if len == 0 => {
                return Err(IoError::Malformed {
                    line: line_no,
                    reason: "row has no values".into(),
                })
            }
            None => dim = Some(len),
            Some(d) if d != len => {
                return Err(IoError::Malformed {
                    line: line_no,
                    reason: format!("expected {d} values, found {len}"),
                })
            }
            Some(_) => {}
        }
        ids.push(id.to_string());
    }
    let Some(dim) = dim else {
        return Err(IoError::EmptyDataset);
    };
    Ok(Factors { dim, ids, values })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("users.tsv");
        let values = vec![0.1, -1.0 / 3.0, 1e-300, f64::MIN_POSITIVE, 0.0, -0.0];
        let ids = vec!["a".to_string(), "b c".to_string()];
        save_factors(&path, 3, &ids, &values).unwrap();
        let f = load_factors(&path).unwrap();
        assert_eq!(f.dim, 3);
        assert_eq!(f.ids, ids);
        let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&f.values), bits(&values));
        assert_eq!(f.row(1), &values[3..]);
    }

    #[test]
    fn ragged_rows_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.tsv");
        std::fs::write(&path, "a\t1\t2\nb\t3\n").unwrap();
        assert!(matches!(
            load_factors(&path),
            Err(IoError::Malformed { line: 2, .. })
        ));
    }
}

use alloc::vec::Vec;

use crate::code::HashCode;

use super::{FactorMatrices, FactorView};

/// Median of each coordinate across `rows` (row-major, `dim` columns).
///
/// For an even count the median is the mean of the two middle order
/// statistics. When that mean rounds onto the upper middle value the lower
/// one is used instead, so values strictly above the median are always
/// exactly the upper half.
pub fn coordinate_medians(rows: &[f64], dim: usize) -> Vec<f64> {
    let n = if dim == 0 { 0 } else { rows.len() / dim };
    let mut column = Vec::with_capacity(n);
    (0..dim)
        .map(|k| {
            column.clear();
            column.extend(rows.chunks(dim).map(|r| r[k]));
            median(&mut column)
        })
        .collect()
}

fn median(values: &mut [f64]) -> f64 {
    let n = values.len();
    if n == 0 {
        return 0.0;
    }
    values.sort_unstable_by(f64::total_cmp);
    if n % 2 == 1 {
        return values[n / 2];
    }
    let (lo, hi) = (values[n / 2 - 1], values[n / 2]);
    let mid = lo + (hi - lo) / 2.0;
    if mid < hi {
        mid
    } else {
        lo
    }
}

/// Bit `k` is `+1` iff `row[k]` strictly exceeds `medians[k]`.
pub fn round_with_medians(row: &[f64], medians: &[f64]) -> HashCode {
    let mut code = HashCode::zeros(row.len());
    for (k, (x, m)) in row.iter().zip(medians).enumerate() {
        if x > m {
            code.set(k, true);
        }
    }
    code
}

/// Rounds every row against the per-coordinate medians of `rows`.
pub fn round_rows(rows: &[f64], dim: usize) -> Vec<HashCode> {
    let medians = coordinate_medians(rows, dim);
    rows.chunks(dim)
        .map(|r| round_with_medians(r, &medians))
        .collect()
}

/// Median rounding of users and items, each against its own medians.
pub fn round_codes(fm: &FactorMatrices) -> (Vec<HashCode>, Vec<HashCode>) {
    (
        round_rows(fm.users(), fm.dim()),
        round_rows(fm.items(), fm.dim()),
    )
}

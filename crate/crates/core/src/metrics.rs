//! Ranking quality metrics.

/// Fraction of the first `k` ranked items that are positive.
///
/// Short rankings still divide by `k`; an empty ranking scores 0.
pub fn precision_at_k<F>(ranked: &[usize], is_positive: F, k: usize) -> f64
where
    F: Fn(usize) -> bool,
{
    if k == 0 || ranked.is_empty() {
        return 0.0;
    }
    let hits = ranked.iter().take(k).filter(|&&p| is_positive(p)).count();
    hits as f64 / k as f64
}

/// Discounted cumulative gain `Σ_{i=1..k} (2^{r_i} - 1) / log2(i + 1)`.
///
/// `gains[i]` is the raw rating of the item at rank `i + 1` (0 when the
/// item is unrated).
pub fn dcg_at_k(gains: &[f64], k: usize) -> f64 {
    gains
        .iter()
        .take(k)
        .enumerate()
        .map(|(i, &r)| (libm::exp2(r) - 1.0) / libm::log2(i as f64 + 2.0))
        .sum()
}

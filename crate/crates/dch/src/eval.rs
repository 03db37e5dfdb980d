//! Top-k evaluation of codes and real-valued factors.
//!
//! For every user with at least one test rating, all items the user did not
//! rate in training are ranked; positives are test ratings equal to the top
//! of the rating scale, and DCG gains are raw test ratings (0 if unrated).
//! Metrics are macro-averaged over those users.

use std::fmt::Write as _;

use dch_core::metrics::{dcg_at_k, precision_at_k};
use dch_core::model::round_codes;
use dch_core::retrieval::{hamming_rank_topk_by, realvalued_topk_by};
use dch_core::{CodeSet, Dataset, FactorMatrices, HashCode};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::runtime::{train, RuntimeError, TrainingConfig};

/// Evaluation failures.
#[derive(Debug, Error)]
pub enum EvalError {
    /// No user has a test rating.
    #[error("no user has a test rating; the report would be empty")]
    NoEvaluableUsers,
    /// Model outputs do not cover the dataset.
    #[error("model covers {found} {entity}s, data has {expected}")]
    Shape {
        /// "user" or "item".
        entity: &'static str,
        /// Count in the data.
        expected: usize,
        /// Count in the model.
        found: usize,
    },
    /// `k` must be at least 1.
    #[error("cutoff k must be at least 1")]
    ZeroCutoff,
    /// Variance needs at least two runs.
    #[error("variance needs at least two seeds, got {0}")]
    TooFewSeeds(usize),
    /// Lower-level failure.
    #[error(transparent)]
    Model(#[from] dch_core::Error),
    /// Training failure.
    #[error(transparent)]
    Runtime(#[from] RuntimeError),
}

/// Train/test split parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitSpec {
    /// Share of triples used for training, in `(0, 1)`.
    pub train_fraction: f64,
    /// Shuffle seed.
    pub seed: u64,
}

impl SplitSpec {
    /// Splits `data` into `(train, test)`.
    pub fn apply(&self, data: &Dataset) -> dch_core::Result<(Dataset, Dataset)> {
        dch_core::split::split(data, self.train_fraction, self.seed)
    }
}

/// What gets ranked.
#[derive(Debug, Clone, Copy)]
pub enum ModelOutputs<'a> {
    /// Binary codes, ranked by Hamming distance.
    Codes {
        /// One code per user.
        users: &'a [HashCode],
        /// One code per item.
        items: &'a [HashCode],
    },
    /// Real factors, ranked by inner product.
    Vectors {
        /// Row-major user factors.
        users: &'a [f64],
        /// Row-major item factors.
        items: &'a [f64],
        /// Factor dimension.
        dim: usize,
    },
}

impl<'a> ModelOutputs<'a> {
    /// Real-valued view of trained factors.
    pub fn vectors(fm: &'a FactorMatrices) -> Self {
        ModelOutputs::Vectors {
            users: fm.users(),
            items: fm.items(),
            dim: dch_core::FactorView::dim(fm),
        }
    }

    fn counts(&self) -> (usize, usize) {
        match self {
            ModelOutputs::Codes { users, items } => (users.len(), items.len()),
            ModelOutputs::Vectors { users, items, dim } => {
                (users.len() / dim.max(&1), items.len() / dim.max(&1))
            }
        }
    }
}

/// Ranking metric.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Metric {
    /// Share of positives among the top k.
    #[serde(rename = "precision")]
    Precision,
    /// Discounted cumulative gain over the top k.
    #[serde(rename = "dcg")]
    Dcg,
}

impl Metric {
    /// Column label.
    pub fn name(self) -> &'static str {
        match self {
            Metric::Precision => "precision",
            Metric::Dcg => "dcg",
        }
    }
}

/// One reported number.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    /// Model tag.
    pub model: String,
    /// Metric.
    pub metric: Metric,
    /// Cutoff.
    pub k: usize,
    /// Macro-average over evaluated users.
    pub value: f64,
    /// Users evaluated.
    pub users: usize,
}

/// Macro-averaged metrics for one model.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    /// Model tag.
    pub model: String,
    /// Users with at least one test rating.
    pub users_evaluated: usize,
    /// Cutoffs, ascending and deduplicated.
    pub ks: Vec<usize>,
    /// Precision at each cutoff.
    pub precision: Vec<f64>,
    /// DCG at each cutoff.
    pub dcg: Vec<f64>,
}

impl EvalReport {
    /// Precision at cutoff `k`, if it was computed.
    pub fn precision_at(&self, k: usize) -> Option<f64> {
        self.ks
            .iter()
            .position(|&x| x == k)
            .map(|i| self.precision[i])
    }

    /// DCG at cutoff `k`, if it was computed.
    pub fn dcg_at(&self, k: usize) -> Option<f64> {
        self.ks.iter().position(|&x| x == k).map(|i| self.dcg[i])
    }

    /// One row per (metric, k).
    pub fn rows(&self) -> Vec<ReportRow> {
        let mut rows = Vec::new();
        for (metric, values) in [
            (Metric::Precision, &self.precision),
            (Metric::Dcg, &self.dcg),
        ] {
            for (&k, &value) in self.ks.iter().zip(values.iter()) {
                rows.push(ReportRow {
                    model: self.model.clone(),
                    metric,
                    k,
                    value,
                    users: self.users_evaluated,
                });
            }
        }
        rows
    }
}

/// CSV with header `model,metric,k,value,users`.
pub fn reports_to_csv(reports: &[EvalReport]) -> String {
    let mut out = String::from("model,metric,k,value,users\n");
    for row in reports.iter().flat_map(EvalReport::rows) {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            row.model,
            row.metric.name(),
            row.k,
            row.value,
            row.users
        );
    }
    out
}

/// JSON array of the same rows.
pub fn reports_to_json(reports: &[EvalReport]) -> String {
    let rows: Vec<ReportRow> = reports.iter().flat_map(EvalReport::rows).collect();
    serde_json::to_string_pretty(&rows).expect("rows serialize")
}

/// Which items compete in a user's ranking.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Candidates {
    /// Every item the user did not rate in training.
    #[default]
    Unseen,
    /// Only the items the user rated in the test set.
    TestItems,
}

/// Ranked items for one user, best first, at most `k`, restricted to items
/// for which `keep` holds.
pub fn rank_for_user<F: Fn(usize) -> bool>(
    outputs: &ModelOutputs<'_>,
    item_codes: Option<&CodeSet>,
    user: usize,
    keep: F,
    k: usize,
) -> dch_core::Result<Vec<usize>> {
    Ok(match outputs {
        ModelOutputs::Codes { users, .. } => {
            let set = item_codes.expect("code set built for code outputs");
            hamming_rank_topk_by(&users[user], set, k, keep)?
                .into_iter()
                .map(|(p, _)| p)
                .collect()
        }
        ModelOutputs::Vectors { users, items, dim } => {
            let u = &users[user * dim..(user + 1) * dim];
            realvalued_topk_by(u, items, k, keep)?
                .into_iter()
                .map(|(p, _)| p)
                .collect()
        }
    })
}

/// Evaluates `outputs` on `test`, excluding each user's `train` items from
/// the candidates.
pub fn evaluate(
    outputs: ModelOutputs<'_>,
    train: &Dataset,
    test: &Dataset,
    ks: &[usize],
    model: &str,
) -> Result<EvalReport, EvalError> {
    evaluate_with(outputs, train, test, ks, model, Candidates::Unseen)
}

/// [`evaluate`] with an explicit candidate protocol.
pub fn evaluate_with(
    outputs: ModelOutputs<'_>,
    train: &Dataset,
    test: &Dataset,
    ks: &[usize],
    model: &str,
    candidates: Candidates,
) -> Result<EvalReport, EvalError> {
    let mut ks = ks.to_vec();
    ks.sort_unstable();
    ks.dedup();
    if ks.first() == Some(&0) {
        return Err(EvalError::ZeroCutoff);
    }
    let max_k = ks.last().copied().unwrap_or(0);
    let (m, n) = outputs.counts();
    if m != test.num_users() {
        return Err(EvalError::Shape {
            entity: "user",
            expected: test.num_users(),
            found: m,
        });
    }
    if n != test.num_items() {
        return Err(EvalError::Shape {
            entity: "item",
            expected: test.num_items(),
            found: n,
        });
    }
    let item_codes = match outputs {
        ModelOutputs::Codes { items, .. } => {
            let bits = items.first().map_or(1, HashCode::bits);
            Some(CodeSet::from_codes(bits, items, None)?)
        }
        ModelOutputs::Vectors { .. } => None,
    };
    let seen = train.items_by_user();
    let held_out = test.items_by_user();
    let top = test.scale().max();
    let users: Vec<usize> = (0..test.num_users())
        .filter(|&u| !held_out[u].is_empty())
        .collect();
    if users.is_empty() {
        return Err(EvalError::NoEvaluableUsers);
    }

    let per_user = users
        .par_iter()
        .map(|&u| {
            let rating = |p: usize| {
                held_out[u]
                    .binary_search_by_key(&(p as u32), |&(i, _)| i)
                    .ok()
                    .map(|idx| held_out[u][idx].1)
            };
            let unseen = |p: usize| {
                seen[u]
                    .binary_search_by_key(&(p as u32), |&(i, _)| i)
                    .is_err()
            };
            let ranked = match candidates {
                Candidates::Unseen => {
                    rank_for_user(&outputs, item_codes.as_ref(), u, unseen, max_k)?
                }
                Candidates::TestItems => rank_for_user(
                    &outputs,
                    item_codes.as_ref(),
                    u,
                    |p| rating(p).is_some(),
                    max_k,
                )?,
            };
            let gains: Vec<f64> = ranked.iter().map(|&p| rating(p).unwrap_or(0.0)).collect();
            let row: Vec<(f64, f64)> = ks
                .iter()
                .map(|&k| {
                    let p = precision_at_k(&ranked, |p| rating(p) == Some(top), k);
                    (p, dcg_at_k(&gains, k))
                })
                .collect();
            Ok(row)
        })
        .collect::<dch_core::Result<Vec<_>>>()?;

    let count = users.len() as f64;
    let mut precision = vec![0.0; ks.len()];
    let mut dcg = vec![0.0; ks.len()];
    for row in &per_user {
        for (i, &(p, g)) in row.iter().enumerate() {
            precision[i] += p;
            dcg[i] += g;
        }
    }
    Ok(EvalReport {
        model: model.to_string(),
        users_evaluated: users.len(),
        ks,
        precision: precision.into_iter().map(|x| x / count).collect(),
        dcg: dcg.into_iter().map(|x| x / count).collect(),
    })
}

/// Evaluates real factors both as vectors (`MF`) and rounded to codes (`MFH`).
pub fn evaluate_mf_and_mfh(
    fm: &FactorMatrices,
    train: &Dataset,
    test: &Dataset,
    ks: &[usize],
) -> Result<(EvalReport, EvalReport), EvalError> {
    let mf = evaluate(ModelOutputs::vectors(fm), train, test, ks, "MF")?;
    let (users, items) = round_codes(fm);
    let mfh = evaluate(
        ModelOutputs::Codes {
            users: &users,
            items: &items,
        },
        train,
        test,
        ks,
        "MFH",
    )?;
    Ok((mf, mfh))
}

/// Unbiased sample variance (divisor `n - 1`); 0 for fewer than two values.
pub fn sample_variance(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    values.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
}

/// Per-barrier variance of the loss across runs that differ only in seed.
/// Traces are truncated to the shortest one.
pub fn run_variance(
    data: &Dataset,
    config: &TrainingConfig,
    seeds: &[u64],
) -> Result<Vec<f64>, EvalError> {
    if seeds.len() < 2 {
        return Err(EvalError::TooFewSeeds(seeds.len()));
    }
    let traces = seeds
        .par_iter()
        .map(|&seed| {
            let mut cfg = config.clone();
            cfg.hyper.seed = seed;
            train(data, &cfg).map(|out| out.trace.iter().map(|p| p.loss).collect::<Vec<_>>())
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(variance_by_index(&traces))
}

/// Column-wise sample variance of aligned traces.
pub fn variance_by_index(traces: &[Vec<f64>]) -> Vec<f64> {
    let len = traces.iter().map(Vec::len).min().unwrap_or(0);
    (0..len)
        .map(|b| sample_variance(&traces.iter().map(|t| t[b]).collect::<Vec<_>>()))
        .collect()
}

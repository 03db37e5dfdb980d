//! Timing sweeps for online ranking and offline training.
//!
//! Every timing is the median of several repetitions on a monotonic clock,
//! after one untimed warm-up pass.

use std::io::Write;
use std::time::{Duration, Instant};

use dch_core::retrieval::{hamming_rank_topk, radius_search, realvalued_topk};
use dch_core::{CodeSet, Dataset, Hyperparams};
use serde::Serialize;

use crate::runtime::{train, RuntimeError, TrainingConfig};
use crate::synth::{random_codes, random_vectors};

/// Ranking method being timed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum BenchMethod {
    /// Top-k by Hamming distance over all codes.
    HashRank,
    /// Linear scan for codes within a Hamming radius.
    HashRadius,
    /// Top-k by inner product over real-valued factors.
    Real,
}

impl BenchMethod {
    /// CSV name.
    pub fn name(self) -> &'static str {
        match self {
            BenchMethod::HashRank => "hash-rank",
            BenchMethod::HashRadius => "hash-radius",
            BenchMethod::Real => "real",
        }
    }
}

/// One ranking measurement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RankingRow {
    /// Code length, or factor dimension for [`BenchMethod::Real`].
    pub k: usize,
    /// Item count.
    pub n: usize,
    /// Method.
    pub method: BenchMethod,
    /// Median time per query in milliseconds.
    pub ms_per_query: f64,
}

/// Sweep settings.
#[derive(Debug, Clone, PartialEq)]
pub struct RankingBench {
    /// Queries per repetition.
    pub queries: usize,
    /// Timed repetitions; at least 5.
    pub reps: usize,
    /// Results per query.
    pub top_k: usize,
    /// Radius for [`BenchMethod::HashRadius`].
    pub radius: u32,
    /// Seed for the synthetic codes and vectors.
    pub seed: u64,
}

impl Default for RankingBench {
    fn default() -> Self {
        RankingBench {
            queries: 200,
            reps: 5,
            top_k: 10,
            radius: 2,
            seed: 0,
        }
    }
}

/// Median wall time of `reps` runs of `f`, after one warm-up run.
pub fn median_time(reps: usize, mut f: impl FnMut()) -> Duration {
    f();
    let mut times: Vec<Duration> = (0..reps.max(1))
        .map(|_| {
            let t = Instant::now();
            f();
            t.elapsed()
        })
        .collect();
    times.sort();
    times[times.len() / 2]
}

impl RankingBench {
    /// Times one method at code length (or dimension) `k` over `n` items.
    pub fn measure(&self, method: BenchMethod, k: usize, n: usize) -> RankingRow {
        let q = self.queries.max(1);
        let seed = self.seed ^ (k as u64) << 32 ^ n as u64;
        let reps = self.reps.max(5);
        let elapsed = match method {
            BenchMethod::HashRank | BenchMethod::HashRadius => {
                let items = CodeSet::from_codes(k, &random_codes(n, k, seed), None)
                    .expect("codes share a length");
                let queries = random_codes(q, k, seed + 1);
                median_time(reps, || {
                    for query in &queries {
                        let hits = match method {
                            BenchMethod::HashRank => hamming_rank_topk(query, &items, self.top_k),
                            _ => radius_search(query, &items, self.radius),
                        };
                        std::hint::black_box(hits.expect("lengths match"));
                    }
                })
            }
            BenchMethod::Real => {
                let items = random_vectors(n, k, seed);
                let queries = random_vectors(q, k, seed + 1);
                median_time(reps, || {
                    for query in queries.chunks_exact(k) {
                        std::hint::black_box(
                            realvalued_topk(query, &items, self.top_k).expect("lengths match"),
                        );
                    }
                })
            }
        };
        RankingRow {
            k,
            n,
            method,
            ms_per_query: elapsed.as_secs_f64() * 1e3 / q as f64,
        }
    }

    /// Every method at each `k` with `n` fixed.
    pub fn sweep_k(&self, ks: &[usize], n: usize) -> Vec<RankingRow> {
        self.sweep(ks.iter().map(|&k| (k, n)))
    }

    /// Every method at each `n` with `k` fixed.
    pub fn sweep_n(&self, k: usize, ns: &[usize]) -> Vec<RankingRow> {
        self.sweep(ns.iter().map(|&n| (k, n)))
    }

    fn sweep(&self, points: impl Iterator<Item = (usize, usize)>) -> Vec<RankingRow> {
        let mut rows = Vec::new();
        for (k, n) in points {
            for m in [
                BenchMethod::HashRank,
                BenchMethod::HashRadius,
                BenchMethod::Real,
            ] {
                rows.push(self.measure(m, k, n));
            }
        }
        rows
    }
}

/// Writes ranking rows as `k,n,method,ms_per_query`.
pub fn write_ranking_csv<W: Write>(rows: &[RankingRow], mut out: W) -> std::io::Result<()> {
    writeln!(out, "k,n,method,ms_per_query")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{}",
            r.k,
            r.n,
            r.method.name(),
            r.ms_per_query
        )?;
    }
    out.flush()
}

/// Least-squares slope of `y` against `x`.
pub fn slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

/// One offline-training measurement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrainingRow {
    /// Worker count.
    pub workers: usize,
    /// Median wall-clock time of a full run in milliseconds.
    pub wall_ms: f64,
    /// Barriers run.
    pub barriers: u64,
    /// Loss at the last barrier.
    pub final_loss: f64,
}

/// Times threaded training for each worker count.
pub fn training_sweep(
    data: &Dataset,
    hyper: &Hyperparams,
    workers: &[usize],
    reps: usize,
) -> Result<Vec<TrainingRow>, RuntimeError> {
    let mut rows = Vec::new();
    for &w in workers {
        let config = TrainingConfig::dch(Hyperparams {
            workers: w,
            ..hyper.clone()
        })
        .threaded(Duration::ZERO);
        let out = train(data, &config)?;
        let mut failure = None;
        let wall = median_time(reps, || {
            if let Err(e) = train(data, &config) {
                failure.get_or_insert(e);
            }
        });
        if let Some(e) = failure {
            return Err(e);
        }
        rows.push(TrainingRow {
            workers: w,
            wall_ms: wall.as_secs_f64() * 1e3,
            barriers: out.stats.barriers,
            final_loss: out.trace.last().map_or(f64::NAN, |p| p.loss),
        });
    }
    Ok(rows)
}

/// Writes training rows as `workers,wall_clock_ms,barriers,final_loss`.
pub fn write_training_csv<W: Write>(rows: &[TrainingRow], mut out: W) -> std::io::Result<()> {
    writeln!(out, "workers,wall_clock_ms,barriers,final_loss")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{}",
            r.workers, r.wall_ms, r.barriers, r.final_loss
        )?;
    }
    out.flush()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slope_of_a_line() {
        let pts = [(1.0, 3.0), (2.0, 5.0), (4.0, 9.0)];
        assert!((slope(&pts) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn small_sweep_has_every_row() {
        let bench = RankingBench {
            queries: 3,
            ..RankingBench::default()
        };
        let rows = bench.sweep_k(&[8, 16], 50);
        assert_eq!(rows.len(), 6);
        assert!(rows.iter().all(|r| r.ms_per_query >= 0.0 && r.n == 50));
        let mut csv = Vec::new();
        write_ranking_csv(&rows, &mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert_eq!(text.lines().count(), 7);
        assert!(text.lines().nth(1).unwrap().starts_with("8,50,hash-rank,"));
    }
}

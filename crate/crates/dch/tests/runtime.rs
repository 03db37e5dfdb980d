//! Parameter-server runtime against the sequential reference and its
//! protocol invariants.

mod common;

use std::collections::HashMap;
use std::time::Duration;

use common::{sequential_sgd, toy};
use dch::runtime::{train, OpTiming, ParameterKey, RuntimeError, StopReason, TrainingConfig};
use dch_core::model::round_codes;
use dch_core::{Hyperparams, Objective};

fn full_batch(data_len: usize, seed: u64, epochs: usize) -> Hyperparams {
    Hyperparams {
        code_bits: 6,
        lambda: 0.05,
        learning_rate: 0.05,
        gamma: 1.0,
        batch_size: data_len,
        sync_period: 1,
        workers: 1,
        servers: 3,
        epochs,
        seed,
    }
}

#[test]
fn one_worker_period_one_matches_sequential_sgd_bit_for_bit() {
    let data = toy(50, 30, 0.3, 1);
    let hyper = full_batch(data.len(), 17, 40);
    for objective in [
        Objective::Dch { lambda: 0.05 },
        Objective::MatrixFactorization { lambda: 0.05 },
    ] {
        let (want, fm) = sequential_sgd(&data, &hyper, objective, 40);
        let mut config = TrainingConfig::dch(hyper.clone());
        config.objective = objective;
        config.convergence = None;
        for cfg in [config.clone(), config.clone().threaded(Duration::ZERO)] {
            let out = train(&data, &cfg).unwrap();
            let got: Vec<f64> = out.trace.iter().map(|p| p.loss).collect();
            assert_eq!(got.len(), want.len());
            for (g, w) in got.iter().zip(&want) {
                assert_eq!(g.to_bits(), w.to_bits(), "{objective:?}");
            }
            assert_eq!(out.factors.users(), fm.users());
            assert_eq!(out.factors.items(), fm.items());
        }
    }
}

#[test]
fn minibatch_single_worker_matches_sequential_sgd() {
    let data = toy(30, 20, 0.4, 2);
    let hyper = Hyperparams {
        batch_size: 37,
        ..full_batch(data.len(), 3, 5)
    };
    let steps = 5 * data.len().div_ceil(37);
    let (want, _) = sequential_sgd(&data, &hyper, Objective::Dch { lambda: 0.05 }, steps);
    let mut config = TrainingConfig::dch(hyper);
    config.convergence = None;
    let got: Vec<f64> = train(&data, &config)
        .unwrap()
        .trace
        .iter()
        .map(|p| p.loss)
        .collect();
    assert_eq!(got, want);
}

#[test]
fn runs_are_reproducible() {
    let data = toy(40, 30, 0.3, 3);
    let hyper = Hyperparams {
        batch_size: 25,
        sync_period: 3,
        workers: 4,
        servers: 2,
        epochs: 5,
        learning_rate: 0.05,
        seed: 9,
        ..Hyperparams::default()
    };
    let mut config = TrainingConfig::dch(hyper);
    config.timing = OpTiming::Jitter { min: 1, max: 4 };
    let a = train(&data, &config).unwrap();
    let b = train(&data, &config).unwrap();
    assert_eq!(a.factors, b.factors);
    assert_eq!(
        a.trace.iter().map(|p| p.loss).collect::<Vec<_>>(),
        b.trace.iter().map(|p| p.loss).collect::<Vec<_>>()
    );
    assert_eq!(a.stats.ops, b.stats.ops);
}

/// Staleness, projection, aggregate exactness, per-key serialization and
/// server-side rounding across a spread of cluster shapes.
#[test]
fn protocol_invariants_hold_across_configurations() {
    let data = toy(40, 25, 0.4, 4);
    let mut case = 0u64;
    for workers in [1, 2, 4] {
        for period in [1, 2, 4] {
            for servers in [1, 3] {
                case += 1;
                let hyper = Hyperparams {
                    code_bits: 5,
                    lambda: 0.1,
                    learning_rate: 0.1,
                    gamma: 2.0,
                    batch_size: 10 + case as usize,
                    sync_period: period,
                    workers,
                    servers,
                    epochs: 4,
                    seed: case,
                };
                let mut config = TrainingConfig::dch(hyper.clone());
                config.record_keys = true;
                config.convergence = None;
                config.timing = OpTiming::Jitter { min: 1, max: 3 };
                let mut configs = vec![config.clone()];
                if case.is_multiple_of(3) {
                    configs.push(config.threaded(Duration::ZERO));
                }
                for cfg in configs {
                    let out = train(&data, &cfg).unwrap();
                    let s = &out.stats;
                    assert!(s.max_staleness < period as u64, "{:?}", cfg.schedule);
                    assert!(s.max_post_barrier_norm <= hyper.radius() + 1e-12);
                    assert!(s.max_aggregate_drift <= 1e-9, "{}", s.max_aggregate_drift);
                    assert!(s
                        .ops_per_worker
                        .iter()
                        .all(|&n| n == s.barriers * period as u64));

                    let mut tally: HashMap<ParameterKey, u64> = HashMap::new();
                    for op in &s.ops {
                        for k in &op.keys {
                            *tally.entry(*k).or_default() += 1;
                        }
                    }
                    assert_eq!(tally, s.update_counts);

                    let (users, items) = round_codes(&out.factors);
                    assert_eq!(out.user_codes, users);
                    assert_eq!(out.item_codes, items);
                }
            }
        }
    }
}

#[test]
fn slow_workers_expose_the_full_staleness_window() {
    let data = toy(40, 25, 0.5, 5);
    let hyper = Hyperparams {
        batch_size: 20,
        sync_period: 3,
        workers: 4,
        servers: 2,
        epochs: 3,
        ..Hyperparams::default()
    };
    let mut config = TrainingConfig::dch(hyper);
    assert_eq!(train(&data, &config).unwrap().stats.max_staleness, 1);
    config.timing = OpTiming::PerWorker(vec![1, 1, 1, 5]);
    assert_eq!(train(&data, &config).unwrap().stats.max_staleness, 2);
}

/// Workers of speeds 1:2:3 with `P = 2`: nobody starts the first operation
/// of a period before every worker has pushed the last one of the previous.
fn assert_barrier_ordering(config: &TrainingConfig) {
    let data = toy(30, 30, 0.4, 6);
    let out = train(&data, config).unwrap();
    let periods = out.stats.barriers;
    assert!(periods >= 3);
    for t in 2..=periods {
        let prev_end = out
            .stats
            .ops
            .iter()
            .filter(|o| o.period == t - 1)
            .map(|o| o.end)
            .fold(f64::MIN, f64::max);
        let next_start = out
            .stats
            .ops
            .iter()
            .filter(|o| o.period == t)
            .map(|o| o.start)
            .fold(f64::MAX, f64::min);
        assert!(
            next_start >= prev_end,
            "period {t}: {next_start} < {prev_end}"
        );
        for w in 0..3 {
            let ops: Vec<u64> = out
                .stats
                .ops
                .iter()
                .filter(|o| o.period == t && o.worker == w)
                .map(|o| o.op)
                .collect();
            assert_eq!(ops, vec![2 * (t - 1), 2 * (t - 1) + 1]);
        }
    }
}

#[test]
fn unequal_speeds_wait_at_barriers() {
    let hyper = Hyperparams {
        batch_size: 30,
        sync_period: 2,
        workers: 3,
        servers: 2,
        epochs: 4,
        ..Hyperparams::default()
    };
    let mut config = TrainingConfig::dch(hyper);
    config.convergence = None;
    config.timing = OpTiming::PerWorker(vec![1, 2, 3]);
    assert_barrier_ordering(&config);
    assert_barrier_ordering(&config.threaded(Duration::from_millis(2)));
}

#[test]
fn divergence_is_reported() {
    let data = toy(20, 20, 0.5, 7);
    let hyper = Hyperparams {
        learning_rate: 1e6,
        gamma: 1e-30,
        lambda: 1.0,
        batch_size: data.len(),
        workers: 1,
        sync_period: 1,
        epochs: 50,
        ..Hyperparams::default()
    };
    let err = train(&data, &TrainingConfig::mf(hyper)).unwrap_err();
    assert!(matches!(err, RuntimeError::Diverged { .. }), "{err}");
}

#[test]
fn threshold_and_convergence_stop_early() {
    let data = toy(30, 20, 0.5, 8);
    let hyper = Hyperparams {
        learning_rate: 0.05,
        batch_size: data.len(),
        workers: 1,
        sync_period: 1,
        epochs: 20_000,
        ..Hyperparams::default()
    };
    let mut config = TrainingConfig::dch(hyper);
    let full = train(&data, &config).unwrap();
    assert_eq!(full.stats.stop, StopReason::Converged);
    let target = full.trace[full.trace.len() / 2].loss;
    config.stop_below = Some(target);
    let early = train(&data, &config).unwrap();
    assert_eq!(early.stats.stop, StopReason::Threshold);
    assert!(early.trace.last().unwrap().loss <= target);
}

#[test]
fn bad_configurations_are_rejected() {
    let data = toy(5, 5, 0.4, 9);
    let too_many = Hyperparams {
        workers: data.len() + 1,
        ..Hyperparams::default()
    };
    assert!(matches!(
        train(&data, &TrainingConfig::dch(too_many)),
        Err(RuntimeError::TooManyWorkers { .. })
    ));
    let bad = Hyperparams {
        sync_period: 0,
        ..Hyperparams::default()
    };
    assert!(matches!(
        train(&data, &TrainingConfig::dch(bad)),
        Err(RuntimeError::Model(_))
    ));
}

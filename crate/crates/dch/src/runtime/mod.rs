//! Parameter-server training: a coordinator, sharded servers and workers
//! running minibatch SGD with a synchronization barrier every `P` operations.
//!
//! Two schedules share the same shard and worker code. [`Schedule::Deterministic`]
//! replays the protocol as a discrete-event simulation on one thread;
//! [`Schedule::Threaded`] runs every shard and worker on its own thread and
//! connects them with channels.

mod protocol;
mod server;
mod sim;
mod threaded;
mod worker;

use std::collections::{HashMap, VecDeque};
use std::time::{Duration, Instant};

use dch_core::model::coordinate_medians;
use dch_core::{
    Dataset, FactorMatrices, FactorVector, FactorView, HashCode, Hyperparams, Objective,
};
use thiserror::Error;

pub use protocol::{GradientMessage, KeyKind, ParameterKey, PullRequest, PullResponse, Snapshot};
pub use server::ServerShard;
pub use worker::{partition_data, MinibatchSampler, PreparedOp, ServerLink, Worker};

/// Failures of a training run.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum RuntimeError {
    /// Model-level error (bad hyperparameters, dimension mismatch, ...).
    #[error(transparent)]
    Model(#[from] dch_core::Error),
    /// A message named a key the receiving shard does not hold.
    #[error("shard {shard} does not own {key:?}")]
    UnknownKey {
        /// Receiving shard.
        shard: usize,
        /// Offending key.
        key: ParameterKey,
    },
    /// Any other violation of the pull/push protocol.
    #[error("protocol violation: {0}")]
    Protocol(String),
    /// More workers than triples.
    #[error("cannot split {triples} triples across {workers} workers")]
    TooManyWorkers {
        /// Requested workers.
        workers: usize,
        /// Available triples.
        triples: usize,
    },
    /// A gradient was computed from a snapshot older than the bound allows.
    #[error("worker {worker} op {op} used a snapshot {staleness} operations old (bound {bound})")]
    StalenessViolation {
        /// Worker.
        worker: usize,
        /// Operation index.
        op: u64,
        /// Observed staleness.
        staleness: u64,
        /// Synchronization period.
        bound: u64,
    },
    /// The training loss blew up.
    #[error("training diverged at barrier {barrier}: loss {loss} vs initial {initial}")]
    Diverged {
        /// Barrier index.
        barrier: u64,
        /// Loss at that barrier.
        loss: f64,
        /// Loss before training.
        initial: f64,
    },
    /// A runtime thread went away.
    #[error("runtime channel closed: {0}")]
    Disconnected(&'static str),
}

/// How long each SGD operation takes, in ticks.
#[derive(Debug, Clone, PartialEq)]
pub enum OpTiming {
    /// One tick per operation.
    Uniform,
    /// Worker `w` takes `ticks[w % ticks.len()]` per operation.
    PerWorker(Vec<u64>),
    /// Seeded per-operation draw from `min..=max`.
    Jitter {
        /// Shortest operation.
        min: u64,
        /// Longest operation.
        max: u64,
    },
}

impl OpTiming {
    /// Ticks taken by operation `op` of worker `worker`.
    pub fn duration(&self, seed: u64, worker: usize, op: u64) -> u64 {
        match self {
            OpTiming::Uniform => 1,
            OpTiming::PerWorker(t) if t.is_empty() => 1,
            OpTiming::PerWorker(t) => t[worker % t.len()],
            OpTiming::Jitter { min, max } => {
                let span = max.saturating_sub(*min) + 1;
                let h = mix(seed ^ mix((worker as u64) << 32 ^ op));
                min + h % span
            }
        }
    }
}

fn mix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Execution strategy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Schedule {
    /// Single-threaded discrete-event simulation; ticks are virtual time.
    Deterministic,
    /// One thread per shard and per worker; each tick sleeps `tick`.
    Threaded {
        /// Wall-clock length of a tick. Zero disables sleeping.
        tick: Duration,
    },
}

/// Everything a training run needs besides the data.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingConfig {
    /// Hyperparameters.
    pub hyper: Hyperparams,
    /// Loss to minimize.
    pub objective: Objective,
    /// Execution strategy.
    pub schedule: Schedule,
    /// Per-operation durations.
    pub timing: OpTiming,
    /// Stop once the relative loss change over this many barriers falls
    /// below the tolerance; `None` always runs the full budget.
    pub convergence: Option<(usize, f64)>,
    /// Stop as soon as the training loss is at or below this value.
    pub stop_below: Option<f64>,
    /// Keep the key set of every pushed message in the op log.
    pub record_keys: bool,
}

impl TrainingConfig {
    /// Hashing objective, deterministic schedule, default convergence test.
    pub fn dch(hyper: Hyperparams) -> Self {
        let lambda = hyper.lambda;
        TrainingConfig {
            hyper,
            objective: Objective::Dch { lambda },
            schedule: Schedule::Deterministic,
            timing: OpTiming::Uniform,
            convergence: Some((5, 1e-5)),
            stop_below: None,
            record_keys: false,
        }
    }

    /// Matrix-factorization baseline with the same settings.
    pub fn mf(hyper: Hyperparams) -> Self {
        let lambda = hyper.lambda;
        TrainingConfig {
            objective: Objective::MatrixFactorization { lambda },
            ..TrainingConfig::dch(hyper)
        }
    }

    /// Same config on the threaded schedule.
    pub fn threaded(mut self, tick: Duration) -> Self {
        self.schedule = Schedule::Threaded { tick };
        self
    }
}

/// One completed SGD operation.
#[derive(Debug, Clone, PartialEq)]
pub struct OpRecord {
    /// Worker.
    pub worker: usize,
    /// Zero-based operation index of that worker.
    pub op: u64,
    /// Barrier period the operation ran in, starting at 1.
    pub period: u64,
    /// Start time: virtual ticks or milliseconds since the run started.
    pub start: f64,
    /// Time the gradients were pushed, same unit.
    pub end: f64,
    /// Operations of the slowest worker missing from the pulled snapshot.
    pub staleness: u64,
    /// Keys of the pushed message, if recorded.
    pub keys: Vec<ParameterKey>,
}

/// Loss at one barrier.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TracePoint {
    /// Barrier index; 0 is the initial state.
    pub barrier: u64,
    /// Milliseconds since training started.
    pub wall_clock_ms: f64,
    /// Full training loss.
    pub loss: f64,
}

/// Why training stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    /// Epoch budget used up.
    Budget,
    /// Relative loss change fell below the tolerance.
    Converged,
    /// Loss reached the requested threshold.
    Threshold,
}

/// Instrumentation collected during a run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunStats {
    /// Operations completed per worker.
    pub ops_per_worker: Vec<u64>,
    /// Barriers executed.
    pub barriers: u64,
    /// Largest staleness seen by any operation.
    pub max_staleness: u64,
    /// Largest gap between the incrementally maintained sums and a
    /// from-scratch recomputation, checked before each projection.
    pub max_aggregate_drift: f64,
    /// Largest factor norm right after a barrier.
    pub max_post_barrier_norm: f64,
    /// Why the run ended.
    pub stop: StopReason,
    /// Every operation, in completion order.
    pub ops: Vec<OpRecord>,
    /// Per-key count of applied updates, summed over shards.
    pub update_counts: HashMap<ParameterKey, u64>,
}

/// Result of [`train`].
#[derive(Debug, Clone)]
pub struct TrainingOutput {
    /// Relaxed factors after the last barrier.
    pub factors: FactorMatrices,
    /// User codes rounded by the servers.
    pub user_codes: Vec<HashCode>,
    /// Item codes rounded by the servers.
    pub item_codes: Vec<HashCode>,
    /// Loss after every barrier, starting with the initial loss.
    pub trace: Vec<TracePoint>,
    /// Instrumentation.
    pub stats: RunStats,
}

/// Barrier-level view of a running cluster.
pub(crate) trait Cluster {
    /// Lets every worker run exactly `ops` operations and drains all pushes.
    fn run_period(&mut self, ops: usize, period: u64) -> Result<Vec<OpRecord>, RuntimeError>;
    /// Projects every stored factor.
    fn project(&mut self, gamma: f64) -> Result<(), RuntimeError>;
    /// All stored entries, every shard.
    fn gather(&mut self) -> Result<Vec<(ParameterKey, FactorVector)>, RuntimeError>;
    /// Overwrites one key on its owner.
    fn set(&mut self, key: ParameterKey, value: FactorVector) -> Result<(), RuntimeError>;
    /// Rounds every factor on its owner.
    fn round(
        &mut self,
        user_medians: &[f64],
        item_medians: &[f64],
    ) -> Result<Vec<(ParameterKey, HashCode)>, RuntimeError>;
    /// Per-key update counts, summed over shards.
    fn update_counts(&mut self) -> Result<HashMap<ParameterKey, u64>, RuntimeError>;
}

/// Barrier bookkeeping owned by the coordinator.
#[derive(Debug, Clone)]
pub struct CoordinatorState {
    /// Completed barriers.
    pub barrier: u64,
    /// Operations completed per worker.
    pub ops_per_worker: Vec<u64>,
    /// Operations per worker that make up one epoch.
    pub ops_per_epoch: u64,
    window: usize,
    tolerance: f64,
    losses: VecDeque<f64>,
}

impl CoordinatorState {
    /// Fresh state for `workers` workers.
    pub fn new(workers: usize, ops_per_epoch: u64, convergence: Option<(usize, f64)>) -> Self {
        let (window, tolerance) = convergence.unwrap_or((0, 0.0));
        CoordinatorState {
            barrier: 0,
            ops_per_worker: vec![0; workers],
            ops_per_epoch,
            window,
            tolerance,
            losses: VecDeque::new(),
        }
    }

    /// Completed epochs, by the slowest worker.
    pub fn epoch(&self) -> u64 {
        let done = self.ops_per_worker.iter().copied().min().unwrap_or(0);
        done / self.ops_per_epoch.max(1)
    }

    /// Records a barrier loss; true once the relative change across the
    /// window drops below the tolerance.
    pub fn observe(&mut self, loss: f64) -> bool {
        if self.window == 0 {
            return false;
        }
        self.losses.push_back(loss);
        if self.losses.len() > self.window + 1 {
            self.losses.pop_front();
        }
        if self.losses.len() <= self.window {
            return false;
        }
        let old = self.losses[0];
        let change = (old - loss).abs() / old.abs().max(f64::MIN_POSITIVE);
        change < self.tolerance
    }
}

/// Trains the hashing objective with `hyper` on the deterministic schedule.
pub fn run_training(data: &Dataset, hyper: &Hyperparams) -> Result<TrainingOutput, RuntimeError> {
    train(data, &TrainingConfig::dch(hyper.clone()))
}

/// Runs the full coordinator loop: initialize, repeat `P`-operation periods
/// and barriers, then round on the servers.
pub fn train(data: &Dataset, config: &TrainingConfig) -> Result<TrainingOutput, RuntimeError> {
    let h = &config.hyper;
    h.validate()?;
    let shards = partition_data(data, h.workers, h.seed)?;
    let sums = config.objective.uses_balance_sums();
    let workers: Vec<Worker> = shards
        .into_iter()
        .enumerate()
        .map(|(w, t)| Worker::new(w, t, h.batch_size, h.servers, h.code_bits, h.seed))
        .collect();
    let servers: Vec<ServerShard> = (0..h.servers)
        .map(|s| {
            let mut shard = ServerShard::new(s, h.servers, h.code_bits, h.workers, h.learning_rate);
            shard.initialize(data.num_users(), data.num_items(), h.seed, sums);
            shard
        })
        .collect();
    let ops_per_epoch = workers.iter().map(Worker::ops_per_pass).max().unwrap_or(1) as u64;
    match config.schedule {
        Schedule::Deterministic => {
            let mut cluster = sim::SimCluster::new(servers, workers, config);
            coordinate(&mut cluster, data, config, ops_per_epoch)
        }
        Schedule::Threaded { tick } => {
            let mut cluster = threaded::ThreadedCluster::spawn(servers, workers, config, tick);
            coordinate(&mut cluster, data, config, ops_per_epoch)
        }
    }
}

/// Dense factors from gathered entries, plus the stored sums if present.
fn assemble(
    data: &Dataset,
    dim: usize,
    entries: &[(ParameterKey, FactorVector)],
) -> (FactorMatrices, Option<(Vec<f64>, Vec<f64>)>) {
    let mut users = vec![0.0; data.num_users() * dim];
    let mut items = vec![0.0; data.num_items() * dim];
    let mut user_sum = None;
    let mut item_sum = None;
    for (k, v) in entries {
        let i = k.index as usize;
        match k.kind {
            KeyKind::User => users[i * dim..(i + 1) * dim].copy_from_slice(v),
            KeyKind::Item => items[i * dim..(i + 1) * dim].copy_from_slice(v),
            KeyKind::UserSum => user_sum = Some(v.0.clone()),
            KeyKind::ItemSum => item_sum = Some(v.0.clone()),
        }
    }
    let mut fm = FactorMatrices::from_rows(dim, users, items);
    fm.set_active(data);
    (fm, user_sum.zip(item_sum))
}

/// Gathers the factors and resets the server-side sums to exact values.
fn synchronize<C: Cluster>(
    cluster: &mut C,
    data: &Dataset,
    dim: usize,
    sums: bool,
) -> Result<FactorMatrices, RuntimeError> {
    let (fm, _) = assemble(data, dim, &cluster.gather()?);
    if sums {
        cluster.set(ParameterKey::USER_SUM, sum_of(fm.user_sum()))?;
        cluster.set(ParameterKey::ITEM_SUM, sum_of(fm.item_sum()))?;
    }
    Ok(fm)
}

fn sum_of(s: Option<&[f64]>) -> FactorVector {
    FactorVector(s.unwrap_or_default().to_vec())
}

fn coordinate<C: Cluster>(
    cluster: &mut C,
    data: &Dataset,
    config: &TrainingConfig,
    ops_per_epoch: u64,
) -> Result<TrainingOutput, RuntimeError> {
    let h = &config.hyper;
    let dim = h.code_bits;
    let period = h.sync_period as u64;
    let sums = config.objective.uses_balance_sums();
    let started = Instant::now();
    let elapsed = || started.elapsed().as_secs_f64() * 1e3;

    let mut state = CoordinatorState::new(h.workers, ops_per_epoch, config.convergence);
    let mut fm = synchronize(cluster, data, dim, sums)?;
    let initial = config.objective.loss(data, &fm)?;
    if !initial.is_finite() {
        return Err(RuntimeError::Diverged {
            barrier: 0,
            loss: initial,
            initial,
        });
    }
    let mut trace = vec![TracePoint {
        barrier: 0,
        wall_clock_ms: elapsed(),
        loss: initial,
    }];
    let mut stats = RunStats {
        ops_per_worker: vec![0; h.workers],
        barriers: 0,
        max_staleness: 0,
        max_aggregate_drift: 0.0,
        max_post_barrier_norm: 0.0,
        stop: StopReason::Budget,
        ops: Vec::new(),
        update_counts: HashMap::new(),
    };
    if config.stop_below.is_some_and(|s| initial <= s) {
        stats.stop = StopReason::Threshold;
    }

    let periods = (h.epochs as u64 * ops_per_epoch).div_ceil(period);
    let mut t = 0;
    while t < periods && stats.stop == StopReason::Budget {
        t += 1;
        let records = cluster.run_period(h.sync_period, t)?;
        for r in &records {
            if r.staleness >= period {
                return Err(RuntimeError::StalenessViolation {
                    worker: r.worker,
                    op: r.op,
                    staleness: r.staleness,
                    bound: period,
                });
            }
            state.ops_per_worker[r.worker] += 1;
            stats.max_staleness = stats.max_staleness.max(r.staleness);
        }
        if state.ops_per_worker.iter().any(|&n| n != t * period) {
            return Err(RuntimeError::Protocol(format!(
                "barrier {t} reached with op counts {:?}",
                state.ops_per_worker
            )));
        }
        stats.ops.extend(records);

        if sums {
            let (mut pre, stored) = assemble(data, dim, &cluster.gather()?);
            if let Some((u, v)) = stored {
                pre.set_sums(&u, &v);
                stats.max_aggregate_drift = stats.max_aggregate_drift.max(pre.sum_drift());
            }
        }
        cluster.project(h.gamma)?;
        fm = synchronize(cluster, data, dim, sums)?;
        state.barrier = t;
        stats.max_post_barrier_norm = stats.max_post_barrier_norm.max(fm.max_norm());

        let loss = config.objective.loss(data, &fm)?;
        trace.push(TracePoint {
            barrier: t,
            wall_clock_ms: elapsed(),
            loss,
        });
        if !loss.is_finite() || loss > 1e6 * initial.max(f64::MIN_POSITIVE) {
            return Err(RuntimeError::Diverged {
                barrier: t,
                loss,
                initial,
            });
        }
        if config.stop_below.is_some_and(|s| loss <= s) {
            stats.stop = StopReason::Threshold;
        } else if state.observe(loss) {
            stats.stop = StopReason::Converged;
        }
    }
    stats.barriers = state.barrier;
    stats.ops_per_worker = state.ops_per_worker.clone();
    stats.update_counts = cluster.update_counts()?;

    let user_medians = coordinate_medians(fm.users(), dim);
    let item_medians = coordinate_medians(fm.items(), dim);
    let mut user_codes = vec![HashCode::zeros(dim); data.num_users()];
    let mut item_codes = vec![HashCode::zeros(dim); data.num_items()];
    for (k, code) in cluster.round(&user_medians, &item_medians)? {
        match k.kind {
            KeyKind::User => user_codes[k.index as usize] = code,
            KeyKind::Item => item_codes[k.index as usize] = code,
            _ => {}
        }
    }
    Ok(TrainingOutput {
        factors: fm,
        user_codes,
        item_codes,
        trace,
        stats,
    })
}

//! Single-threaded discrete-event execution of the protocol.
//!
//! Each operation pulls and computes at its start time and pushes at its end
//! time. Pushes are delivered in `(time, worker)` order, so a run is a pure
//! function of the config.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap};

use dch_core::{FactorVector, HashCode, Objective};

use super::protocol::{GradientMessage, ParameterKey, PullRequest, PullResponse};
use super::server::ServerShard;
use super::worker::{ServerLink, Worker};
use super::{Cluster, OpRecord, OpTiming, RuntimeError, TrainingConfig};

pub(crate) struct SimCluster {
    servers: Vec<ServerShard>,
    workers: Vec<Worker>,
    objective: Objective,
    timing: OpTiming,
    seed: u64,
    record_keys: bool,
    now: u64,
}

struct Direct<'a>(&'a [ServerShard]);

impl ServerLink for Direct<'_> {
    fn pull(&mut self, shard: usize, request: PullRequest) -> Result<PullResponse, RuntimeError> {
        self.0[shard].handle_pull(&request)
    }
}

impl SimCluster {
    pub(crate) fn new(
        servers: Vec<ServerShard>,
        workers: Vec<Worker>,
        config: &TrainingConfig,
    ) -> Self {
        SimCluster {
            servers,
            workers,
            objective: config.objective,
            timing: config.timing.clone(),
            seed: config.hyper.seed,
            record_keys: config.record_keys,
            now: 0,
        }
    }

    fn start(
        &mut self,
        w: usize,
        at: u64,
        period: u64,
    ) -> Result<(u64, GradientMessage, OpRecord), RuntimeError> {
        let worker = &mut self.workers[w];
        let op = worker.ops_done();
        let prepared = worker.prepare(&mut Direct(&self.servers), &self.objective)?;
        let end = at + self.timing.duration(self.seed, w, op);
        let record = OpRecord {
            worker: w,
            op,
            period,
            start: at as f64,
            end: end as f64,
            staleness: prepared.staleness,
            keys: if self.record_keys {
                prepared.message.keys().collect()
            } else {
                Vec::new()
            },
        };
        Ok((end, prepared.message, record))
    }
}

impl Cluster for SimCluster {
    fn run_period(&mut self, ops: usize, period: u64) -> Result<Vec<OpRecord>, RuntimeError> {
        let shards = self.servers.len();
        let n = self.workers.len();
        let mut remaining = vec![ops; n];
        let mut pending: Vec<Option<(GradientMessage, OpRecord)>> = vec![None; n];
        let mut heap = BinaryHeap::new();
        let mut records = Vec::with_capacity(ops * n);
        if ops == 0 {
            return Ok(records);
        }
        for w in 0..n {
            let (end, msg, rec) = self.start(w, self.now, period)?;
            pending[w] = Some((msg, rec));
            heap.push(Reverse((end, w)));
        }
        let mut last = self.now;
        while let Some(Reverse((t, w))) = heap.pop() {
            let (msg, rec) = pending[w].take().expect("scheduled op has a message");
            for (s, part) in msg.split_by_shard(shards).iter().enumerate() {
                self.servers[s].apply(part)?;
            }
            self.workers[w].finish_op();
            records.push(rec);
            last = t;
            remaining[w] -= 1;
            if remaining[w] > 0 {
                let (end, msg, rec) = self.start(w, t, period)?;
                pending[w] = Some((msg, rec));
                heap.push(Reverse((end, w)));
            }
        }
        self.now = last;
        Ok(records)
    }

    fn project(&mut self, gamma: f64) -> Result<(), RuntimeError> {
        self.servers.iter_mut().for_each(|s| s.project(gamma));
        Ok(())
    }

    fn gather(&mut self) -> Result<Vec<(ParameterKey, FactorVector)>, RuntimeError> {
        Ok(self.servers.iter().flat_map(ServerShard::entries).collect())
    }

    fn set(&mut self, key: ParameterKey, value: FactorVector) -> Result<(), RuntimeError> {
        let s = key.shard(self.servers.len());
        self.servers[s].set(key, value)
    }

    fn round(
        &mut self,
        user_medians: &[f64],
        item_medians: &[f64],
    ) -> Result<Vec<(ParameterKey, HashCode)>, RuntimeError> {
        Ok(self
            .servers
            .iter()
            .flat_map(|s| s.round(user_medians, item_medians))
            .collect())
    }

    fn update_counts(&mut self) -> Result<HashMap<ParameterKey, u64>, RuntimeError> {
        let mut out = HashMap::new();
        for s in &self.servers {
            for (k, c) in s.update_counts() {
                *out.entry(k).or_default() += c;
            }
        }
        Ok(out)
    }
}

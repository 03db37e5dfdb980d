//! One thread per shard and per worker, connected by channels.
//!
//! Each shard drains a single FIFO queue, which serializes its updates. A
//! worker reports a finished period only after sending all of its pushes, so
//! any command the coordinator sends afterwards is queued behind them.

use std::collections::HashMap;
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use crossbeam_channel::{bounded, unbounded, Receiver, Sender};
use dch_core::{FactorVector, HashCode, Objective};

use super::protocol::{GradientMessage, ParameterKey, PullRequest, PullResponse};
use super::server::ServerShard;
use super::worker::{ServerLink, Worker};
use super::{Cluster, OpRecord, OpTiming, RuntimeError, TrainingConfig};

type Reply<T> = Sender<Result<T, RuntimeError>>;

enum ServerCmd {
    Pull(PullRequest, Reply<PullResponse>),
    Push(GradientMessage),
    Project(f64, Reply<()>),
    Gather(Reply<Vec<(ParameterKey, FactorVector)>>),
    Set(ParameterKey, FactorVector, Reply<()>),
    Round(
        Arc<(Vec<f64>, Vec<f64>)>,
        Reply<Vec<(ParameterKey, HashCode)>>,
    ),
    Counts(Reply<HashMap<ParameterKey, u64>>),
}

struct RunCmd {
    ops: usize,
    period: u64,
    reply: Reply<Vec<OpRecord>>,
}

pub(crate) struct ThreadedCluster {
    servers: Vec<Sender<ServerCmd>>,
    workers: Vec<Sender<RunCmd>>,
    server_threads: Vec<JoinHandle<()>>,
    worker_threads: Vec<JoinHandle<()>>,
}

fn serve(mut shard: ServerShard, rx: Receiver<ServerCmd>) {
    // A failed push cannot be answered directly; it is reported on the next
    // coordinator command instead.
    let mut failure: Option<RuntimeError> = None;
    let check = |failure: &Option<RuntimeError>| match failure {
        Some(e) => Err(e.clone()),
        None => Ok(()),
    };
    for cmd in rx {
        match cmd {
            ServerCmd::Pull(req, reply) => {
                let _ = reply.send(check(&failure).and_then(|_| shard.handle_pull(&req)));
            }
            ServerCmd::Push(msg) => {
                if failure.is_none() {
                    failure = shard.apply(&msg).err();
                }
            }
            ServerCmd::Project(gamma, reply) => {
                let _ = reply.send(check(&failure).map(|_| shard.project(gamma)));
            }
            ServerCmd::Gather(reply) => {
                let _ = reply.send(check(&failure).map(|_| shard.entries()));
            }
            ServerCmd::Set(key, value, reply) => {
                let _ = reply.send(check(&failure).and_then(|_| shard.set(key, value)));
            }
            ServerCmd::Round(medians, reply) => {
                let _ = reply.send(check(&failure).map(|_| shard.round(&medians.0, &medians.1)));
            }
            ServerCmd::Counts(reply) => {
                let _ = reply.send(check(&failure).map(|_| shard.update_counts()));
            }
        }
    }
}

struct ChannelLink<'a>(&'a [Sender<ServerCmd>]);

impl ServerLink for ChannelLink<'_> {
    fn pull(&mut self, shard: usize, request: PullRequest) -> Result<PullResponse, RuntimeError> {
        let (tx, rx) = bounded(1);
        self.0[shard]
            .send(ServerCmd::Pull(request, tx))
            .map_err(|_| RuntimeError::Disconnected("server"))?;
        rx.recv()
            .map_err(|_| RuntimeError::Disconnected("server"))?
    }
}

struct WorkerContext {
    servers: Vec<Sender<ServerCmd>>,
    objective: Objective,
    timing: OpTiming,
    seed: u64,
    tick: Duration,
    record_keys: bool,
    origin: Instant,
}

impl WorkerContext {
    fn run(
        &self,
        worker: &mut Worker,
        ops: usize,
        period: u64,
    ) -> Result<Vec<OpRecord>, RuntimeError> {
        let ms = |t: Instant| t.duration_since(self.origin).as_secs_f64() * 1e3;
        let mut records = Vec::with_capacity(ops);
        for _ in 0..ops {
            let start = Instant::now();
            let op = worker.ops_done();
            let prepared = worker.prepare(&mut ChannelLink(&self.servers), &self.objective)?;
            let ticks = self.timing.duration(self.seed, worker.id(), op);
            if !self.tick.is_zero() {
                std::thread::sleep(self.tick * ticks as u32);
            }
            let keys = if self.record_keys {
                prepared.message.keys().collect()
            } else {
                Vec::new()
            };
            for (s, part) in prepared
                .message
                .split_by_shard(self.servers.len())
                .into_iter()
                .enumerate()
            {
                self.servers[s]
                    .send(ServerCmd::Push(part))
                    .map_err(|_| RuntimeError::Disconnected("server"))?;
            }
            worker.finish_op();
            records.push(OpRecord {
                worker: worker.id(),
                op,
                period,
                start: ms(start),
                end: ms(Instant::now()),
                staleness: prepared.staleness,
                keys,
            });
        }
        Ok(records)
    }
}

impl ThreadedCluster {
    pub(crate) fn spawn(
        servers: Vec<ServerShard>,
        workers: Vec<Worker>,
        config: &TrainingConfig,
        tick: Duration,
    ) -> Self {
        let mut server_tx = Vec::new();
        let mut server_threads = Vec::new();
        for shard in servers {
            let (tx, rx) = unbounded();
            server_tx.push(tx);
            server_threads.push(std::thread::spawn(move || serve(shard, rx)));
        }
        let origin = Instant::now();
        let mut worker_tx = Vec::new();
        let mut worker_threads = Vec::new();
        for mut worker in workers {
            let (tx, rx) = unbounded::<RunCmd>();
            let ctx = WorkerContext {
                servers: server_tx.clone(),
                objective: config.objective,
                timing: config.timing.clone(),
                seed: config.hyper.seed,
                tick,
                record_keys: config.record_keys,
                origin,
            };
            worker_tx.push(tx);
            worker_threads.push(std::thread::spawn(move || {
                for cmd in rx {
                    let out = ctx.run(&mut worker, cmd.ops, cmd.period);
                    let _ = cmd.reply.send(out);
                }
            }));
        }
        ThreadedCluster {
            servers: server_tx,
            workers: worker_tx,
            server_threads,
            worker_threads,
        }
    }

    fn ask<T>(
        &self,
        shard: usize,
        make: impl FnOnce(Reply<T>) -> ServerCmd,
    ) -> Result<Receiver<Result<T, RuntimeError>>, RuntimeError> {
        let (tx, rx) = bounded(1);
        self.servers[shard]
            .send(make(tx))
            .map_err(|_| RuntimeError::Disconnected("server"))?;
        Ok(rx)
    }

    fn ask_all<T>(&self, make: impl Fn(Reply<T>) -> ServerCmd) -> Result<Vec<T>, RuntimeError> {
        let pending = (0..self.servers.len())
            .map(|s| self.ask(s, &make))
            .collect::<Result<Vec<_>, _>>()?;
        pending
            .into_iter()
            .map(|rx| {
                rx.recv()
                    .map_err(|_| RuntimeError::Disconnected("server"))?
            })
            .collect()
    }
}

impl Cluster for ThreadedCluster {
    fn run_period(&mut self, ops: usize, period: u64) -> Result<Vec<OpRecord>, RuntimeError> {
        let mut pending = Vec::with_capacity(self.workers.len());
        for w in &self.workers {
            let (tx, rx) = bounded(1);
            w.send(RunCmd {
                ops,
                period,
                reply: tx,
            })
            .map_err(|_| RuntimeError::Disconnected("worker"))?;
            pending.push(rx);
        }
        let mut records = Vec::new();
        let mut first_error = None;
        for rx in pending {
            match rx
                .recv()
                .map_err(|_| RuntimeError::Disconnected("worker"))?
            {
                Ok(r) => records.extend(r),
                Err(e) => {
                    first_error.get_or_insert(e);
                }
            }
        }
        match first_error {
            Some(e) => Err(e),
            None => {
                records.sort_by(|a, b| a.end.total_cmp(&b.end).then(a.worker.cmp(&b.worker)));
                Ok(records)
            }
        }
    }

    fn project(&mut self, gamma: f64) -> Result<(), RuntimeError> {
        self.ask_all(|tx| ServerCmd::Project(gamma, tx)).map(|_| ())
    }

    fn gather(&mut self) -> Result<Vec<(ParameterKey, FactorVector)>, RuntimeError> {
        Ok(self.ask_all(ServerCmd::Gather)?.concat())
    }

    fn set(&mut self, key: ParameterKey, value: FactorVector) -> Result<(), RuntimeError> {
        let s = key.shard(self.servers.len());
        self.ask(s, |tx| ServerCmd::Set(key, value, tx))?
            .recv()
            .map_err(|_| RuntimeError::Disconnected("server"))?
    }

    fn round(
        &mut self,
        user_medians: &[f64],
        item_medians: &[f64],
    ) -> Result<Vec<(ParameterKey, HashCode)>, RuntimeError> {
        let medians = Arc::new((user_medians.to_vec(), item_medians.to_vec()));
        Ok(self
            .ask_all(|tx| ServerCmd::Round(Arc::clone(&medians), tx))?
            .concat())
    }

    fn update_counts(&mut self) -> Result<HashMap<ParameterKey, u64>, RuntimeError> {
        let mut out = HashMap::new();
        for counts in self.ask_all(ServerCmd::Counts)? {
            for (k, c) in counts {
                *out.entry(k).or_default() += c;
            }
        }
        Ok(out)
    }
}

impl Drop for ThreadedCluster {
    fn drop(&mut self) {
        self.workers.clear();
        for t in self.worker_threads.drain(..) {
            let _ = t.join();
        }
        self.servers.clear();
        for t in self.server_threads.drain(..) {
            let _ = t.join();
        }
    }
}

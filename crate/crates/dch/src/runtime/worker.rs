//! Workers: minibatch sampling, pulls, local gradient computation.

use std::collections::BTreeMap;

use dch_core::{Dataset, Objective, RatingTriple};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::protocol::{GradientMessage, ParameterKey, PullRequest, PullResponse, Snapshot};
use super::RuntimeError;

/// Splits `data` into `workers` disjoint shards whose sizes differ by at most
/// one. Assignment is a seeded shuffle; each shard keeps the original triple
/// order, so a single worker receives the data unchanged.
pub fn partition_data(
    data: &Dataset,
    workers: usize,
    seed: u64,
) -> Result<Vec<Vec<RatingTriple>>, RuntimeError> {
    let n = data.len();
    if workers == 0 || workers > n {
        return Err(RuntimeError::TooManyWorkers {
            workers,
            triples: n,
        });
    }
    let mut order: Vec<usize> = (0..n).collect();
    if workers > 1 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(4 << 40);
        order.shuffle(&mut rng);
    }
    let (base, extra) = (n / workers, n % workers);
    let mut shards = Vec::with_capacity(workers);
    let mut start = 0;
    for w in 0..workers {
        let len = base + usize::from(w < extra);
        let mut idx = order[start..start + len].to_vec();
        idx.sort_unstable();
        shards.push(idx.into_iter().map(|t| data.triples()[t]).collect());
        start += len;
    }
    Ok(shards)
}

/// Draws minibatches without replacement, reshuffling at every pass.
#[derive(Debug, Clone)]
pub struct MinibatchSampler {
    order: Vec<usize>,
    cursor: usize,
    batch: usize,
    rng: ChaCha8Rng,
}

impl MinibatchSampler {
    /// Sampler over `len` triples for worker `worker`. The batch size is
    /// clamped to `len`.
    pub fn new(len: usize, batch: usize, seed: u64, worker: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(3 << 40 | worker as u64);
        MinibatchSampler {
            order: (0..len).collect(),
            cursor: len,
            batch: batch.min(len).max(1),
            rng,
        }
    }

    /// Effective batch size.
    pub fn batch_size(&self) -> usize {
        self.batch
    }

    /// Operations per full pass.
    pub fn ops_per_pass(&self) -> usize {
        self.order.len().div_ceil(self.batch)
    }

    /// Positions of the next minibatch. When the pass runs out the rest of
    /// the batch comes from a freshly shuffled pass.
    pub fn next_batch(&mut self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.batch);
        while out.len() < self.batch {
            if self.cursor == self.order.len() {
                self.order.shuffle(&mut self.rng);
                self.cursor = 0;
            }
            let take = (self.batch - out.len()).min(self.order.len() - self.cursor);
            out.extend_from_slice(&self.order[self.cursor..self.cursor + take]);
            self.cursor += take;
        }
        out
    }
}

/// Fetches parameters from shards on behalf of a worker.
pub trait ServerLink {
    /// Sends `request` to `shard` and waits for the answer.
    fn pull(&mut self, shard: usize, request: PullRequest) -> Result<PullResponse, RuntimeError>;
}

/// Output of one local SGD operation, ready to be pushed.
#[derive(Debug, Clone)]
pub struct PreparedOp {
    /// Gradients to push.
    pub message: GradientMessage,
    /// Keys that were pulled, ascending.
    pub pulled: Vec<ParameterKey>,
    /// Operations of the slowest worker missing from the snapshot, relative
    /// to this operation's index.
    pub staleness: u64,
}

/// A worker holding its data shard.
#[derive(Debug, Clone)]
pub struct Worker {
    id: usize,
    triples: Vec<RatingTriple>,
    sampler: MinibatchSampler,
    shards: usize,
    dim: usize,
    ops_done: u64,
}

impl Worker {
    /// Worker `id` over `triples`.
    pub fn new(
        id: usize,
        triples: Vec<RatingTriple>,
        batch_size: usize,
        shards: usize,
        dim: usize,
        seed: u64,
    ) -> Self {
        let sampler = MinibatchSampler::new(triples.len(), batch_size, seed, id);
        Worker {
            id,
            triples,
            sampler,
            shards,
            dim,
            ops_done: 0,
        }
    }

    /// Worker id.
    pub fn id(&self) -> usize {
        self.id
    }

    /// Completed operations.
    pub fn ops_done(&self) -> u64 {
        self.ops_done
    }

    /// Operations per pass over the shard.
    pub fn ops_per_pass(&self) -> usize {
        self.sampler.ops_per_pass()
    }

    /// Marks the current operation as pushed.
    pub fn finish_op(&mut self) {
        self.ops_done += 1;
    }

    /// Samples a batch, pulls the touched keys (plus the sums if the
    /// objective needs them) and computes the gradient message.
    pub fn prepare<L: ServerLink>(
        &mut self,
        link: &mut L,
        objective: &Objective,
    ) -> Result<PreparedOp, RuntimeError> {
        let batch: Vec<RatingTriple> = self
            .sampler
            .next_batch()
            .into_iter()
            .map(|p| self.triples[p])
            .collect();
        let mut by_user: BTreeMap<u32, Vec<RatingTriple>> = BTreeMap::new();
        let mut by_item: BTreeMap<u32, Vec<RatingTriple>> = BTreeMap::new();
        for t in &batch {
            by_user.entry(t.user).or_default().push(*t);
            by_item.entry(t.item).or_default().push(*t);
        }
        let sums = objective.uses_balance_sums();
        let mut keys: Vec<ParameterKey> = by_user
            .keys()
            .map(|&u| ParameterKey::user(u as usize))
            .chain(by_item.keys().map(|&i| ParameterKey::item(i as usize)))
            .collect();
        if sums {
            keys.push(ParameterKey::USER_SUM);
            keys.push(ParameterKey::ITEM_SUM);
        }
        keys.sort_unstable();

        let mut per_shard: Vec<Vec<ParameterKey>> = vec![Vec::new(); self.shards];
        for k in &keys {
            per_shard[k.shard(self.shards)].push(*k);
        }
        let mut responses = Vec::new();
        for (s, ks) in per_shard.into_iter().enumerate() {
            if !ks.is_empty() {
                let req = PullRequest {
                    worker: self.id,
                    keys: ks,
                };
                responses.push(link.pull(s, req)?);
            }
        }
        let snapshot = Snapshot::from_responses(self.dim, responses);
        let staleness = self.ops_done.saturating_sub(snapshot.min_clock());

        let users = by_user
            .iter()
            .map(|(&u, b)| {
                Ok((
                    u as usize,
                    objective.user_gradient(u as usize, b, &snapshot)?,
                ))
            })
            .collect::<Result<Vec<_>, dch_core::Error>>()?;
        let items = by_item
            .iter()
            .map(|(&i, b)| {
                Ok((
                    i as usize,
                    objective.item_gradient(i as usize, b, &snapshot)?,
                ))
            })
            .collect::<Result<Vec<_>, dch_core::Error>>()?;
        let message =
            GradientMessage::from_gradients(self.id, self.ops_done, users, items, sums, self.dim);
        if !message.keys().all(|k| keys.binary_search(&k).is_ok()) {
            return Err(RuntimeError::Protocol(format!(
                "worker {} pushed a key it did not pull",
                self.id
            )));
        }
        Ok(PreparedOp {
            message,
            pulled: keys,
            staleness,
        })
    }
}

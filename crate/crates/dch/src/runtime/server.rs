//! One server shard: owns a slice of the parameter keys and serializes every
//! mutation to them.

use std::collections::HashMap;

use dch_core::model::{init_vector, project_in_place, round_with_medians, sgd_step_in_place};
use dch_core::{EntityKind, FactorVector, HashCode};

use super::protocol::{GradientMessage, KeyKind, ParameterKey, PullRequest, PullResponse};
use super::RuntimeError;

/// Key-value store for the keys hashed to one shard.
#[derive(Debug, Clone)]
pub struct ServerShard {
    id: usize,
    shards: usize,
    dim: usize,
    learning_rate: f64,
    store: HashMap<ParameterKey, FactorVector>,
    clock: u64,
    worker_clocks: Vec<u64>,
    updates: HashMap<ParameterKey, u64>,
}

impl ServerShard {
    /// Empty shard `id` of `shards`, expecting messages from `workers` workers.
    pub fn new(id: usize, shards: usize, dim: usize, workers: usize, learning_rate: f64) -> Self {
        ServerShard {
            id,
            shards,
            dim,
            learning_rate,
            store: HashMap::new(),
            clock: 0,
            worker_clocks: vec![0; workers],
            updates: HashMap::new(),
        }
    }

    /// Shard id.
    pub fn id(&self) -> usize {
        self.id
    }

    /// Whether `key` hashes to this shard.
    pub fn owns(&self, key: &ParameterKey) -> bool {
        key.shard(self.shards) == self.id
    }

    /// Seeds every owned user and item factor, plus zeroed sums if
    /// `with_sums`. Values depend only on the seed and the key.
    pub fn initialize(&mut self, num_users: usize, num_items: usize, seed: u64, with_sums: bool) {
        for i in 0..num_users {
            let key = ParameterKey::user(i);
            if self.owns(&key) {
                let v = init_vector(seed, EntityKind::User, i, self.dim);
                self.store.insert(key, v);
            }
        }
        for j in 0..num_items {
            let key = ParameterKey::item(j);
            if self.owns(&key) {
                let v = init_vector(seed, EntityKind::Item, j, self.dim);
                self.store.insert(key, v);
            }
        }
        if with_sums {
            for key in [ParameterKey::USER_SUM, ParameterKey::ITEM_SUM] {
                if self.owns(&key) {
                    self.store.insert(key, FactorVector::zeros(self.dim));
                }
            }
        }
    }

    fn unknown(&self, key: ParameterKey) -> RuntimeError {
        RuntimeError::UnknownKey {
            shard: self.id,
            key,
        }
    }

    /// Current values of the requested keys.
    pub fn handle_pull(&self, request: &PullRequest) -> Result<PullResponse, RuntimeError> {
        let values = request
            .keys
            .iter()
            .map(|k| {
                self.store
                    .get(k)
                    .map(|v| (*k, v.clone()))
                    .ok_or_else(|| self.unknown(*k))
            })
            .collect::<Result<_, _>>()?;
        Ok(PullResponse {
            shard: self.id,
            values,
            clock: self.clock,
            min_worker_clock: self.min_worker_clock(),
        })
    }

    /// Applies one SGD step per entry and advances the clocks. The message is
    /// checked in full before anything is mutated.
    pub fn apply(&mut self, msg: &GradientMessage) -> Result<(), RuntimeError> {
        if msg.worker >= self.worker_clocks.len() {
            return Err(RuntimeError::Protocol(format!(
                "shard {} got a message from unknown worker {}",
                self.id, msg.worker
            )));
        }
        for (k, g) in &msg.entries {
            if !self.store.contains_key(k) {
                return Err(self.unknown(*k));
            }
            if g.len() != self.dim {
                return Err(dch_core::Error::LengthMismatch {
                    expected: self.dim,
                    found: g.len(),
                }
                .into());
            }
        }
        for (k, g) in &msg.entries {
            let x = self.store.get_mut(k).expect("checked above");
            sgd_step_in_place(x, g, self.learning_rate)?;
            *self.updates.entry(*k).or_default() += 1;
        }
        self.clock += 1;
        let c = &mut self.worker_clocks[msg.worker];
        *c = (*c).max(msg.op + 1);
        Ok(())
    }

    /// Projects every stored factor into the `1/sqrt(gamma)` ball. The sums
    /// are left alone; the coordinator recomputes them.
    pub fn project(&mut self, gamma: f64) {
        for (k, v) in self.store.iter_mut() {
            if !k.is_aggregate() {
                project_in_place(v, gamma);
            }
        }
    }

    /// Overwrites an existing key.
    pub fn set(&mut self, key: ParameterKey, value: FactorVector) -> Result<(), RuntimeError> {
        match self.store.get_mut(&key) {
            Some(v) => {
                *v = value;
                Ok(())
            }
            None => Err(self.unknown(key)),
        }
    }

    /// Every stored entry, keys ascending.
    pub fn entries(&self) -> Vec<(ParameterKey, FactorVector)> {
        let mut out: Vec<_> = self.store.iter().map(|(k, v)| (*k, v.clone())).collect();
        out.sort_by_key(|(k, _)| *k);
        out
    }

    /// Codes for every owned factor, thresholding at the given medians.
    pub fn round(
        &self,
        user_medians: &[f64],
        item_medians: &[f64],
    ) -> Vec<(ParameterKey, HashCode)> {
        let mut out: Vec<_> = self
            .store
            .iter()
            .filter_map(|(k, v)| match k.kind {
                KeyKind::User => Some((*k, round_with_medians(v, user_medians))),
                KeyKind::Item => Some((*k, round_with_medians(v, item_medians))),
                _ => None,
            })
            .collect();
        out.sort_by_key(|(k, _)| *k);
        out
    }

    /// Messages applied so far.
    pub fn clock(&self) -> u64 {
        self.clock
    }

    /// Smallest number of operations applied from any one worker.
    pub fn min_worker_clock(&self) -> u64 {
        self.worker_clocks.iter().copied().min().unwrap_or(0)
    }

    /// How many messages have named each key.
    pub fn update_counts(&self) -> HashMap<ParameterKey, u64> {
        self.updates.clone()
    }
}

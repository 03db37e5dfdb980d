//! Keys and messages exchanged between workers and server shards.

use std::collections::HashMap;

use dch_core::{FactorVector, FactorView};

/// What a parameter key addresses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum KeyKind {
    /// User factor `u_i`.
    User,
    /// Item factor `v_j`.
    Item,
    /// Sum of active user factors.
    UserSum,
    /// Sum of active item factors.
    ItemSum,
}

/// Address of one stored vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParameterKey {
    /// Entity kind.
    pub kind: KeyKind,
    /// Entity index; 0 for the two sums.
    pub index: u32,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

impl ParameterKey {
    /// Key of the user-factor sum.
    pub const USER_SUM: ParameterKey = ParameterKey {
        kind: KeyKind::UserSum,
        index: 0,
    };
    /// Key of the item-factor sum.
    pub const ITEM_SUM: ParameterKey = ParameterKey {
        kind: KeyKind::ItemSum,
        index: 0,
    };

    /// Key of user `i`.
    pub fn user(i: usize) -> Self {
        ParameterKey {
            kind: KeyKind::User,
            index: i as u32,
        }
    }

    /// Key of item `j`.
    pub fn item(j: usize) -> Self {
        ParameterKey {
            kind: KeyKind::Item,
            index: j as u32,
        }
    }

    /// Whether this is one of the two sums.
    pub fn is_aggregate(&self) -> bool {
        matches!(self.kind, KeyKind::UserSum | KeyKind::ItemSum)
    }

    /// Owning shard: a fixed hash of the key modulo the shard count.
    pub fn shard(&self, shards: usize) -> usize {
        let tag = (self.kind as u64) << 32 | self.index as u64;
        (splitmix64(tag) % shards as u64) as usize
    }
}

/// Keys a worker needs for one minibatch, sent to one shard.
#[derive(Debug, Clone, PartialEq)]
pub struct PullRequest {
    /// Requesting worker.
    pub worker: usize,
    /// Requested keys, ascending.
    pub keys: Vec<ParameterKey>,
}

/// A shard's answer to a [`PullRequest`].
#[derive(Debug, Clone, PartialEq)]
pub struct PullResponse {
    /// Answering shard.
    pub shard: usize,
    /// Current values of the requested keys.
    pub values: Vec<(ParameterKey, FactorVector)>,
    /// Messages applied by the shard so far.
    pub clock: u64,
    /// Fewest operations applied from any single worker; every update from
    /// an operation with a smaller index is reflected in `values`.
    pub min_worker_clock: u64,
}

/// Gradients pushed after one SGD operation.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientMessage {
    /// Issuing worker.
    pub worker: usize,
    /// Zero-based operation index of the issuing worker.
    pub op: u64,
    /// Gradient per key, keys ascending.
    pub entries: Vec<(ParameterKey, FactorVector)>,
}

impl GradientMessage {
    /// Packs per-entity gradients. With `sums`, the two aggregate keys carry
    /// the sum of the user (item) gradients, so applying the same SGD step to
    /// the aggregate moves it by exactly the total change of its members.
    pub fn from_gradients(
        worker: usize,
        op: u64,
        users: Vec<(usize, FactorVector)>,
        items: Vec<(usize, FactorVector)>,
        sums: bool,
        dim: usize,
    ) -> Self {
        let mut entries = Vec::with_capacity(users.len() + items.len() + 2);
        let mut user_total = FactorVector::zeros(dim);
        let mut item_total = FactorVector::zeros(dim);
        for (i, g) in users {
            if sums {
                add(&mut user_total, &g);
            }
            entries.push((ParameterKey::user(i), g));
        }
        for (j, g) in items {
            if sums {
                add(&mut item_total, &g);
            }
            entries.push((ParameterKey::item(j), g));
        }
        if sums {
            entries.push((ParameterKey::USER_SUM, user_total));
            entries.push((ParameterKey::ITEM_SUM, item_total));
        }
        entries.sort_by_key(|(k, _)| *k);
        GradientMessage {
            worker,
            op,
            entries,
        }
    }

    /// Keys carried by the message.
    pub fn keys(&self) -> impl Iterator<Item = ParameterKey> + '_ {
        self.entries.iter().map(|(k, _)| *k)
    }

    /// One message per shard. Shards owning none of the keys still get an
    /// empty message so their per-worker clocks advance.
    pub fn split_by_shard(&self, shards: usize) -> Vec<GradientMessage> {
        let mut parts: Vec<GradientMessage> = (0..shards)
            .map(|_| GradientMessage {
                worker: self.worker,
                op: self.op,
                entries: Vec::new(),
            })
            .collect();
        for (k, g) in &self.entries {
            parts[k.shard(shards)].entries.push((*k, g.clone()));
        }
        parts
    }
}

fn add(acc: &mut [f64], g: &[f64]) {
    for (a, x) in acc.iter_mut().zip(g) {
        *a += x;
    }
}

/// A worker's merged view of the parameters it pulled.
#[derive(Debug, Clone)]
pub struct Snapshot {
    dim: usize,
    values: HashMap<ParameterKey, FactorVector>,
    min_clock: u64,
}

impl Snapshot {
    /// Merges shard responses.
    pub fn from_responses(dim: usize, responses: Vec<PullResponse>) -> Self {
        let mut values = HashMap::new();
        let mut min_clock = u64::MAX;
        for r in responses {
            min_clock = min_clock.min(r.min_worker_clock);
            values.extend(r.values);
        }
        Snapshot {
            dim,
            values,
            min_clock,
        }
    }

    /// Smallest per-worker operation count reflected in every response.
    pub fn min_clock(&self) -> u64 {
        self.min_clock
    }

    /// Pulled value of `key`.
    pub fn get(&self, key: &ParameterKey) -> Option<&FactorVector> {
        self.values.get(key)
    }
}

impl FactorView for Snapshot {
    fn dim(&self) -> usize {
        self.dim
    }

    fn user(&self, i: usize) -> Option<&[f64]> {
        self.values.get(&ParameterKey::user(i)).map(|v| &v[..])
    }

    fn item(&self, j: usize) -> Option<&[f64]> {
        self.values.get(&ParameterKey::item(j)).map(|v| &v[..])
    }

    fn user_sum(&self) -> Option<&[f64]> {
        self.values.get(&ParameterKey::USER_SUM).map(|v| &v[..])
    }

    fn item_sum(&self) -> Option<&[f64]> {
        self.values.get(&ParameterKey::ITEM_SUM).map(|v| &v[..])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shard_assignment_is_stable_and_spread() {
        let mut counts = [0usize; 4];
        for i in 0..4000 {
            let k = ParameterKey::user(i);
            assert_eq!(k.shard(4), k.shard(4));
            counts[k.shard(4)] += 1;
        }
        assert!(counts.iter().all(|&c| c > 800), "{counts:?}");
        assert_eq!(ParameterKey::USER_SUM.shard(1), 0);
    }

    #[test]
    fn aggregate_entries_sum_member_gradients() {
        let msg = GradientMessage::from_gradients(
            2,
            7,
            vec![(1, vec![1.0, 2.0].into()), (4, vec![0.5, 0.5].into())],
            vec![(3, vec![-1.0, 0.0].into())],
            true,
            2,
        );
        let keys: Vec<_> = msg.keys().collect();
        assert_eq!(
            keys,
            vec![
                ParameterKey::user(1),
                ParameterKey::user(4),
                ParameterKey::item(3),
                ParameterKey::USER_SUM,
                ParameterKey::ITEM_SUM
            ]
        );
        assert_eq!(msg.entries[3].1 .0, vec![1.5, 2.5]);
        assert_eq!(msg.entries[4].1 .0, vec![-1.0, 0.0]);

        let parts = msg.split_by_shard(3);
        assert_eq!(parts.len(), 3);
        assert_eq!(parts.iter().map(|p| p.entries.len()).sum::<usize>(), 5);
        assert!(parts.iter().all(|p| p.worker == 2 && p.op == 7));
    }
}

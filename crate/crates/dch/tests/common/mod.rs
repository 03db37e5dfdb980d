#![allow(dead_code)]

use std::collections::BTreeMap;

use dch::runtime::MinibatchSampler;
use dch::synth::{generate, SynthSpec};
use dch_core::model::sgd_step;
use dch_core::{Dataset, FactorMatrices, Hyperparams, Objective, RatingTriple};

/// Star-rated toy data with `density` of all pairs observed.
pub fn toy(users: usize, items: usize, density: f64, seed: u64) -> Dataset {
    generate(&SynthSpec::toy(users, items, density, seed)).unwrap()
}

/// Plain single-threaded minibatch SGD with a projection after every step:
/// the sequential algorithm the runtime must reproduce with one worker and
/// `P = 1`. Returns the loss after every step (initial loss first) and the
/// final factors.
pub fn sequential_sgd(
    data: &Dataset,
    hyper: &Hyperparams,
    objective: Objective,
    steps: usize,
) -> (Vec<f64>, FactorMatrices) {
    let mut fm = FactorMatrices::random(data, hyper.code_bits, hyper.seed);
    let mut sampler = MinibatchSampler::new(data.len(), hyper.batch_size, hyper.seed, 0);
    let mut losses = vec![objective.loss(data, &fm).unwrap()];
    for _ in 0..steps {
        let batch: Vec<RatingTriple> = sampler
            .next_batch()
            .into_iter()
            .map(|p| data.triples()[p])
            .collect();
        let mut by_user: BTreeMap<u32, Vec<RatingTriple>> = BTreeMap::new();
        let mut by_item: BTreeMap<u32, Vec<RatingTriple>> = BTreeMap::new();
        for t in &batch {
            by_user.entry(t.user).or_default().push(*t);
            by_item.entry(t.item).or_default().push(*t);
        }
        let gu: Vec<_> = by_user
            .iter()
            .map(|(&u, b)| {
                (
                    u as usize,
                    objective.user_gradient(u as usize, b, &fm).unwrap(),
                )
            })
            .collect();
        let gi: Vec<_> = by_item
            .iter()
            .map(|(&i, b)| {
                (
                    i as usize,
                    objective.item_gradient(i as usize, b, &fm).unwrap(),
                )
            })
            .collect();
        for (u, g) in gu {
            let x = sgd_step(
                &fm.users()[u * hyper.code_bits..(u + 1) * hyper.code_bits],
                &g,
                hyper.learning_rate,
            )
            .unwrap();
            fm.set_user(u, &x);
        }
        for (i, g) in gi {
            let x = sgd_step(
                &fm.items()[i * hyper.code_bits..(i + 1) * hyper.code_bits],
                &g,
                hyper.learning_rate,
            )
            .unwrap();
            fm.set_item(i, &x);
        }
        fm.project_all(hyper.gamma);
        losses.push(objective.loss(data, &fm).unwrap());
    }
    (losses, fm)
}

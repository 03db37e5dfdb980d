//! Analytic gradients against central finite differences of the losses.

use dch_core::model::{
    dch_loss, grad_item, grad_user, mf_grad_item, mf_grad_user, mf_loss, sgd_step,
};
use dch_core::{Dataset, FactorMatrices, FactorView, RatingScale, RatingTriple};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const STEP: f64 = 1e-6;
const TOL: f64 = 1e-5;

struct Instance {
    data: Dataset,
    fm: FactorMatrices,
    lambda: f64,
}

fn random_instance(rng: &mut ChaCha8Rng) -> Instance {
    let m = rng.gen_range(1..=5);
    let n = rng.gen_range(1..=5);
    let k = rng.gen_range(1..=4);
    let mut raw = Vec::new();
    for u in 0..m {
        for i in 0..n {
            if rng.gen_bool(0.6) {
                raw.push((u as u32, i as u32, rng.gen_range(1..=5) as f64));
            }
        }
    }
    if raw.is_empty() {
        raw.push((0, 0, 3.0));
    }
    let data = Dataset::from_raw(m, n, &raw, RatingScale::FIVE_STARS).unwrap();
    let fm = FactorMatrices::random(&data, k, rng.gen());
    Instance {
        data,
        fm,
        lambda: rng.gen_range(0.0..1.0),
    }
}

fn triples_of_user(d: &Dataset, u: usize) -> Vec<RatingTriple> {
    d.triples()
        .iter()
        .filter(|t| t.user as usize == u)
        .copied()
        .collect()
}

fn triples_of_item(d: &Dataset, i: usize) -> Vec<RatingTriple> {
    d.triples()
        .iter()
        .filter(|t| t.item as usize == i)
        .copied()
        .collect()
}

/// Central differences of `loss` w.r.t. each coordinate of one row.
fn finite_difference<L>(fm: &FactorMatrices, user: bool, row: usize, loss: L) -> Vec<f64>
where
    L: Fn(&FactorMatrices) -> f64,
{
    let base: Vec<f64> = if user {
        fm.user(row).unwrap().to_vec()
    } else {
        fm.item(row).unwrap().to_vec()
    };
    (0..base.len())
        .map(|k| {
            let shifted = |delta: f64| {
                let mut probe = fm.clone();
                let mut v = base.clone();
                v[k] += delta;
                if user {
                    probe.set_user(row, &v);
                } else {
                    probe.set_item(row, &v);
                }
                loss(&probe)
            };
            (shifted(STEP) - shifted(-STEP)) / (2.0 * STEP)
        })
        .collect()
}

fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff: f64 = analytic
        .iter()
        .zip(numeric)
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        .sqrt();
    let scale = numeric.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-3);
    diff / scale
}

#[test]
fn dch_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let inst = random_instance(&mut rng);
        let loss = |fm: &FactorMatrices| dch_loss(&inst.data, fm, inst.lambda).unwrap();
        for &u in inst.data.active_users() {
            let u = u as usize;
            let g = grad_user(u, &triples_of_user(&inst.data, u), &inst.fm, inst.lambda).unwrap();
            let fd = finite_difference(&inst.fm, true, u, loss);
            worst = worst.max(relative_error(&g, &fd));
        }
        for &i in inst.data.active_items() {
            let i = i as usize;
            let g = grad_item(i, &triples_of_item(&inst.data, i), &inst.fm, inst.lambda).unwrap();
            let fd = finite_difference(&inst.fm, false, i, loss);
            worst = worst.max(relative_error(&g, &fd));
        }
    }
    assert!(worst <= TOL, "worst relative error {worst:e}");
}

#[test]
fn mf_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let inst = random_instance(&mut rng);
        let loss = |fm: &FactorMatrices| mf_loss(&inst.data, fm, inst.lambda).unwrap();
        for u in 0..inst.data.num_users() {
            let g =
                mf_grad_user(u, &triples_of_user(&inst.data, u), &inst.fm, inst.lambda).unwrap();
            worst = worst.max(relative_error(
                &g,
                &finite_difference(&inst.fm, true, u, loss),
            ));
        }
        for i in 0..inst.data.num_items() {
            let g =
                mf_grad_item(i, &triples_of_item(&inst.data, i), &inst.fm, inst.lambda).unwrap();
            worst = worst.max(relative_error(
                &g,
                &finite_difference(&inst.fm, false, i, loss),
            ));
        }
    }
    assert!(worst <= TOL, "worst relative error {worst:e}");
}

/// Full-batch gradient descent on a fixed 5x5 toy problem never increases
/// the hashing loss when the step is small.
#[test]
fn full_batch_descent_is_monotone() {
    let mut raw = Vec::new();
    for u in 0..5u32 {
        for i in 0..5u32 {
            raw.push((u, i, 1.0 + ((u * 3 + i * 2) % 5) as f64));
        }
    }
    let data = Dataset::from_raw(5, 5, &raw, RatingScale::FIVE_STARS).unwrap();
    let mut fm = FactorMatrices::random(&data, 4, 11);
    let lambda = 0.05;
    let alpha = 1e-3;
    let mut prev = dch_loss(&data, &fm, lambda).unwrap();
    for _ in 0..100 {
        let users: Vec<_> = (0..5)
            .map(|u| grad_user(u, &triples_of_user(&data, u), &fm, lambda).unwrap())
            .collect();
        let items: Vec<_> = (0..5)
            .map(|i| grad_item(i, &triples_of_item(&data, i), &fm, lambda).unwrap())
            .collect();
        for (u, g) in users.iter().enumerate() {
            let next = sgd_step(fm.user(u).unwrap(), g, alpha).unwrap();
            fm.set_user(u, &next);
        }
        for (i, g) in items.iter().enumerate() {
            let next = sgd_step(fm.item(i).unwrap(), g, alpha).unwrap();
            fm.set_item(i, &next);
        }
        let loss = dch_loss(&data, &fm, lambda).unwrap();
        assert!(loss <= prev, "loss rose from {prev} to {loss}");
        prev = loss;
    }
}

//! Retrieval methods against brute-force oracles.

use dch_core::code::words_for;
use dch_core::retrieval::{
    hamming_rank_topk, lookup_search, multi_index_search, radius_search, realvalued_topk,
    realvalued_topk_by, HashIndex, MultiIndex,
};
use dch_core::{hamming_distance, similarity, CodeSet, HashCode};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_code(rng: &mut ChaCha8Rng, bits: usize) -> HashCode {
    let bools: Vec<bool> = (0..bits).map(|_| rng.gen_bool(0.5)).collect();
    HashCode::from_bools(&bools)
}

/// Random set with deliberate near-duplicates so small radii have hits.
fn random_set(rng: &mut ChaCha8Rng, bits: usize, n: usize) -> CodeSet {
    let mut codes: Vec<HashCode> = Vec::with_capacity(n);
    for i in 0..n {
        if i > 0 && rng.gen_bool(0.5) {
            let mut c = codes[rng.gen_range(0..i)].clone();
            for _ in 0..rng.gen_range(0..4) {
                c.flip(rng.gen_range(0..bits));
            }
            codes.push(c);
        } else {
            codes.push(random_code(rng, bits));
        }
    }
    CodeSet::from_codes(bits, &codes, None).unwrap()
}

fn brute_distances(q: &HashCode, items: &CodeSet) -> Vec<(usize, u32)> {
    (0..items.len())
        .map(|p| {
            let c = items.code(p);
            let d = (0..q.bits()).filter(|&k| q.get(k) != c.get(k)).count() as u32;
            (p, d)
        })
        .collect()
}

#[test]
fn radius_lookup_and_multi_index_agree_with_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for &(bits, m) in &[(8usize, 2usize), (32, 4), (64, 4)] {
        let items = random_set(&mut rng, bits, 500);
        let index = HashIndex::build(&items);
        let mi = MultiIndex::build(&items, m).unwrap();
        for _ in 0..200 {
            let q = if rng.gen_bool(0.5) {
                let mut c = items.code(rng.gen_range(0..items.len()));
                c.flip(rng.gen_range(0..bits));
                c
            } else {
                random_code(&mut rng, bits)
            };
            let r = rng.gen_range(0..=if bits == 64 { 3 } else { 6 });
            let oracle: Vec<(usize, u32)> = brute_distances(&q, &items)
                .into_iter()
                .filter(|&(_, d)| d <= r)
                .collect();
            assert_eq!(radius_search(&q, &items, r).unwrap(), oracle);
            let positions: Vec<usize> = oracle.iter().map(|x| x.0).collect();
            assert_eq!(lookup_search(&q, &index, r).unwrap(), positions);
            assert_eq!(multi_index_search(&q, &mi, &items, r).unwrap(), oracle);
        }
    }
}

#[test]
fn multi_index_with_k32_m4_r6() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let items = random_set(&mut rng, 32, 500);
    let mi = MultiIndex::build(&items, 4).unwrap();
    for _ in 0..100 {
        let q = random_code(&mut rng, 32);
        assert_eq!(
            multi_index_search(&q, &mi, &items, 6).unwrap(),
            radius_search(&q, &items, 6).unwrap()
        );
    }
}

#[test]
fn hamming_rank_matches_sorted_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let items = random_set(&mut rng, 24, 500);
    for _ in 0..200 {
        let q = random_code(&mut rng, 24);
        let mut oracle = brute_distances(&q, &items);
        oracle.sort_by_key(|&(p, d)| (d, p));
        let k = rng.gen_range(1..=20);
        let got = hamming_rank_topk(&q, &items, k).unwrap();
        assert_eq!(got, oracle[..k].to_vec());
        let next = hamming_rank_topk(&q, &items, k + 1).unwrap();
        assert_eq!(&next[..k], &got[..]);
    }
    let q = items.code(123);
    let full = hamming_rank_topk(&q, &items, items.len()).unwrap();
    assert_eq!(full.len(), items.len());
    assert!(full.windows(2).all(|w| w[0].1 <= w[1].1));
    let first_match = (0..items.len()).find(|&p| items.code(p) == q).unwrap();
    assert_eq!(full[0], (first_match, 0));
}

#[test]
fn realvalued_matches_sorted_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let dim = 7;
    let items: Vec<f64> = (0..300 * dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
    for _ in 0..50 {
        let q: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut oracle: Vec<(usize, f64)> = items
            .chunks(dim)
            .enumerate()
            .map(|(p, v)| (p, q.iter().zip(v).map(|(a, b)| a * b).sum()))
            .collect();
        oracle.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
        assert_eq!(
            realvalued_topk(&q, &items, 10).unwrap(),
            oracle[..10].to_vec()
        );
    }
    let same = vec![0.5; 20 * dim];
    let q = vec![1.0; dim];
    let top: Vec<usize> = realvalued_topk(&q, &same, 4)
        .unwrap()
        .iter()
        .map(|x| x.0)
        .collect();
    assert_eq!(top, vec![0, 1, 2, 3]);
}

proptest! {
    /// Both selection strategies (streaming heap for small k, full selection
    /// otherwise) against a sort, with heavy ties and a filter.
    #[test]
    fn realvalued_topk_by_matches_sort(
        n in 1usize..200,
        k in 1usize..60,
        seed in any::<u64>(),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dim = 3;
        let items: Vec<f64> = (0..n * dim).map(|_| rng.gen_range(-2..=2) as f64).collect();
        let q: Vec<f64> = (0..dim).map(|_| rng.gen_range(-2..=2) as f64).collect();
        let keep = |p: usize| p % 3 != 1;
        let mut oracle: Vec<(usize, f64)> = items
            .chunks(dim)
            .enumerate()
            .filter(|(p, _)| keep(*p))
            .map(|(p, v)| (p, q.iter().zip(v).map(|(a, b)| a * b).sum()))
            .collect();
        oracle.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
        oracle.truncate(k);
        prop_assert_eq!(realvalued_topk_by(&q, &items, k, keep).unwrap(), oracle);
    }

    #[test]
    fn similarity_plus_normalized_distance_is_one(
        bits in 1usize..=200,
        seed in any::<u64>(),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random_code(&mut rng, bits);
        let b = random_code(&mut rng, bits);
        let d = hamming_distance(&a, &b).unwrap();
        prop_assert_eq!(similarity(&a, &b).unwrap(), 1.0 - d as f64 / bits as f64);
        prop_assert_eq!(a.words().len(), words_for(bits));
    }
}

mod common;

use std::collections::BTreeSet;

use common::{naive_hamming, naive_topk, random_code};
use mixhash::diffmath::Matrix;
use mixhash::hashing::{evaluate, hamming, median_binarize, topk, BinaryCodebook};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn codebook(codes: &[Vec<u64>], bits: usize) -> BinaryCodebook {
    BinaryCodebook::new(
        bits,
        (0..codes.len()).map(|i| format!("d{i}")).collect(),
        codes.concat(),
    )
    .unwrap()
}

#[test]
fn hamming_matches_per_bit_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..1000 {
        let (a, b) = (random_code(&mut rng, 128), random_code(&mut rng, 128));
        assert_eq!(hamming(&a, &b).unwrap(), naive_hamming(&a, &b, 128));
    }
}

#[test]
fn topk_matches_full_sort() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for bits in [16, 32, 64, 128] {
        let codes: Vec<Vec<u64>> = (0..1000).map(|_| random_code(&mut rng, bits)).collect();
        let db = codebook(&codes, bits);
        for _ in 0..20 {
            let q = random_code(&mut rng, bits);
            assert_eq!(topk(&q, &db, 100).unwrap(), naive_topk(&q, &codes, bits, 100));
        }
        // Few distinct distances at 16 bits make ties the common case.
        let q = codes[17].clone();
        let all = topk(&q, &db, 1000).unwrap();
        assert_eq!(all[0].1, 0);
        assert!(all.contains(&(17, 0)));
        assert_eq!(all, naive_topk(&q, &codes, bits, 1000));
    }
}

#[test]
fn topk_rejects_k_above_database_size() {
    let db = codebook(&[vec![1], vec![2]], 8);
    assert!(topk(&[0], &db, 3).is_err());
}

proptest! {
    #[test]
    fn hamming_is_a_metric(seed in any::<u64>(), bits in prop::sample::select(vec![7usize, 16, 64, 100, 128])) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (a, b, c) = (random_code(&mut rng, bits), random_code(&mut rng, bits), random_code(&mut rng, bits));
        let d = |x: &[u64], y: &[u64]| hamming(x, y).unwrap();
        prop_assert_eq!(d(&a, &b), d(&b, &a));
        prop_assert_eq!(d(&a, &a), 0);
        prop_assert_eq!(d(&a, &b) == 0, a == b);
        prop_assert!(d(&a, &c) <= d(&a, &b) + d(&b, &c));
    }
}

#[test]
fn median_bits_are_balanced() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for n in [99, 100, 1001] {
        let m = Matrix::from_vec(n, 8, (0..n * 8).map(|_| rng.random::<f32>()).collect()).unwrap();
        let codes = median_binarize(&m, (0..n).map(|i| i.to_string()).collect()).unwrap();
        for bit in 0..8 {
            let ones = (0..n).filter(|&d| codes.bit(d, bit)).count() as i64;
            assert!((2 * ones - n as i64).abs() <= 2, "n={n} bit={bit} ones={ones}");
        }
    }
}

#[test]
fn evaluation_ignores_database_order() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let bits = 16;
    let label = |rng: &mut ChaCha8Rng| BTreeSet::from([format!("c{}", rng.random_range(0..4))]);
    let db_codes: Vec<Vec<u64>> = (0..300).map(|_| random_code(&mut rng, bits)).collect();
    let db_labels: Vec<_> = (0..300).map(|_| label(&mut rng)).collect();
    let q_codes: Vec<Vec<u64>> = (0..40).map(|_| random_code(&mut rng, bits)).collect();
    let q_labels: Vec<_> = (0..40).map(|_| label(&mut rng)).collect();
    let db = codebook(&db_codes, bits);
    let queries = codebook(&q_codes, bits);
    let base = evaluate(&queries, &q_labels, &db, &db_labels, 300).unwrap();

    let mut order: Vec<usize> = (0..300).collect();
    order.shuffle(&mut rng);
    let shuffled = db.select(&order).unwrap();
    let shuffled_labels: Vec<_> = order.iter().map(|&i| db_labels[i].clone()).collect();
    let other = evaluate(&queries, &q_labels, &shuffled, &shuffled_labels, 300).unwrap();
    // K equal to the database size makes the retrieved set order-free.
    assert_eq!(base.per_query, other.per_query);
    assert_eq!(base.mean, other.mean);

    // At smaller K the retrieved set is order-free unless the K-th and
    // (K+1)-th distances tie.
    let k = 20;
    let a = evaluate(&queries, &q_labels, &db, &db_labels, k).unwrap();
    let b = evaluate(&queries, &q_labels, &shuffled, &shuffled_labels, k).unwrap();
    let mut compared = 0;
    for (q, code) in q_codes.iter().enumerate() {
        let ranked = topk(code, &db, k + 1).unwrap();
        if ranked[k - 1].1 != ranked[k].1 {
            assert_eq!(a.per_query[q], b.per_query[q]);
            compared += 1;
        }
    }
    assert!(compared > 0);
}

#[test]
fn random_codes_score_at_chance() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let n = 2000;
    let bits = 32;
    let codes: Vec<Vec<u64>> = (0..n).map(|_| random_code(&mut rng, bits)).collect();
    let labels: Vec<_> = (0..n)
        .map(|_| BTreeSet::from([format!("c{}", rng.random_range(0..5))]))
        .collect();
    let book = codebook(&codes, bits);
    let report = evaluate(&book, &labels, &book, &labels, 100).unwrap();
    assert!((report.mean - 0.2).abs() <= 0.05, "{}", report.mean);
}

#[test]
fn identical_query_retrieves_itself() {
    let db = codebook(&[vec![0b1010], vec![0b0110], vec![0b1111]], 4);
    let labels: Vec<_> = ["a", "b", "c"].iter().map(|l| BTreeSet::from([l.to_string()])).collect();
    let q = db.select(&[1]).unwrap();
    let report = evaluate(&q, &labels[1..2], &db, &labels, 1).unwrap();
    assert_eq!(report.mean, 1.0);
}

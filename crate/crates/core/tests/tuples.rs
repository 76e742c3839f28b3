//! Properties of Hamming tuples, similarity and bucket counts.

use std::cmp::Ordering;

use amih::code::{binomial, similarity};
use amih::{bucket_count, compare_sim, cosine_similarity, hamming_tuple, BinaryCode, HammingTuple};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn code_strategy(p: u32) -> impl Strategy<Value = BinaryCode> {
    prop::collection::vec(any::<bool>(), p as usize)
        .prop_map(|b| BinaryCode::from_bools(&b).unwrap())
}

fn pair_strategy() -> impl Strategy<Value = (BinaryCode, BinaryCode)> {
    (1u32..300).prop_flat_map(|p| (code_strategy(p), code_strategy(p)))
}

fn valid_tuples(z: u32, p: u32) -> Vec<HammingTuple> {
    (0..=z)
        .flat_map(|r1| (0..=p - z).map(move |r2| HammingTuple::new(r1, r2)))
        .collect()
}

proptest! {
    #[test]
    fn tuple_sums_to_hamming_distance((q, b) in pair_strategy()) {
        let t = hamming_tuple(&q, &b).unwrap();
        let xor: u32 = q.words().iter().zip(b.words()).map(|(x, y)| (x ^ y).count_ones()).sum();
        prop_assert_eq!(t.r1 + t.r2, xor);
    }

    #[test]
    fn tuple_is_antisymmetric((q, b) in pair_strategy()) {
        let t = hamming_tuple(&q, &b).unwrap();
        prop_assert_eq!(hamming_tuple(&b, &q).unwrap(), HammingTuple::new(t.r2, t.r1));
    }

    #[test]
    fn tuple_is_valid_for_query((q, b) in pair_strategy()) {
        let t = hamming_tuple(&q, &b).unwrap();
        prop_assert!(t.is_valid(q.popcount(), q.bits()));
    }
}

#[test]
fn closed_form_matches_direct_cosine() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for p in [8u32, 32, 64, 128] {
        let mut done = 0;
        while done < 10_000 {
            let bits_q: Vec<bool> = (0..p).map(|_| rng.gen()).collect();
            let bits_b: Vec<bool> = (0..p).map(|_| rng.gen()).collect();
            let q = BinaryCode::from_bools(&bits_q).unwrap();
            let b = BinaryCode::from_bools(&bits_b).unwrap();
            if q.popcount() == 0 {
                continue;
            }
            let dot = bits_q
                .iter()
                .zip(&bits_b)
                .filter(|(x, y)| **x && **y)
                .count() as f64;
            let nq = (q.popcount() as f64).sqrt();
            let nb = (b.popcount() as f64).sqrt();
            let direct = if dot == 0.0 { 0.0 } else { dot / (nq * nb) };
            let closed = cosine_similarity(&q, &b).unwrap();
            assert!(
                (closed - direct).abs() <= 1e-12,
                "p={p} {closed} vs {direct}"
            );
            done += 1;
        }
    }
}

#[test]
fn exact_comparator_agrees_with_floats() {
    for p in 1..=24u32 {
        for z in 1..=p {
            let tuples = valid_tuples(z, p);
            for &a in &tuples {
                let sa = similarity(z, a);
                for &b in &tuples {
                    let sb = similarity(z, b);
                    match compare_sim(z, a, b) {
                        Ordering::Greater => assert!(sa > sb, "z={z} p={p} {a} {b}"),
                        Ordering::Less => assert!(sa < sb, "z={z} p={p} {a} {b}"),
                        Ordering::Equal => assert!((sa - sb).abs() < 1e-15, "z={z} p={p} {a} {b}"),
                    }
                }
            }
        }
    }
}

#[test]
fn tuple_classes_partition_the_cube() {
    for p in 1..=20u32 {
        for z in 0..=p {
            let total: u128 = valid_tuples(z, p)
                .into_iter()
                .map(|t| bucket_count(z, p, t).unwrap())
                .sum();
            assert_eq!(total, 1u128 << p, "z={z} p={p}");
        }
    }
}

#[test]
fn bucket_count_is_product_of_binomials() {
    assert_eq!(bucket_count(32, 45, HammingTuple::new(1, 0)).unwrap(), 32);
    assert_eq!(bucket_count(3, 6, HammingTuple::new(1, 1)).unwrap(), 9);
    assert_eq!(binomial(4096, 1), 4096);
    assert!(bucket_count(3, 6, HammingTuple::new(4, 0)).is_err());
}

#[test]
fn similarity_decreases_along_the_partial_order() {
    for p in 1..=16u32 {
        for z in 1..=p {
            let tuples = valid_tuples(z, p);
            for &a in &tuples {
                for &b in &tuples {
                    if a == b || !a.within(b) {
                        continue;
                    }
                    let ord = compare_sim(z, a, b);
                    if a.r1 < z {
                        assert_eq!(ord, Ordering::Greater, "z={z} p={p} {a} {b}");
                    } else {
                        assert_ne!(ord, Ordering::Less, "z={z} p={p} {a} {b}");
                    }
                }
            }
        }
    }
}

use num_bigint::BigInt;
use num_rational::BigRational;
use proptest::prelude::*;
use wvir::combinatorics::{factorial, WeightedInsertion};
use wvir::correlators::{dimension_keys, genus_for, CacheMode, CorrelatorEngine, Mode};
use wvir::hfunction::{h_scalar, scalar_bracket_sides};
use wvir::weights::{parse_weight, Weight, WeightSet};

fn q(n: i64, d: i64) -> BigRational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

fn big(n: BigInt) -> BigRational {
    BigRational::from_integer(n)
}

fn set(list: &str) -> WeightSet {
    WeightSet::new(WeightSet::parse_list(list).unwrap()).unwrap()
}

fn insertions(ks: &[i64], a: &Weight) -> Vec<WeightedInsertion> {
    ks.iter().map(|&k| WeightedInsertion::new(k, a.clone())).collect()
}

/// Genus-0 indices summing to `n - 3`.
fn genus_zero_indices() -> impl Strategy<Value = Vec<i64>> {
    (3usize..8).prop_flat_map(|n| {
        prop::collection::vec(0i64..4, n).prop_filter("dimension", move |ks| ks.iter().sum::<i64>() == n as i64 - 3)
    })
}

#[test]
fn low_genus_values() {
    let e = CorrelatorEngine::new();
    assert_eq!(e.unweighted(&[0, 0, 0]), q(1, 1));
    assert_eq!(e.unweighted(&[1]), q(1, 24));
    assert_eq!(e.unweighted(&[0, 2]), q(1, 24));
    assert_eq!(e.unweighted(&[1, 1]), q(1, 24));
    assert_eq!(e.unweighted(&[4]), q(1, 1152));
    assert_eq!(e.unweighted(&[7]), q(1, 82944));
    assert_eq!(e.unweighted(&[2, 3]), q(29, 5760));
}

#[test]
fn worked_example_and_thirds() {
    let e = CorrelatorEngine::new();
    let third = parse_weight("1/3").unwrap();
    let list = insertions(&[0, 0, 0], &third);
    assert_eq!(e.weighted(&list, Mode::PartitionSum), q(1, 1));
    assert_eq!(e.weighted(&list, Mode::Recursion), q(1, 1));
    let half = parse_weight("1/2").unwrap();
    assert_eq!(e.weighted(&insertions(&[0, 2], &half), Mode::PartitionSum), q(0, 1));
}

#[test]
fn single_point_values_in_every_genus() {
    let e = CorrelatorEngine::new();
    for g in 1..=4i64 {
        let expected = q(1, 24i64.pow(g as u32)) / big(factorial(g as u64));
        assert_eq!(e.unweighted(&[3 * g - 2]), expected);
    }
}

#[test]
fn mode_equivalence_on_small_sets() {
    let e = CorrelatorEngine::new();
    for list in ["1/2,1", "1/3,2/3,1", "0+", "2/5,4/5"] {
        for key in dimension_keys(&set(list), 5, 1) {
            let p = e.weighted(key.insertions(), Mode::PartitionSum);
            let r = e.weighted(key.insertions(), Mode::Recursion);
            assert_eq!(p, r, "{key} on {{{list}}}");
        }
    }
}

#[test]
fn cache_round_trip_is_stable() {
    let e = CorrelatorEngine::new();
    e.build_f_coefficients(&set("1/2,1"), 4, 1, Mode::PartitionSum);
    let mut first = Vec::new();
    let n = e.save_cache(&mut first).unwrap();
    assert!(n > 0);
    let fresh = CorrelatorEngine::new();
    assert_eq!(fresh.load_cache(first.as_slice(), CacheMode::Verify).unwrap(), n);
    let mut second = Vec::new();
    fresh.save_cache(&mut second).unwrap();
    assert_eq!(first, second);
    let tampered = String::from_utf8(first).unwrap().replacen("\"val\":\"1\"", "\"val\":\"2\"", 1);
    assert!(CorrelatorEngine::new().load_cache(tampered.as_bytes(), CacheMode::Verify).is_err());
}

proptest! {
    #[test]
    fn genus_zero_multinomial(ks in genus_zero_indices()) {
        let e = CorrelatorEngine::new();
        let n = ks.len() as u64;
        let denominator: BigInt = ks.iter().map(|&k| factorial(k as u64)).product();
        let expected = big(factorial(n - 3)) / big(denominator);
        prop_assert_eq!(e.unweighted(&ks), expected);
    }

    #[test]
    fn weight_one_matches_dvv(ks in prop::collection::vec(0i64..5, 1..5)) {
        let e = CorrelatorEngine::new();
        let list = insertions(&ks, &Weight::one());
        let expected = if genus_for(&ks).is_some() { e.unweighted(&ks) } else { q(0, 1) };
        prop_assert_eq!(e.weighted(&list, Mode::PartitionSum), expected.clone());
        prop_assert_eq!(e.weighted(&list, Mode::Recursion), expected);
    }

    #[test]
    fn string_and_dilaton_equations(ks in prop::collection::vec(0i64..5, 1..5)) {
        let e = CorrelatorEngine::new();
        prop_assume!(genus_for(&ks).is_some());
        let g = genus_for(&ks).unwrap() as i64;
        let n = ks.len() as i64;
        let mut with_zero = ks.clone();
        with_zero.push(0);
        let mut string = q(0, 1);
        for i in 0..ks.len() {
            let mut lowered = ks.clone();
            lowered[i] -= 1;
            if lowered[i] >= 0 {
                string += e.unweighted(&lowered);
            }
        }
        let mut with_one = ks.clone();
        with_one.push(1);
        let stable = 2 * g - 2 + n > 0;
        if stable {
            prop_assert_eq!(e.unweighted(&with_zero), string);
            prop_assert_eq!(e.unweighted(&with_one), e.unweighted(&ks) * q(2 * g - 2 + n, 1));
        }
    }

    #[test]
    fn order_does_not_matter(ks in prop::collection::vec(0i64..4, 2..5), flip in any::<bool>()) {
        let e = CorrelatorEngine::new();
        let ws = [parse_weight("1/3").unwrap(), parse_weight("2/3").unwrap()];
        let list: Vec<WeightedInsertion> =
            ks.iter().enumerate().map(|(i, &k)| WeightedInsertion::new(k, ws[(i + flip as usize) % 2].clone())).collect();
        let mut reversed = list.clone();
        reversed.reverse();
        prop_assert_eq!(e.weighted(&list, Mode::PartitionSum), e.weighted(&reversed, Mode::PartitionSum));
    }

    #[test]
    fn scalar_bracket_beyond_the_suite_range(k1 in -1i64..14, k2 in -1i64..14, e in 0i64..14) {
        let (l, r) = scalar_bracket_sides(k1, k2, e);
        prop_assert_eq!(l, r);
        prop_assert_eq!(h_scalar(-1, e), q(1, 1));
    }
}

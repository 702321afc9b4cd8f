use std::collections::BTreeMap;

use num_bigint::BigInt;
use proptest::prelude::*;
use wvir::combinatorics::{
    admissible_partitions, aut, for_each_admissible_partition, power_classes, set_partitions, weight_lists,
    WeightedInsertion,
};
use wvir::weights::{parse_weight, weight_sum, Weight};

fn w(s: &str) -> Weight {
    parse_weight(s).unwrap()
}

fn weights(list: &str) -> Vec<Weight> {
    list.split(',').map(w).collect()
}

/// Set partitions as restricted growth strings, filtered afterwards.
fn brute_force_count(list: &[Weight]) -> usize {
    fn rec(i: usize, labels: &mut Vec<usize>, blocks: usize, list: &[Weight], count: &mut usize) {
        if i == list.len() {
            let ok = (0..blocks).all(|b| {
                weight_sum(list.iter().zip(labels.iter()).filter(|(_, &l)| l == b).map(|(x, _)| x)).admissible()
            });
            if ok {
                *count += 1;
            }
            return;
        }
        for b in 0..=blocks {
            labels.push(b);
            rec(i + 1, labels, blocks.max(b + 1), list, count);
            labels.pop();
        }
    }
    let mut count = 0;
    rec(0, &mut Vec::new(), 0, list, &mut count);
    count
}

fn weight() -> impl Strategy<Value = Weight> {
    prop::sample::select(vec!["0+", "1/5", "1/3", "1/2", "2/3", "1"]).prop_map(w)
}

#[test]
fn baseline_partition_counts() {
    for (list, expected) in [("1/2,1/2,1/2", 4), ("1,1", 1), ("0+,0+,0+", 5)] {
        let ws = weights(list);
        let mut n = 0;
        for_each_admissible_partition(&ws, |_| n += 1);
        assert_eq!(n, expected, "{list}");
        assert_eq!(brute_force_count(&ws), expected, "{list}");
    }
}

#[test]
fn set_partitions_are_counted_by_bell_numbers() {
    let bell = [1, 1, 2, 5, 15, 52, 203, 877];
    for (n, &b) in bell.iter().enumerate() {
        assert_eq!(set_partitions(n).len(), b);
    }
}

#[test]
fn weight_lists_enumerate_multisets() {
    let ws = weights("1/2,1");
    assert_eq!(weight_lists(&ws, 3).len(), 2 + 3 + 4);
}

proptest! {
    #[test]
    fn pruned_enumeration_matches_brute_force(list in prop::collection::vec(weight(), 0..7)) {
        let mut n = 0;
        for_each_admissible_partition(&list, |blocks| {
            n += 1;
            let mut seen: Vec<usize> = blocks.iter().flatten().copied().collect();
            seen.sort_unstable();
            assert_eq!(seen, (0..list.len()).collect::<Vec<_>>());
        });
        prop_assert_eq!(n, brute_force_count(&list));
    }

    #[test]
    fn admissible_partitions_have_admissible_blocks(list in prop::collection::vec(weight(), 1..6)) {
        let ins: Vec<WeightedInsertion> = list.iter().map(|a| WeightedInsertion::new(0, a.clone())).collect();
        for p in admissible_partitions(&ins) {
            for b in p.blocks() {
                prop_assert!(weight_sum(b.iter().map(|&i| &list[i])).admissible());
            }
        }
    }

    #[test]
    fn power_classes_cover_every_subset(list in prop::collection::vec(0u8..3, 0..8)) {
        let classes = power_classes(&list, true);
        let total: BigInt = classes.iter().map(|c| c.multiplicity.clone()).sum();
        prop_assert_eq!(total, (BigInt::from(1) << list.len()) - 1);
        let mut by_subset: BTreeMap<Vec<u8>, u64> = BTreeMap::new();
        for mask in 1u32..(1u32 << list.len()) {
            let mut sub: Vec<u8> = (0..list.len()).filter(|i| mask >> i & 1 == 1).map(|i| list[i]).collect();
            sub.sort_unstable();
            *by_subset.entry(sub).or_default() += 1;
        }
        prop_assert_eq!(classes.len(), by_subset.len());
        for c in &classes {
            let mut rep = c.representative.clone();
            rep.sort_unstable();
            prop_assert_eq!(BigInt::from(by_subset[&rep]), c.multiplicity.clone());
            prop_assert_eq!(c.representative.len() + c.complement.len(), list.len());
        }
    }

    #[test]
    fn aut_counts_fixing_permutations(list in prop::collection::vec(0u8..3, 0..6)) {
        let n = list.len();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut fixing = 0u64;
        loop {
            if perm.iter().enumerate().all(|(i, &p)| list[i] == list[p]) {
                fixing += 1;
            }
            let Some(i) = (1..n).rev().find(|&i| perm[i - 1] < perm[i]) else { break };
            let j = (i..n).rev().find(|&j| perm[j] > perm[i - 1]).unwrap();
            perm.swap(i - 1, j);
            perm[i..].reverse();
        }
        prop_assert_eq!(aut(&list), BigInt::from(fixing));
    }
}

//! Admissible partitions, merged insertions and sublist classes.

use std::collections::BTreeMap;
use std::fmt;

use num_bigint::BigInt;
use num_traits::One;

use crate::report::Assertion;
use crate::weights::{Weight, WeightSum};

/// A descendant insertion `τ_{k;a}`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct WeightedInsertion {
    pub k: i64,
    pub a: Weight,
}

impl WeightedInsertion {
    pub fn new(k: i64, a: Weight) -> Self {
        WeightedInsertion { k, a }
    }
}

impl fmt::Display for WeightedInsertion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({};{})", self.k, self.a)
    }
}

/// The result of collapsing a block: index `1 + Σ(k-1)` and the block's total weight.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MergedInsertion {
    pub k: i64,
    pub a: WeightSum,
}

/// A set partition of `{0..n}` whose blocks have admissible weight sums.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct AdmissiblePartition {
    n: usize,
    blocks: Vec<Vec<usize>>,
}

impl AdmissiblePartition {
    pub fn blocks(&self) -> &[Vec<usize>] {
        &self.blocks
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn size(&self) -> usize {
        self.n
    }
}

pub fn codim(p: &AdmissiblePartition) -> usize {
    p.n - p.blocks.len()
}

/// Visits every admissible partition of the given weights once.
///
/// Blocks are built by restricted-growth assignment; a block is abandoned as
/// soon as its running sum is inadmissible. Block order follows the smallest
/// contained index.
pub fn for_each_admissible_partition<F: FnMut(&[Vec<usize>])>(weights: &[Weight], mut visit: F) {
    let mut blocks: Vec<Vec<usize>> = Vec::new();
    let mut sums: Vec<WeightSum> = Vec::new();
    grow(weights, 0, &mut blocks, &mut sums, &mut visit);
}

fn grow<F: FnMut(&[Vec<usize>])>(
    weights: &[Weight],
    i: usize,
    blocks: &mut Vec<Vec<usize>>,
    sums: &mut Vec<WeightSum>,
    visit: &mut F,
) {
    if i == weights.len() {
        visit(blocks);
        return;
    }
    for b in 0..blocks.len() {
        let s = sums[b].add(&weights[i]);
        if !s.admissible() {
            continue;
        }
        let old = std::mem::replace(&mut sums[b], s);
        blocks[b].push(i);
        grow(weights, i + 1, blocks, sums, visit);
        blocks[b].pop();
        sums[b] = old;
    }
    blocks.push(vec![i]);
    sums.push(weights[i].as_sum());
    grow(weights, i + 1, blocks, sums, visit);
    blocks.pop();
    sums.pop();
}

pub fn admissible_partitions(list: &[WeightedInsertion]) -> impl Iterator<Item = AdmissiblePartition> {
    let weights: Vec<Weight> = list.iter().map(|x| x.a.clone()).collect();
    let n = list.len();
    let mut out = Vec::new();
    for_each_admissible_partition(&weights, |blocks| {
        out.push(AdmissiblePartition { n, blocks: blocks.to_vec() });
    });
    out.into_iter()
}

/// Every set partition of `{0..n}`, with no admissibility pruning.
pub fn set_partitions(n: usize) -> Vec<Vec<Vec<usize>>> {
    let mut out: Vec<Vec<Vec<usize>>> = vec![Vec::new()];
    for i in 0..n {
        let mut next = Vec::new();
        for p in &out {
            for b in 0..p.len() {
                let mut q = p.clone();
                q[b].push(i);
                next.push(q);
            }
            let mut q = p.clone();
            q.push(vec![i]);
            next.push(q);
        }
        out = next;
    }
    out
}

pub fn merged_insertion(block: &[WeightedInsertion]) -> MergedInsertion {
    let k = 1 + block.iter().map(|x| x.k - 1).sum::<i64>();
    let a = block.iter().fold(WeightSum::zero(), |s, x| s.add(&x.a));
    MergedInsertion { k, a }
}

/// `#Aut` of a list: the number of permutations fixing it as a multiset.
pub fn aut<T: Ord>(list: &[T]) -> BigInt {
    let mut counts: BTreeMap<&T, u64> = BTreeMap::new();
    for x in list {
        *counts.entry(x).or_default() += 1;
    }
    counts.values().fold(BigInt::one(), |acc, &c| acc * factorial(c))
}

pub fn factorial(n: u64) -> BigInt {
    (1..=n).fold(BigInt::one(), |acc, i| acc * i)
}

pub fn binomial(n: u64, k: u64) -> BigInt {
    if k > n {
        return BigInt::from(0);
    }
    let k = k.min(n - k);
    let mut r = BigInt::one();
    for i in 0..k {
        r = r * (n - i) / (i + 1);
    }
    r
}

/// An equivalence class of sublists together with the number of index subsets realising it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SublistClass<T> {
    pub representative: Vec<T>,
    pub complement: Vec<T>,
    pub multiplicity: BigInt,
}

/// All classes of nonempty sublists, grouped by underlying multiset.
pub fn power_classes<T: Ord + Clone>(list: &[T], include_full: bool) -> Vec<SublistClass<T>> {
    let mut counts: BTreeMap<T, u64> = BTreeMap::new();
    for x in list {
        *counts.entry(x.clone()).or_default() += 1;
    }
    let distinct: Vec<(T, u64)> = counts.into_iter().collect();
    let mut out = Vec::new();
    let mut choice = vec![0u64; distinct.len()];
    loop {
        let size: u64 = choice.iter().sum();
        if size > 0 && (include_full || size < list.len() as u64) {
            let mut rep = Vec::new();
            let mut comp = Vec::new();
            let mut mult = BigInt::one();
            for ((x, c), &s) in distinct.iter().zip(&choice) {
                rep.extend(std::iter::repeat_n(x.clone(), s as usize));
                comp.extend(std::iter::repeat_n(x.clone(), (c - s) as usize));
                mult *= binomial(*c, s);
            }
            out.push(SublistClass { representative: rep, complement: comp, multiplicity: mult });
        }
        let mut i = 0;
        loop {
            if i == distinct.len() {
                return out;
            }
            if choice[i] < distinct[i].1 {
                choice[i] += 1;
                break;
            }
            choice[i] = 0;
            i += 1;
        }
    }
}

/// Calls `visit(mask)` for every nonempty index subset of `0..n`.
pub fn for_each_nonempty_subset<F: FnMut(u32)>(n: usize, mut visit: F) {
    assert!(n < 32, "subset enumeration is capped at 31 elements");
    for mask in 1u32..(1u32 << n) {
        visit(mask);
    }
}

pub fn select<T: Clone>(list: &[T], mask: u32) -> (Vec<T>, Vec<T>) {
    let mut inside = Vec::new();
    let mut outside = Vec::new();
    for (i, x) in list.iter().enumerate() {
        if mask >> i & 1 == 1 {
            inside.push(x.clone());
        } else {
            outside.push(x.clone());
        }
    }
    (inside, outside)
}

/// Multisets of `len` pairs `(e, a)` with `a` drawn from `weights`, `Σe = total`,
/// admissible weight sum, and the weight sum accepted by `accept`. Each multiset is returned once, sorted.
pub fn weighted_multisets<F: Fn(&WeightSum) -> bool>(
    weights: &[Weight],
    len: usize,
    total: i64,
    accept: F,
) -> Vec<Vec<(i64, Weight)>> {
    let mut out = Vec::new();
    if total < 0 {
        return out;
    }
    let elems: Vec<(i64, usize)> = (0..=total).flat_map(|e| (0..weights.len()).map(move |a| (e, a))).collect();
    let mut cur: Vec<usize> = Vec::with_capacity(len);
    #[allow(clippy::too_many_arguments)]
    fn rec<F: Fn(&WeightSum) -> bool>(
        elems: &[(i64, usize)],
        weights: &[Weight],
        start: usize,
        left: usize,
        remaining: i64,
        sum: WeightSum,
        cur: &mut Vec<usize>,
        accept: &F,
        out: &mut Vec<Vec<(i64, Weight)>>,
    ) {
        if left == 0 {
            if remaining == 0 && accept(&sum) {
                let mut item: Vec<(i64, Weight)> =
                    cur.iter().map(|&j| (elems[j].0, weights[elems[j].1].clone())).collect();
                item.sort();
                out.push(item);
            }
            return;
        }
        for j in start..elems.len() {
            let (e, a) = elems[j];
            if e > remaining {
                break;
            }
            let s = sum.add(&weights[a]);
            if !s.admissible() {
                continue;
            }
            cur.push(j);
            rec(elems, weights, j, left - 1, remaining - e, s, cur, accept, out);
            cur.pop();
        }
    }
    rec(&elems, weights, 0, len, total, WeightSum::zero(), &mut cur, &accept, &mut out);
    out.sort();
    out
}

/// Every multiset of at most `max_len` weights drawn from `weights`, sorted, shortest first.
pub fn weight_lists(weights: &[Weight], max_len: usize) -> Vec<Vec<Weight>> {
    let mut out = Vec::new();
    let mut layer: Vec<(Vec<Weight>, usize)> = vec![(Vec::new(), 0)];
    for _ in 0..max_len {
        let mut next = Vec::new();
        for (list, start) in &layer {
            for (i, w) in weights.iter().enumerate().skip(*start) {
                let mut l = list.clone();
                l.push(w.clone());
                out.push(l.clone());
                next.push((l, i));
            }
        }
        layer = next;
    }
    out
}

/// Pruned admissible-partition counts agree with filtering all set partitions.
pub fn check_partition_counts(lists: &[Vec<Weight>]) -> Assertion {
    let longest = lists.iter().map(Vec::len).max().unwrap_or(0);
    let mut out = Assertion::new(
        "identities",
        "admissible partition counts".into(),
        format!("{} lists of length <= {longest}", lists.len()),
    );
    for list in lists {
        out.checked += 1;
        let mut pruned = 0usize;
        for_each_admissible_partition(list, |_| pruned += 1);
        let brute = set_partitions(list.len())
            .iter()
            .filter(|p| p.iter().all(|b| b.iter().fold(WeightSum::zero(), |s, &i| s.add(&list[i])).admissible()))
            .count();
        if pruned != brute {
            let names: Vec<String> = list.iter().map(|w| w.to_string()).collect();
            return out.fail(format!("({}) : pruned {pruned} brute force {brute}", names.join(",")));
        }
    }
    out
}

/// Power-class multiplicities of each list sum to `2^n - 1`.
pub fn check_power_class_sums(lists: &[Vec<Weight>]) -> Assertion {
    let longest = lists.iter().map(Vec::len).max().unwrap_or(0);
    let mut out = Assertion::new(
        "identities",
        "power class multiplicities sum to 2^n - 1".into(),
        format!("{} lists of length <= {longest}", lists.len()),
    );
    for list in lists {
        out.checked += 1;
        let total: BigInt = power_classes(list, true).iter().map(|c| c.multiplicity.clone()).sum();
        let expected = (BigInt::one() << list.len()) - 1;
        if total != expected {
            let names: Vec<String> = list.iter().map(|w| w.to_string()).collect();
            return out.fail(format!("({}) : sum {total} expected {expected}", names.join(",")));
        }
    }
    out
}

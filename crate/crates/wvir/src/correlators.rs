//! Exact correlators: DVV for weight 1, the partition reduction and the
//! weighted recursion for general weights, and a persistent memo.

use std::collections::HashMap;
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;
use std::sync::OnceLock;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};
use parking_lot::RwLock;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::combinatorics::{aut, for_each_admissible_partition, select, WeightedInsertion};
use crate::hfunction::{double_factorial_odd_above, h_multi_with, h_scalar, HConvention};
use crate::report::Assertion;
use crate::series::{Monomial, TruncatedSeries, Var};
use crate::weights::{parse_weight, Weight, WeightSet};

#[derive(Debug, Error)]
pub enum CorrelatorError {
    #[error("cache I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("cache line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("cache line {line}: stored {stored} for {key} but recomputed {computed}")]
    Mismatch { line: usize, key: String, stored: String, computed: String },
}

/// `g = (Σk - n + 3)/3` when that is a nonnegative integer.
pub fn genus_for(ks: &[i64]) -> Option<u32> {
    let num = ks.iter().sum::<i64>() - ks.len() as i64 + 3;
    if num < 0 || num % 3 != 0 {
        return None;
    }
    Some((num / 3) as u32)
}

/// A dimension-consistent multiset of insertions in canonical order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CorrelatorKey {
    genus: u32,
    insertions: Vec<WeightedInsertion>,
}

impl CorrelatorKey {
    pub fn new(mut insertions: Vec<WeightedInsertion>) -> Option<Self> {
        insertions.sort();
        let ks: Vec<i64> = insertions.iter().map(|x| x.k).collect();
        let genus = genus_for(&ks)?;
        Some(CorrelatorKey { genus, insertions })
    }

    pub fn genus(&self) -> u32 {
        self.genus
    }

    pub fn insertions(&self) -> &[WeightedInsertion] {
        &self.insertions
    }

    /// `∏ m!` over repeated insertions.
    pub fn symmetry(&self) -> BigInt {
        aut(&self.insertions)
    }
}

impl fmt::Display for CorrelatorKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for x in &self.insertions {
            write!(f, "{x}")?;
        }
        write!(f, "_g{}", self.genus)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    PartitionSum,
    Recursion,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CacheMode {
    Trust,
    Verify,
}

type Memo<K> = RwLock<HashMap<K, BigRational>>;

/// Memoizing correlator evaluator. Lookups share a read lock; inserts are idempotent.
#[derive(Default)]
pub struct CorrelatorEngine {
    unweighted: Memo<Vec<i64>>,
    partition: Memo<Vec<WeightedInsertion>>,
    recursion: Memo<Vec<WeightedInsertion>>,
}

fn rational(n: i64, d: i64) -> BigRational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

fn lookup<K: std::hash::Hash + Eq>(memo: &Memo<K>, key: &K) -> Option<BigRational> {
    memo.read().get(key).cloned()
}

impl CorrelatorEngine {
    pub fn new() -> Self {
        Self::default()
    }

    /// Weight-1 correlator `⟨τ_{k_1}…τ_{k_n}⟩` by the DVV recursion.
    pub fn unweighted(&self, ks: &[i64]) -> BigRational {
        let mut key = ks.to_vec();
        key.sort_unstable();
        self.unweighted_sorted(key)
    }

    fn unweighted_sorted(&self, ks: Vec<i64>) -> BigRational {
        if ks.iter().any(|&k| k < 0) {
            return BigRational::zero();
        }
        let n = ks.len() as i64;
        let genus = match genus_for(&ks) {
            Some(g) => g as i64,
            None => return BigRational::zero(),
        };
        if 2 * genus - 2 + n <= 0 {
            return BigRational::zero();
        }
        if ks == [0, 0, 0] {
            return BigRational::one();
        }
        if ks == [1] {
            return rational(1, 24);
        }
        if let Some(v) = lookup(&self.unweighted, &ks) {
            return v;
        }
        let top = *ks.last().expect("stable keys are nonempty");
        let k = top - 1;
        let rest = &ks[..ks.len() - 1];
        let mut total = BigRational::zero();
        for (j, &e) in rest.iter().enumerate() {
            let mut next = rest.to_vec();
            next[j] += k;
            next.sort_unstable();
            total += h_scalar(k, e) * self.unweighted_sorted(next);
        }
        for r in 0..k {
            let s = k - 1 - r;
            let c = double_factorial_odd_above(r - 1) * double_factorial_odd_above(s - 1) / rational(2, 1);
            let mut both = rest.to_vec();
            both.push(r);
            both.push(s);
            both.sort_unstable();
            let mut sub = self.unweighted_sorted(both);
            for mask in 0u32..(1u32 << rest.len()) {
                let (inside, outside) = select(rest, mask);
                let mut left = inside;
                left.push(r);
                left.sort_unstable();
                let lv = self.unweighted_sorted(left);
                if lv.is_zero() {
                    continue;
                }
                let mut right = outside;
                right.push(s);
                right.sort_unstable();
                sub += lv * self.unweighted_sorted(right);
            }
            total += c * sub;
        }
        let value = total / double_factorial_odd_above(k);
        self.unweighted.write().insert(ks, value.clone());
        value
    }

    pub fn weighted(&self, insertions: &[WeightedInsertion], mode: Mode) -> BigRational {
        let mut key = insertions.to_vec();
        key.sort();
        match mode {
            Mode::PartitionSum => self.partition_sum(key),
            Mode::Recursion => self.recursion(key),
        }
    }

    /// `Σ_p (-1)^{codim p} ⟨τ_{p(k)}⟩` over admissible partitions. Negative
    /// indices are allowed and give the values of the unstable convention.
    fn partition_sum(&self, key: Vec<WeightedInsertion>) -> BigRational {
        if key.iter().all(|x| x.a.is_one()) {
            let ks: Vec<i64> = key.iter().map(|x| x.k).collect();
            return self.unweighted_sorted(ks);
        }
        if let Some(v) = lookup(&self.partition, &key) {
            return v;
        }
        let weights: Vec<Weight> = key.iter().map(|x| x.a.clone()).collect();
        let n = key.len();
        let mut total = BigRational::zero();
        for_each_admissible_partition(&weights, |blocks| {
            let mut merged: Vec<i64> =
                blocks.iter().map(|b| 1 + b.iter().map(|&i| key[i].k - 1).sum::<i64>()).collect();
            merged.sort_unstable();
            let v = self.unweighted_sorted(merged);
            if (n - blocks.len()).is_multiple_of(2) {
                total += v;
            } else {
                total -= v;
            }
        });
        self.partition.write().insert(key, total.clone());
        total
    }

    fn recursion(&self, key: Vec<WeightedInsertion>) -> BigRational {
        if key.iter().any(|x| x.k < 0) {
            return self.partition_sum(key);
        }
        let ks: Vec<i64> = key.iter().map(|x| x.k).collect();
        if genus_for(&ks).is_none() {
            return BigRational::zero();
        }
        let n = key.len();
        if ks.iter().all(|&k| k == 0) {
            if n == 3 {
                return BigRational::one();
            }
            return self.partition_sum(key);
        }
        if n == 1 && ks[0] == 1 {
            return rational(1, 24);
        }
        if let Some(v) = lookup(&self.recursion, &key) {
            return v;
        }
        let mut rest = key.clone();
        let pivot = rest.pop().expect("nonempty key");
        let k = pivot.k - 1;
        let b = pivot.a.clone();
        let one = Weight::one();
        let mut total = BigRational::zero();
        let mut inner = BigRational::zero();
        for mask in 1u32..(1u32 << rest.len()) {
            let (inside, outside) = select(&rest, mask);
            let e_sum: i64 = inside.iter().map(|x| x.k).sum();
            let size = inside.len() as i64;
            let with_pivot = inside.iter().fold(b.as_sum(), |s, x| s.add(&x.a));
            if let (true, Some(w)) = (with_pivot.admissible(), with_pivot.to_weight()) {
                let mut next = outside.clone();
                next.push(WeightedInsertion::new(k + 1 + e_sum - size, w));
                next.sort();
                total -= self.recursion(next);
            }
            let alone = inside.iter().fold(crate::weights::WeightSum::zero(), |s, x| s.add(&x.a));
            if let (true, Some(w)) = (alone.admissible(), alone.to_weight()) {
                let es: Vec<i64> = inside.iter().map(|x| x.k).collect();
                let h = h_multi_with(HConvention::Truncated, k, &es);
                if !h.is_zero() {
                    let mut next = outside;
                    next.push(WeightedInsertion::new(e_sum - size + 1 + k, w));
                    next.sort();
                    inner += h * self.recursion(next);
                }
            }
        }
        for r in 0..k {
            let s = k - 1 - r;
            let c = double_factorial_odd_above(r - 1) * double_factorial_odd_above(s - 1) / rational(2, 1);
            let mut both = rest.clone();
            both.push(WeightedInsertion::new(r, one.clone()));
            both.push(WeightedInsertion::new(s, one.clone()));
            both.sort();
            let mut sub = self.recursion(both);
            for mask in 0u32..(1u32 << rest.len()) {
                let (mut left, mut right) = select(&rest, mask);
                left.push(WeightedInsertion::new(r, one.clone()));
                left.sort();
                let lv = self.recursion(left);
                if lv.is_zero() {
                    continue;
                }
                right.push(WeightedInsertion::new(s, one.clone()));
                right.sort();
                sub += lv * self.recursion(right);
            }
            inner += c * sub;
        }
        let value = total + inner / double_factorial_odd_above(k);
        self.recursion.write().insert(key, value.clone());
        value
    }

    /// Every nonzero correlator with weights from `set`, `n ≤ max_insertions`, `g ≤ max_genus`.
    pub fn build_f_coefficients(
        &self,
        set: &WeightSet,
        max_insertions: usize,
        max_genus: u32,
        mode: Mode,
    ) -> Vec<(CorrelatorKey, BigRational)> {
        let keys = dimension_keys(set, max_insertions, max_genus);
        let values: Vec<BigRational> = keys.par_iter().map(|key| self.weighted(key.insertions(), mode)).collect();
        keys.into_iter().zip(values).filter(|(_, v)| !v.is_zero()).collect()
    }

    /// `F^A` truncated at `max_insertions`, with variable slots indexed by `set`.
    pub fn generating_function(&self, set: &WeightSet, max_insertions: usize, max_genus: u32) -> TruncatedSeries {
        let mut f = TruncatedSeries::zero(max_insertions as u32);
        for (key, value) in self.build_f_coefficients(set, max_insertions, max_genus, Mode::PartitionSum) {
            let vars: Vec<Var> = key
                .insertions()
                .iter()
                .map(|x| Var::new(x.k as u32, set.index_of(&x.a).expect("key weights come from the set")))
                .collect();
            let coeff = value / BigRational::from_integer(key.symmetry());
            f.add_term(Monomial::from_vars(vars), coeff);
        }
        f
    }

    /// Writes every memoized partition-sum value with nonnegative indices, one JSON record per line.
    pub fn save_cache<W: Write>(&self, mut out: W) -> Result<usize, CorrelatorError> {
        let mut records: Vec<(CorrelatorKey, BigRational)> = self
            .partition
            .read()
            .iter()
            .filter(|(k, _)| k.iter().all(|x| x.k >= 0))
            .filter_map(|(k, v)| CorrelatorKey::new(k.clone()).map(|key| (key, v.clone())))
            .collect();
        records.sort_by(|a, b| a.0.cmp(&b.0));
        for (key, value) in &records {
            let record = CacheRecord {
                g: key.genus(),
                ins: key.insertions().iter().map(|x| (x.k, x.a.to_string())).collect(),
                val: value.to_string(),
            };
            let line = serde_json::to_string(&record)
                .map_err(|e| CorrelatorError::Parse { line: 0, message: e.to_string() })?;
            writeln!(out, "{line}")?;
        }
        Ok(records.len())
    }

    /// Loads cache records. In verify mode every record is recomputed and
    /// compared; unknown fields are rejected.
    pub fn load_cache<R: BufRead>(&self, input: R, mode: CacheMode) -> Result<usize, CorrelatorError> {
        let mut loaded = 0;
        for (i, line) in input.lines().enumerate() {
            let line_no = i + 1;
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let parse_err = |message: String| CorrelatorError::Parse { line: line_no, message };
            let record: CacheRecord = match mode {
                CacheMode::Verify => serde_json::from_str::<StrictCacheRecord>(&line)
                    .map(CacheRecord::from)
                    .map_err(|e| parse_err(e.to_string()))?,
                CacheMode::Trust => serde_json::from_str(&line).map_err(|e| parse_err(e.to_string()))?,
            };
            let mut insertions = Vec::with_capacity(record.ins.len());
            for (k, w) in &record.ins {
                if *k < 0 {
                    return Err(parse_err(format!("negative index {k}")));
                }
                let a = parse_weight(w).map_err(|e| parse_err(e.to_string()))?;
                insertions.push(WeightedInsertion::new(*k, a));
            }
            let key =
                CorrelatorKey::new(insertions).ok_or_else(|| parse_err("dimension-inconsistent insertions".into()))?;
            if key.genus() != record.g {
                return Err(parse_err(format!("genus {} does not match insertions (genus {})", record.g, key.genus())));
            }
            let value = BigRational::from_str(&record.val).map_err(|e| parse_err(e.to_string()))?;
            if mode == CacheMode::Verify {
                let fresh = CorrelatorEngine::new().weighted(key.insertions(), Mode::PartitionSum);
                if fresh != value {
                    return Err(CorrelatorError::Mismatch {
                        line: line_no,
                        key: key.to_string(),
                        stored: value.to_string(),
                        computed: fresh.to_string(),
                    });
                }
            }
            self.partition.write().insert(key.insertions, value);
            loaded += 1;
        }
        Ok(loaded)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CacheRecord {
    g: u32,
    ins: Vec<(i64, String)>,
    val: String,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct StrictCacheRecord {
    g: u32,
    ins: Vec<(i64, String)>,
    val: String,
}

impl From<StrictCacheRecord> for CacheRecord {
    fn from(r: StrictCacheRecord) -> Self {
        CacheRecord { g: r.g, ins: r.ins, val: r.val }
    }
}

/// All canonical keys with weights from `set`, `1 ≤ n ≤ max_insertions`, `g ≤ max_genus`,
/// in increasing `(n, g, insertions)` order.
pub fn dimension_keys(set: &WeightSet, max_insertions: usize, max_genus: u32) -> Vec<CorrelatorKey> {
    let mut out = Vec::new();
    for n in 1..=max_insertions {
        for g in 0..=max_genus {
            let total = 3 * g as i64 - 3 + n as i64;
            if total < 0 {
                continue;
            }
            let elems: Vec<WeightedInsertion> = (0..=total)
                .flat_map(|k| set.elements().iter().map(move |a| WeightedInsertion::new(k, a.clone())))
                .collect();
            let mut cur = Vec::with_capacity(n);
            collect_keys(&elems, 0, n, total, &mut cur, &mut out);
        }
    }
    out
}

fn collect_keys(
    elems: &[WeightedInsertion],
    start: usize,
    left: usize,
    remaining: i64,
    cur: &mut Vec<WeightedInsertion>,
    out: &mut Vec<CorrelatorKey>,
) {
    if left == 0 {
        if remaining == 0 {
            out.push(CorrelatorKey::new(cur.clone()).expect("enumerated keys are dimension consistent"));
        }
        return;
    }
    for j in start..elems.len() {
        if elems[j].k > remaining {
            break;
        }
        cur.push(elems[j].clone());
        collect_keys(elems, j, left - 1, remaining - elems[j].k, cur, out);
        cur.pop();
    }
}

/// `⟨τ_{0;a}τ_{0;b}τ_{0;c}⟩_0 = 1` and `⟨τ_{1;a}⟩_1 = 1/24` for all weights of `set`, in both modes.
pub fn check_initial_values(engine: &CorrelatorEngine, set: &WeightSet) -> Assertion {
    let mut cases: Vec<(Vec<WeightedInsertion>, BigRational)> = Vec::new();
    let ws = set.elements();
    for (i, a) in ws.iter().enumerate() {
        cases.push((vec![WeightedInsertion::new(1, a.clone())], rational(1, 24)));
        for (j, b) in ws.iter().enumerate().skip(i) {
            for c in &ws[j..] {
                let list = [a, b, c].map(|w| WeightedInsertion::new(0, w.clone())).to_vec();
                cases.push((list, BigRational::one()));
            }
        }
    }
    let mut out = Assertion::new("identities", "initial values".into(), "n <= 3, genus <= 1".into());
    for (list, expected) in &cases {
        for mode in [Mode::PartitionSum, Mode::Recursion] {
            out.checked += 1;
            let v = engine.weighted(list, mode);
            if &v != expected {
                let key: String = list.iter().map(|x| x.to_string()).collect();
                return out.fail(format!("{key} ({mode:?}) : {v} expected {expected}"));
            }
        }
    }
    out
}

/// Partition-sum and recursion values agree on every key of `dimension_keys`.
pub fn check_mode_equivalence(
    engine: &CorrelatorEngine,
    set: &WeightSet,
    max_insertions: usize,
    max_genus: u32,
) -> Assertion {
    let keys = dimension_keys(set, max_insertions, max_genus);
    let range = format!("n <= {max_insertions}, genus <= {max_genus}");
    let mut out = Assertion::new("identities", format!("partition sum = recursion on {{{set}}}"), range);
    out.checked = keys.len();
    let first = keys.par_iter().find_first(|key| {
        engine.weighted(key.insertions(), Mode::PartitionSum) != engine.weighted(key.insertions(), Mode::Recursion)
    });
    if let Some(key) = first {
        let p = engine.weighted(key.insertions(), Mode::PartitionSum);
        let r = engine.weighted(key.insertions(), Mode::Recursion);
        out = out.fail(format!("{key} : partition sum {p} recursion {r}"));
    }
    out
}

fn shared() -> &'static CorrelatorEngine {
    static ENGINE: OnceLock<CorrelatorEngine> = OnceLock::new();
    ENGINE.get_or_init(CorrelatorEngine::new)
}

pub fn unweighted_correlator(ks: &[i64]) -> BigRational {
    shared().unweighted(ks)
}

pub fn weighted_correlator(insertions: &[WeightedInsertion], mode: Mode) -> BigRational {
    shared().weighted(insertions, mode)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::weights::additive_closure;

    fn w(s: &str) -> Weight {
        parse_weight(s).unwrap()
    }

    fn ins(list: &[(i64, &str)]) -> Vec<WeightedInsertion> {
        list.iter().map(|&(k, a)| WeightedInsertion::new(k, w(a))).collect()
    }

    #[test]
    fn genus_from_dimension() {
        assert_eq!(genus_for(&[0, 0, 0]), Some(0));
        assert_eq!(genus_for(&[1]), Some(1));
        assert_eq!(genus_for(&[0, 0]), None);
        assert_eq!(genus_for(&[4]), Some(2));
    }

    #[test]
    fn dvv_values() {
        assert_eq!(unweighted_correlator(&[0, 0, 0]), rational(1, 1));
        assert_eq!(unweighted_correlator(&[1]), rational(1, 24));
        assert_eq!(unweighted_correlator(&[2, 0]), rational(1, 24));
        assert_eq!(unweighted_correlator(&[1, 1]), rational(1, 24));
        assert_eq!(unweighted_correlator(&[4]), rational(1, 1152));
        assert_eq!(unweighted_correlator(&[0, -1, 3]), rational(0, 1));
        assert_eq!(unweighted_correlator(&[0, 0]), rational(0, 1));
    }

    #[test]
    fn weighted_values() {
        for mode in [Mode::PartitionSum, Mode::Recursion] {
            assert_eq!(weighted_correlator(&ins(&[(0, "1/3"), (0, "1/3"), (0, "1/3")]), mode), rational(1, 1));
            assert_eq!(weighted_correlator(&ins(&[(0, "1/2"), (2, "1/2")]), mode), rational(0, 1));
            assert_eq!(weighted_correlator(&ins(&[(0, "1/3"), (0, "1/3")]), mode), rational(0, 1));
            for a in ["0+", "1/3", "1/2", "1"] {
                assert_eq!(weighted_correlator(&ins(&[(1, a)]), mode), rational(1, 24));
            }
        }
    }

    #[test]
    fn modes_agree_on_small_keys() {
        let set = additive_closure([w("1/2"), w("1")]);
        let engine = CorrelatorEngine::new();
        for key in dimension_keys(&set, 4, 1) {
            assert_eq!(
                engine.weighted(key.insertions(), Mode::PartitionSum),
                engine.weighted(key.insertions(), Mode::Recursion),
                "{key}"
            );
        }
    }

    #[test]
    fn f_coefficients_for_weight_one() {
        let set = additive_closure([w("1")]);
        let engine = CorrelatorEngine::new();
        let rows = engine.build_f_coefficients(&set, 3, 0, Mode::PartitionSum);
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].1, rational(1, 1));
        let rows = engine.build_f_coefficients(&set, 1, 1, Mode::PartitionSum);
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].1, rational(1, 24));
    }

    #[test]
    fn f_coefficients_for_half() {
        let set = additive_closure([w("1/2"), w("1")]);
        let engine = CorrelatorEngine::new();
        let keys = dimension_keys(&set, 2, 1);
        let target = CorrelatorKey::new(ins(&[(0, "1/2"), (2, "1/2")])).unwrap();
        assert!(keys.contains(&target));
        let pair = ins(&[(1, "1/2"), (1, "1/2")]);
        let expect = engine.unweighted(&[1, 1]) - engine.unweighted(&[1]);
        assert_eq!(engine.weighted(&pair, Mode::PartitionSum), expect);
    }

    #[test]
    fn cache_round_trip() {
        let set = additive_closure([w("1/3")]);
        let engine = CorrelatorEngine::new();
        engine.build_f_coefficients(&set, 4, 1, Mode::PartitionSum);
        let mut buf = Vec::new();
        let saved = engine.save_cache(&mut buf).unwrap();
        assert!(saved > 0);
        let fresh = CorrelatorEngine::new();
        assert_eq!(fresh.load_cache(&buf[..], CacheMode::Verify).unwrap(), saved);
        let mut again = Vec::new();
        fresh.save_cache(&mut again).unwrap();
        assert_eq!(buf, again);
    }

    #[test]
    fn cache_rejects_bad_records() {
        let engine = CorrelatorEngine::new();
        let wrong = br#"{"g":0,"ins":[[0,"1/3"],[0,"1/3"],[0,"1/3"]],"val":"2"}"#;
        assert!(matches!(engine.load_cache(&wrong[..], CacheMode::Verify), Err(CorrelatorError::Mismatch { .. })));
        assert!(engine.load_cache(&wrong[..], CacheMode::Trust).is_ok());
        let extra = br#"{"g":1,"ins":[[1,"1"]],"val":"1/24","note":"x"}"#;
        assert!(matches!(engine.load_cache(&extra[..], CacheMode::Verify), Err(CorrelatorError::Parse { .. })));
        assert!(engine.load_cache(&extra[..], CacheMode::Trust).is_ok());
        let genus = br#"{"g":2,"ins":[[1,"1"]],"val":"1/24"}"#;
        assert!(engine.load_cache(&genus[..], CacheMode::Trust).is_err());
    }
}

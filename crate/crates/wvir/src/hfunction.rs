//! The structure constants `h_{k;e}` and their identities.

use std::collections::HashMap;
use std::sync::OnceLock;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};
use parking_lot::RwLock;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::combinatorics::{aut, power_classes, select};
use crate::report::Assertion;
use crate::weights::Weight;

/// How `h_{k;x}` is read at negative effective index `x`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum HConvention {
    /// Evaluate the double-factorial ratio with the downward extension.
    Extended,
    /// Set `h_{k;x} = 0` for `x < 0`.
    Truncated,
}

/// `(2m-1)!!`, extended to `m ≤ 0` by `(2m-1)!! = (2m+1)!!/(2m+1)`.
pub fn odd_double_factorial(m: i64) -> BigRational {
    if m >= 1 {
        let mut r = BigInt::one();
        for j in 1..=m {
            r *= 2 * j - 1;
        }
        return BigRational::from_integer(r);
    }
    let mut r = BigRational::one();
    // (2m-1)!! = 1 / ((2m+1)(2m+3)...(-1))
    for j in m..0 {
        r /= BigRational::from_integer(BigInt::from(2 * j + 1));
    }
    r
}

/// `(2k+3)!!` for `k ≥ -1`.
pub fn double_factorial_odd_above(k: i64) -> BigRational {
    odd_double_factorial(k + 2)
}

pub fn h_scalar(k: i64, e: i64) -> BigRational {
    odd_double_factorial(k + e + 1) / odd_double_factorial(e)
}

pub fn h_scalar_with(convention: HConvention, k: i64, e: i64) -> BigRational {
    match convention {
        HConvention::Truncated if e < 0 => BigRational::zero(),
        _ => h_scalar(k, e),
    }
}

type MultiMemo = RwLock<HashMap<(HConvention, i64, Vec<i64>), BigRational>>;

fn memo() -> &'static MultiMemo {
    static MEMO: OnceLock<MultiMemo> = OnceLock::new();
    MEMO.get_or_init(|| RwLock::new(HashMap::new()))
}

/// Inclusion-exclusion over nonempty subsets `J`: `Σ (-1)^{#J-1} h_{k;|e_J|-#J+1}`.
pub fn h_multi(k: i64, es: &[i64]) -> BigRational {
    h_multi_with(HConvention::Extended, k, es)
}

pub fn h_multi_with(convention: HConvention, k: i64, es: &[i64]) -> BigRational {
    let mut key = es.to_vec();
    key.sort_unstable();
    let key = (convention, k, key);
    if let Some(v) = memo().read().get(&key) {
        return v.clone();
    }
    let n = es.len();
    let mut total = BigRational::zero();
    for mask in 1u32..(1u32 << n) {
        let size = mask.count_ones() as i64;
        let sum: i64 = (0..n).filter(|i| mask >> i & 1 == 1).map(|i| es[i]).sum();
        let term = h_scalar_with(convention, k, sum - size + 1);
        if size % 2 == 1 {
            total += term;
        } else {
            total -= term;
        }
    }
    memo().write().insert(key, total.clone());
    total
}

/// The same sum regrouped over classes of `(e, a)` sublists with `#Aut` multiplicities.
pub fn h_multi_via_classes(k: i64, es: &[i64], weights: &[Weight]) -> BigRational {
    assert_eq!(es.len(), weights.len(), "e-list and a-list differ in length");
    let pairs: Vec<(i64, Weight)> = es.iter().copied().zip(weights.iter().cloned()).collect();
    let full = aut(&pairs);
    let mut total = BigRational::zero();
    for class in power_classes(&pairs, true) {
        let size = class.representative.len() as i64;
        let sum: i64 = class.representative.iter().map(|p| p.0).sum();
        let mult = BigRational::new(full.clone(), aut(&class.representative) * aut(&class.complement));
        let term = mult * h_scalar(k, sum - size + 1);
        if size % 2 == 1 {
            total += term;
        } else {
            total -= term;
        }
    }
    total
}

/// Both sides of `2(k1-k2) h_{k1+k2;e} = h_{k1;e} h_{k2;k1+e} - h_{k2;e} h_{k1;k2+e}`.
pub fn scalar_bracket_sides(k1: i64, k2: i64, e: i64) -> (BigRational, BigRational) {
    let lhs = BigRational::from_integer(BigInt::from(2 * (k1 - k2))) * h_scalar(k1 + k2, e);
    let rhs = h_scalar(k1, e) * h_scalar(k2, k1 + e) - h_scalar(k2, e) * h_scalar(k1, k2 + e);
    (lhs, rhs)
}

/// Both sides of the multi-index bracket identity, in its `#Aut`-weighted class form.
pub fn multi_bracket_sides(
    convention: HConvention,
    k1: i64,
    k2: i64,
    es: &[i64],
    weights: &[Weight],
) -> (BigRational, BigRational) {
    let pairs: Vec<(i64, Weight)> = es.iter().copied().zip(weights.iter().cloned()).collect();
    let lhs = BigRational::from_integer(BigInt::from(2 * (k1 - k2))) * h_multi_with(convention, k1 + k2, es)
        / BigRational::from_integer(aut(&pairs));
    let mut rhs = BigRational::zero();
    for class in power_classes(&pairs, true) {
        let j: Vec<i64> = class.representative.iter().map(|p| p.0).collect();
        let jc: Vec<i64> = class.complement.iter().map(|p| p.0).collect();
        let shift = j.iter().sum::<i64>() - j.len() as i64 + 1;
        let with = |first: i64| {
            let mut v = vec![first + shift];
            v.extend_from_slice(&jc);
            v
        };
        let term = h_multi_with(convention, k1, &j) * h_multi_with(convention, k2, &with(k1))
            - h_multi_with(convention, k2, &j) * h_multi_with(convention, k1, &with(k2));
        rhs += term / BigRational::from_integer(aut(&class.representative) * aut(&class.complement));
    }
    (lhs, rhs)
}

/// Both sides of `h_{k;c,e} = h_{k;c} + Σ_J (h_{k;e_J} - h_{k;c+|e_J|-#J, e_{J^c}})`.
pub fn inductive_sides(convention: HConvention, k: i64, c: i64, es: &[i64]) -> (BigRational, BigRational) {
    let mut full = vec![c];
    full.extend_from_slice(es);
    let lhs = h_multi_with(convention, k, &full);
    let mut rhs = h_scalar_with(convention, k, c);
    for mask in 1u32..(1u32 << es.len()) {
        let (j, jc) = select(es, mask);
        let mut shifted = vec![c + j.iter().sum::<i64>() - j.len() as i64];
        shifted.extend(jc);
        rhs += h_multi_with(convention, k, &j) - h_multi_with(convention, k, &shifted);
    }
    (lhs, rhs)
}

#[derive(Debug, Clone, Serialize)]
pub struct IdentityFailure {
    pub identity: String,
    pub input: String,
    pub lhs: String,
    pub rhs: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct IdentityReport {
    pub convention: HConvention,
    pub seed: u64,
    pub scalar_checked: usize,
    pub multi_checked: usize,
    pub inductive_checked: usize,
    pub classes_checked: usize,
    pub failures: Vec<IdentityFailure>,
}

impl IdentityReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }

    /// One assertion per identity, carrying its first failure.
    pub fn assertions(&self) -> Vec<Assertion> {
        let random = format!("{} seeded lists of length <= 4, seed {}", self.multi_checked, self.seed);
        let rows = [
            (
                "scalar-bracket",
                "scalar bracket identity",
                "k1, k2 in [-1, 8], e in [0, 8]".to_string(),
                self.scalar_checked,
            ),
            ("multi-bracket", "multi-index bracket identity", random.clone(), self.multi_checked),
            ("inductive", "inductive identity", random.clone(), self.inductive_checked),
            ("class-expansion", "class expansion of h", random, self.classes_checked),
        ];
        rows.into_iter()
            .map(|(id, name, range, checked)| {
                let mut a = Assertion::new("identities", name.into(), range);
                a.checked = checked;
                match self.failures.iter().find(|f| f.identity == id) {
                    Some(f) => a.fail(format!("{} : lhs {} rhs {}", f.input, f.lhs, f.rhs)),
                    None => a,
                }
            })
            .collect()
    }
}

/// Runs the scalar bracket identity exhaustively on `k1, k2 ∈ [-1, 8]`, `e ∈ [0, 8]`,
/// and the multi-index bracket, inductive and class-expansion identities on
/// `trials` seeded random lists of length at most 4.
pub fn run_identity_suite(convention: HConvention, seed: u64, trials: usize) -> IdentityReport {
    let mut failures = Vec::new();
    let mut scalar_checked = 0;
    for k1 in -1..=8 {
        for k2 in -1..=8 {
            for e in 0..=8 {
                scalar_checked += 1;
                let (l, r) = scalar_bracket_sides(k1, k2, e);
                if l != r {
                    failures.push(IdentityFailure {
                        identity: "scalar-bracket".into(),
                        input: format!("k1={k1} k2={k2} e={e}"),
                        lhs: l.to_string(),
                        rhs: r.to_string(),
                    });
                }
            }
        }
    }
    let pool = [Weight::ratio(1, 2).expect("legal weight"), Weight::ratio(1, 3).expect("legal weight"), Weight::one()];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut multi_checked = 0;
    let mut inductive_checked = 0;
    let mut classes_checked = 0;
    for _ in 0..trials {
        let n = rng.gen_range(1..=4);
        let es: Vec<i64> = (0..n).map(|_| rng.gen_range(0..=4)).collect();
        let ws: Vec<Weight> = (0..n).map(|_| pool[rng.gen_range(0..pool.len())].clone()).collect();
        let k1 = rng.gen_range(-1..=4);
        let k2 = rng.gen_range(-1..=4);
        let k = rng.gen_range(-1..=4);
        let c = rng.gen_range(0..=4);
        let input = format!("k1={k1} k2={k2} k={k} c={c} e={es:?}");

        let (l, r) = multi_bracket_sides(convention, k1, k2, &es, &ws);
        multi_checked += 1;
        if l != r {
            failures.push(IdentityFailure {
                identity: "multi-bracket".into(),
                input: input.clone(),
                lhs: l.to_string(),
                rhs: r.to_string(),
            });
        }
        let (l, r) = inductive_sides(convention, k, c, &es);
        inductive_checked += 1;
        if l != r {
            failures.push(IdentityFailure {
                identity: "inductive".into(),
                input: input.clone(),
                lhs: l.to_string(),
                rhs: r.to_string(),
            });
        }
        let l = h_multi(k, &es);
        let r = h_multi_via_classes(k, &es, &ws);
        classes_checked += 1;
        if l != r {
            failures.push(IdentityFailure {
                identity: "class-expansion".into(),
                input,
                lhs: l.to_string(),
                rhs: r.to_string(),
            });
        }
    }
    IdentityReport { convention, seed, scalar_checked, multi_checked, inductive_checked, classes_checked, failures }
}

//! Sparse truncated power series in the variables `t_{k;a}` and normal-ordered
//! differential operators acting on them.
//!
//! Variables carry a weight slot, an index into whichever `WeightSet` the
//! caller uses for the phase space. Every series records the degree up to
//! which its coefficients are exact; arithmetic propagates that bound.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};
use smallvec::SmallVec;
use thiserror::Error;

use crate::weights::WeightSet;

/// Bound of a series known exactly in every degree.
pub const EXACT: i64 = i64::MAX;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SeriesError {
    #[error("exponential needs a series without constant term")]
    ConstantTerm,
    #[error("exponential needs a finite degree bound")]
    Unbounded,
    #[error("conjugated action supports derivative order at most 2, found {0}")]
    OrderTooHigh(usize),
    #[error("substitution image of {0} has a constant term")]
    ConstantImage(String),
}

/// The variable `t_{k;a}` with `a` given by its slot in the active weight set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var {
    pub k: u32,
    pub slot: u16,
}

impl Var {
    pub fn new(k: u32, slot: usize) -> Self {
        Var { k, slot: slot as u16 }
    }

    pub fn name(&self, set: &WeightSet) -> String {
        format!("t{};{}", self.k, set.get(self.slot as usize))
    }
}

/// A sorted multiset of variables.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Monomial(SmallVec<[Var; 8]>);

impl Monomial {
    pub fn one() -> Self {
        Monomial(SmallVec::new())
    }

    pub fn from_vars<I: IntoIterator<Item = Var>>(vars: I) -> Self {
        let mut v: SmallVec<[Var; 8]> = vars.into_iter().collect();
        v.sort_unstable();
        Monomial(v)
    }

    pub fn degree(&self) -> usize {
        self.0.len()
    }

    pub fn vars(&self) -> &[Var] {
        &self.0
    }

    pub fn times(&self, other: &Monomial) -> Monomial {
        let mut v: SmallVec<[Var; 8]> = SmallVec::with_capacity(self.0.len() + other.0.len());
        let (mut i, mut j) = (0, 0);
        while i < self.0.len() && j < other.0.len() {
            if self.0[i] <= other.0[j] {
                v.push(self.0[i]);
                i += 1;
            } else {
                v.push(other.0[j]);
                j += 1;
            }
        }
        v.extend_from_slice(&self.0[i..]);
        v.extend_from_slice(&other.0[j..]);
        Monomial(v)
    }

    pub fn count(&self, v: Var) -> usize {
        self.0.iter().filter(|&&x| x == v).count()
    }

    /// `∂/∂v` of the monomial as `(multiplicity, quotient)`.
    pub fn differentiate(&self, v: Var) -> Option<(usize, Monomial)> {
        let pos = self.0.iter().position(|&x| x == v)?;
        let mult = self.count(v);
        let mut rest = self.0.clone();
        rest.remove(pos);
        Some((mult, Monomial(rest)))
    }

    /// `∂^S` of the monomial for a multiset `S`, as `(falling-factorial coefficient, quotient)`.
    pub fn differentiate_by(&self, by: &Monomial) -> Option<(BigInt, Monomial)> {
        let mut coeff = BigInt::one();
        let mut cur = self.clone();
        for &v in by.vars() {
            let (m, q) = cur.differentiate(v)?;
            coeff *= m;
            cur = q;
        }
        Some((coeff, cur))
    }

    /// Weighted dimension `Σ (k_i - 1)`.
    pub fn dimension(&self) -> i64 {
        self.0.iter().map(|v| v.k as i64 - 1).sum()
    }

    pub fn format(&self, set: &WeightSet) -> String {
        if self.0.is_empty() {
            return "1".into();
        }
        let mut parts: Vec<String> = Vec::new();
        let mut i = 0;
        while i < self.0.len() {
            let v = self.0[i];
            let mut e = 1;
            while i + e < self.0.len() && self.0[i + e] == v {
                e += 1;
            }
            let name = v.name(set);
            parts.push(if e == 1 { name } else { format!("{name}^{e}") });
            i += e;
        }
        parts.join("*")
    }
}

fn lower(bound: i64, by: i64) -> i64 {
    if bound == EXACT {
        EXACT
    } else {
        bound - by
    }
}

/// A power series truncated at a total degree bound.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TruncatedSeries {
    terms: BTreeMap<Monomial, BigRational>,
    bound: i64,
}

impl TruncatedSeries {
    pub fn zero(bound: u32) -> Self {
        TruncatedSeries { terms: BTreeMap::new(), bound: bound as i64 }
    }

    /// An exactly known polynomial.
    pub fn polynomial() -> Self {
        TruncatedSeries { terms: BTreeMap::new(), bound: EXACT }
    }

    pub fn with_bound(bound: i64) -> Self {
        TruncatedSeries { terms: BTreeMap::new(), bound }
    }

    pub fn constant(c: BigRational, bound: i64) -> Self {
        let mut s = Self::with_bound(bound);
        s.add_term(Monomial::one(), c);
        s
    }

    pub fn variable(v: Var, bound: i64) -> Self {
        let mut s = Self::with_bound(bound);
        s.add_term(Monomial::from_vars([v]), BigRational::one());
        s
    }

    pub fn monomial(m: Monomial, c: BigRational) -> Self {
        let mut s = Self::polynomial();
        s.add_term(m, c);
        s
    }

    /// Degree up to which the coefficients are exact; `EXACT` for polynomials.
    pub fn bound(&self) -> i64 {
        self.bound
    }

    pub fn is_exact(&self) -> bool {
        self.bound == EXACT
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Monomial, &BigRational)> {
        self.terms.iter()
    }

    pub fn coefficient(&self, m: &Monomial) -> BigRational {
        self.terms.get(m).cloned().unwrap_or_else(BigRational::zero)
    }

    pub fn constant_term(&self) -> BigRational {
        self.coefficient(&Monomial::one())
    }

    /// Adds `c·m`, dropping it when it exceeds the bound or cancels to zero.
    pub fn add_term(&mut self, m: Monomial, c: BigRational) {
        if c.is_zero() || (m.degree() as i64) > self.bound {
            return;
        }
        match self.terms.entry(m) {
            std::collections::btree_map::Entry::Vacant(e) => {
                e.insert(c);
            }
            std::collections::btree_map::Entry::Occupied(mut e) => {
                *e.get_mut() += c;
                if e.get().is_zero() {
                    e.remove();
                }
            }
        }
    }

    /// Lowers the bound and discards terms above it.
    pub fn truncate(&self, bound: i64) -> Self {
        let bound = bound.min(self.bound);
        let terms = self
            .terms
            .iter()
            .filter(|(m, _)| m.degree() as i64 <= bound)
            .map(|(m, c)| (m.clone(), c.clone()))
            .collect();
        TruncatedSeries { terms, bound }
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut out = self.truncate(other.bound);
        for (m, c) in &other.terms {
            out.add_term(m.clone(), c.clone());
        }
        out
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.scale(&-BigRational::one()))
    }

    pub fn scale(&self, c: &BigRational) -> Self {
        if c.is_zero() {
            return TruncatedSeries::with_bound(self.bound);
        }
        TruncatedSeries { terms: self.terms.iter().map(|(m, x)| (m.clone(), x * c)).collect(), bound: self.bound }
    }

    pub fn mul(&self, other: &Self) -> Self {
        let mut out = TruncatedSeries::with_bound(self.bound.min(other.bound));
        for (m1, c1) in &self.terms {
            for (m2, c2) in &other.terms {
                if (m1.degree() + m2.degree()) as i64 > out.bound {
                    continue;
                }
                out.add_term(m1.times(m2), c1 * c2);
            }
        }
        out
    }

    /// Multiplies by the exact monomial `c·m`, raising the bound by its degree.
    pub fn mul_monomial(&self, m: &Monomial, c: &BigRational) -> Self {
        let bound = if self.bound == EXACT { EXACT } else { self.bound + m.degree() as i64 };
        let mut out = TruncatedSeries::with_bound(bound);
        for (m1, c1) in &self.terms {
            out.add_term(m1.times(m), c1 * c);
        }
        out
    }

    /// `Σ_{m ≤ bound} s^m / m!`.
    pub fn exp_truncated(&self) -> Result<Self, SeriesError> {
        if !self.constant_term().is_zero() {
            return Err(SeriesError::ConstantTerm);
        }
        if self.bound == EXACT {
            return Err(SeriesError::Unbounded);
        }
        let mut result = TruncatedSeries::constant(BigRational::one(), self.bound);
        let mut power = result.clone();
        for m in 1..=self.bound {
            power = power.mul(self).scale(&BigRational::new(BigInt::one(), BigInt::from(m)));
            if power.is_zero() {
                break;
            }
            result = result.add(&power);
        }
        Ok(result)
    }

    pub fn derivative(&self, v: Var) -> Self {
        let mut out = TruncatedSeries::with_bound(lower(self.bound, 1));
        for (m, c) in &self.terms {
            if let Some((mult, q)) = m.differentiate(v) {
                out.add_term(q, c * BigRational::from_integer(BigInt::from(mult)));
            }
        }
        out
    }

    pub fn derivative_by(&self, by: &Monomial) -> Self {
        let mut out = TruncatedSeries::with_bound(lower(self.bound, by.degree() as i64));
        for (m, c) in &self.terms {
            if let Some((coeff, q)) = m.differentiate_by(by) {
                out.add_term(q, c * BigRational::from_integer(coeff));
            }
        }
        out
    }

    /// Keeps only monomials whose variables all satisfy `keep` (the rest are set to zero).
    pub fn restrict<F: Fn(Var) -> bool>(&self, keep: F) -> Self {
        let terms = self
            .terms
            .iter()
            .filter(|(m, _)| m.vars().iter().all(|&v| keep(v)))
            .map(|(m, c)| (m.clone(), c.clone()))
            .collect();
        TruncatedSeries { terms, bound: self.bound }
    }

    /// Keeps only monomials accepted by `keep`.
    pub fn filter<F: Fn(&Monomial) -> bool>(&self, keep: F) -> Self {
        let terms = self.terms.iter().filter(|(m, _)| keep(m)).map(|(m, c)| (m.clone(), c.clone())).collect();
        TruncatedSeries { terms, bound: self.bound }
    }

    /// Replaces every variable `v` by `image(v)`. Images must have no constant term.
    /// Products over shared prefixes of the sorted monomials are computed once.
    pub fn substitute<F: Fn(Var) -> TruncatedSeries>(&self, image: F, bound: i64) -> Result<Self, SeriesError> {
        let mut images: HashMap<Var, TruncatedSeries> = HashMap::new();
        let mut out_bound = bound.min(self.bound);
        for m in self.terms.keys() {
            for &v in m.vars() {
                if let std::collections::hash_map::Entry::Vacant(e) = images.entry(v) {
                    let img = image(v);
                    if !img.constant_term().is_zero() {
                        return Err(SeriesError::ConstantImage(format!("t{};slot{}", v.k, v.slot)));
                    }
                    out_bound = out_bound.min(img.bound);
                    e.insert(img);
                }
            }
        }
        let mut prefixes: HashMap<Monomial, TruncatedSeries> = HashMap::new();
        prefixes.insert(Monomial::one(), TruncatedSeries::constant(BigRational::one(), out_bound));
        let mut out = TruncatedSeries::with_bound(out_bound);
        for (m, c) in &self.terms {
            if m.degree() as i64 > out_bound {
                continue;
            }
            let product = prefix_product(m.vars(), &images, &mut prefixes, out_bound);
            for (mm, cc) in product.terms() {
                out.add_term(mm.clone(), c * cc);
            }
        }
        Ok(out)
    }

    /// Lines `coefficient * monomial` in sorted monomial order.
    pub fn format(&self, set: &WeightSet) -> String {
        let mut s = String::new();
        for (m, c) in &self.terms {
            s.push_str(&format!("{c} * {}\n", m.format(set)));
        }
        s
    }
}

fn prefix_product(
    vars: &[Var],
    images: &HashMap<Var, TruncatedSeries>,
    prefixes: &mut HashMap<Monomial, TruncatedSeries>,
    bound: i64,
) -> TruncatedSeries {
    let key = Monomial::from_vars(vars.iter().copied());
    if let Some(p) = prefixes.get(&key) {
        return p.clone();
    }
    let (last, init) = vars.split_last().expect("the empty prefix is seeded");
    let head = prefix_product(init, images, prefixes, bound);
    let product = head.mul(&images[last]).truncate(bound);
    prefixes.insert(key, product.clone());
    product
}

impl fmt::Display for TruncatedSeries {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (m, c) in &self.terms {
            let vars: Vec<String> = m.vars().iter().map(|v| format!("t{}[{}]", v.k, v.slot)).collect();
            writeln!(f, "{c} * {}", if vars.is_empty() { "1".into() } else { vars.join("*") })?;
        }
        Ok(())
    }
}

/// A finite sum of terms `c · t^T · ∂^D`, normal ordered, valid on outputs up to `degree_bound`.
///
/// `degree_bound` records where the truncated family stops: every omitted
/// term has a multiplier of degree above it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Operator {
    terms: BTreeMap<(Monomial, Monomial), BigRational>,
    degree_bound: i64,
}

impl Operator {
    pub fn new(degree_bound: i64) -> Self {
        Operator { terms: BTreeMap::new(), degree_bound }
    }

    pub fn degree_bound(&self) -> i64 {
        self.degree_bound
    }

    pub fn add_term(&mut self, c: BigRational, mult: Monomial, deriv: Monomial) {
        if c.is_zero() || (mult.degree() as i64) > self.degree_bound {
            return;
        }
        let key = (mult, deriv);
        let entry = self.terms.entry(key.clone()).or_insert_with(BigRational::zero);
        *entry += c;
        if entry.is_zero() {
            self.terms.remove(&key);
        }
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Monomial, &Monomial, &BigRational)> {
        self.terms.iter().map(|((t, d), c)| (t, d, c))
    }

    pub fn coefficient(&self, mult: &Monomial, deriv: &Monomial) -> BigRational {
        self.terms.get(&(mult.clone(), deriv.clone())).cloned().unwrap_or_else(BigRational::zero)
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn max_order(&self) -> usize {
        self.terms.keys().map(|(_, d)| d.degree()).max().unwrap_or(0)
    }

    pub fn scale(&self, c: &BigRational) -> Operator {
        let mut out = Operator::new(self.degree_bound);
        for ((t, d), x) in &self.terms {
            out.add_term(x * c, t.clone(), d.clone());
        }
        out
    }

    pub fn add(&self, other: &Operator) -> Operator {
        let mut out = Operator::new(self.degree_bound.min(other.degree_bound));
        for ((t, d), x) in self.terms.iter().chain(other.terms.iter()) {
            out.add_term(x.clone(), t.clone(), d.clone());
        }
        out
    }

    pub fn sub(&self, other: &Operator) -> Operator {
        self.add(&other.scale(&-BigRational::one()))
    }

    /// Drops every term for which `keep` is false.
    pub fn retain<F: Fn(&Monomial, &Monomial) -> bool>(&self, keep: F) -> Operator {
        let mut out = Operator::new(self.degree_bound);
        for ((t, d), x) in &self.terms {
            if keep(t, d) {
                out.add_term(x.clone(), t.clone(), d.clone());
            }
        }
        out
    }

    /// Applies the operator. The result bound is the smallest of the operator's
    /// bound and `bound(s) - |D| + |T|` over its terms.
    pub fn apply(&self, s: &TruncatedSeries) -> TruncatedSeries {
        let mut bound = self.degree_bound;
        for (t, d) in self.terms.keys() {
            bound = bound.min(lower(s.bound(), d.degree() as i64 - t.degree() as i64));
        }
        let mut derived: HashMap<&Monomial, TruncatedSeries> = HashMap::new();
        let mut out = TruncatedSeries::with_bound(bound);
        for ((t, d), c) in &self.terms {
            let q = derived.entry(d).or_insert_with(|| s.derivative_by(d));
            for (m, x) in q.terms() {
                if (m.degree() + t.degree()) as i64 > bound {
                    continue;
                }
                out.add_term(m.times(t), x * c);
            }
        }
        out
    }

    /// The normal-ordered composition `self ∘ other`.
    pub fn compose(&self, other: &Operator) -> Operator {
        let bound = self.degree_bound.min(lower(other.degree_bound, self.max_order() as i64));
        let mut out = Operator::new(bound);
        for ((t1, d1), c1) in &self.terms {
            let n = d1.degree();
            for ((t2, d2), c2) in &other.terms {
                // distribute the derivatives of d1 between t2 and what follows
                for mask in 0u32..(1u32 << n) {
                    let (on_t2, passed): (Vec<Var>, Vec<Var>) = {
                        let mut a = Vec::new();
                        let mut b = Vec::new();
                        for (i, &v) in d1.vars().iter().enumerate() {
                            if mask >> i & 1 == 1 {
                                a.push(v);
                            } else {
                                b.push(v);
                            }
                        }
                        (a, b)
                    };
                    let Some((coeff, rest)) = t2.differentiate_by(&Monomial::from_vars(on_t2)) else {
                        continue;
                    };
                    let mult = t1.times(&rest);
                    let deriv = Monomial::from_vars(passed).times(d2);
                    out.add_term(c1 * c2 * BigRational::from_integer(coeff), mult, deriv);
                }
            }
        }
        out
    }

    pub fn commutator(&self, other: &Operator) -> Operator {
        self.compose(other).sub(&other.compose(self))
    }

    pub fn format(&self, set: &WeightSet) -> String {
        let mut s = String::new();
        for ((t, d), c) in &self.terms {
            let ds: Vec<String> = d.vars().iter().map(|v| format!("d/d{}", v.name(set))).collect();
            s.push_str(&format!("{c} * {} {}\n", t.format(set), ds.join(" ")));
        }
        s
    }
}

/// `e^{-F} · op(e^{F})`, computed from the partial derivatives of `F`.
pub fn conjugated_action(op: &Operator, f: &TruncatedSeries) -> Result<TruncatedSeries, SeriesError> {
    if !f.constant_term().is_zero() {
        return Err(SeriesError::ConstantTerm);
    }
    let order = op.max_order();
    if order > 2 {
        return Err(SeriesError::OrderTooHigh(order));
    }
    let mut bound = op.degree_bound();
    for (t, d, _) in op.terms() {
        bound = bound.min(lower(f.bound(), d.degree() as i64 - t.degree() as i64));
    }
    let mut first: HashMap<Var, TruncatedSeries> = HashMap::new();
    let first_of = |v: Var, first: &mut HashMap<Var, TruncatedSeries>| -> TruncatedSeries {
        first.entry(v).or_insert_with(|| f.derivative(v)).clone()
    };
    let mut out = TruncatedSeries::with_bound(bound);
    let mut pieces: HashMap<Monomial, TruncatedSeries> = HashMap::new();
    for (t, d, c) in op.terms() {
        if !pieces.contains_key(d) {
            let piece = match d.vars() {
                [] => TruncatedSeries::constant(BigRational::one(), EXACT),
                [u] => first_of(*u, &mut first),
                [u, v] => {
                    let fu = first_of(*u, &mut first);
                    let fv = first_of(*v, &mut first);
                    fu.truncate(bound).mul(&fv).add(&fu.derivative(*v))
                }
                _ => unreachable!("order checked above"),
            };
            pieces.insert(d.clone(), piece);
        }
        let q = &pieces[d];
        for (m, x) in q.terms() {
            if (m.degree() + t.degree()) as i64 > bound {
                continue;
            }
            out.add_term(m.times(t), x * c);
        }
    }
    Ok(out)
}

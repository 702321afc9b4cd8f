//! The operators `L_k`, `M_{k;b}`, `L_{k;a}`, the v-fields `v_{k;b}` and the
//! restricted operators `L^A_{k;a}`, with checks of their bracket relations and
//! of the annihilation of `e^F`.
//!
//! Variable slots of every built operator index `set.with_one()`, which agrees
//! with `set` on all of its elements.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::combinatorics::{aut, weighted_multisets};
use crate::correlators::CorrelatorEngine;
use crate::hfunction::{double_factorial_odd_above, h_multi_with, HConvention};
use crate::kdv::BoldCoordinateMap;
use crate::report::{compare, genus_at_most, Assertion, Report};
use crate::series::{conjugated_action, Monomial, Operator, SeriesError, TruncatedSeries, Var, EXACT};
use crate::weights::{Weight, WeightSet};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum VirasoroError {
    #[error("operator index {0} is below the allowed minimum")]
    IndexOutOfRange(i64),
    #[error("this operator family needs a weight")]
    MissingWeight,
    #[error("weight {0} is neither in the set nor equal to 1")]
    WeightNotAllowed(String),
    #[error("restricted operators need a weight set without 1")]
    RestrictedWithOne,
    #[error(transparent)]
    Series(#[from] SeriesError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    ClassicL,
    M,
    LWeighted,
    VField,
    LRestricted,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OperatorSpec {
    pub family: Family,
    pub k: i64,
    pub a: Option<Weight>,
    pub set: WeightSet,
}

impl OperatorSpec {
    pub fn new(family: Family, k: i64, a: Option<Weight>, set: WeightSet) -> Self {
        OperatorSpec { family, k, a, set }
    }

    fn validate(&self) -> Result<(), VirasoroError> {
        let min = if self.family == Family::VField { 0 } else { -1 };
        if self.k < min {
            return Err(VirasoroError::IndexOutOfRange(self.k));
        }
        match self.family {
            Family::ClassicL => Ok(()),
            Family::M | Family::LWeighted | Family::VField | Family::LRestricted => {
                let a = self.a.as_ref().ok_or(VirasoroError::MissingWeight)?;
                if self.family == Family::LRestricted && self.set.has_one() {
                    return Err(VirasoroError::RestrictedWithOne);
                }
                let allowed = match self.family {
                    Family::M | Family::LWeighted => self.set.contains(a) || a.is_one(),
                    _ => self.set.contains(a),
                };
                if allowed {
                    Ok(())
                } else {
                    Err(VirasoroError::WeightNotAllowed(a.to_string()))
                }
            }
        }
    }
}

pub fn build_operator(spec: &OperatorSpec, degree_bound: i64, k_bound: u32) -> Result<Operator, VirasoroError> {
    spec.validate()?;
    let closure = OperatorBuilder::new(spec.set.with_one(), degree_bound, k_bound);
    let a = spec.a.clone().unwrap_or_else(Weight::one);
    Ok(match spec.family {
        Family::ClassicL => closure.l(spec.k),
        Family::M => closure.m(spec.k, &a),
        Family::LWeighted => closure.l_weighted(spec.k, &a),
        Family::VField => OperatorBuilder::new(spec.set.clone(), degree_bound, k_bound).v_field(spec.k, &a),
        Family::LRestricted => closure.l_restricted(spec.k, &a),
    })
}

fn rational(n: i64, d: i64) -> BigRational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

fn inverse_aut(list: &[(i64, Weight)]) -> BigRational {
    BigRational::new(BigInt::one(), aut(list))
}

/// Builds truncated operators whose variables range over `universe`.
///
/// Terms are instantiated only when their multiplier has degree at most
/// `degree_bound` and their derivative variable has index at most `k_bound`.
/// Terms whose derivative target has a weight outside the universe act as zero
/// on series over the universe and are dropped.
#[derive(Debug, Clone)]
pub struct OperatorBuilder {
    universe: WeightSet,
    degree_bound: i64,
    k_bound: u32,
    convention: HConvention,
}

impl OperatorBuilder {
    pub fn new(universe: WeightSet, degree_bound: i64, k_bound: u32) -> Self {
        OperatorBuilder { universe, degree_bound, k_bound, convention: HConvention::Truncated }
    }

    pub fn with_convention(mut self, convention: HConvention) -> Self {
        self.convention = convention;
        self
    }

    pub fn universe(&self) -> &WeightSet {
        &self.universe
    }

    fn var(&self, k: i64, a: &Weight) -> Option<Var> {
        if k < 0 || k > self.k_bound as i64 {
            return None;
        }
        self.universe.index_of(a).map(|slot| Var::new(k as u32, slot))
    }

    fn list_monomial(&self, list: &[(i64, Weight)]) -> Monomial {
        Monomial::from_vars(
            list.iter()
                .map(|(e, a)| Var::new(*e as u32, self.universe.index_of(a).expect("lists draw from the universe"))),
        )
    }

    fn derivative(&self, vars: &[Var]) -> Monomial {
        Monomial::from_vars(vars.iter().copied())
    }

    /// Adds `Σ_lists coeff(list) · t_list ∂/∂t_{|e|-n+shift; |a|+extra}` over lists whose
    /// weight sum (plus `extra`) is admissible.
    fn add_list_terms<F: Fn(&[(i64, Weight)]) -> BigRational>(
        &self,
        op: &mut Operator,
        shift: i64,
        extra: Option<&Weight>,
        coeff: F,
    ) {
        let weights = self.universe.elements();
        let max_len = self.degree_bound.clamp(0, 64) as usize;
        for n in 1..=max_len {
            let mut found = false;
            for x in 0..=self.k_bound as i64 {
                let total = x + n as i64 - shift;
                if total < 0 {
                    continue;
                }
                let lists = weighted_multisets(weights, n, total, |s| match extra {
                    Some(b) => s.add(b).admissible(),
                    None => true,
                });
                for list in lists {
                    found = true;
                    let mut sum = crate::weights::weight_sum(list.iter().map(|(_, a)| a));
                    if let Some(b) = extra {
                        sum = sum.add(b);
                    }
                    let Some(target) = sum.to_weight().and_then(|w| self.var(x, &w)) else {
                        continue;
                    };
                    let c = coeff(&list);
                    op.add_term(c, self.list_monomial(&list), self.derivative(&[target]));
                }
            }
            // admissibility bounds the list length from above independently of the indices
            if !found && weighted_multisets(weights, n, 0, |_| true).is_empty() {
                break;
            }
        }
    }

    /// `Σ_b 𝐭_{0;b}` as a polynomial in the universe variables.
    fn bold_zero_sum(&self) -> TruncatedSeries {
        let mut s = TruncatedSeries::with_bound(self.degree_bound);
        let max_len = self.degree_bound.clamp(0, 64) as usize;
        for m in 1..=max_len {
            let sign = if m % 2 == 1 { BigRational::one() } else { -BigRational::one() };
            for list in weighted_multisets(self.universe.elements(), m, m as i64 - 1, |_| true) {
                s.add_term(self.list_monomial(&list), &sign * inverse_aut(&list));
            }
        }
        s
    }

    /// `L_k` over the universe, which must contain 1.
    pub fn l(&self, k: i64) -> Operator {
        let one = Weight::one();
        let half = rational(1, 2);
        let mut op = Operator::new(self.degree_bound);
        if let Some(v) = self.var(k + 1, &one) {
            op.add_term(-double_factorial_odd_above(k) * &half, Monomial::one(), self.derivative(&[v]));
        }
        if k == -1 {
            self.add_list_terms(&mut op, 0, None, |list| inverse_aut(list) * &half);
            let t0 = self.bold_zero_sum();
            for (m1, c1) in t0.terms() {
                for (m2, c2) in t0.terms() {
                    op.add_term(c1 * c2 * rational(1, 4), m1.times(m2), Monomial::one());
                }
            }
            return op;
        }
        let conv = self.convention;
        self.add_list_terms(&mut op, k + 1, None, |list| {
            let es: Vec<i64> = list.iter().map(|(e, _)| *e).collect();
            h_multi_with(conv, k, &es) * inverse_aut(list) * &half
        });
        for r in 0..k {
            let s = k - 1 - r;
            if let (Some(u), Some(v)) = (self.var(r, &one), self.var(s, &one)) {
                let c = double_factorial_odd_above(r - 1) * double_factorial_odd_above(s - 1) * rational(1, 4);
                op.add_term(c, Monomial::one(), self.derivative(&[u, v]));
            }
        }
        if k == 0 {
            op.add_term(rational(1, 16), Monomial::one(), Monomial::one());
        }
        op
    }

    /// `M_{k;b}` over the universe, which must contain 1.
    pub fn m(&self, k: i64, b: &Weight) -> Operator {
        let scale = double_factorial_odd_above(k) * rational(1, 2);
        let mut op = Operator::new(self.degree_bound);
        if let (Some(vb), Some(v1)) = (self.var(k + 1, b), self.var(k + 1, &Weight::one())) {
            op.add_term(-scale.clone(), Monomial::one(), self.derivative(&[vb]));
            op.add_term(scale.clone(), Monomial::one(), self.derivative(&[v1]));
        }
        self.add_list_terms(&mut op, k + 1, Some(b), |list| -inverse_aut(list) * &scale);
        op
    }

    pub fn l_weighted(&self, k: i64, a: &Weight) -> Operator {
        self.l(k).add(&self.m(k, a))
    }

    /// The v-field `v_{j;b} = ∂/∂𝐭_{j;b}` written in the t-coordinates.
    pub fn v_field(&self, j: i64, b: &Weight) -> Operator {
        let mut op = Operator::new(self.degree_bound);
        if let Some(v) = self.var(j, b) {
            op.add_term(BigRational::one(), Monomial::one(), self.derivative(&[v]));
        }
        self.add_list_terms(&mut op, j, Some(b), inverse_aut);
        op
    }

    /// `L^A_{k;a}`: weight-1 derivatives of `L_{k;a}` become v-fields of weight `a`,
    /// then every weight-1 variable is set to zero. The universe must contain 1.
    pub fn l_restricted(&self, k: i64, a: &Weight) -> Operator {
        let one_slot = self.universe.index_of(&Weight::one()).expect("restriction starts from the closure");
        let base = self.l_weighted(k, a);
        let mut out = Operator::new(base.degree_bound());
        let has_one = |m: &Monomial| m.vars().iter().any(|v| v.slot as usize == one_slot);
        for (t, d, c) in base.terms() {
            if has_one(t) {
                continue;
            }
            let mut op = Operator::new(EXACT);
            op.add_term(BigRational::one(), Monomial::one(), Monomial::one());
            for &v in d.vars() {
                let factor = if v.slot as usize == one_slot {
                    self.v_field(v.k as i64, a)
                } else {
                    let mut plain = Operator::new(EXACT);
                    plain.add_term(BigRational::one(), Monomial::one(), self.derivative(&[v]));
                    plain
                };
                op = op.compose(&factor);
            }
            let mut scaled = Operator::new(op.degree_bound());
            for (t2, d2, c2) in op.terms() {
                scaled.add_term(c * c2, t.times(t2), d2.clone());
            }
            out = out.add(&scaled);
        }
        out.retain(|t, d| !has_one(t) && !has_one(d))
    }
}

fn annihilation_name(k: i64, a: &Weight, restricted: bool) -> String {
    if restricted {
        format!("L^A[{k};{a}] e^F = 0")
    } else {
        format!("L[{k};{a}] e^F = 0")
    }
}

/// Generating functions shared by the annihilation checks of one weight set.
#[derive(Debug, Clone)]
pub struct AnnihilationData {
    set: WeightSet,
    closure: WeightSet,
    f: TruncatedSeries,
    f_closure: TruncatedSeries,
    degree: usize,
    max_genus: u32,
}

impl AnnihilationData {
    /// Builds `F^A` and `F^{A ∪ {1}}` two degrees above the asserted `degree`.
    pub fn build(engine: &CorrelatorEngine, set: &WeightSet, degree: usize, max_genus: u32) -> Self {
        let closure = set.with_one();
        let f = engine.generating_function(set, degree + 2, max_genus);
        let f_closure =
            if set.has_one() { f.clone() } else { engine.generating_function(&closure, degree + 2, max_genus) };
        AnnihilationData { set: set.clone(), closure, f, f_closure, degree, max_genus }
    }

    fn builder(&self) -> OperatorBuilder {
        let d = self.degree as i64 + 2;
        OperatorBuilder::new(self.closure.clone(), d, 3 * self.max_genus + d as u32 + 2)
    }

    fn assert_vanishes(
        &self,
        name: String,
        op: &Operator,
        f: &TruncatedSeries,
        k: i64,
        names: &WeightSet,
    ) -> Assertion {
        let range = |bound: i64| format!("degree <= {bound}, genus <= {}", self.max_genus);
        let out = match conjugated_action(op, f) {
            Ok(out) => out,
            Err(e) => return Assertion::new("virasoro", name, range(-1)).fail(e.to_string()),
        };
        let zero = TruncatedSeries::with_bound(EXACT);
        let cmp = compare(&out, &zero, self.degree as i64, |m| genus_at_most(m, k + 3, self.max_genus), names);
        let mut a = Assertion::new("virasoro", name, range(cmp.bound));
        a.checked = cmp.checked;
        match cmp.first_mismatch {
            Some(d) => a.fail(d),
            None => a,
        }
    }

    /// The annihilation of `e^{F^A}` by `L_{k;a}` (or `L^A_{k;a}` when `1 ∉ A`),
    /// and of `e^{F^{A∪{1}}}` by `M_{k;a}`.
    pub fn check(&self, k: i64, a: &Weight) -> Vec<Assertion> {
        let builder = self.builder();
        let restricted = !self.set.has_one();
        let op = if restricted { builder.l_restricted(k, a) } else { builder.l_weighted(k, a) };
        let main = self.assert_vanishes(annihilation_name(k, a, restricted), &op, &self.f, k, &self.set);
        let m = builder.m(k, a);
        let side = self.assert_vanishes(format!("M[{k};{a}] F = 0 on A+1"), &m, &self.f_closure, k, &self.closure);
        vec![main, side]
    }
}

pub fn check_annihilation(
    engine: &CorrelatorEngine,
    set: &WeightSet,
    k: i64,
    a: &Weight,
    degree: usize,
    max_genus: u32,
) -> Report {
    let data = AnnihilationData::build(engine, set, degree, max_genus);
    Report { assertions: data.check(k, a) }
}

/// Annihilation for every `k` in `[-1, k_max]` and every `a ∈ A`.
pub fn check_annihilation_suite(
    engine: &CorrelatorEngine,
    set: &WeightSet,
    k_max: i64,
    degree: usize,
    max_genus: u32,
) -> Report {
    let data = AnnihilationData::build(engine, set, degree, max_genus);
    let cases: Vec<(i64, Weight)> =
        (-1..=k_max).flat_map(|k| set.elements().iter().map(move |a| (k, a.clone()))).collect();
    let assertions: Vec<Vec<Assertion>> = cases.par_iter().map(|(k, a)| data.check(*k, a)).collect();
    Report { assertions: assertions.into_iter().flatten().collect() }
}

/// Every monomial of degree at most `max_degree` in the variables `t_{j;a}`, `j ≤ max_index`.
pub fn basis_monomials(set: &WeightSet, max_index: u32, max_degree: usize) -> Vec<Monomial> {
    let vars: Vec<Var> = (0..=max_index).flat_map(|j| (0..set.len()).map(move |s| Var::new(j, s))).collect();
    let mut out = vec![Monomial::one()];
    let mut layer = vec![(Monomial::one(), 0usize)];
    for _ in 0..max_degree {
        let mut next = Vec::new();
        for (m, start) in &layer {
            for (i, v) in vars.iter().enumerate().skip(*start) {
                next.push((m.times(&Monomial::from_vars([*v])), i));
            }
        }
        out.extend(next.iter().map(|(m, _)| m.clone()));
        layer = next;
    }
    out
}

const BASIS_INDEX: u32 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Relation {
    LL,
    /// The two-weight relation with `a1` and `a2` exchanged on the right.
    LLSwapped,
    LM,
    MM,
}

struct BracketCase {
    relation: Relation,
    k1: i64,
    k2: i64,
    a1: Weight,
    a2: Weight,
}

impl BracketCase {
    fn name(&self) -> String {
        let (x, y) = match self.relation {
            Relation::LL => ("L", "L"),
            Relation::LLSwapped => {
                return format!("[L[{};{}], L[{};{}]] as displayed", self.k1, self.a1, self.k2, self.a2);
            }
            Relation::LM => ("L", "M"),
            Relation::MM => ("M", "M"),
        };
        format!("[{x}[{};{}], {y}[{};{}]]", self.k1, self.a1, self.k2, self.a2)
    }
}

/// Checks, on basis monomials, the relations
/// `[L_{k1;a1}, L_{k2;a2}] = (k1+3/2) L_{k1+k2;a1} - (k2+3/2) L_{k1+k2;a2}`,
/// `[L_{k1}, M_{k2;b}] = -(k2+3/2) M_{k1+k2;b}` and `[M_{k1;a1}, M_{k2;a2}] = 0`
/// for `-1 ≤ k1, k2 ≤ k_max`, `k1 + k2 ≥ -1`, and weights in `A ∪ {1}`.
/// The first relation is the one implied by the other two; the variant with
/// `a1` and `a2` exchanged on the right is reported as informational.
/// Operators are truncated at `degree`; assertions cover degree `≤ degree - 2`.
pub fn check_bracket_relations(set: &WeightSet, k_max: i64, degree: usize) -> Report {
    let closure = set.with_one();
    let d = degree as i64;
    let k_bound = BASIS_INDEX + degree as u32 + 2 * k_max.max(0) as u32 + 2;
    let builder = OperatorBuilder::new(closure.clone(), d, k_bound);
    let basis = basis_monomials(&closure, BASIS_INDEX, degree.saturating_sub(2));
    let weights = closure.elements().to_vec();
    let one = Weight::one();
    let mut cases = Vec::new();
    for k1 in -1..=k_max {
        for k2 in -1..=k_max {
            if k1 + k2 < -1 {
                continue;
            }
            for a1 in &weights {
                for a2 in &weights {
                    cases.push(BracketCase { relation: Relation::LL, k1, k2, a1: a1.clone(), a2: a2.clone() });
                    if a1 != a2 {
                        let swapped =
                            BracketCase { relation: Relation::LLSwapped, k1, k2, a1: a1.clone(), a2: a2.clone() };
                        cases.push(swapped);
                    }
                    cases.push(BracketCase { relation: Relation::MM, k1, k2, a1: a1.clone(), a2: a2.clone() });
                }
                cases.push(BracketCase { relation: Relation::LM, k1, k2, a1: one.clone(), a2: a1.clone() });
            }
        }
    }
    let assertions: Vec<Assertion> = cases
        .par_iter()
        .map(|case| {
            let sum = case.k1 + case.k2;
            let c1 = BigRational::from_integer(case.k1.into()) + rational(3, 2);
            let c2 = BigRational::from_integer(case.k2.into()) + rational(3, 2);
            let (x, y, rhs) = match case.relation {
                Relation::LL => (
                    builder.l_weighted(case.k1, &case.a1),
                    builder.l_weighted(case.k2, &case.a2),
                    builder.l_weighted(sum, &case.a1).scale(&c1).sub(&builder.l_weighted(sum, &case.a2).scale(&c2)),
                ),
                Relation::LLSwapped => (
                    builder.l_weighted(case.k1, &case.a1),
                    builder.l_weighted(case.k2, &case.a2),
                    builder.l_weighted(sum, &case.a2).scale(&c1).sub(&builder.l_weighted(sum, &case.a1).scale(&c2)),
                ),
                Relation::LM => {
                    (builder.l(case.k1), builder.m(case.k2, &case.a2), builder.m(sum, &case.a2).scale(&-c2))
                }
                Relation::MM => (builder.m(case.k1, &case.a1), builder.m(case.k2, &case.a2), Operator::new(EXACT)),
            };
            let mut a = Assertion::new("commutators", case.name(), String::new());
            if case.relation == Relation::LLSwapped {
                a = a.informational();
            }
            let mut checked = 0;
            let mut bound = d - 2;
            for m in &basis {
                let s = TruncatedSeries::monomial(m.clone(), BigRational::one());
                let lhs = x.apply(&y.apply(&s)).sub(&y.apply(&x.apply(&s)));
                let cmp = compare(&lhs, &rhs.apply(&s), d - 2, |_| true, &closure);
                checked += 1;
                bound = bound.min(cmp.bound);
                if let Some(detail) = cmp.first_mismatch {
                    a = a.fail(format!("on {}: {detail}", m.format(&closure)));
                    break;
                }
            }
            a.checked = checked;
            a.range = format!(
                "basis degree <= {}, index <= {BASIS_INDEX}, output degree <= {bound}",
                degree.saturating_sub(2)
            );
            a
        })
        .collect();
    Report { assertions }
}

/// `[v_{k;b}, v_{k';b}] = 0` on basis monomials and `v_{k1;b1}(𝐭_{k2;b2}) = δ`.
pub fn check_vfield_duality(set: &WeightSet, k_max: i64, degree: usize) -> Report {
    let d = degree as i64;
    let k_max = k_max.max(0);
    let k_bound = BASIS_INDEX.max(k_max as u32) + degree as u32 + k_max as u32 + 2;
    let builder = OperatorBuilder::new(set.clone(), d, k_bound);
    let basis = basis_monomials(set, k_max as u32, degree.saturating_sub(2));
    let bold = BoldCoordinateMap::new(set.clone(), degree);
    let weights = set.elements().to_vec();
    let mut report = Report::new();

    let mut pairs = Vec::new();
    for b in &weights {
        for k1 in 0..=k_max {
            for k2 in k1 + 1..=k_max {
                pairs.push((b.clone(), k1, k2));
            }
        }
    }
    let commuting: Vec<Assertion> = pairs
        .par_iter()
        .map(|(b, k1, k2)| {
            let x = builder.v_field(*k1, b);
            let y = builder.v_field(*k2, b);
            let mut a = Assertion::new("vfields", format!("[v[{k1};{b}], v[{k2};{b}]] = 0"), String::new());
            let mut bound = d - 2;
            for m in &basis {
                let s = TruncatedSeries::monomial(m.clone(), BigRational::one());
                let lhs = x.apply(&y.apply(&s)).sub(&y.apply(&x.apply(&s)));
                let cmp = compare(&lhs, &TruncatedSeries::with_bound(EXACT), d - 2, |_| true, set);
                a.checked += 1;
                bound = bound.min(cmp.bound);
                if let Some(detail) = cmp.first_mismatch {
                    a = a.fail(format!("on {}: {detail}", m.format(set)));
                    break;
                }
            }
            a.range = format!("basis degree <= {}, output degree <= {bound}", degree.saturating_sub(2));
            a
        })
        .collect();
    report.assertions.extend(commuting);

    let mut duals = Vec::new();
    for b1 in &weights {
        for b2 in &weights {
            for k1 in 0..=k_max {
                for k2 in 0..=k_max {
                    duals.push((b1.clone(), k1, b2.clone(), k2));
                }
            }
        }
    }
    let duality: Vec<Assertion> = duals
        .par_iter()
        .map(|(b1, k1, b2, k2)| {
            let image = builder.v_field(*k1, b1).apply(&bold.forward(*k2 as u32, b2));
            let expected = if k1 == k2 && b1 == b2 { BigRational::one() } else { BigRational::zero() };
            let target = TruncatedSeries::constant(expected, EXACT);
            let cmp = compare(&image, &target, d - 1, |_| true, set);
            let mut a = Assertion::new(
                "vfields",
                format!("v[{k1};{b1}](bold t[{k2};{b2}]) = delta"),
                format!("degree <= {}", cmp.bound),
            );
            a.checked = cmp.checked;
            match cmp.first_mismatch {
                Some(detail) => a.fail(detail),
                None => a,
            }
        })
        .collect();
    report.assertions.extend(duality);
    report
}

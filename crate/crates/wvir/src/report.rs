//! Check reports shared by the operator and KdV suites.

use serde::Serialize;

use crate::series::{Monomial, TruncatedSeries};
use crate::weights::WeightSet;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Assertion {
    pub suite: String,
    pub name: String,
    /// Human-readable description of what was compared.
    pub range: String,
    pub checked: usize,
    pub passed: bool,
    /// Informational assertions are reported but do not decide the exit status.
    pub required: bool,
    pub detail: Option<String>,
}

impl Assertion {
    pub fn new(suite: &str, name: String, range: String) -> Self {
        Assertion { suite: suite.into(), name, range, checked: 0, passed: true, required: true, detail: None }
    }

    pub fn informational(mut self) -> Self {
        self.required = false;
        self
    }

    pub fn fail(mut self, detail: String) -> Self {
        self.passed = false;
        self.detail = Some(detail);
        self
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct Report {
    pub assertions: Vec<Assertion>,
}

impl Report {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, a: Assertion) {
        self.assertions.push(a);
    }

    pub fn extend(&mut self, other: Report) {
        self.assertions.extend(other.assertions);
    }

    /// True when every required assertion passed.
    pub fn passed(&self) -> bool {
        self.assertions.iter().all(|a| a.passed || !a.required)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Assertion> {
        self.assertions.iter().filter(|a| !a.passed && a.required)
    }

    pub fn find(&self, name: &str) -> Option<&Assertion> {
        self.assertions.iter().find(|a| a.name == name)
    }
}

/// Outcome of comparing two series coefficientwise.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Comparison {
    pub bound: i64,
    pub checked: usize,
    pub first_mismatch: Option<String>,
}

/// Compares `lhs` and `rhs` on every monomial of degree at most `min(bound(lhs), bound(rhs), cap)`
/// accepted by `keep`.
pub fn compare<F: Fn(&Monomial) -> bool>(
    lhs: &TruncatedSeries,
    rhs: &TruncatedSeries,
    cap: i64,
    keep: F,
    names: &WeightSet,
) -> Comparison {
    let bound = lhs.bound().min(rhs.bound()).min(cap);
    let diff = lhs.sub(rhs);
    let mut monomials: Vec<&Monomial> = lhs.terms().chain(rhs.terms()).map(|(m, _)| m).collect();
    monomials.sort();
    monomials.dedup();
    let checked = monomials.iter().filter(|m| m.degree() as i64 <= bound && keep(m)).count();
    let first_mismatch = diff.terms().find(|(m, _)| m.degree() as i64 <= bound && keep(m)).map(|(m, c)| {
        format!("{} : lhs {} rhs {} (difference {c})", m.format(names), lhs.coefficient(m), rhs.coefficient(m))
    });
    Comparison { bound, checked, first_mismatch }
}

/// Genus filter for a coefficient whose correlator has dimension `Σ(k-1) + shift = 3g - 3`.
/// Dimension-inconsistent monomials are always kept, since they must vanish.
pub fn genus_at_most(m: &Monomial, shift: i64, max_genus: u32) -> bool {
    let num = m.dimension() + shift;
    if num < 0 || num % 3 != 0 {
        return true;
    }
    num / 3 <= max_genus as i64
}

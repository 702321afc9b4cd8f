//! Hassett weights in `[0+, 1]` and additively closed weight sets.
//!
//! A weight is an exact rational plus a flag marking an infinitesimal
//! excess, so `0+` is `(0, true)` and `1/2+` is `(1/2, true)`.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WeightError {
    #[error("malformed weight `{0}`")]
    Malformed(String),
    #[error("weight `{0}` lies outside [0+, 1]")]
    OutOfRange(String),
    #[error("weight set is not additively closed: missing {0}")]
    NotClosed(String),
    #[error("weight set is empty")]
    Empty,
}

/// A sum of weights. May exceed 1; compared against 1 through [`WeightSum::admissible`].
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct WeightSum {
    value: BigRational,
    infinitesimal: bool,
}

impl WeightSum {
    pub fn zero() -> Self {
        WeightSum { value: BigRational::zero(), infinitesimal: false }
    }

    pub fn new(value: BigRational, infinitesimal: bool) -> Self {
        WeightSum { value, infinitesimal }
    }

    pub fn value(&self) -> &BigRational {
        &self.value
    }

    pub fn infinitesimal(&self) -> bool {
        self.infinitesimal
    }

    pub fn add(&self, w: &Weight) -> WeightSum {
        WeightSum { value: &self.value + &w.value, infinitesimal: self.infinitesimal || w.infinitesimal }
    }

    pub fn add_sum(&self, other: &WeightSum) -> WeightSum {
        WeightSum { value: &self.value + &other.value, infinitesimal: self.infinitesimal || other.infinitesimal }
    }

    /// `value < 1`, or exactly `1` with no infinitesimal part.
    pub fn admissible(&self) -> bool {
        let one = BigRational::one();
        self.value < one || (self.value == one && !self.infinitesimal)
    }

    /// The weight this sum names, when it is a legal marked-point weight.
    pub fn to_weight(&self) -> Option<Weight> {
        Weight::from_parts(self.value.clone(), self.infinitesimal).ok()
    }
}

impl fmt::Display for WeightSum {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.value)?;
        if self.infinitesimal {
            write!(f, "+")?;
        }
        Ok(())
    }
}

/// Sum of a list of weights. Values add and infinitesimal flags OR together.
pub fn weight_sum<'a, I: IntoIterator<Item = &'a Weight>>(ws: I) -> WeightSum {
    ws.into_iter().fold(WeightSum::zero(), |s, w| s.add(w))
}

/// A legal marked-point weight.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Weight {
    value: BigRational,
    infinitesimal: bool,
}

impl Weight {
    pub fn from_parts(value: BigRational, infinitesimal: bool) -> Result<Self, WeightError> {
        let shown = WeightSum::new(value.clone(), infinitesimal).to_string();
        if value < BigRational::zero() {
            return Err(WeightError::OutOfRange(shown));
        }
        if value.is_zero() && !infinitesimal {
            return Err(WeightError::OutOfRange(shown));
        }
        if !WeightSum::new(value.clone(), infinitesimal).admissible() {
            return Err(WeightError::OutOfRange(shown));
        }
        Ok(Weight { value, infinitesimal })
    }

    pub fn one() -> Self {
        Weight { value: BigRational::one(), infinitesimal: false }
    }

    pub fn zero_plus() -> Self {
        Weight { value: BigRational::zero(), infinitesimal: true }
    }

    pub fn ratio(p: i64, q: i64) -> Result<Self, WeightError> {
        if q == 0 {
            return Err(WeightError::Malformed(format!("{p}/{q}")));
        }
        Weight::from_parts(BigRational::new(BigInt::from(p), BigInt::from(q)), false)
    }

    pub fn value(&self) -> &BigRational {
        &self.value
    }

    pub fn infinitesimal(&self) -> bool {
        self.infinitesimal
    }

    pub fn is_one(&self) -> bool {
        self.value.is_one() && !self.infinitesimal
    }

    pub fn as_sum(&self) -> WeightSum {
        WeightSum::new(self.value.clone(), self.infinitesimal)
    }
}

impl fmt::Display for Weight {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.value.is_zero() {
            return write!(f, "0+");
        }
        write!(f, "{}", self.value)?;
        if self.infinitesimal {
            write!(f, "+")?;
        }
        Ok(())
    }
}

/// Parses `"1"`, `"0+"`, `"p/q"` or `"p/q+"`.
pub fn parse_weight(text: &str) -> Result<Weight, WeightError> {
    let t = text.trim();
    let malformed = || WeightError::Malformed(text.to_string());
    if t == "0+" {
        return Ok(Weight::zero_plus());
    }
    let (body, inf) = match t.strip_suffix('+') {
        Some(b) => (b, true),
        None => (t, false),
    };
    let value = match body.split_once('/') {
        Some((p, q)) => {
            let p: BigInt = p.parse().map_err(|_| malformed())?;
            let q: BigInt = q.parse().map_err(|_| malformed())?;
            if q.is_zero() || p <= BigInt::zero() || q < BigInt::zero() {
                return Err(WeightError::OutOfRange(text.to_string()));
            }
            BigRational::new(p, q)
        }
        None => {
            if !body.chars().all(|c| c.is_ascii_digit()) || body.is_empty() {
                return Err(malformed());
            }
            let p: BigInt = body.parse().map_err(|_| malformed())?;
            BigRational::from_integer(p)
        }
    };
    Weight::from_parts(value, inf).map_err(|_| WeightError::OutOfRange(text.to_string()))
}

impl FromStr for Weight {
    type Err = WeightError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_weight(s)
    }
}

impl Serialize for Weight {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Weight {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        parse_weight(&s).map_err(serde::de::Error::custom)
    }
}

/// A finite additively closed set of weights, sorted by `(value, infinitesimal)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct WeightSet {
    elements: Vec<Weight>,
}

impl WeightSet {
    /// Accepts only sets that are already closed.
    pub fn new<I: IntoIterator<Item = Weight>>(ws: I) -> Result<Self, WeightError> {
        let set: BTreeSet<Weight> = ws.into_iter().collect();
        if set.is_empty() {
            return Err(WeightError::Empty);
        }
        let elements: Vec<Weight> = set.into_iter().collect();
        for a in &elements {
            for b in &elements {
                let s = a.as_sum().add(b);
                if s.admissible() {
                    let w = s.to_weight().expect("admissible sums of weights are weights");
                    if elements.binary_search(&w).is_err() {
                        return Err(WeightError::NotClosed(w.to_string()));
                    }
                }
            }
        }
        Ok(WeightSet { elements })
    }

    pub fn parse_list(text: &str) -> Result<Vec<Weight>, WeightError> {
        text.split(',').filter(|s| !s.trim().is_empty()).map(parse_weight).collect()
    }

    pub fn elements(&self) -> &[Weight] {
        &self.elements
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn index_of(&self, w: &Weight) -> Option<usize> {
        self.elements.binary_search(w).ok()
    }

    pub fn contains(&self, w: &Weight) -> bool {
        self.index_of(w).is_some()
    }

    pub fn has_one(&self) -> bool {
        self.contains(&Weight::one())
    }

    pub fn get(&self, i: usize) -> &Weight {
        &self.elements[i]
    }

    /// `self ∪ {1}`.
    pub fn with_one(&self) -> WeightSet {
        let mut v = self.elements.clone();
        v.push(Weight::one());
        additive_closure(v)
    }
}

impl fmt::Display for WeightSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.elements.iter().map(|w| w.to_string()).collect();
        write!(f, "{}", parts.join(","))
    }
}

/// Smallest additively closed set containing the seeds.
pub fn additive_closure<I: IntoIterator<Item = Weight>>(seeds: I) -> WeightSet {
    let mut set: BTreeSet<Weight> = seeds.into_iter().collect();
    loop {
        let current: Vec<Weight> = set.iter().cloned().collect();
        let mut grew = false;
        for (i, a) in current.iter().enumerate() {
            for b in &current[i..] {
                let s = a.as_sum().add(b);
                if let Some(w) = s.to_weight() {
                    grew |= set.insert(w);
                }
            }
        }
        if !grew {
            break;
        }
    }
    WeightSet { elements: set.into_iter().collect() }
}

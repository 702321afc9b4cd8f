use num_bigint::BigInt;
use num_rational::BigRational;
use proptest::prelude::*;
use wvir::correlators::CorrelatorEngine;
use wvir::series::{Monomial, TruncatedSeries, Var, EXACT};
use wvir::virasoro::{
    check_annihilation, check_annihilation_suite, check_bracket_relations, check_vfield_duality, OperatorBuilder,
};
use wvir::weights::{parse_weight, WeightSet};

fn set(list: &str) -> WeightSet {
    WeightSet::new(WeightSet::parse_list(list).unwrap()).unwrap()
}

fn polynomial(slots: usize) -> impl Strategy<Value = TruncatedSeries> {
    let var = (0u32..3, 0..slots).prop_map(|(k, s)| Var::new(k, s));
    prop::collection::vec((prop::collection::vec(var, 0..3), -3i64..=3), 0..5).prop_map(|terms| {
        let mut s = TruncatedSeries::polynomial();
        for (vars, c) in terms {
            s.add_term(Monomial::from_vars(vars), BigRational::from_integer(BigInt::from(c)));
        }
        s
    })
}

#[test]
fn classical_constraints_hold_for_all_k() {
    let engine = CorrelatorEngine::new();
    let report = check_annihilation_suite(&engine, &set("1"), 3, 5, 1);
    assert_eq!(report.assertions.len(), 10);
    assert!(report.passed(), "{:?}", report.failures().next());
}

#[test]
fn weighted_constraints_hold_for_nonnegative_k() {
    let engine = CorrelatorEngine::new();
    for list in ["1/2,1", "2/5,4/5"] {
        let s = set(list);
        for a in s.elements() {
            for k in 0..=3 {
                let report = check_annihilation(&engine, &s, k, a, 4, 1);
                assert!(report.passed(), "{list} k={k} a={a}: {:?}", report.failures().next());
            }
        }
    }
}

#[test]
fn brackets_hold_away_from_minus_one() {
    let report = check_bracket_relations(&set("1/2,1"), 2, 4);
    let mut checked = 0;
    for a in report.assertions.iter().filter(|a| a.required && !a.name.contains("-1")) {
        assert!(a.passed, "{}: {:?}", a.name, a.detail);
        checked += 1;
    }
    assert!(checked > 20);
}

#[test]
fn vfields_are_dual_to_bold_coordinates() {
    for list in ["1", "1/2,1", "2/5,4/5"] {
        let report = check_vfield_duality(&set(list), 2, 4);
        assert!(report.passed(), "{list}: {:?}", report.failures().next());
    }
}

#[test]
fn weighted_operator_is_classical_plus_deformation() {
    let builder = OperatorBuilder::new(set("1/2,1"), 4, 6);
    let half = parse_weight("1/2").unwrap();
    for k in -1..=3 {
        assert_eq!(builder.l_weighted(k, &half), builder.l(k).add(&builder.m(k, &half)));
    }
}

proptest! {
    #[test]
    fn deformations_commute_on_polynomials(k1 in 0i64..3, k2 in 0i64..3, p in polynomial(2)) {
        let builder = OperatorBuilder::new(set("1/2,1"), EXACT, 8);
        let half = parse_weight("1/2").unwrap();
        let x = builder.m(k1, &half);
        let y = builder.m(k2, &WeightSet::parse_list("1").unwrap()[0]);
        let lhs = x.apply(&y.apply(&p)).truncate(3);
        let rhs = y.apply(&x.apply(&p)).truncate(3);
        prop_assert_eq!(lhs, rhs);
    }

    #[test]
    fn classical_bracket_on_polynomials(k1 in 0i64..3, k2 in 0i64..3, p in polynomial(1)) {
        let builder = OperatorBuilder::new(set("1"), EXACT, 10);
        let bracket = builder.l(k1).commutator(&builder.l(k2));
        let expected = builder.l(k1 + k2).scale(&BigRational::from_integer(BigInt::from(k1 - k2)));
        prop_assert_eq!(bracket.apply(&p).truncate(3), expected.apply(&p).truncate(3));
    }
}

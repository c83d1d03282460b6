mod support;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use support::*;
use twtlrl_core::twtl::*;

fn same(a: f64, b: f64) -> bool {
    a == b || (a.is_nan() && b.is_nan())
}

#[test]
fn evaluators_match_brute_force() {
    let spec = ab_spec();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for case in 0..3000 {
        let f = random_formula(&mut rng, 3);
        let len = rng.random_range(1..=12);
        let w = random_word(&mut rng, len);
        let word = ObservationWord::new(0, w.clone()).unwrap();
        let rob = robustness(&word, &f, &spec).unwrap().value();
        assert!(same(rob, brute_rob(&f, &w, 0, len - 1)), "case {case}: {f} on {w:?}");
        let sat = satisfies(&word, &f, &spec).unwrap();
        assert_eq!(sat, brute_sat(&f, &w, 0, len - 1, false), "case {case}: {f}");
        let early = satisfies_with(&word, &f, &spec, ConcatSplit::Earliest).unwrap();
        assert_eq!(early, brute_sat(&f, &w, 0, len - 1, true), "case {case}: {f}");
        if rob > 0.0 {
            assert!(sat);
        }
        if rob < 0.0 {
            assert!(!sat);
        }
    }
}

#[test]
fn long_concatenation_chains_match_brute_force() {
    let spec = ab_spec();
    let f = parse_formula_str("[H^1 A]^[0,3] . [H^2 B]^[1,4] . [H^0 A]^[0,2] | H^3 B").unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..200 {
        let len = rng.random_range(10..=18);
        let w = random_word(&mut rng, len);
        let word = ObservationWord::new(0, w.clone()).unwrap();
        for start in 0..len {
            let sub = ObservationWord::new(0, w[start..].to_vec()).unwrap();
            let rob = robustness(&sub, &f, &spec).unwrap().value();
            assert!(same(rob, brute_rob(&f, &w, start, len - 1)));
            assert_eq!(satisfies(&sub, &f, &spec).unwrap(), brute_sat(&f, &w, start, len - 1, false));
        }
        drop(word);
    }
}

fn arb_formula() -> impl Strategy<Value = Formula> {
    let leaf = (0usize..4, prop_oneof![Just(Target::True), Just(Target::Atom("A".into())), Just(Target::Atom("B".into()))])
        .prop_map(|(d, t)| Formula::hold(d, t));
    leaf.prop_recursive(3, 16, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Formula::concat(a, b)),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Formula::disj(a, b)),
            (inner, 0usize..3, 0usize..3).prop_map(|(f, a, extra)| {
                let h = f.time_horizon();
                Formula::within(f, a, a + h + extra)
            }),
        ]
    })
}

fn arb_word() -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(-3.0f64..3.0, 2), 1..12)
}

proptest! {
    #[test]
    fn print_parse_round_trip(f in arb_formula()) {
        let again = parse_formula_str(&f.to_string()).unwrap();
        prop_assert_eq!(again, f);
    }

    #[test]
    fn concat_horizon_is_additive(f in arb_formula(), g in arb_formula()) {
        let h = Formula::concat(f.clone(), g.clone()).time_horizon();
        prop_assert_eq!(h, f.time_horizon() + g.time_horizon() + 1);
    }

    #[test]
    fn disjunction_commutes(f in arb_formula(), g in arb_formula(), w in arb_word()) {
        let spec = ab_spec();
        let word = ObservationWord::new(0, w).unwrap();
        let a = robustness(&word, &Formula::disj(f.clone(), g.clone()), &spec).unwrap();
        let b = robustness(&word, &Formula::disj(g, f), &spec).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn perturbation_moves_robustness_at_most_eps(
        f in arb_formula(),
        w in arb_word(),
        eps in 0.0f64..0.5,
        signs in prop::collection::vec(prop::collection::vec(-1.0f64..=1.0, 2), 12),
    ) {
        let spec = ab_spec();
        let word = ObservationWord::new(0, w.clone()).unwrap();
        let moved: Vec<Vec<f64>> = w.iter().zip(&signs).map(|(o, s)| vec![o[0] + eps * s[0], o[1] + eps * s[1]]).collect();
        let r0 = robustness(&word, &f, &spec).unwrap().value();
        let r1 = robustness(&ObservationWord::new(0, moved).unwrap(), &f, &spec).unwrap().value();
        if r0.is_finite() {
            prop_assert!((r0 - r1).abs() <= eps + 1e-12);
        } else {
            prop_assert_eq!(r0, r1);
        }
    }
}

//! Randomized invariants over the public API.

use proptest::prelude::*;

use cbd_core::coupling::{check_well_fitting, ComonotonicRule, CouplingRule, IdentityRule};
use cbd_core::generate::{gen_system, ConsistencyMode, GeneratorSpec};
use cbd_core::hvm::{hvm_from_witness, hvm_reproduces};
use cbd_core::model::{
    connection_of, is_consistently_connected, Alphabet, Connection, ContentId, ContextId, Marginal,
};
use cbd_core::rational::{format_rational, parse_rational, Rational};
use cbd_core::{consistify, decide_contextual, decide_traditional, verify_equivalence, Status};

fn rational_from_units(units: u64, total: u64) -> Rational {
    Rational::new(units.into(), total.into())
}

/// A marginal over `m` outcomes with probabilities drawn on a 1/64 grid.
fn marginal_strategy(m: usize) -> impl Strategy<Value = Marginal> {
    proptest::collection::vec(0u64..=64, m - 1).prop_map(move |mut cuts| {
        cuts.sort_unstable();
        let mut parts = Vec::with_capacity(m);
        let mut prev = 0;
        for cut in &cuts {
            parts.push(cut - prev);
            prev = *cut;
        }
        parts.push(64 - prev);
        Marginal::new(
            Alphabet::decimal(m).unwrap(),
            parts.into_iter().map(|u| rational_from_units(u, 64)).collect(),
        )
        .unwrap()
    })
}

/// A connection of `arity` variables over an `m`-letter alphabet.
fn connection_strategy(arity: usize, m: usize) -> impl Strategy<Value = Connection> {
    proptest::collection::vec(marginal_strategy(m), arity).prop_map(move |marginals| Connection {
        content: ContentId::new("q"),
        alphabet: Alphabet::decimal(m).unwrap(),
        marginals: marginals
            .into_iter()
            .enumerate()
            .map(|(i, marg)| (ContextId::new(format!("c{i}")), marg))
            .collect(),
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn rational_text_round_trips(num in -1_000_000i64..1_000_000, den in 1i64..1_000_000) {
        let value = Rational::new(num.into(), den.into());
        let text = format_rational(&value);
        prop_assert_eq!(parse_rational(&text).unwrap(), value);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn quantile_coupling_preserves_marginals(
        conn in (2usize..=3, 2usize..=4).prop_flat_map(|(k, m)| connection_strategy(k, m)),
    ) {
        let coupling = ComonotonicRule.apply(&conn).unwrap();
        for (pos, (_, marginal)) in conn.marginals.iter().enumerate() {
            prop_assert_eq!(&coupling.marginal(pos), marginal);
        }
        // Support bound: at most k(m-1)+1 atoms.
        let k = conn.arity();
        let m = conn.alphabet.len();
        prop_assert!(coupling.support().len() <= k * (m - 1) + 1);
        // The rule is well-fitting on this connection.
        let report = check_well_fitting(&ComonotonicRule, core::slice::from_ref(&conn));
        prop_assert!(report.is_well_fitting(), "{report:?}");
    }

    #[test]
    fn quantile_coupling_reduces_to_identity_on_equal_marginals(
        marginal in (2usize..=4).prop_flat_map(marginal_strategy),
        arity in 2usize..=3,
    ) {
        let conn = Connection {
            content: ContentId::new("q"),
            alphabet: marginal.alphabet().clone(),
            marginals: (0..arity)
                .map(|i| (ContextId::new(format!("c{i}")), marginal.clone()))
                .collect(),
        };
        let quantile = ComonotonicRule.apply(&conn).unwrap();
        let identity = IdentityRule.apply(&conn).unwrap();
        prop_assert_eq!(quantile, identity);
    }

    #[test]
    fn dichotomous_quantile_coupling_is_pairwise_maximal(
        a in marginal_strategy(2),
        b in marginal_strategy(2),
    ) {
        let conn = Connection {
            content: ContentId::new("q"),
            alphabet: Alphabet::decimal(2).unwrap(),
            marginals: vec![
                (ContextId::new("c0"), a.clone()),
                (ContextId::new("c1"), b.clone()),
            ],
        };
        let coupling = ComonotonicRule.apply(&conn).unwrap();
        let equal = cbd_core::pairwise_equality_prob(&coupling, 0, 1).unwrap();
        let best: Rational = (0..2)
            .map(|j| a.probs()[j].clone().min(b.probs()[j].clone()))
            .sum();
        prop_assert_eq!(equal, best);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn generated_systems_decide_and_reverify(seed in 0u64..10_000) {
        let spec = GeneratorSpec {
            seed,
            max_contents: 3,
            max_contexts: 3,
            min_alphabet: 2,
            max_alphabet: 3,
            mode: ConsistencyMode::Either,
            ..GeneratorSpec::default()
        };
        let system = gen_system(&spec).unwrap();
        // Determinism.
        prop_assert_eq!(&system, &gen_system(&spec).unwrap());

        let verdict = decide_contextual(&system, &ComonotonicRule).unwrap();
        prop_assert!(verdict.reverify());
        match verdict.status {
            Status::Noncontextual => {
                let witness = verdict.witness.as_ref().unwrap();
                prop_assert!(witness.verify_overall(&system));
                prop_assert!(witness.verify_connections(&system, &ComonotonicRule));
            }
            Status::Contextual => prop_assert!(verdict.witness.is_none()),
        }
    }

    #[test]
    fn consistified_structure_is_always_consistent(seed in 0u64..10_000) {
        let spec = GeneratorSpec {
            seed,
            max_contents: 3,
            max_contexts: 4,
            min_alphabet: 2,
            max_alphabet: 2,
            mode: ConsistencyMode::Either,
            ..GeneratorSpec::default()
        };
        let system = gen_system(&spec).unwrap();
        let derived = consistify(&system, &ComonotonicRule).unwrap();
        prop_assert!(is_consistently_connected(&derived.system).unwrap());
        prop_assert_eq!(
            derived.system.format.num_contents(),
            system.format.incidence_len()
        );
        prop_assert_eq!(
            derived.system.format.num_contexts(),
            system.format.num_contexts() + system.format.num_contents()
        );
        for q in derived.system.format.content_ids() {
            prop_assert_eq!(derived.system.format.contexts_of(q).len(), 2);
        }
    }

    #[test]
    fn equivalence_and_hvm_hold_on_random_systems(seed in 0u64..10_000) {
        let spec = GeneratorSpec {
            seed,
            max_contents: 3,
            max_contexts: 3,
            min_alphabet: 2,
            max_alphabet: 2,
            mode: ConsistencyMode::Either,
            ..GeneratorSpec::default()
        };
        let system = gen_system(&spec).unwrap();
        let report = verify_equivalence(&system, &ComonotonicRule).unwrap();
        prop_assert!(report.holds(), "{report:?}");

        if report.source.status == Status::Noncontextual {
            let model = hvm_from_witness(&system, &report.source).unwrap();
            prop_assert!(hvm_reproduces(&model, &system).unwrap());
        }
    }

    #[test]
    fn consistent_systems_reduce_to_the_traditional_question(seed in 0u64..10_000) {
        let spec = GeneratorSpec {
            seed,
            max_contents: 3,
            max_contexts: 3,
            min_alphabet: 2,
            max_alphabet: 3,
            mode: ConsistencyMode::Consistent,
            ..GeneratorSpec::default()
        };
        let system = gen_system(&spec).unwrap();
        prop_assert!(is_consistently_connected(&system).unwrap());
        // On consistent systems every connection has equal marginals, the
        // quantile coupling degenerates to the identity coupling, and the
        // three decision procedures must agree.
        for q in system.format.content_ids() {
            let conn = connection_of(&system, q).unwrap();
            prop_assert_eq!(
                ComonotonicRule.apply(&conn).unwrap(),
                IdentityRule.apply(&conn).unwrap()
            );
        }
        let traditional = decide_traditional(&system).unwrap();
        let identity = decide_contextual(&system, &IdentityRule).unwrap();
        let quantile = decide_contextual(&system, &ComonotonicRule).unwrap();
        prop_assert_eq!(traditional.status, identity.status);
        prop_assert_eq!(identity.status, quantile.status);
    }
}

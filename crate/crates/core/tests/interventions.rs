mod common;

use std::collections::{BTreeMap, BTreeSet};

use common::{brute_force_pairs, dataset_strategy, reference_entails, REFERENCE_ROWS};
use nlixy_core::intervention::{
    build_intervention_set, read_set, standard_schemas, verify_pair, write_set, Pairing, SchemaId, Variable,
    VariableConstraint,
};
use proptest::prelude::*;

#[test]
fn standard_schemas_match_reference_rows() {
    for (schema, row) in standard_schemas().iter().zip(REFERENCE_ROWS) {
        for (v, equal) in Variable::ALL.iter().zip(row) {
            let want = if equal {
                VariableConstraint::MustEqual
            } else {
                VariableConstraint::MustDiffer
            };
            assert_eq!(schema.constraint(*v), want, "{} {v}", schema.id);
        }
    }
}

fn set_bytes(set: &nlixy_core::InterventionSet) -> Vec<u8> {
    let mut buf = Vec::new();
    write_set(set, &mut buf).unwrap();
    buf
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn sets_are_sound_and_complete(
        d in dataset_strategy(5, 7),
        extra in 0usize..4,
        rng_seed in any::<u64>(),
    ) {
        // seed_count ≥ |dataset| samples every example, so counts must equal
        // the brute-force enumeration over the whole dataset.
        let seed_count = d.len() + extra;
        for (schema, row) in standard_schemas().iter().zip(REFERENCE_ROWS.iter()) {
            let set = build_intervention_set(&d, schema, seed_count, rng_seed, Pairing::AllCandidates).unwrap();
            for p in &set.pairs {
                prop_assert!(verify_pair(p, schema).ok());
                let gold_changes = reference_entails(&p.before) != reference_entails(&p.after);
                let should_change = matches!(schema.id, SchemaId::I0 | SchemaId::I1);
                prop_assert_eq!(gold_changes, should_change);
            }
            let expected = brute_force_pairs(&d, row);
            prop_assert_eq!(set.len(), expected.len());
            prop_assert_eq!(set.summary.pair_count, set.len());
            prop_assert_eq!(set.summary.seeds_sampled, d.len());
            let index = d.index();
            let got: BTreeSet<(usize, usize)> = set
                .pairs
                .iter()
                .map(|p| (index[&p.before.key()], index[&p.after.key()]))
                .collect();
            let want: BTreeSet<(usize, usize)> = expected.into_iter().collect();
            prop_assert_eq!(got, want);
        }
    }

    #[test]
    fn sampled_seeds_get_exactly_their_candidates(
        d in dataset_strategy(5, 7),
        seed_count in 1usize..12,
        rng_seed in any::<u64>(),
    ) {
        let index = d.index();
        for (schema, row) in standard_schemas().iter().zip(REFERENCE_ROWS.iter()) {
            let set = build_intervention_set(&d, schema, seed_count, rng_seed, Pairing::AllCandidates).unwrap();
            let mut by_before: BTreeMap<usize, BTreeSet<usize>> = BTreeMap::new();
            for p in &set.pairs {
                by_before.entry(index[&p.before.key()]).or_default().insert(index[&p.after.key()]);
            }
            let reference = brute_force_pairs(&d, row);
            for (before, afters) in &by_before {
                let want: BTreeSet<usize> = reference.iter().filter(|(i, _)| i == before).map(|(_, j)| *j).collect();
                prop_assert_eq!(afters, &want);
            }
            prop_assert_eq!(set.summary.seeds_sampled, seed_count.min(d.len()));
            prop_assert_eq!(
                set.summary.seeds_sampled - set.summary.seeds_without_candidates,
                by_before.len()
            );
        }
    }

    #[test]
    fn one_per_seed_picks_one_valid_partner(
        d in dataset_strategy(5, 7),
        seed_count in 1usize..40,
        rng_seed in any::<u64>(),
    ) {
        for schema in standard_schemas() {
            let set = build_intervention_set(&d, &schema, seed_count, rng_seed, Pairing::OnePerSeed).unwrap();
            prop_assert!(set.len() <= seed_count.min(d.len()));
            let befores: BTreeSet<_> = set.pairs.iter().map(|p| p.before.key()).collect();
            prop_assert_eq!(befores.len(), set.len());
            for p in &set.pairs {
                prop_assert!(verify_pair(p, &schema).ok());
            }
        }
    }

    #[test]
    fn construction_is_deterministic_and_round_trips(
        d in dataset_strategy(5, 7),
        seed_count in 1usize..40,
        rng_seed in any::<u64>(),
        one_per_seed in any::<bool>(),
    ) {
        let pairing = if one_per_seed { Pairing::OnePerSeed } else { Pairing::AllCandidates };
        for schema in standard_schemas() {
            let a = build_intervention_set(&d, &schema, seed_count, rng_seed, pairing).unwrap();
            let b = build_intervention_set(&d, &schema, seed_count, rng_seed, pairing).unwrap();
            let bytes = set_bytes(&a);
            prop_assert_eq!(&bytes, &set_bytes(&b));
            let back = read_set(bytes.as_slice(), &d).unwrap();
            prop_assert_eq!(back, a);
        }
    }
}

#[test]
fn thread_count_does_not_change_the_set() {
    let d = common::balanced_dataset(8, 12);
    let build = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| {
            standard_schemas()
                .iter()
                .map(|s| set_bytes(&build_intervention_set(&d, s, 50, 99, Pairing::OnePerSeed).unwrap()))
                .collect::<Vec<_>>()
        })
    };
    assert_eq!(build(1), build(4));
}

//! Dataset generators and reference implementations shared by the
//! integration tests.
#![allow(dead_code)]

use nlixy_core::dataset::Dataset;
use nlixy_core::natlog::{ConceptRelation, ContextTemplate, Monotonicity, NliXyExample, WordPair};
use proptest::prelude::*;
use rand::Rng;

const WORDS: &[&str] = &[
    "dog",
    "animal",
    "rose",
    "flower",
    "sugar",
    "brown sugar",
    "cat",
    "violin",
    "truck",
    "vehicle",
    "apple",
    "fruit",
];

pub const RELATIONS: [ConceptRelation; 3] = [
    ConceptRelation::ForwardInclusion,
    ConceptRelation::ReverseInclusion,
    ConceptRelation::Disjoint,
];

fn context(i: usize, m: Monotonicity) -> ContextTemplate {
    ContextTemplate::new(
        format!("c{i}"),
        format!("Context number {i} mentions a {{x}} today."),
        m,
    )
    .unwrap()
}

fn pair(i: usize, r: ConceptRelation) -> WordPair {
    let a = WORDS[i % WORDS.len()];
    let b = WORDS[(i * 7 + 1) % WORDS.len()];
    WordPair::new(format!("w{i}"), format!("{a} {i}"), format!("{b} {i}"), r).unwrap()
}

/// Contexts alternate ↑/↓ and pairs cycle ⊑, ⊒, #.
pub fn balanced_dataset(n_contexts: usize, n_pairs: usize) -> Dataset {
    let contexts = (0..n_contexts)
        .map(|i| {
            context(
                i,
                if i % 2 == 0 {
                    Monotonicity::Upward
                } else {
                    Monotonicity::Downward
                },
            )
        })
        .collect();
    let pairs = (0..n_pairs).map(|i| pair(i, RELATIONS[i % 3])).collect();
    Dataset::cross_product(contexts, pairs).unwrap()
}

pub fn random_dataset<R: Rng>(rng: &mut R, max_contexts: usize, max_pairs: usize) -> Dataset {
    let nc = rng.random_range(1..=max_contexts);
    let np = rng.random_range(1..=max_pairs);
    let contexts = (0..nc)
        .map(|i| {
            context(
                i,
                if rng.random_bool(0.5) {
                    Monotonicity::Upward
                } else {
                    Monotonicity::Downward
                },
            )
        })
        .collect();
    let pairs = (0..np).map(|i| pair(i, RELATIONS[rng.random_range(0..3)])).collect();
    Dataset::cross_product(contexts, pairs).unwrap()
}

pub fn dataset_strategy(max_contexts: usize, max_pairs: usize) -> impl Strategy<Value = Dataset> {
    (
        prop::collection::vec(any::<bool>(), 1..=max_contexts),
        prop::collection::vec(0usize..3, 1..=max_pairs),
    )
        .prop_map(|(ups, rels)| {
            let contexts = ups
                .iter()
                .enumerate()
                .map(|(i, up)| {
                    context(
                        i,
                        if *up {
                            Monotonicity::Upward
                        } else {
                            Monotonicity::Downward
                        },
                    )
                })
                .collect();
            let pairs = rels.iter().enumerate().map(|(i, r)| pair(i, RELATIONS[*r])).collect();
            Dataset::cross_product(contexts, pairs).unwrap()
        })
}

/// Entailment holds exactly for an upward context with a specific-to-general
/// pair, or a downward context with a general-to-specific pair.
pub fn reference_entails(n: &NliXyExample) -> bool {
    let up = n.context().monotonicity == Monotonicity::Upward;
    match n.word_pair().relation {
        ConceptRelation::ForwardInclusion => up,
        ConceptRelation::ReverseInclusion => !up,
        ConceptRelation::Disjoint => false,
    }
}

/// Constraint rows C, W, M, R, G per schema; `true` means "must be equal".
pub const REFERENCE_ROWS: [[bool; 5]; 4] = [
    [false, true, false, true, false],
    [true, false, true, false, false],
    [false, true, true, true, true],
    [true, false, true, true, true],
];

pub fn reference_satisfies(row: &[bool; 5], a: &NliXyExample, b: &NliXyExample) -> bool {
    let same = [
        a.context().id == b.context().id,
        a.word_pair().id == b.word_pair().id,
        a.context().monotonicity == b.context().monotonicity,
        a.word_pair().relation == b.word_pair().relation,
        reference_entails(a) == reference_entails(b),
    ];
    same.iter().zip(row).all(|(s, want_equal)| s == want_equal)
}

/// Every ordered (before, after) index pair satisfying `row`.
pub fn brute_force_pairs(d: &Dataset, row: &[bool; 5]) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for (i, a) in d.examples.iter().enumerate() {
        for (j, b) in d.examples.iter().enumerate() {
            if reference_satisfies(row, a, b) {
                out.push((i, j));
            }
        }
    }
    out
}

mod common;

use std::collections::HashMap;

use common::{balanced_dataset, dataset_strategy};
use nlixy_core::effects::{estimate_effect, EffectKind};
use nlixy_core::intervention::{build_intervention_set, standard_schemas, InterventionPair, InterventionSet, Pairing};
use nlixy_core::natlog::{Label2, NliXyExample};
use nlixy_core::prediction::{
    hard_prediction, predict_cached, LabelMapping, NliInput, PredictionCache, PredictionError, PredictionProvider,
    ProbDistribution,
};
use nlixy_core::synthetic::{PolicyKind, SyntheticPolicy};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const NATIVE: [&str; 3] = ["contradiction", "entailment", "neutral"];

/// Fixed random three-class distribution per premise/hypothesis text.
struct TableProvider {
    table: HashMap<(String, String), Vec<f64>>,
    labels: Vec<String>,
}

impl TableProvider {
    fn new(examples: &[NliXyExample], seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let table = examples
            .iter()
            .map(|n| {
                // small integer weights make exact ties common
                let w: Vec<f64> = (0..3).map(|_| rng.random_range(0..4) as f64 + 1.0).collect();
                let s: f64 = w.iter().sum();
                (
                    (n.premise().to_string(), n.hypothesis().to_string()),
                    w.iter().map(|x| x / s).collect(),
                )
            })
            .collect();
        TableProvider {
            table,
            labels: NATIVE.iter().map(|s| s.to_string()).collect(),
        }
    }

    fn probs(&self, premise: &str, hypothesis: &str) -> &[f64] {
        &self.table[&(premise.to_string(), hypothesis.to_string())]
    }
}

impl PredictionProvider for TableProvider {
    fn model_id(&self) -> &str {
        "table"
    }

    fn label_space(&self) -> &[String] {
        &self.labels
    }

    fn predict_batch(&self, inputs: &[NliInput<'_>]) -> Result<Vec<ProbDistribution>, PredictionError> {
        inputs
            .iter()
            .map(|i| ProbDistribution::new(self.labels.clone(), self.probs(i.premise(), i.hypothesis()).to_vec()))
            .collect()
    }
}

/// Straightforward hard label: first maximal native label, then the
/// three-to-two collapse.
fn naive_label(p: &TableProvider, n: &NliXyExample) -> bool {
    let probs = p.probs(n.premise(), n.hypothesis());
    let mut best = 0;
    for i in 0..probs.len() {
        if probs[i] > probs[best] {
            best = i;
        }
    }
    NATIVE[best] == "entailment"
}

fn naive_estimate(p: &TableProvider, pairs: &[InterventionPair]) -> f64 {
    let mut changed = 0;
    for pair in pairs {
        if naive_label(p, &pair.before) != naive_label(p, &pair.after) {
            changed += 1;
        }
    }
    changed as f64 / pairs.len() as f64
}

#[test]
fn estimator_matches_naive_loop_on_small_sets() {
    let d = balanced_dataset(6, 9);
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for trial in 0..50 {
        let provider = TableProvider::new(&d.examples, trial);
        let mapping = LabelMapping::standard(provider.label_space()).unwrap();
        for schema in standard_schemas() {
            let full = build_intervention_set(&d, &schema, 20, trial, Pairing::AllCandidates).unwrap();
            let take = rng.random_range(1..=full.len().min(50));
            let set = InterventionSet {
                pairs: full.pairs[..take].to_vec(),
                ..full
            };
            let est = estimate_effect(&set, &provider, &mapping).unwrap();
            assert_eq!(
                est.value,
                naive_estimate(&provider, &set.pairs),
                "trial {trial} {}",
                schema.id
            );
            assert_eq!(est.n, take);
        }
    }
}

fn reversed(set: &InterventionSet) -> InterventionSet {
    InterventionSet {
        pairs: set
            .pairs
            .iter()
            .map(|p| InterventionPair {
                before: p.after.clone(),
                after: p.before.clone(),
                schema_id: p.schema_id,
            })
            .collect(),
        ..set.clone()
    }
}

fn sets(d: &nlixy_core::Dataset, seed_count: usize, rng_seed: u64) -> Vec<InterventionSet> {
    standard_schemas()
        .iter()
        .map(|s| build_intervention_set(d, s, seed_count, rng_seed, Pairing::AllCandidates).unwrap())
        .filter(|s| !s.is_empty())
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn oracle_is_one_on_total_and_zero_on_direct(d in dataset_strategy(5, 7), rng_seed in any::<u64>()) {
        let oracle = SyntheticPolicy::new(PolicyKind::Oracle);
        let mapping = LabelMapping::standard(oracle.label_space()).unwrap();
        for set in sets(&d, 30, rng_seed) {
            let est = estimate_effect(&set, &oracle, &mapping).unwrap();
            let want = if set.schema.target_effect.is_total() { 1.0 } else { 0.0 };
            prop_assert_eq!(est.value, want);
        }
    }

    #[test]
    fn blind_policies_have_zero_effect_on_their_blind_axis(d in dataset_strategy(5, 7), rng_seed in any::<u64>()) {
        let cases = [
            (PolicyKind::MonotonicityBlind, vec![EffectKind::TceContext]),
            (PolicyKind::RelationBlind, vec![EffectKind::TceWordPair]),
            (PolicyKind::Constant(Label2::Entailment), EffectKind::ALL.to_vec()),
            (PolicyKind::Constant(Label2::NonEntailment), EffectKind::ALL.to_vec()),
        ];
        for (kind, zero) in cases {
            let policy = SyntheticPolicy::new(kind);
            let mapping = LabelMapping::standard(policy.label_space()).unwrap();
            for set in sets(&d, 30, rng_seed) {
                let est = estimate_effect(&set, &policy, &mapping).unwrap();
                // structured policies never react to surface form
                if zero.contains(&set.schema.target_effect) || !set.schema.target_effect.is_total() {
                    prop_assert_eq!(est.value, 0.0, "{} {}", policy.model_id(), set.schema.id);
                }
            }
        }
    }

    #[test]
    fn estimates_ignore_pair_direction(d in dataset_strategy(5, 7), rng_seed in any::<u64>(), salt in any::<u64>()) {
        let policy = SyntheticPolicy::new(PolicyKind::SurfaceHash(salt));
        let mapping = LabelMapping::standard(policy.label_space()).unwrap();
        for set in sets(&d, 30, rng_seed) {
            let a = estimate_effect(&set, &policy, &mapping).unwrap();
            let b = estimate_effect(&reversed(&set), &policy, &mapping).unwrap();
            prop_assert_eq!(a.value, b.value);
        }
    }

    #[test]
    fn cache_is_transparent(d in dataset_strategy(4, 6), seed in any::<u64>(), prefill in 0usize..30, batch in 1usize..9) {
        let provider = TableProvider::new(&d.examples, seed);
        let inputs: Vec<NliInput<'_>> = d.examples.iter().map(NliInput::from).collect();
        let cache = PredictionCache::in_memory();
        let warm = prefill.min(inputs.len());
        predict_cached(&provider, &cache, &inputs[..warm], batch).unwrap();
        let cached = predict_cached(&provider, &cache, &inputs, batch).unwrap();
        prop_assert_eq!(cached, provider.predict_batch(&inputs).unwrap());
    }

    #[test]
    fn hard_label_survives_temperature(w in prop::collection::vec(1u32..6, 3), t in 0.5f64..2.0) {
        let labels: Vec<String> = NATIVE.iter().map(|s| s.to_string()).collect();
        let s: f64 = w.iter().map(|x| *x as f64).sum();
        let p: Vec<f64> = w.iter().map(|x| *x as f64 / s).collect();
        let q_raw: Vec<f64> = p.iter().map(|x| x.powf(t)).collect();
        let qs: f64 = q_raw.iter().sum();
        let q: Vec<f64> = q_raw.iter().map(|x| x / qs).collect();
        let mapping = LabelMapping::standard(&labels).unwrap();
        let a = hard_prediction(&ProbDistribution::new(labels.clone(), p).unwrap(), &mapping).unwrap();
        let b = hard_prediction(&ProbDistribution::new(labels, q).unwrap(), &mapping).unwrap();
        prop_assert_eq!(a, b);
    }
}

#[test]
fn surface_policies_see_surface_changes() {
    // A text-reading policy must register some direct effect somewhere on a
    // dataset with varied wording; otherwise the DCE machinery is inert.
    let d = balanced_dataset(8, 12);
    let policy = SyntheticPolicy::new(PolicyKind::SurfaceHash(0));
    let mapping = LabelMapping::standard(policy.label_space()).unwrap();
    let dce_total: f64 = sets(&d, 96, 13)
        .iter()
        .filter(|s| !s.schema.target_effect.is_total())
        .map(|s| estimate_effect(s, &policy, &mapping).unwrap().value)
        .sum();
    assert!(dce_total > 0.0);
}

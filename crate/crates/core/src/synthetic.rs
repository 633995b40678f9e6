//! Deterministic model policies with analytically known effect signatures.
//!
//! Each policy picks a two-class label and emits a distribution with
//! `confidence` mass on it over the label space (entailment, non-entailment).

use std::fmt;
use std::str::FromStr;

use xxhash_rust::xxh64::Xxh64;

use crate::natlog::{gold_label, ConceptRelation, Label2, Monotonicity, NliXyExample};
use crate::prediction::{NliInput, PredictionError, PredictionProvider, ProbDistribution};

pub const DEFAULT_CONFIDENCE: f64 = 0.9;
pub const DEFAULT_NEGATION_MARKERS: &[&str] = &["not", "no", "n't", "never", "without"];

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PolicyKind {
    Oracle,
    Constant(Label2),
    MonotonicityBlind,
    RelationBlind,
    SurfaceHash(u64),
    NegationHeuristic(Vec<String>),
}

impl PolicyKind {
    /// Whether the policy reads monotonicity/relation labels and therefore
    /// needs structured examples.
    pub fn needs_structure(&self) -> bool {
        matches!(
            self,
            PolicyKind::Oracle | PolicyKind::MonotonicityBlind | PolicyKind::RelationBlind
        )
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PolicyKind::Oracle => f.write_str("oracle"),
            PolicyKind::Constant(l) => write!(f, "constant:{l}"),
            PolicyKind::MonotonicityBlind => f.write_str("monotonicity-blind"),
            PolicyKind::RelationBlind => f.write_str("relation-blind"),
            PolicyKind::SurfaceHash(salt) => write!(f, "surface-hash:{salt}"),
            PolicyKind::NegationHeuristic(markers) => write!(f, "negation-heuristic:{}", markers.join(",")),
        }
    }
}

/// Parses `<kind>[:<param>]`, the part after `synthetic:` in a model spec.
impl FromStr for PolicyKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (kind, param) = match s.split_once(':') {
            Some((k, p)) => (k, Some(p)),
            None => (s, None),
        };
        let no_param = |k: PolicyKind| match param {
            None => Ok(k),
            Some(p) => Err(format!("synthetic policy {kind:?} takes no parameter (got {p:?})")),
        };
        match kind {
            "oracle" => no_param(PolicyKind::Oracle),
            "monotonicity-blind" => no_param(PolicyKind::MonotonicityBlind),
            "relation-blind" => no_param(PolicyKind::RelationBlind),
            "constant" => match param {
                None | Some("non-entailment") => Ok(PolicyKind::Constant(Label2::NonEntailment)),
                Some("entailment") => Ok(PolicyKind::Constant(Label2::Entailment)),
                Some(other) => Err(format!(
                    "constant label must be entailment or non-entailment, got {other:?}"
                )),
            },
            "surface-hash" => match param {
                None => Ok(PolicyKind::SurfaceHash(0)),
                Some(p) => p
                    .parse()
                    .map(PolicyKind::SurfaceHash)
                    .map_err(|_| format!("surface-hash salt must be an unsigned integer, got {p:?}")),
            },
            "negation-heuristic" => {
                let markers: Vec<String> = match param {
                    None => DEFAULT_NEGATION_MARKERS.iter().map(|m| m.to_string()).collect(),
                    Some(p) => p
                        .split(',')
                        .map(|m| m.trim().to_lowercase())
                        .filter(|m| !m.is_empty())
                        .collect(),
                };
                if markers.is_empty() {
                    return Err("negation-heuristic needs at least one marker".into());
                }
                Ok(PolicyKind::NegationHeuristic(markers))
            }
            other => Err(format!("unknown synthetic policy {other:?}")),
        }
    }
}

pub fn oracle_policy(n: &NliXyExample) -> Label2 {
    gold_label(n.monotonicity(), n.relation())
}

/// Treats every context as upward monotone.
pub fn monotonicity_blind_policy(n: &NliXyExample) -> Label2 {
    gold_label(Monotonicity::Upward, n.relation())
}

/// Treats every word pair as a forward inclusion.
pub fn relation_blind_policy(n: &NliXyExample) -> Label2 {
    gold_label(n.monotonicity(), ConceptRelation::ForwardInclusion)
}

/// xxHash64 over the salt and both texts, each length-prefixed.
pub fn surface_hash(salt: u64, premise: &str, hypothesis: &str) -> u64 {
    let mut h = Xxh64::new(0);
    h.update(&salt.to_le_bytes());
    h.update(&(premise.len() as u64).to_le_bytes());
    h.update(premise.as_bytes());
    h.update(&(hypothesis.len() as u64).to_le_bytes());
    h.update(hypothesis.as_bytes());
    h.digest()
}

pub fn surface_hash_policy(premise: &str, hypothesis: &str, salt: u64) -> Label2 {
    if surface_hash(salt, premise, hypothesis).is_multiple_of(2) {
        Label2::Entailment
    } else {
        Label2::NonEntailment
    }
}

/// Lowercased word tokens; a trailing "n't" clitic is split into its own
/// token ("don't" → "do", "n't").
pub fn tokenize(text: &str) -> Vec<String> {
    let normalized = text.replace(['’', '‘'], "'").to_lowercase();
    let mut tokens = Vec::new();
    for raw in normalized.split(|c: char| !(c.is_alphanumeric() || c == '\'' || c == '-')) {
        let word = raw.trim_matches(|c| c == '\'' || c == '-');
        if word.is_empty() {
            continue;
        }
        match word.strip_suffix("n't") {
            Some(stem) => {
                if !stem.is_empty() {
                    tokens.push(stem.to_string());
                }
                tokens.push("n't".to_string());
            }
            None => tokens.push(word.to_string()),
        }
    }
    tokens
}

pub fn negation_heuristic_policy(premise: &str, markers: &[String]) -> Label2 {
    let tokens = tokenize(premise);
    if tokens.iter().any(|t| markers.iter().any(|m| m.eq_ignore_ascii_case(t))) {
        Label2::NonEntailment
    } else {
        Label2::Entailment
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticPolicy {
    kind: PolicyKind,
    confidence: f64,
    model_id: String,
    labels: Vec<String>,
}

impl SyntheticPolicy {
    pub fn new(kind: PolicyKind) -> Self {
        Self::with_confidence(kind, DEFAULT_CONFIDENCE).expect("default confidence is valid")
    }

    /// `confidence` must lie in (0.5, 1].
    pub fn with_confidence(kind: PolicyKind, confidence: f64) -> Result<Self, String> {
        if !(confidence > 0.5 && confidence <= 1.0) {
            return Err(format!("confidence {confidence} is outside (0.5, 1]"));
        }
        Ok(SyntheticPolicy {
            model_id: format!("synthetic:{kind}"),
            kind,
            confidence,
            labels: vec![
                Label2::Entailment.name().to_string(),
                Label2::NonEntailment.name().to_string(),
            ],
        })
    }

    pub fn kind(&self) -> &PolicyKind {
        &self.kind
    }

    pub fn decide(&self, input: &NliInput<'_>) -> Result<Label2, PredictionError> {
        let structured = || {
            input.example().ok_or_else(|| PredictionError::Unstructured {
                model_id: self.model_id.clone(),
            })
        };
        Ok(match &self.kind {
            PolicyKind::Oracle => oracle_policy(structured()?),
            PolicyKind::Constant(l) => *l,
            PolicyKind::MonotonicityBlind => monotonicity_blind_policy(structured()?),
            PolicyKind::RelationBlind => relation_blind_policy(structured()?),
            PolicyKind::SurfaceHash(salt) => surface_hash_policy(input.premise(), input.hypothesis(), *salt),
            PolicyKind::NegationHeuristic(markers) => negation_heuristic_policy(input.premise(), markers),
        })
    }

    fn distribution(&self, label: Label2) -> ProbDistribution {
        let rest = 1.0 - self.confidence;
        let probs = match label {
            Label2::Entailment => vec![self.confidence, rest],
            Label2::NonEntailment => vec![rest, self.confidence],
        };
        ProbDistribution::new(self.labels.clone(), probs).expect("two-point distribution sums to one")
    }
}

impl PredictionProvider for SyntheticPolicy {
    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn label_space(&self) -> &[String] {
        &self.labels
    }

    fn predict_batch(&self, inputs: &[NliInput<'_>]) -> Result<Vec<ProbDistribution>, PredictionError> {
        inputs
            .iter()
            .map(|i| self.decide(i).map(|l| self.distribution(l)))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::natlog::{render_example, ConceptRelation::*, ContextTemplate, Monotonicity::*, WordPair};
    use crate::prediction::{hard_prediction, LabelMapping};

    fn example(m: Monotonicity, r: ConceptRelation) -> NliXyExample {
        let c = ContextTemplate::new("c", "Some {x} here.", m).unwrap();
        let w = WordPair::new("w", "a", "b", r).unwrap();
        render_example(&c, &w).unwrap()
    }

    #[test]
    fn oracle_matches_gold() {
        let c = ContextTemplate::new("cat", "There's a cat on the {x}.", Upward).unwrap();
        let w = WordPair::new("pc", "pc", "machine", ForwardInclusion).unwrap();
        assert_eq!(oracle_policy(&render_example(&c, &w).unwrap()), Label2::Entailment);
        for m in Monotonicity::ALL {
            for r in ConceptRelation::ALL {
                let n = example(m, r);
                assert_eq!(oracle_policy(&n), n.gold());
            }
        }
    }

    #[test]
    fn monotonicity_blind_cells() {
        let n = example(Downward, ReverseInclusion);
        assert_eq!(n.gold(), Label2::Entailment);
        assert_eq!(monotonicity_blind_policy(&n), Label2::NonEntailment);
        for r in ConceptRelation::ALL {
            let n = example(Upward, r);
            assert_eq!(monotonicity_blind_policy(&n), n.gold());
        }
    }

    #[test]
    fn relation_blind_cells() {
        let n = example(Upward, Disjoint);
        assert_eq!(n.gold(), Label2::NonEntailment);
        assert_eq!(relation_blind_policy(&n), Label2::Entailment);
        assert_eq!(
            relation_blind_policy(&example(Upward, ForwardInclusion)),
            Label2::Entailment
        );
    }

    #[test]
    fn negation_markers_are_tokens() {
        let markers: Vec<String> = DEFAULT_NEGATION_MARKERS.iter().map(|s| s.to_string()).collect();
        assert_eq!(
            negation_heuristic_policy("I do not have any sugar.", &markers),
            Label2::NonEntailment
        );
        assert_eq!(
            negation_heuristic_policy("There's a cat on the pc.", &markers),
            Label2::Entailment
        );
        assert_eq!(
            negation_heuristic_policy("a knot of rope", &markers),
            Label2::Entailment
        );
        assert_eq!(
            negation_heuristic_policy("You can't live without fruit .", &markers),
            Label2::NonEntailment
        );
        assert_eq!(
            negation_heuristic_policy("I don’t know", &["n't".to_string()]),
            Label2::NonEntailment
        );
        assert_eq!(negation_heuristic_policy("Nothing here", &markers), Label2::Entailment);
    }

    #[test]
    fn tokenizer_splits_clitics() {
        assert_eq!(tokenize("Don't stop, never!"), vec!["do", "n't", "stop", "never"]);
        assert_eq!(tokenize("a knot"), vec!["a", "knot"]);
    }

    #[test]
    fn surface_hash_is_deterministic_and_balanced() {
        assert_eq!(surface_hash_policy("p", "h", 7), surface_hash_policy("p", "h", 7));
        // computed independently with the reference xxh64 implementation
        assert_eq!(surface_hash(0, "dog exists.", "animal exists."), 5304427176862735239);
        let n = 2000;
        let entail = (0..n)
            .filter(|i| {
                surface_hash_policy(&format!("premise number {i}"), &format!("hypothesis {}", i * 7), 3)
                    == Label2::Entailment
            })
            .count();
        let rate = entail as f64 / n as f64;
        assert!((0.45..=0.55).contains(&rate), "entailment rate {rate}");
    }

    #[test]
    fn distributions_follow_confidence() {
        let p = SyntheticPolicy::with_confidence(PolicyKind::Oracle, 0.75).unwrap();
        let n = example(Upward, ForwardInclusion);
        let d = p.predict_batch(&[NliInput::Example(&n)]).unwrap();
        assert_eq!(d[0].probs(), &[0.75, 0.25]);
        let m = LabelMapping::standard(p.label_space()).unwrap();
        assert_eq!(hard_prediction(&d[0], &m).unwrap(), Label2::Entailment);
        assert!(SyntheticPolicy::with_confidence(PolicyKind::Oracle, 0.5).is_err());
        assert!(SyntheticPolicy::with_confidence(PolicyKind::Oracle, 1.01).is_err());
    }

    #[test]
    fn structured_policies_reject_plain_text() {
        let p = SyntheticPolicy::new(PolicyKind::Oracle);
        let text = [NliInput::Text {
            premise: "a",
            hypothesis: "b",
        }];
        assert!(matches!(
            p.predict_batch(&text),
            Err(PredictionError::Unstructured { .. })
        ));
        let h = SyntheticPolicy::new(PolicyKind::SurfaceHash(1));
        assert_eq!(h.predict_batch(&text).unwrap().len(), 1);
    }

    #[test]
    fn parses_specs() {
        assert_eq!("oracle".parse::<PolicyKind>().unwrap(), PolicyKind::Oracle);
        assert_eq!(
            "constant:entailment".parse::<PolicyKind>().unwrap(),
            PolicyKind::Constant(Label2::Entailment)
        );
        assert_eq!(
            "surface-hash:42".parse::<PolicyKind>().unwrap(),
            PolicyKind::SurfaceHash(42)
        );
        assert_eq!(
            "negation-heuristic:not,never".parse::<PolicyKind>().unwrap(),
            PolicyKind::NegationHeuristic(vec!["not".into(), "never".into()])
        );
        assert!("oracle:3".parse::<PolicyKind>().is_err());
        assert!("psychic".parse::<PolicyKind>().is_err());
        assert_eq!(
            SyntheticPolicy::new(PolicyKind::MonotonicityBlind).model_id(),
            "synthetic:monotonicity-blind"
        );
    }
}

//! Natural-logic domain model: context monotonicity, concept relations,
//! the gold-label table and premise/hypothesis rendering.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Marker substituted by the inserted word in a context template.
pub const PLACEHOLDER: &str = "{x}";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum NatlogError {
    #[error("template must contain the placeholder {PLACEHOLDER} exactly once, found {found}")]
    Placeholder { found: usize },
    #[error("unknown monotonicity tag {0:?} (expected \"up\" or \"down\")")]
    UnknownMonotonicity(String),
    #[error("monotonicity \"neither\" has no gold label and is not supported")]
    NeitherMonotonicity,
    #[error("unknown relation tag {0:?} (expected \"forward\", \"reverse\" or \"disjoint\")")]
    UnknownRelation(String),
    #[error("unknown label {0:?}")]
    UnknownLabel(String),
    #[error("{0} must not be empty")]
    EmptyField(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Monotonicity {
    #[serde(rename = "up")]
    Upward,
    #[serde(rename = "down")]
    Downward,
}

impl Monotonicity {
    pub const ALL: [Monotonicity; 2] = [Monotonicity::Upward, Monotonicity::Downward];

    pub fn flip(self) -> Self {
        match self {
            Monotonicity::Upward => Monotonicity::Downward,
            Monotonicity::Downward => Monotonicity::Upward,
        }
    }

    pub fn tag(self) -> &'static str {
        match self {
            Monotonicity::Upward => "up",
            Monotonicity::Downward => "down",
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Monotonicity::Upward => "↑",
            Monotonicity::Downward => "↓",
        }
    }
}

impl FromStr for Monotonicity {
    type Err = NatlogError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "up" => Ok(Monotonicity::Upward),
            "down" => Ok(Monotonicity::Downward),
            "neither" => Err(NatlogError::NeitherMonotonicity),
            other => Err(NatlogError::UnknownMonotonicity(other.to_string())),
        }
    }
}

impl fmt::Display for Monotonicity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

/// Relation of the premise-side word to the hypothesis-side word.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ConceptRelation {
    /// premise word ⊑ hypothesis word (e.g. brown sugar / sugar)
    #[serde(rename = "forward")]
    ForwardInclusion,
    /// premise word ⊒ hypothesis word (e.g. sugar / brown sugar)
    #[serde(rename = "reverse")]
    ReverseInclusion,
    #[serde(rename = "disjoint")]
    Disjoint,
}

impl ConceptRelation {
    pub const ALL: [ConceptRelation; 3] = [
        ConceptRelation::ForwardInclusion,
        ConceptRelation::ReverseInclusion,
        ConceptRelation::Disjoint,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            ConceptRelation::ForwardInclusion => "forward",
            ConceptRelation::ReverseInclusion => "reverse",
            ConceptRelation::Disjoint => "disjoint",
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            ConceptRelation::ForwardInclusion => "⊑",
            ConceptRelation::ReverseInclusion => "⊒",
            ConceptRelation::Disjoint => "#",
        }
    }
}

impl FromStr for ConceptRelation {
    type Err = NatlogError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "forward" => Ok(ConceptRelation::ForwardInclusion),
            "reverse" => Ok(ConceptRelation::ReverseInclusion),
            "disjoint" => Ok(ConceptRelation::Disjoint),
            other => Err(NatlogError::UnknownRelation(other.to_string())),
        }
    }
}

impl fmt::Display for ConceptRelation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

/// Two-class entailment label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label2 {
    #[serde(rename = "entailment")]
    Entailment,
    #[serde(rename = "non-entailment")]
    NonEntailment,
}

impl Label2 {
    pub const ALL: [Label2; 2] = [Label2::Entailment, Label2::NonEntailment];

    pub fn name(self) -> &'static str {
        match self {
            Label2::Entailment => "entailment",
            Label2::NonEntailment => "non-entailment",
        }
    }

    pub fn other(self) -> Self {
        match self {
            Label2::Entailment => Label2::NonEntailment,
            Label2::NonEntailment => Label2::Entailment,
        }
    }
}

impl fmt::Display for Label2 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Three-class NLI label as used by MNLI/SNLI-style benchmarks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label3 {
    Entailment,
    Neutral,
    Contradiction,
}

impl Label3 {
    pub const ALL: [Label3; 3] = [Label3::Entailment, Label3::Neutral, Label3::Contradiction];
}

/// Groups neutral and contradiction under the non-entailment umbrella.
pub fn to_two_class(label: Label3) -> Label2 {
    match label {
        Label3::Entailment => Label2::Entailment,
        Label3::Neutral | Label3::Contradiction => Label2::NonEntailment,
    }
}

/// Gold entailment label from context monotonicity and word-pair relation.
///
/// |      | ⊑   | ⊒   | #   |
/// |------|-----|-----|-----|
/// | ↑    | E   | NE  | NE  |
/// | ↓    | NE  | E   | NE  |
pub fn gold_label(m: Monotonicity, r: ConceptRelation) -> Label2 {
    use ConceptRelation::*;
    use Monotonicity::*;
    match (m, r) {
        (Upward, ForwardInclusion) | (Downward, ReverseInclusion) => Label2::Entailment,
        _ => Label2::NonEntailment,
    }
}

pub fn converse_relation(r: ConceptRelation) -> ConceptRelation {
    match r {
        ConceptRelation::ForwardInclusion => ConceptRelation::ReverseInclusion,
        ConceptRelation::ReverseInclusion => ConceptRelation::ForwardInclusion,
        ConceptRelation::Disjoint => ConceptRelation::Disjoint,
    }
}

fn placeholder_count(template: &str) -> usize {
    template.matches(PLACEHOLDER).count()
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ContextTemplate {
    pub id: String,
    pub template_text: String,
    pub monotonicity: Monotonicity,
}

impl ContextTemplate {
    pub fn new(
        id: impl Into<String>,
        template_text: impl Into<String>,
        monotonicity: Monotonicity,
    ) -> Result<Self, NatlogError> {
        let context = ContextTemplate {
            id: id.into(),
            template_text: template_text.into(),
            monotonicity,
        };
        context.check()?;
        Ok(context)
    }

    pub fn check(&self) -> Result<(), NatlogError> {
        if self.id.trim().is_empty() {
            return Err(NatlogError::EmptyField("context id"));
        }
        match placeholder_count(&self.template_text) {
            1 => Ok(()),
            found => Err(NatlogError::Placeholder { found }),
        }
    }

    pub fn fill(&self, word: &str) -> String {
        self.template_text.replacen(PLACEHOLDER, word, 1)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct WordPair {
    pub id: String,
    pub premise_word: String,
    pub hypothesis_word: String,
    pub relation: ConceptRelation,
}

impl WordPair {
    pub fn new(
        id: impl Into<String>,
        premise_word: impl Into<String>,
        hypothesis_word: impl Into<String>,
        relation: ConceptRelation,
    ) -> Result<Self, NatlogError> {
        let pair = WordPair {
            id: id.into(),
            premise_word: premise_word.into(),
            hypothesis_word: hypothesis_word.into(),
            relation,
        };
        pair.check()?;
        Ok(pair)
    }

    pub fn check(&self) -> Result<(), NatlogError> {
        if self.id.trim().is_empty() {
            return Err(NatlogError::EmptyField("word pair id"));
        }
        if self.premise_word.trim().is_empty() {
            return Err(NatlogError::EmptyField("premise_word"));
        }
        if self.hypothesis_word.trim().is_empty() {
            return Err(NatlogError::EmptyField("hypothesis_word"));
        }
        Ok(())
    }

    /// The same pair read in the opposite direction; the relation is
    /// conversed so it stays premise-side-relative.
    pub fn swapped(&self) -> WordPair {
        WordPair {
            id: self.id.clone(),
            premise_word: self.hypothesis_word.clone(),
            hypothesis_word: self.premise_word.clone(),
            relation: converse_relation(self.relation),
        }
    }
}

/// One rendered compositional NLI instance. The gold label is always
/// derived from the context monotonicity and the pair relation.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct NliXyExample {
    context: Arc<ContextTemplate>,
    word_pair: Arc<WordPair>,
    gold: Label2,
    premise: String,
    hypothesis: String,
}

impl NliXyExample {
    pub fn context(&self) -> &ContextTemplate {
        &self.context
    }

    pub fn context_arc(&self) -> &Arc<ContextTemplate> {
        &self.context
    }

    pub fn word_pair(&self) -> &WordPair {
        &self.word_pair
    }

    pub fn word_pair_arc(&self) -> &Arc<WordPair> {
        &self.word_pair
    }

    pub fn gold(&self) -> Label2 {
        self.gold
    }

    pub fn premise(&self) -> &str {
        &self.premise
    }

    pub fn hypothesis(&self) -> &str {
        &self.hypothesis
    }

    pub fn monotonicity(&self) -> Monotonicity {
        self.context.monotonicity
    }

    pub fn relation(&self) -> ConceptRelation {
        self.word_pair.relation
    }

    /// (context id, word pair id)
    pub fn key(&self) -> (&str, &str) {
        (&self.context.id, &self.word_pair.id)
    }
}

pub fn render_example(c: &ContextTemplate, w: &WordPair) -> Result<NliXyExample, NatlogError> {
    render_shared(Arc::new(c.clone()), Arc::new(w.clone()))
}

/// Like [`render_example`] but shares already-allocated components.
pub fn render_shared(context: Arc<ContextTemplate>, word_pair: Arc<WordPair>) -> Result<NliXyExample, NatlogError> {
    context.check()?;
    word_pair.check()?;
    let premise = context.fill(&word_pair.premise_word);
    let hypothesis = context.fill(&word_pair.hypothesis_word);
    let gold = gold_label(context.monotonicity, word_pair.relation);
    Ok(NliXyExample {
        context,
        word_pair,
        gold,
        premise,
        hypothesis,
    })
}

//! Measuring how NLI models respond to interventions on compositional
//! monotonicity examples.
//!
//! Every example is a context template with one `{x}` slot, a word pair
//! whose concepts stand in a lexical entailment relation, and a gold label
//! fixed by the context monotonicity and that relation. Intervention sets
//! pair examples that differ in controlled ways, and the mean change of a
//! model's hard prediction across a set estimates one causal effect.

pub mod dataset;
pub mod effects;
pub mod intervention;
pub mod natlog;
pub mod prediction;
pub mod remote;
pub mod report;
pub mod synthetic;

pub use dataset::{Dataset, DatasetError, ValidationReport};
pub use effects::{EffectEstimate, EffectKind, ModelEffectProfile};
pub use intervention::{InterventionSchema, InterventionSet, Pairing, SchemaId};
pub use natlog::{gold_label, ConceptRelation, ContextTemplate, Label2, Monotonicity, NliXyExample, WordPair};
pub use prediction::{HardLabelRule, LabelMapping, NliInput, PredictionError, PredictionProvider, ProbDistribution};

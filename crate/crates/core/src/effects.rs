//! Causal-effect estimates over intervention sets, derived ratio/delta
//! statistics, two-class accuracy and cohort categorization.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::intervention::{InterventionSet, SchemaId};
use crate::natlog::{Label2, NliXyExample};
use crate::prediction::{
    cp, hard_prediction_with, HardLabelRule, LabelMapping, NliInput, PredictionError, PredictionProvider,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EffectKind {
    /// TCE(C on Y)
    TceContext,
    /// TCE(W on Y)
    TceWordPair,
    /// DCE(S → Y)
    DceContextSurface,
    /// DCE(T → Y)
    DceWordSurface,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    Context,
    WordPair,
}

impl EffectKind {
    pub const ALL: [EffectKind; 4] = [
        EffectKind::TceContext,
        EffectKind::TceWordPair,
        EffectKind::DceContextSurface,
        EffectKind::DceWordSurface,
    ];

    pub fn axis(self) -> Axis {
        match self {
            EffectKind::TceContext | EffectKind::DceContextSurface => Axis::Context,
            EffectKind::TceWordPair | EffectKind::DceWordSurface => Axis::WordPair,
        }
    }

    pub fn is_total(self) -> bool {
        matches!(self, EffectKind::TceContext | EffectKind::TceWordPair)
    }

    pub fn schema_id(self) -> SchemaId {
        match self {
            EffectKind::TceContext => SchemaId::I0,
            EffectKind::TceWordPair => SchemaId::I1,
            EffectKind::DceContextSurface => SchemaId::I2,
            EffectKind::DceWordSurface => SchemaId::I3,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            EffectKind::TceContext => "TCE(C on Y)",
            EffectKind::TceWordPair => "TCE(W on Y)",
            EffectKind::DceContextSurface => "DCE(S→Y)",
            EffectKind::DceWordSurface => "DCE(T→Y)",
        }
    }

    pub fn tag(self) -> &'static str {
        match self {
            EffectKind::TceContext => "tce_context",
            EffectKind::TceWordPair => "tce_word_pair",
            EffectKind::DceContextSurface => "dce_context_surface",
            EffectKind::DceWordSurface => "dce_word_surface",
        }
    }
}

impl fmt::Display for EffectKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Error)]
pub enum EffectError {
    #[error("intervention set {0} has no pairs")]
    EmptyInterventionSet(SchemaId),
    #[error("no labeled pairs to score")]
    EmptyInput,
    #[error("expected a TCE and a DCE on the same axis, got {tce} and {dce}")]
    AxisMismatch { tce: EffectKind, dce: EffectKind },
    #[error("estimates belong to different models ({0} and {1})")]
    ModelMismatch(String, String),
    #[error("categorization needs at least 2 profiles, got {0}")]
    InsufficientCohort(usize),
    #[error(transparent)]
    Prediction(#[from] PredictionError),
}

/// Mean change-of-prediction over one intervention set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectEstimate {
    pub kind: EffectKind,
    pub value: f64,
    pub n: usize,
    /// Pairs whose hard prediction changed; `value == changed / n`.
    pub changed: usize,
    pub model_id: String,
}

impl EffectEstimate {
    pub fn from_counts(
        kind: EffectKind,
        model_id: impl Into<String>,
        changed: usize,
        n: usize,
    ) -> Result<Self, EffectError> {
        if n == 0 {
            return Err(EffectError::EmptyInterventionSet(kind.schema_id()));
        }
        Ok(EffectEstimate {
            kind,
            value: changed as f64 / n as f64,
            n,
            changed,
            model_id: model_id.into(),
        })
    }
}

/// Hard two-class predictions for `examples`, deduplicated by
/// (context id, word pair id) and requested in a single provider call.
pub fn hard_labels<P: PredictionProvider + ?Sized>(
    examples: &[&NliXyExample],
    provider: &P,
    mapping: &LabelMapping,
    rule: HardLabelRule,
) -> Result<Vec<Label2>, EffectError> {
    let mut slot: HashMap<(&str, &str), usize> = HashMap::new();
    let mut unique: Vec<NliInput<'_>> = Vec::new();
    let positions: Vec<usize> = examples
        .iter()
        .map(|n| {
            *slot.entry(n.key()).or_insert_with(|| {
                unique.push(NliInput::Example(n));
                unique.len() - 1
            })
        })
        .collect();
    let dists = provider.predict_batch(&unique)?;
    if dists.len() != unique.len() {
        return Err(PredictionError::LengthMismatch {
            expected: unique.len(),
            found: dists.len(),
        }
        .into());
    }
    let labels: Vec<Label2> = dists
        .iter()
        .map(|d| hard_prediction_with(d, mapping, rule))
        .collect::<Result<_, _>>()?;
    Ok(positions.into_iter().map(|i| labels[i]).collect())
}

pub fn estimate_effect<P: PredictionProvider + ?Sized>(
    set: &InterventionSet,
    provider: &P,
    mapping: &LabelMapping,
) -> Result<EffectEstimate, EffectError> {
    estimate_effect_with(set, provider, mapping, HardLabelRule::default())
}

pub fn estimate_effect_with<P: PredictionProvider + ?Sized>(
    set: &InterventionSet,
    provider: &P,
    mapping: &LabelMapping,
    rule: HardLabelRule,
) -> Result<EffectEstimate, EffectError> {
    if set.pairs.is_empty() {
        return Err(EffectError::EmptyInterventionSet(set.schema.id));
    }
    let examples: Vec<&NliXyExample> = set.pairs.iter().flat_map(|p| [&p.before, &p.after]).collect();
    let labels = hard_labels(&examples, provider, mapping, rule)?;
    let changed: usize = labels.chunks_exact(2).map(|ys| cp(ys[0], ys[1]) as usize).sum();
    EffectEstimate::from_counts(set.schema.target_effect, provider.model_id(), changed, set.pairs.len())
}

/// TCE / DCE (None when the DCE is zero) and TCE − DCE, from unrounded values.
pub fn ratio_and_delta(tce: &EffectEstimate, dce: &EffectEstimate) -> Result<(Option<f64>, f64), EffectError> {
    if !tce.kind.is_total() || dce.kind.is_total() || tce.kind.axis() != dce.kind.axis() {
        return Err(EffectError::AxisMismatch {
            tce: tce.kind,
            dce: dce.kind,
        });
    }
    if tce.model_id != dce.model_id {
        return Err(EffectError::ModelMismatch(tce.model_id.clone(), dce.model_id.clone()));
    }
    Ok(ratio_delta_values(tce.value, dce.value))
}

pub fn ratio_delta_values(tce: f64, dce: f64) -> (Option<f64>, f64) {
    let ratio = if dce > 0.0 { Some(tce / dce) } else { None };
    (ratio, tce - dce)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyEntry {
    pub dataset: String,
    pub accuracy: f64,
    pub n: usize,
}

/// Fraction of `items` whose hard prediction equals the gold label.
pub fn accuracy_two_class<P: PredictionProvider + ?Sized>(
    items: &[(NliInput<'_>, Label2)],
    provider: &P,
    mapping: &LabelMapping,
    rule: HardLabelRule,
) -> Result<f64, EffectError> {
    if items.is_empty() {
        return Err(EffectError::EmptyInput);
    }
    let inputs: Vec<NliInput<'_>> = items.iter().map(|(i, _)| *i).collect();
    let dists = provider.predict_batch(&inputs)?;
    if dists.len() != inputs.len() {
        return Err(PredictionError::LengthMismatch {
            expected: inputs.len(),
            found: dists.len(),
        }
        .into());
    }
    let mut correct = 0usize;
    for (d, (_, gold)) in dists.iter().zip(items) {
        if hard_prediction_with(d, mapping, rule)? == *gold {
            correct += 1;
        }
    }
    Ok(correct as f64 / items.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelEffectProfile {
    pub model_id: String,
    pub context_dce: EffectEstimate,
    pub context_tce: EffectEstimate,
    pub word_dce: EffectEstimate,
    pub word_tce: EffectEstimate,
    pub context_ratio: Option<f64>,
    pub word_ratio: Option<f64>,
    pub context_delta: f64,
    pub word_delta: f64,
    pub accuracies: Vec<AccuracyEntry>,
}

impl ModelEffectProfile {
    /// Builds a profile from one estimate of each kind (any order).
    pub fn from_estimates(estimates: Vec<EffectEstimate>, accuracies: Vec<AccuracyEntry>) -> Result<Self, EffectError> {
        let mut by_kind: BTreeMap<EffectKind, EffectEstimate> = BTreeMap::new();
        for e in estimates {
            by_kind.insert(e.kind, e);
        }
        let mut take = |k: EffectKind| {
            by_kind
                .remove(&k)
                .ok_or(EffectError::EmptyInterventionSet(k.schema_id()))
        };
        let context_tce = take(EffectKind::TceContext)?;
        let context_dce = take(EffectKind::DceContextSurface)?;
        let word_tce = take(EffectKind::TceWordPair)?;
        let word_dce = take(EffectKind::DceWordSurface)?;
        let (context_ratio, context_delta) = ratio_and_delta(&context_tce, &context_dce)?;
        let (word_ratio, word_delta) = ratio_and_delta(&word_tce, &word_dce)?;
        if context_tce.model_id != word_tce.model_id {
            return Err(EffectError::ModelMismatch(
                context_tce.model_id.clone(),
                word_tce.model_id.clone(),
            ));
        }
        Ok(ModelEffectProfile {
            model_id: context_tce.model_id.clone(),
            context_dce,
            context_tce,
            word_dce,
            word_tce,
            context_ratio,
            word_ratio,
            context_delta,
            word_delta,
            accuracies,
        })
    }

    pub fn estimate(&self, kind: EffectKind) -> &EffectEstimate {
        match kind {
            EffectKind::TceContext => &self.context_tce,
            EffectKind::TceWordPair => &self.word_tce,
            EffectKind::DceContextSurface => &self.context_dce,
            EffectKind::DceWordSurface => &self.word_dce,
        }
    }

    pub fn ratio(&self, axis: Axis) -> Option<f64> {
        match axis {
            Axis::Context => self.context_ratio,
            Axis::WordPair => self.word_ratio,
        }
    }

    pub fn delta(&self, axis: Axis) -> f64 {
        match axis {
            Axis::Context => self.context_delta,
            Axis::WordPair => self.word_delta,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum QualitativeBin {
    Lowest,
    Low,
    Mid,
    High,
    Highest,
}

impl fmt::Display for QualitativeBin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Categorization {
    pub context_robustness: QualitativeBin,
    pub context_sensitivity: QualitativeBin,
    pub word_robustness: QualitativeBin,
    pub word_sensitivity: QualitativeBin,
}

/// Ranks `scores` (higher is better). The top entry is Highest and the
/// bottom one Lowest, ties broken by model id; the rest fall into
/// Low/Mid/High by thirds of the min–max range.
pub fn bin_scores(scores: &[(&str, f64)]) -> Vec<QualitativeBin> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .1
            .total_cmp(&scores[a].1)
            .then_with(|| scores[a].0.cmp(scores[b].0))
    });
    let min = scores.iter().map(|s| s.1).fold(f64::INFINITY, f64::min);
    let max = scores.iter().map(|s| s.1).fold(f64::NEG_INFINITY, f64::max);
    let mut bins: Vec<QualitativeBin> = scores
        .iter()
        .map(|&(_, s)| {
            if max <= min {
                return QualitativeBin::Mid;
            }
            let t = (s - min) / (max - min);
            if t < 1.0 / 3.0 {
                QualitativeBin::Low
            } else if t < 2.0 / 3.0 {
                QualitativeBin::Mid
            } else {
                QualitativeBin::High
            }
        })
        .collect();
    if let (Some(&top), Some(&bottom)) = (order.first(), order.last()) {
        bins[top] = QualitativeBin::Highest;
        bins[bottom] = QualitativeBin::Lowest;
    }
    bins
}

/// Sensitivity ranks by TCE; robustness ranks by DCE, lower being better.
pub fn categorize_profiles(profiles: &[ModelEffectProfile]) -> Result<BTreeMap<String, Categorization>, EffectError> {
    if profiles.len() < 2 {
        return Err(EffectError::InsufficientCohort(profiles.len()));
    }
    let axis_bins = |score: &dyn Fn(&ModelEffectProfile) -> f64| {
        let scores: Vec<(&str, f64)> = profiles.iter().map(|p| (p.model_id.as_str(), score(p))).collect();
        bin_scores(&scores)
    };
    let context_robustness = axis_bins(&|p| -p.context_dce.value);
    let context_sensitivity = axis_bins(&|p| p.context_tce.value);
    let word_robustness = axis_bins(&|p| -p.word_dce.value);
    let word_sensitivity = axis_bins(&|p| p.word_tce.value);
    Ok(profiles
        .iter()
        .enumerate()
        .map(|(i, p)| {
            (
                p.model_id.clone(),
                Categorization {
                    context_robustness: context_robustness[i],
                    context_sensitivity: context_sensitivity[i],
                    word_robustness: word_robustness[i],
                    word_sensitivity: word_sensitivity[i],
                },
            )
        })
        .collect())
}

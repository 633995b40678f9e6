//! Prediction-provider contract, hard-label extraction, the change-of-prediction
//! indicator and the persistent prediction cache.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::fs::{File, OpenOptions};
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::{Arc, Mutex, RwLock};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::parse_label;
use crate::natlog::{Label2, NliXyExample};

/// Tolerance on the sum of a probability row.
pub const PROB_SUM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum PredictionError {
    #[error("invalid probability distribution: {0}")]
    InvalidDistribution(String),
    #[error("label mapping: {0}")]
    Mapping(String),
    #[error("model {model_id} needs structured NLI-XY examples, got plain text")]
    Unstructured { model_id: String },
    #[error("provider returned {found} distributions for {expected} inputs")]
    LengthMismatch { expected: usize, found: usize },
    #[error("transport: {0}")]
    Transport(String),
    #[error("protocol: {0}")]
    Protocol(String),
    #[error("label space mismatch: expected {expected:?}, found {found:?}")]
    LabelSpaceMismatch { expected: Vec<String>, found: Vec<String> },
    #[error("cache already holds a different prediction for model {model_id} on ({premise:?}, {hypothesis:?})")]
    CacheConflict {
        model_id: String,
        premise: String,
        hypothesis: String,
    },
    #[error("no cached prediction for model {model_id} on ({premise:?}, {hypothesis:?})")]
    CacheMiss {
        model_id: String,
        premise: String,
        hypothesis: String,
    },
    #[error("cache file {path}: line {line}: {message}")]
    CacheFormat {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbDistribution {
    labels: Vec<String>,
    probs: Vec<f64>,
}

impl ProbDistribution {
    pub fn new(labels: Vec<String>, probs: Vec<f64>) -> Result<Self, PredictionError> {
        let invalid = |m: String| Err(PredictionError::InvalidDistribution(m));
        if labels.is_empty() {
            return invalid("empty label space".into());
        }
        if labels.len() != probs.len() {
            return invalid(format!("{} labels but {} probabilities", labels.len(), probs.len()));
        }
        let mut seen = HashSet::new();
        for l in &labels {
            if !seen.insert(l.as_str()) {
                return invalid(format!("duplicate label {l:?}"));
            }
        }
        if let Some(p) = probs.iter().find(|p| !p.is_finite() || **p < 0.0) {
            return invalid(format!("probability {p} is not a finite non-negative number"));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > PROB_SUM_TOLERANCE {
            return invalid(format!("probabilities sum to {sum}"));
        }
        Ok(ProbDistribution { labels, probs })
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// Index of the largest probability; the earliest label wins ties.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, p) in self.probs.iter().enumerate().skip(1) {
            if *p > self.probs[best] {
                best = i;
            }
        }
        best
    }
}

/// Native label name → two-class label.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelMapping {
    map: HashMap<String, Label2>,
}

fn standard_name(native: &str) -> Option<Label2> {
    match native.trim().to_ascii_lowercase().replace('_', "-").as_str() {
        "entailment" => Some(Label2::Entailment),
        "neutral" | "contradiction" | "non-entailment" | "not-entailment" => Some(Label2::NonEntailment),
        _ => None,
    }
}

impl LabelMapping {
    /// Case-insensitive standard grouping: entailment stays, neutral and
    /// contradiction become non-entailment.
    pub fn standard(label_space: &[String]) -> Result<Self, PredictionError> {
        Self::with_overrides(label_space, &BTreeMap::new())
    }

    /// Overrides (matched case-insensitively) take precedence over the
    /// standard names.
    pub fn with_overrides(
        label_space: &[String],
        overrides: &BTreeMap<String, Label2>,
    ) -> Result<Self, PredictionError> {
        let overrides: HashMap<String, Label2> = overrides.iter().map(|(k, v)| (k.to_lowercase(), *v)).collect();
        let mut map = HashMap::new();
        for native in label_space {
            let key = native.to_lowercase();
            let target = overrides
                .get(&key)
                .copied()
                .or_else(|| standard_name(native))
                .ok_or_else(|| PredictionError::Mapping(format!("native label {native:?} is unmapped")))?;
            map.insert(key, target);
        }
        for target in Label2::ALL {
            if !map.values().any(|v| *v == target) {
                return Err(PredictionError::Mapping(format!(
                    "no native label maps to {target}; the provider is single-class degenerate"
                )));
            }
        }
        Ok(LabelMapping { map })
    }

    /// Parses an override file: a JSON object of native name → two-class name.
    pub fn parse_overrides(json: &str) -> Result<BTreeMap<String, Label2>, PredictionError> {
        let raw: BTreeMap<String, String> =
            serde_json::from_str(json).map_err(|e| PredictionError::Mapping(e.to_string()))?;
        raw.into_iter()
            .map(|(k, v)| {
                let label = parse_label(&v).map_err(|e| PredictionError::Mapping(e.to_string()))?;
                Ok((k, label))
            })
            .collect()
    }

    pub fn get(&self, native: &str) -> Result<Label2, PredictionError> {
        self.map
            .get(&native.to_lowercase())
            .copied()
            .ok_or_else(|| PredictionError::Mapping(format!("native label {native:?} is unmapped")))
    }
}

/// How a native distribution becomes a two-class hard label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HardLabelRule {
    /// Argmax over native labels, then map.
    #[default]
    ArgmaxThenMap,
    /// Sum mapped probability mass per two-class label, then argmax.
    SumThenArgmax,
}

impl fmt::Display for HardLabelRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            HardLabelRule::ArgmaxThenMap => "argmax_then_map",
            HardLabelRule::SumThenArgmax => "sum_then_argmax",
        })
    }
}

impl FromStr for HardLabelRule {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.replace('-', "_").as_str() {
            "argmax_then_map" => Ok(HardLabelRule::ArgmaxThenMap),
            "sum_then_argmax" => Ok(HardLabelRule::SumThenArgmax),
            other => Err(format!("unknown hard-label rule {other:?}")),
        }
    }
}

pub fn hard_prediction(p: &ProbDistribution, m: &LabelMapping) -> Result<Label2, PredictionError> {
    hard_prediction_with(p, m, HardLabelRule::ArgmaxThenMap)
}

pub fn hard_prediction_with(
    p: &ProbDistribution,
    m: &LabelMapping,
    rule: HardLabelRule,
) -> Result<Label2, PredictionError> {
    let mapped: Vec<Label2> = p.labels.iter().map(|l| m.get(l)).collect::<Result<_, _>>()?;
    match rule {
        HardLabelRule::ArgmaxThenMap => Ok(mapped[p.argmax()]),
        HardLabelRule::SumThenArgmax => {
            let mass = |target: Label2| -> f64 {
                mapped
                    .iter()
                    .zip(&p.probs)
                    .filter(|(l, _)| **l == target)
                    .map(|(_, p)| p)
                    .sum()
            };
            let (e, ne) = (mass(Label2::Entailment), mass(Label2::NonEntailment));
            Ok(if e > ne {
                Label2::Entailment
            } else if ne > e {
                Label2::NonEntailment
            } else {
                mapped[0]
            })
        }
    }
}

/// Change-of-prediction indicator.
pub fn cp(y_before: Label2, y_after: Label2) -> u8 {
    u8::from(y_before != y_after)
}

/// One model input: a structured NLI-XY example or bare text.
#[derive(Debug, Clone, Copy)]
pub enum NliInput<'a> {
    Example(&'a NliXyExample),
    Text { premise: &'a str, hypothesis: &'a str },
}

impl<'a> NliInput<'a> {
    pub fn premise(&self) -> &'a str {
        match self {
            NliInput::Example(n) => n.premise(),
            NliInput::Text { premise, .. } => premise,
        }
    }

    pub fn hypothesis(&self) -> &'a str {
        match self {
            NliInput::Example(n) => n.hypothesis(),
            NliInput::Text { hypothesis, .. } => hypothesis,
        }
    }

    pub fn example(&self) -> Option<&'a NliXyExample> {
        match self {
            NliInput::Example(n) => Some(n),
            NliInput::Text { .. } => None,
        }
    }
}

impl<'a> From<&'a NliXyExample> for NliInput<'a> {
    fn from(n: &'a NliXyExample) -> Self {
        NliInput::Example(n)
    }
}

/// Source of entailment probability distributions for one model.
///
/// `predict_batch` returns one distribution per input, in input order, and is
/// deterministic for a fixed model. Implementations must tolerate concurrent
/// calls.
pub trait PredictionProvider: Send + Sync {
    fn model_id(&self) -> &str;

    fn label_space(&self) -> &[String];

    fn predict_batch(&self, inputs: &[NliInput<'_>]) -> Result<Vec<ProbDistribution>, PredictionError>;
}

impl<P: PredictionProvider + ?Sized> PredictionProvider for Arc<P> {
    fn model_id(&self) -> &str {
        (**self).model_id()
    }

    fn label_space(&self) -> &[String] {
        (**self).label_space()
    }

    fn predict_batch(&self, inputs: &[NliInput<'_>]) -> Result<Vec<ProbDistribution>, PredictionError> {
        (**self).predict_batch(inputs)
    }
}

impl<P: PredictionProvider + ?Sized> PredictionProvider for Box<P> {
    fn model_id(&self) -> &str {
        (**self).model_id()
    }

    fn label_space(&self) -> &[String] {
        (**self).label_space()
    }

    fn predict_batch(&self, inputs: &[NliInput<'_>]) -> Result<Vec<ProbDistribution>, PredictionError> {
        (**self).predict_batch(inputs)
    }
}

type CacheKey = (String, String, String);

#[derive(Debug, Serialize, Deserialize)]
struct CacheRecord {
    model_id: String,
    premise: String,
    hypothesis: String,
    labels: Vec<String>,
    probs: Vec<f64>,
}

/// Write-once map (model id, premise, hypothesis) → distribution, backed by an
/// append-only line-delimited file.
pub struct PredictionCache {
    path: Option<PathBuf>,
    entries: RwLock<HashMap<CacheKey, ProbDistribution>>,
    writer: Mutex<Option<BufWriter<File>>>,
}

impl PredictionCache {
    pub fn in_memory() -> Self {
        PredictionCache {
            path: None,
            entries: RwLock::new(HashMap::new()),
            writer: Mutex::new(None),
        }
    }

    /// Loads `path` (creating it if absent) and appends new entries to it.
    pub fn open(path: impl AsRef<Path>) -> Result<Self, PredictionError> {
        let path = path.as_ref().to_path_buf();
        let entries = if path.exists() {
            Self::load_entries(&path)?
        } else {
            HashMap::new()
        };
        let file = OpenOptions::new().create(true).append(true).open(&path)?;
        Ok(PredictionCache {
            path: Some(path),
            entries: RwLock::new(entries),
            writer: Mutex::new(Some(BufWriter::new(file))),
        })
    }

    /// Loads `path` without opening it for writing.
    pub fn open_read_only(path: impl AsRef<Path>) -> Result<Self, PredictionError> {
        let path = path.as_ref().to_path_buf();
        let entries = Self::load_entries(&path)?;
        Ok(PredictionCache {
            path: Some(path),
            entries: RwLock::new(entries),
            writer: Mutex::new(None),
        })
    }

    fn load_entries(path: &Path) -> Result<HashMap<CacheKey, ProbDistribution>, PredictionError> {
        let reader = BufReader::new(File::open(path)?);
        let mut entries: HashMap<CacheKey, ProbDistribution> = HashMap::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let format_err = |message: String| PredictionError::CacheFormat {
                path: path.to_path_buf(),
                line: i + 1,
                message,
            };
            let rec: CacheRecord = serde_json::from_str(&line).map_err(|e| format_err(e.to_string()))?;
            let dist = ProbDistribution::new(rec.labels, rec.probs).map_err(|e| format_err(e.to_string()))?;
            let key = (rec.model_id, rec.premise, rec.hypothesis);
            match entries.get(&key) {
                Some(existing) if *existing != dist => {
                    return Err(PredictionError::CacheConflict {
                        model_id: key.0,
                        premise: key.1,
                        hypothesis: key.2,
                    })
                }
                Some(_) => {}
                None => {
                    entries.insert(key, dist);
                }
            }
        }
        Ok(entries)
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn len(&self) -> usize {
        self.entries.read().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, model_id: &str, premise: &str, hypothesis: &str) -> Option<ProbDistribution> {
        let key = (model_id.to_string(), premise.to_string(), hypothesis.to_string());
        self.entries.read().unwrap().get(&key).cloned()
    }

    /// Stores a new entry. Returns `false` if an identical entry already
    /// exists; a different existing entry is a [`PredictionError::CacheConflict`].
    pub fn insert(
        &self,
        model_id: &str,
        premise: &str,
        hypothesis: &str,
        dist: ProbDistribution,
    ) -> Result<bool, PredictionError> {
        let key = (model_id.to_string(), premise.to_string(), hypothesis.to_string());
        let mut entries = self.entries.write().unwrap();
        if let Some(existing) = entries.get(&key) {
            if *existing == dist {
                return Ok(false);
            }
            return Err(PredictionError::CacheConflict {
                model_id: key.0,
                premise: key.1,
                hypothesis: key.2,
            });
        }
        if let Some(writer) = self.writer.lock().unwrap().as_mut() {
            let rec = CacheRecord {
                model_id: key.0.clone(),
                premise: key.1.clone(),
                hypothesis: key.2.clone(),
                labels: dist.labels.clone(),
                probs: dist.probs.clone(),
            };
            serde_json::to_writer(&mut *writer, &rec).map_err(io::Error::from)?;
            writer.write_all(b"\n")?;
            writer.flush()?;
        }
        entries.insert(key, dist);
        Ok(true)
    }

    /// Label space of the first entry stored for `model_id`, if any.
    pub fn label_space(&self, model_id: &str) -> Option<Vec<String>> {
        let entries = self.entries.read().unwrap();
        let mut spaces = entries
            .iter()
            .filter(|(k, _)| k.0 == model_id)
            .map(|(_, d)| d.labels.clone())
            .collect::<Vec<_>>();
        spaces.sort();
        spaces.dedup();
        match spaces.len() {
            1 => spaces.pop(),
            _ => None,
        }
    }
}

/// Looks up `inputs` in `cache`, queries `provider` in batches of
/// `batch_size` for the distinct misses, persists them, and returns one
/// distribution per input.
pub fn predict_cached<P: PredictionProvider + ?Sized>(
    provider: &P,
    cache: &PredictionCache,
    inputs: &[NliInput<'_>],
    batch_size: usize,
) -> Result<Vec<ProbDistribution>, PredictionError> {
    let model_id = provider.model_id();
    let mut found: HashMap<(&str, &str), ProbDistribution> = HashMap::new();
    let mut misses: Vec<NliInput<'_>> = Vec::new();
    let mut queued = HashSet::new();
    for input in inputs {
        let key = (input.premise(), input.hypothesis());
        if found.contains_key(&key) || queued.contains(&key) {
            continue;
        }
        match cache.get(model_id, key.0, key.1) {
            Some(d) => {
                found.insert(key, d);
            }
            None => {
                queued.insert(key);
                misses.push(*input);
            }
        }
    }

    for chunk in misses.chunks(batch_size.max(1)) {
        let dists = provider.predict_batch(chunk)?;
        if dists.len() != chunk.len() {
            return Err(PredictionError::LengthMismatch {
                expected: chunk.len(),
                found: dists.len(),
            });
        }
        for (input, dist) in chunk.iter().zip(dists) {
            cache.insert(model_id, input.premise(), input.hypothesis(), dist.clone())?;
            found.insert((input.premise(), input.hypothesis()), dist);
        }
    }
    Ok(inputs
        .iter()
        .map(|i| found[&(i.premise(), i.hypothesis())].clone())
        .collect())
}

/// A provider whose predictions go through a [`PredictionCache`].
pub struct CachedProvider<P> {
    inner: P,
    cache: Arc<PredictionCache>,
    batch_size: usize,
}

impl<P: PredictionProvider> CachedProvider<P> {
    pub fn new(inner: P, cache: Arc<PredictionCache>, batch_size: usize) -> Self {
        CachedProvider {
            inner,
            cache,
            batch_size,
        }
    }
}

impl<P: PredictionProvider> PredictionProvider for CachedProvider<P> {
    fn model_id(&self) -> &str {
        self.inner.model_id()
    }

    fn label_space(&self) -> &[String] {
        self.inner.label_space()
    }

    fn predict_batch(&self, inputs: &[NliInput<'_>]) -> Result<Vec<ProbDistribution>, PredictionError> {
        predict_cached(&self.inner, &self.cache, inputs, self.batch_size)
    }
}

/// Serves predictions recorded in a cache file; a missing key is an error.
pub struct CacheProvider {
    model_id: String,
    labels: Vec<String>,
    cache: Arc<PredictionCache>,
}

impl CacheProvider {
    pub fn new(cache: Arc<PredictionCache>, model_id: impl Into<String>) -> Result<Self, PredictionError> {
        let model_id = model_id.into();
        let labels = cache.label_space(&model_id).ok_or_else(|| {
            PredictionError::Protocol(format!(
                "cache holds no entries (or inconsistent label spaces) for model {model_id}"
            ))
        })?;
        Ok(CacheProvider {
            model_id,
            labels,
            cache,
        })
    }
}

impl PredictionProvider for CacheProvider {
    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn label_space(&self) -> &[String] {
        &self.labels
    }

    fn predict_batch(&self, inputs: &[NliInput<'_>]) -> Result<Vec<ProbDistribution>, PredictionError> {
        inputs
            .iter()
            .map(|i| {
                self.cache
                    .get(&self.model_id, i.premise(), i.hypothesis())
                    .ok_or_else(|| PredictionError::CacheMiss {
                        model_id: self.model_id.clone(),
                        premise: i.premise().to_string(),
                        hypothesis: i.hypothesis().to_string(),
                    })
            })
            .collect()
    }
}

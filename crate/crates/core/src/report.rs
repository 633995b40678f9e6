//! Results files and rendered reports.
//!
//! The machine-readable results file is line-delimited JSON: one `run`
//! record, then per model either four `effect` records (plus optional
//! `accuracy` records) or a single `error` record.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::io::{self, BufRead, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::DatasetStats;
use crate::effects::{
    categorize_profiles, ratio_delta_values, AccuracyEntry, Axis, Categorization, EffectError, EffectEstimate,
    EffectKind, ModelEffectProfile,
};
use crate::intervention::{standard_schemas, BuildSummary, Pairing, SchemaId, Variable};
use crate::prediction::HardLabelRule;

/// How an undefined TCE/DCE ratio is printed.
pub const UNDEFINED_RATIO: &str = "—(DCE=0)";

pub const BINNING_NOTE: &str = "Bins: the best and worst model per column are Highest/Lowest (ties by model id); \
the others are Low/Mid/High by thirds of the min-max range. Robustness ranks DCE inversely.";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SetSummary {
    pub schema_id: SchemaId,
    #[serde(flatten)]
    pub summary: BuildSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub rng_seed: u64,
    pub seed_count: usize,
    pub pairing: Pairing,
    pub hard_label_rule: HardLabelRule,
    pub dataset: DatasetStats,
    pub interventions: Vec<SetSummary>,
}

#[derive(Debug, Clone, PartialEq)]
#[allow(clippy::large_enum_variant)]
pub enum ModelResult {
    Profile(ModelEffectProfile),
    Failed { model_id: String, message: String },
}

impl ModelResult {
    pub fn model_id(&self) -> &str {
        match self {
            ModelResult::Profile(p) => &p.model_id,
            ModelResult::Failed { model_id, .. } => model_id,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResults {
    pub metadata: RunMetadata,
    pub models: Vec<ModelResult>,
}

impl RunResults {
    pub fn profiles(&self) -> Vec<&ModelEffectProfile> {
        self.models
            .iter()
            .filter_map(|m| match m {
                ModelResult::Profile(p) => Some(p),
                ModelResult::Failed { .. } => None,
            })
            .collect()
    }

    /// Cohort bins, when at least two models produced profiles.
    pub fn categorization(&self) -> Option<BTreeMap<String, Categorization>> {
        let profiles: Vec<ModelEffectProfile> = self.profiles().into_iter().cloned().collect();
        categorize_profiles(&profiles).ok()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct EffectRecord {
    model_id: String,
    kind: EffectKind,
    axis: Axis,
    value: f64,
    n: usize,
    changed: usize,
    ratio: Option<f64>,
    delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct AccuracyRecord {
    model_id: String,
    dataset: String,
    accuracy: f64,
    n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ErrorRecord {
    model_id: String,
    message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
enum ResultRecord {
    Run(RunMetadata),
    Effect(EffectRecord),
    Accuracy(AccuracyRecord),
    Error(ErrorRecord),
}

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("results line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("nothing to report: no model results")]
    Empty,
    #[error(transparent)]
    Effect(#[from] EffectError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub fn write_results<W: Write>(results: &RunResults, out: &mut W) -> io::Result<()> {
    let mut emit = |rec: &ResultRecord| -> io::Result<()> {
        serde_json::to_writer(&mut *out, rec)?;
        out.write_all(b"\n")
    };
    emit(&ResultRecord::Run(results.metadata.clone()))?;
    for m in &results.models {
        match m {
            ModelResult::Profile(p) => {
                for kind in EffectKind::ALL {
                    let e = p.estimate(kind);
                    let axis = kind.axis();
                    emit(&ResultRecord::Effect(EffectRecord {
                        model_id: p.model_id.clone(),
                        kind,
                        axis,
                        value: e.value,
                        n: e.n,
                        changed: e.changed,
                        ratio: p.ratio(axis),
                        delta: p.delta(axis),
                    }))?;
                }
                for a in &p.accuracies {
                    emit(&ResultRecord::Accuracy(AccuracyRecord {
                        model_id: p.model_id.clone(),
                        dataset: a.dataset.clone(),
                        accuracy: a.accuracy,
                        n: a.n,
                    }))?;
                }
            }
            ModelResult::Failed { model_id, message } => emit(&ResultRecord::Error(ErrorRecord {
                model_id: model_id.clone(),
                message: message.clone(),
            }))?,
        }
    }
    Ok(())
}

/// Reads a results file back. Ratios and deltas are recomputed from the
/// stored estimates and must agree with the stored columns.
pub fn read_results<R: BufRead>(input: R) -> Result<RunResults, ReportError> {
    let mut metadata = None;
    let mut order: Vec<String> = Vec::new();
    let mut effects: BTreeMap<String, Vec<(usize, EffectRecord)>> = BTreeMap::new();
    let mut accuracies: BTreeMap<String, Vec<AccuracyEntry>> = BTreeMap::new();
    let mut errors: BTreeMap<String, String> = BTreeMap::new();
    for (i, line) in input.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: ResultRecord = serde_json::from_str(&line).map_err(|e| ReportError::Format {
            line: line_no,
            message: e.to_string(),
        })?;
        let mut note = |id: &str| {
            if !order.iter().any(|o| o == id) {
                order.push(id.to_string());
            }
        };
        match rec {
            ResultRecord::Run(m) => metadata = Some(m),
            ResultRecord::Effect(e) => {
                note(&e.model_id);
                effects.entry(e.model_id.clone()).or_default().push((line_no, e));
            }
            ResultRecord::Accuracy(a) => {
                note(&a.model_id);
                accuracies.entry(a.model_id.clone()).or_default().push(AccuracyEntry {
                    dataset: a.dataset,
                    accuracy: a.accuracy,
                    n: a.n,
                });
            }
            ResultRecord::Error(e) => {
                note(&e.model_id);
                errors.insert(e.model_id, e.message);
            }
        }
    }
    let metadata = metadata.ok_or(ReportError::Format {
        line: 0,
        message: "missing run record".into(),
    })?;
    let mut models = Vec::new();
    for model_id in order {
        if let Some(message) = errors.remove(&model_id) {
            models.push(ModelResult::Failed { model_id, message });
            continue;
        }
        let recs = effects.remove(&model_id).unwrap_or_default();
        let line = recs.first().map(|r| r.0).unwrap_or(0);
        let estimates: Vec<EffectEstimate> = recs
            .iter()
            .map(|(_, r)| EffectEstimate {
                kind: r.kind,
                value: r.value,
                n: r.n,
                changed: r.changed,
                model_id: r.model_id.clone(),
            })
            .collect();
        let profile = ModelEffectProfile::from_estimates(estimates, accuracies.remove(&model_id).unwrap_or_default())
            .map_err(|e| ReportError::Format {
            line,
            message: format!("model {model_id}: {e}"),
        })?;
        for (line, r) in &recs {
            let (ratio, delta) = (profile.ratio(r.axis), profile.delta(r.axis));
            if r.ratio != ratio || r.delta != delta {
                return Err(ReportError::Format {
                    line: *line,
                    message: format!("stored ratio/delta for {model_id} disagree with the stored estimates"),
                });
            }
        }
        models.push(ModelResult::Profile(profile));
    }
    Ok(RunResults { metadata, models })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Table,
    Csv,
    Json,
}

impl ReportFormat {
    pub fn extension(self) -> &'static str {
        match self {
            ReportFormat::Table => "txt",
            ReportFormat::Csv => "csv",
            ReportFormat::Json => "json",
        }
    }
}

impl fmt::Display for ReportFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ReportFormat::Table => "table",
            ReportFormat::Csv => "csv",
            ReportFormat::Json => "json",
        })
    }
}

impl FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "table" | "plain" => Ok(ReportFormat::Table),
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            other => Err(format!("unknown report format {other:?}")),
        }
    }
}

pub fn fmt3(v: f64) -> String {
    format!("{v:.3}")
}

pub fn fmt_ratio(r: Option<f64>) -> String {
    r.map(fmt3).unwrap_or_else(|| UNDEFINED_RATIO.to_string())
}

pub fn render_report(results: &RunResults, format: ReportFormat) -> Result<String, ReportError> {
    if results.models.is_empty() {
        return Err(ReportError::Empty);
    }
    Ok(match format {
        ReportFormat::Table => render_table(results),
        ReportFormat::Csv => render_csv(results)?,
        ReportFormat::Json => render_json(results)?,
    })
}

/// Column-aligned text table; the first column is left-aligned, the rest
/// right-aligned.
pub fn text_table(headers: &[&str], rows: &[Vec<String>]) -> String {
    let width = |s: &str| s.chars().count();
    let mut widths: Vec<usize> = headers.iter().map(|h| width(h)).collect();
    for row in rows {
        for (i, cell) in row.iter().enumerate() {
            widths[i] = widths[i].max(width(cell));
        }
    }
    let line = |cells: Vec<&str>| -> String {
        let mut out = String::new();
        for (i, cell) in cells.iter().enumerate() {
            let pad = " ".repeat(widths[i] - width(cell));
            if i == 0 {
                out.push_str(cell);
                out.push_str(&pad);
            } else {
                out.push_str("  ");
                out.push_str(&pad);
                out.push_str(cell);
            }
        }
        out.trim_end().to_string() + "\n"
    };
    let mut out = line(headers.to_vec());
    let total: usize = widths.iter().sum::<usize>() + 2 * (widths.len() - 1);
    out.push_str(&"-".repeat(total));
    out.push('\n');
    for row in rows {
        out.push_str(&line(row.iter().map(String::as_str).collect()));
    }
    out
}

/// Intervention schemas with realized pair counts.
pub fn render_schema_summary(sets: &[SetSummary]) -> String {
    let rows: Vec<Vec<String>> = standard_schemas()
        .iter()
        .map(|s| {
            let summary = sets.iter().find(|x| x.schema_id == s.id).map(|x| x.summary);
            let mut row = vec![s.id.to_string(), s.target_effect.label().to_string()];
            row.extend(Variable::ALL.iter().map(|v| s.constraint(*v).symbol().to_string()));
            match summary {
                Some(b) => row.extend([
                    b.seeds_sampled.to_string(),
                    b.seeds_without_candidates.to_string(),
                    b.pair_count.to_string(),
                ]),
                None => row.extend(["-".into(), "-".into(), "-".into()]),
            }
            row
        })
        .collect();
    text_table(
        &[
            "Set",
            "Target",
            "C",
            "W",
            "M",
            "R",
            "G",
            "Seeds",
            "No candidates",
            "Pairs",
        ],
        &rows,
    )
}

fn axis_rows(profiles: &[&ModelEffectProfile], axis: Axis) -> Vec<Vec<String>> {
    profiles
        .iter()
        .map(|p| {
            let (dce, tce) = match axis {
                Axis::Context => (&p.context_dce, &p.context_tce),
                Axis::WordPair => (&p.word_dce, &p.word_tce),
            };
            vec![
                p.model_id.clone(),
                fmt3(dce.value),
                fmt3(tce.value),
                fmt_ratio(p.ratio(axis)),
                fmt3(p.delta(axis)),
            ]
        })
        .collect()
}

fn render_table(results: &RunResults) -> String {
    let m = &results.metadata;
    let mut out = String::new();
    let _ = writeln!(
        out,
        "Run: rng_seed {}, seed_count {}, pairing {}, hard labels {}",
        m.rng_seed, m.seed_count, m.pairing, m.hard_label_rule
    );
    let _ = writeln!(
        out,
        "Dataset: {} contexts, {} word pairs, {} examples\n",
        m.dataset.contexts, m.dataset.word_pairs, m.dataset.examples
    );
    out.push_str("Intervention sets\n");
    out.push_str(&render_schema_summary(&m.interventions));

    let profiles = results.profiles();
    if !profiles.is_empty() {
        out.push_str("\nResults for insertion interventions\n");
        out.push_str(&text_table(
            &["Model", "DCE(T→Y)", "TCE(W on Y)", "TCE/DCE Ratio", "Delta"],
            &axis_rows(&profiles, Axis::WordPair),
        ));
        out.push_str("\nResults for context interventions\n");
        out.push_str(&text_table(
            &["Model", "DCE(S→Y)", "TCE(C on Y)", "TCE/DCE Ratio", "Delta"],
            &axis_rows(&profiles, Axis::Context),
        ));
    }

    let datasets = accuracy_datasets(&profiles);
    if !datasets.is_empty() {
        out.push_str("\nBenchmark evaluation (2 class accuracy)\n");
        let mut headers = vec!["Model"];
        headers.extend(datasets.iter().map(String::as_str));
        let rows: Vec<Vec<String>> = profiles
            .iter()
            .map(|p| {
                let mut row = vec![p.model_id.clone()];
                row.extend(datasets.iter().map(|d| {
                    p.accuracies
                        .iter()
                        .find(|a| &a.dataset == d)
                        .map(|a| fmt3(a.accuracy))
                        .unwrap_or_else(|| "-".into())
                }));
                row
            })
            .collect();
        out.push_str(&text_table(&headers, &rows));
    }

    if let Some(cats) = results.categorization() {
        out.push_str("\nQualitative comparison\n");
        let rows: Vec<Vec<String>> = profiles
            .iter()
            .map(|p| {
                let c = &cats[&p.model_id];
                vec![
                    p.model_id.clone(),
                    c.context_robustness.to_string(),
                    c.context_sensitivity.to_string(),
                    c.word_robustness.to_string(),
                    c.word_sensitivity.to_string(),
                ]
            })
            .collect();
        out.push_str(&text_table(
            &[
                "Model",
                "Context robustness",
                "Context sensitivity",
                "Word-pair robustness",
                "Word-pair sensitivity",
            ],
            &rows,
        ));
        let _ = writeln!(out, "{BINNING_NOTE}");
    }

    let failures: Vec<_> = results
        .models
        .iter()
        .filter_map(|m| match m {
            ModelResult::Failed { model_id, message } => Some((model_id, message)),
            ModelResult::Profile(_) => None,
        })
        .collect();
    if !failures.is_empty() {
        out.push_str("\nFailed models\n");
        for (model_id, message) in failures {
            let _ = writeln!(out, "{model_id}: {message}");
        }
    }
    out
}

fn accuracy_datasets(profiles: &[&ModelEffectProfile]) -> Vec<String> {
    let mut names: Vec<String> = Vec::new();
    for p in profiles {
        for a in &p.accuracies {
            if !names.contains(&a.dataset) {
                names.push(a.dataset.clone());
            }
        }
    }
    names
}

fn render_csv(results: &RunResults) -> Result<String, ReportError> {
    let cats = results.categorization();
    let mut w = csv::Writer::from_writer(Vec::new());
    let header = [
        "model_id",
        "axis",
        "dce",
        "tce",
        "ratio",
        "delta",
        "dce_n",
        "tce_n",
        "robustness",
        "sensitivity",
        "error",
    ];
    let csv_err = |e: csv::Error| io::Error::other(e.to_string());
    w.write_record(header).map_err(csv_err)?;
    for m in &results.models {
        match m {
            ModelResult::Profile(p) => {
                for axis in [Axis::WordPair, Axis::Context] {
                    let (dce, tce) = match axis {
                        Axis::Context => (&p.context_dce, &p.context_tce),
                        Axis::WordPair => (&p.word_dce, &p.word_tce),
                    };
                    let (rob, sens) = match cats.as_ref().map(|c| c[&p.model_id]) {
                        Some(c) => match axis {
                            Axis::Context => (c.context_robustness.to_string(), c.context_sensitivity.to_string()),
                            Axis::WordPair => (c.word_robustness.to_string(), c.word_sensitivity.to_string()),
                        },
                        None => (String::new(), String::new()),
                    };
                    let axis_name = match axis {
                        Axis::Context => "context",
                        Axis::WordPair => "word_pair",
                    };
                    w.write_record([
                        p.model_id.as_str(),
                        axis_name,
                        &fmt3(dce.value),
                        &fmt3(tce.value),
                        &fmt_ratio(p.ratio(axis)),
                        &fmt3(p.delta(axis)),
                        &dce.n.to_string(),
                        &tce.n.to_string(),
                        &rob,
                        &sens,
                        "",
                    ])
                    .map_err(csv_err)?;
                }
            }
            ModelResult::Failed { model_id, message } => {
                w.write_record([model_id.as_str(), "", "", "", "", "", "", "", "", "", message.as_str()])
                    .map_err(csv_err)?;
            }
        }
    }
    let bytes = w.into_inner().map_err(|e| io::Error::other(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

#[derive(Serialize)]
struct JsonAxis {
    dce: f64,
    tce: f64,
    dce_n: usize,
    tce_n: usize,
    ratio: Option<f64>,
    ratio_display: String,
    delta: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    robustness: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    sensitivity: Option<String>,
}

#[derive(Serialize)]
struct JsonModel<'a> {
    model_id: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    context: Option<JsonAxis>,
    #[serde(skip_serializing_if = "Option::is_none")]
    word_pair: Option<JsonAxis>,
    #[serde(skip_serializing_if = "<[_]>::is_empty")]
    accuracies: &'a [AccuracyEntry],
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<&'a str>,
}

#[derive(Serialize)]
struct JsonReport<'a> {
    metadata: &'a RunMetadata,
    models: Vec<JsonModel<'a>>,
}

fn render_json(results: &RunResults) -> Result<String, ReportError> {
    let cats = results.categorization();
    let axis = |p: &ModelEffectProfile, axis: Axis| {
        let (dce, tce) = match axis {
            Axis::Context => (&p.context_dce, &p.context_tce),
            Axis::WordPair => (&p.word_dce, &p.word_tce),
        };
        let cat = cats.as_ref().map(|c| c[&p.model_id]);
        let (robustness, sensitivity) = match (cat, axis) {
            (Some(c), Axis::Context) => (Some(c.context_robustness), Some(c.context_sensitivity)),
            (Some(c), Axis::WordPair) => (Some(c.word_robustness), Some(c.word_sensitivity)),
            (None, _) => (None, None),
        };
        let (ratio, delta) = ratio_delta_values(tce.value, dce.value);
        JsonAxis {
            dce: dce.value,
            tce: tce.value,
            dce_n: dce.n,
            tce_n: tce.n,
            ratio,
            ratio_display: fmt_ratio(ratio),
            delta,
            robustness: robustness.map(|b| b.to_string()),
            sensitivity: sensitivity.map(|b| b.to_string()),
        }
    };
    let models = results
        .models
        .iter()
        .map(|m| match m {
            ModelResult::Profile(p) => JsonModel {
                model_id: &p.model_id,
                context: Some(axis(p, Axis::Context)),
                word_pair: Some(axis(p, Axis::WordPair)),
                accuracies: &p.accuracies,
                error: None,
            },
            ModelResult::Failed { model_id, message } => JsonModel {
                model_id,
                context: None,
                word_pair: None,
                accuracies: &[],
                error: Some(message),
            },
        })
        .collect();
    let mut s = serde_json::to_string_pretty(&JsonReport {
        metadata: &results.metadata,
        models,
    })
    .map_err(io::Error::from)?;
    s.push('\n');
    Ok(s)
}

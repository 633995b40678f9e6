//! Loading, validation and summary statistics for NLI-XY style datasets.
//!
//! Two line-delimited JSON layouts are accepted:
//!
//! * `components`: a contexts file with records `{id, template, monotonicity}`
//!   and a word-pairs file with records `{id, premise_word, hypothesis_word,
//!   relation}`. The examples are the full cross product.
//! * `flat`: one file of `{context_id, template, monotonicity, premise_word,
//!   hypothesis_word, relation}` rows, optionally with `pair_id` and `gold`.
//!   The examples are exactly the listed rows.
//!
//! Gold labels are never read from input; a `gold` field that disagrees with
//! the recomputed label produces a warning.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::natlog::{
    gold_label, render_shared, to_two_class, ConceptRelation, ContextTemplate, Label2, Label3, Monotonicity,
    NatlogError, NliXyExample, WordPair,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetFormat {
    Components,
    Flat,
}

impl FromStr for DatasetFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "components" => Ok(DatasetFormat::Components),
            "flat" => Ok(DatasetFormat::Flat),
            other => Err(format!("unknown dataset format {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub contexts: Vec<Arc<ContextTemplate>>,
    pub word_pairs: Vec<Arc<WordPair>>,
    pub examples: Vec<NliXyExample>,
}

impl Dataset {
    pub fn empty() -> Self {
        Dataset {
            contexts: Vec::new(),
            word_pairs: Vec::new(),
            examples: Vec::new(),
        }
    }

    /// Every context combined with every word pair, context-major.
    pub fn cross_product(contexts: Vec<ContextTemplate>, word_pairs: Vec<WordPair>) -> Result<Self, NatlogError> {
        let contexts: Vec<_> = contexts.into_iter().map(Arc::new).collect();
        let word_pairs: Vec<_> = word_pairs.into_iter().map(Arc::new).collect();
        let mut examples = Vec::with_capacity(contexts.len() * word_pairs.len());
        for c in &contexts {
            for w in &word_pairs {
                examples.push(render_shared(c.clone(), w.clone())?);
            }
        }
        Ok(Dataset {
            contexts,
            word_pairs,
            examples,
        })
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    /// Looks up an example by (context id, word pair id).
    pub fn index(&self) -> HashMap<(&str, &str), usize> {
        let mut index = HashMap::with_capacity(self.examples.len());
        for (i, n) in self.examples.iter().enumerate() {
            index.entry(n.key()).or_insert(i);
        }
        index
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IssueKind {
    Parse,
    MissingField,
    UnknownField,
    UnknownTag,
    UnsupportedMonotonicity,
    PlaceholderCount,
    EmptyField,
    DuplicateId,
    DuplicateText,
    ConflictingRecord,
    DanglingReference,
    GoldMismatch,
    DuplicateRow,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Issue {
    pub locator: String,
    pub kind: IssueKind,
    pub message: String,
}

impl fmt::Display for Issue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: [{:?}] {}", self.locator, self.kind, self.message)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub errors: Vec<Issue>,
    pub warnings: Vec<Issue>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.errors.is_empty()
    }

    fn error(&mut self, locator: impl Into<String>, kind: IssueKind, message: impl Into<String>) {
        self.errors.push(Issue {
            locator: locator.into(),
            kind,
            message: message.into(),
        });
    }

    fn warn(&mut self, locator: impl Into<String>, kind: IssueKind, message: impl Into<String>) {
        self.warnings.push(Issue {
            locator: locator.into(),
            kind,
            message: message.into(),
        });
    }

    pub fn merge(&mut self, other: ValidationReport) {
        self.errors.extend(other.errors);
        self.warnings.extend(other.warnings);
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for e in &self.errors {
            out.push_str(&format!("error: {e}\n"));
        }
        for w in &self.warnings {
            out.push_str(&format!("warning: {w}\n"));
        }
        out.push_str(&format!(
            "{} errors, {} warnings\n",
            self.errors.len(),
            self.warnings.len()
        ));
        out
    }
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{source_name}:{line}: malformed record: {message}")]
    Parse {
        source_name: String,
        line: usize,
        message: String,
    },
    #[error("dataset failed validation with {} error(s); first: {}", .0.errors.len(), .0.errors.first().map(|e| e.to_string()).unwrap_or_default())]
    Validation(ValidationReport),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

#[derive(Debug, Clone, Copy, Default)]
pub struct LoadOptions {
    /// Read every word pair in the opposite direction (words swapped,
    /// relation conversed).
    pub swap_pair_orientation: bool,
}

/// A successfully loaded dataset with any non-fatal findings.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub dataset: Dataset,
    pub report: ValidationReport,
}

pub enum DatasetSource<'a> {
    Components {
        contexts: &'a mut dyn BufRead,
        word_pairs: &'a mut dyn BufRead,
    },
    Flat(&'a mut dyn BufRead),
}

/// Paths on disk for [`load_dataset_files`].
#[derive(Debug, Clone)]
pub enum DatasetPaths {
    Components { contexts: PathBuf, word_pairs: PathBuf },
    Flat(PathBuf),
}

pub fn load_dataset(source: DatasetSource<'_>, options: LoadOptions) -> Result<Loaded, DatasetError> {
    match source {
        DatasetSource::Components { contexts, word_pairs } => {
            load_components(contexts, "contexts", word_pairs, "word_pairs", options)
        }
        DatasetSource::Flat(rows) => load_flat(rows, "dataset", options),
    }
}

pub fn load_dataset_files(paths: &DatasetPaths, options: LoadOptions) -> Result<Loaded, DatasetError> {
    fn open(path: &Path) -> Result<BufReader<File>, DatasetError> {
        File::open(path).map(BufReader::new).map_err(|source| DatasetError::Io {
            path: path.to_path_buf(),
            source,
        })
    }
    fn name(path: &Path) -> String {
        path.file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| path.display().to_string())
    }
    match paths {
        DatasetPaths::Components { contexts, word_pairs } => {
            let mut c = open(contexts)?;
            let mut w = open(word_pairs)?;
            load_components(&mut c, &name(contexts), &mut w, &name(word_pairs), options)
        }
        DatasetPaths::Flat(path) => {
            let mut r = open(path)?;
            load_flat(&mut r, &name(path), options)
        }
    }
}

/// A record object with its 1-based line number.
type NumberedRecord = (usize, Map<String, Value>);

fn read_records(reader: &mut dyn BufRead, source_name: &str) -> Result<Vec<NumberedRecord>, DatasetError> {
    let mut records = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| DatasetError::Parse {
            source_name: source_name.to_string(),
            line: line_no,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let value: Value = serde_json::from_str(&line).map_err(|e| DatasetError::Parse {
            source_name: source_name.to_string(),
            line: line_no,
            message: e.to_string(),
        })?;
        match value {
            Value::Object(map) => records.push((line_no, map)),
            other => {
                return Err(DatasetError::Parse {
                    source_name: source_name.to_string(),
                    line: line_no,
                    message: format!("expected a JSON object, found {}", json_kind(&other)),
                })
            }
        }
    }
    Ok(records)
}

fn json_kind(v: &Value) -> &'static str {
    match v {
        Value::Null => "null",
        Value::Bool(_) => "a boolean",
        Value::Number(_) => "a number",
        Value::String(_) => "a string",
        Value::Array(_) => "an array",
        Value::Object(_) => "an object",
    }
}

struct RecordReader<'a> {
    source_name: &'a str,
    line: usize,
    map: &'a Map<String, Value>,
}

impl<'a> RecordReader<'a> {
    fn locator(&self) -> String {
        let id = ["id", "context_id", "pair_id"]
            .iter()
            .find_map(|k| self.map.get(*k).and_then(Value::as_str));
        match id {
            Some(id) => format!("{}:{} (id {id})", self.source_name, self.line),
            None => format!("{}:{}", self.source_name, self.line),
        }
    }

    fn required(&self, key: &str) -> Result<&'a str, DatasetError> {
        match self.map.get(key) {
            Some(Value::String(s)) => Ok(s),
            Some(other) => Err(self.parse_error(format!("field {key:?} must be a string, found {}", json_kind(other)))),
            None => Err(self.parse_error(format!("missing required field {key:?}"))),
        }
    }

    fn optional(&self, key: &str) -> Result<Option<&'a str>, DatasetError> {
        match self.map.get(key) {
            None | Some(Value::Null) => Ok(None),
            Some(_) => self.required(key).map(Some),
        }
    }

    fn parse_error(&self, message: String) -> DatasetError {
        DatasetError::Parse {
            source_name: self.source_name.to_string(),
            line: self.line,
            message,
        }
    }

    fn warn_unknown(&self, known: &[&str], report: &mut ValidationReport) {
        for key in self.map.keys() {
            if !known.contains(&key.as_str()) {
                report.warn(
                    self.locator(),
                    IssueKind::UnknownField,
                    format!("ignoring unknown field {key:?}"),
                );
            }
        }
    }
}

fn natlog_issue(err: &NatlogError) -> IssueKind {
    match err {
        NatlogError::Placeholder { .. } => IssueKind::PlaceholderCount,
        NatlogError::UnknownMonotonicity(_) | NatlogError::UnknownRelation(_) | NatlogError::UnknownLabel(_) => {
            IssueKind::UnknownTag
        }
        NatlogError::NeitherMonotonicity => IssueKind::UnsupportedMonotonicity,
        NatlogError::EmptyField(_) => IssueKind::EmptyField,
    }
}

/// One labelled premise/hypothesis pair from an external benchmark.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledPair {
    pub premise: String,
    pub hypothesis: String,
    pub gold: Label2,
}

/// Reads benchmark JSONL records `{"premise", "hypothesis", "label"}`.
/// Three-class labels are collapsed to two classes.
pub fn load_benchmark<R: BufRead>(input: R, source_name: &str) -> Result<Vec<LabeledPair>, DatasetError> {
    #[derive(Deserialize)]
    struct Row {
        premise: String,
        hypothesis: String,
        label: String,
    }
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let parse_err = |message: String| DatasetError::Parse {
            source_name: source_name.to_string(),
            line: i + 1,
            message,
        };
        let line = line.map_err(|e| parse_err(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let row: Row = serde_json::from_str(&line).map_err(|e| parse_err(e.to_string()))?;
        let gold = parse_label(&row.label).map_err(|e| parse_err(e.to_string()))?;
        out.push(LabeledPair {
            premise: row.premise,
            hypothesis: row.hypothesis,
            gold,
        });
    }
    Ok(out)
}

/// Parses a gold label name as it may appear in input files.
pub fn parse_label(s: &str) -> Result<Label2, NatlogError> {
    match s.trim().to_ascii_lowercase().replace('_', "-").as_str() {
        "entailment" => Ok(Label2::Entailment),
        "non-entailment" | "not-entailment" => Ok(Label2::NonEntailment),
        "neutral" => Ok(to_two_class(Label3::Neutral)),
        "contradiction" => Ok(to_two_class(Label3::Contradiction)),
        _ => Err(NatlogError::UnknownLabel(s.to_string())),
    }
}

fn parse_context(
    rec: &RecordReader<'_>,
    id_key: &str,
    report: &mut ValidationReport,
) -> Result<Option<ContextTemplate>, DatasetError> {
    let id = rec.required(id_key)?;
    let template = rec.required("template")?;
    let mono = rec.required("monotonicity")?;
    let monotonicity = match mono.parse::<Monotonicity>() {
        Ok(m) => m,
        Err(e) => {
            report.error(rec.locator(), natlog_issue(&e), e.to_string());
            return Ok(None);
        }
    };
    match ContextTemplate::new(id, template, monotonicity) {
        Ok(c) => Ok(Some(c)),
        Err(e) => {
            report.error(rec.locator(), natlog_issue(&e), e.to_string());
            Ok(None)
        }
    }
}

fn parse_pair(
    rec: &RecordReader<'_>,
    id: String,
    options: LoadOptions,
    report: &mut ValidationReport,
) -> Result<Option<WordPair>, DatasetError> {
    let premise_word = rec.required("premise_word")?;
    let hypothesis_word = rec.required("hypothesis_word")?;
    let relation = match rec.required("relation")?.parse::<ConceptRelation>() {
        Ok(r) => r,
        Err(e) => {
            report.error(rec.locator(), natlog_issue(&e), e.to_string());
            return Ok(None);
        }
    };
    match WordPair::new(id, premise_word, hypothesis_word, relation) {
        Ok(w) if options.swap_pair_orientation => Ok(Some(w.swapped())),
        Ok(w) => Ok(Some(w)),
        Err(e) => {
            report.error(rec.locator(), natlog_issue(&e), e.to_string());
            Ok(None)
        }
    }
}

fn finish(dataset: Dataset, mut report: ValidationReport) -> Result<Loaded, DatasetError> {
    report.merge(validate_dataset(&dataset));
    if report.is_ok() {
        Ok(Loaded { dataset, report })
    } else {
        Err(DatasetError::Validation(report))
    }
}

fn load_components(
    contexts_src: &mut dyn BufRead,
    contexts_name: &str,
    pairs_src: &mut dyn BufRead,
    pairs_name: &str,
    options: LoadOptions,
) -> Result<Loaded, DatasetError> {
    const CONTEXT_FIELDS: &[&str] = &["id", "template", "monotonicity"];
    const PAIR_FIELDS: &[&str] = &["id", "premise_word", "hypothesis_word", "relation"];

    let mut report = ValidationReport::default();
    let mut contexts = Vec::new();
    for (line, map) in read_records(contexts_src, contexts_name)? {
        let rec = RecordReader {
            source_name: contexts_name,
            line,
            map: &map,
        };
        rec.warn_unknown(CONTEXT_FIELDS, &mut report);
        if let Some(c) = parse_context(&rec, "id", &mut report)? {
            contexts.push(c);
        }
    }
    let mut pairs = Vec::new();
    for (line, map) in read_records(pairs_src, pairs_name)? {
        let rec = RecordReader {
            source_name: pairs_name,
            line,
            map: &map,
        };
        rec.warn_unknown(PAIR_FIELDS, &mut report);
        let id = rec.required("id")?.to_string();
        if let Some(w) = parse_pair(&rec, id, options, &mut report)? {
            pairs.push(w);
        }
    }
    if !report.is_ok() {
        return Err(DatasetError::Validation(report));
    }
    let dataset = Dataset::cross_product(contexts, pairs).map_err(|e| {
        let mut r = report.clone();
        r.error("dataset", natlog_issue(&e), e.to_string());
        DatasetError::Validation(r)
    })?;
    finish(dataset, report)
}

fn load_flat(rows: &mut dyn BufRead, name: &str, options: LoadOptions) -> Result<Loaded, DatasetError> {
    const FLAT_FIELDS: &[&str] = &[
        "context_id",
        "template",
        "monotonicity",
        "premise_word",
        "hypothesis_word",
        "relation",
        "pair_id",
        "gold",
    ];

    let mut report = ValidationReport::default();
    let mut contexts: Vec<Arc<ContextTemplate>> = Vec::new();
    let mut context_index: HashMap<String, usize> = HashMap::new();
    let mut pairs: Vec<Arc<WordPair>> = Vec::new();
    let mut pair_index: HashMap<String, usize> = HashMap::new();
    // (context index, pair index, locator, declared gold)
    let mut rows_parsed: Vec<(usize, usize, String, Option<Label2>)> = Vec::new();

    for (line, map) in read_records(rows, name)? {
        let rec = RecordReader {
            source_name: name,
            line,
            map: &map,
        };
        rec.warn_unknown(FLAT_FIELDS, &mut report);
        let context = parse_context(&rec, "context_id", &mut report)?;
        let pair_id = match rec.optional("pair_id")? {
            Some(id) => id.to_string(),
            None => format!(
                "{}=>{}",
                rec.required("premise_word")?,
                rec.required("hypothesis_word")?
            ),
        };
        let pair = parse_pair(&rec, pair_id, options, &mut report)?;
        let declared_gold = match rec.optional("gold")? {
            Some(g) => match parse_label(g) {
                Ok(l) => Some(l),
                Err(e) => {
                    report.warn(
                        rec.locator(),
                        IssueKind::UnknownTag,
                        format!("ignoring gold field: {e}"),
                    );
                    None
                }
            },
            None => None,
        };
        let (Some(context), Some(pair)) = (context, pair) else {
            continue;
        };

        let ci = match context_index.get(&context.id) {
            Some(&ci) => {
                if *contexts[ci] != context {
                    report.error(
                        rec.locator(),
                        IssueKind::ConflictingRecord,
                        format!(
                            "context {:?} redefined with a different template or monotonicity",
                            context.id
                        ),
                    );
                    continue;
                }
                ci
            }
            None => {
                context_index.insert(context.id.clone(), contexts.len());
                contexts.push(Arc::new(context));
                contexts.len() - 1
            }
        };
        let pi = match pair_index.get(&pair.id) {
            Some(&pi) => {
                if *pairs[pi] != pair {
                    report.error(
                        rec.locator(),
                        IssueKind::ConflictingRecord,
                        format!("word pair {:?} redefined with different words or relation", pair.id),
                    );
                    continue;
                }
                pi
            }
            None => {
                pair_index.insert(pair.id.clone(), pairs.len());
                pairs.push(Arc::new(pair));
                pairs.len() - 1
            }
        };
        rows_parsed.push((ci, pi, rec.locator(), declared_gold));
    }
    if !report.is_ok() {
        return Err(DatasetError::Validation(report));
    }

    let mut seen = HashSet::new();
    let mut examples = Vec::with_capacity(rows_parsed.len());
    for (ci, pi, locator, declared) in rows_parsed {
        let n = render_shared(contexts[ci].clone(), pairs[pi].clone()).expect("components validated during parsing");
        if let Some(g) = declared {
            if g != n.gold() {
                report.warn(
                    locator.clone(),
                    IssueKind::GoldMismatch,
                    format!("file says {g}, recomputed gold is {}", n.gold()),
                );
            }
        }
        if !seen.insert((ci, pi)) {
            report.warn(
                locator,
                IssueKind::DuplicateRow,
                "row repeats an earlier (context, word pair) combination",
            );
        }
        examples.push(n);
    }
    finish(
        Dataset {
            contexts,
            word_pairs: pairs,
            examples,
        },
        report,
    )
}

/// Lists every invariant violation in `d` without modifying it.
pub fn validate_dataset(d: &Dataset) -> ValidationReport {
    let mut report = ValidationReport::default();

    let mut context_ids: HashMap<&str, Vec<&ContextTemplate>> = HashMap::new();
    let mut context_texts: HashMap<&str, &str> = HashMap::new();
    for c in &d.contexts {
        let loc = format!("context {:?}", c.id);
        let same_id = context_ids.entry(&c.id).or_default();
        same_id.push(c);
        if same_id.len() > 1 {
            report.error(&loc, IssueKind::DuplicateId, format!("duplicate context id {:?}", c.id));
        }
        if let Err(e) = c.check() {
            report.error(&loc, natlog_issue(&e), e.to_string());
        }
        match context_texts.get(c.template_text.as_str()) {
            Some(other) if *other != c.id => report.warn(
                &loc,
                IssueKind::DuplicateText,
                format!("template text identical to context {other:?}"),
            ),
            Some(_) => {}
            None => {
                context_texts.insert(&c.template_text, &c.id);
            }
        }
    }

    let mut pair_ids: HashMap<&str, Vec<&WordPair>> = HashMap::new();
    let mut pair_texts: HashMap<(&str, &str), &str> = HashMap::new();
    for w in &d.word_pairs {
        let loc = format!("word pair {:?}", w.id);
        let same_id = pair_ids.entry(&w.id).or_default();
        same_id.push(w);
        if same_id.len() > 1 {
            report.error(
                &loc,
                IssueKind::DuplicateId,
                format!("duplicate word pair id {:?}", w.id),
            );
        }
        if let Err(e) = w.check() {
            report.error(&loc, natlog_issue(&e), e.to_string());
        }
        let key = (w.premise_word.as_str(), w.hypothesis_word.as_str());
        match pair_texts.get(&key) {
            Some(other) if *other != w.id => report.warn(
                &loc,
                IssueKind::DuplicateText,
                format!("words identical to word pair {other:?}"),
            ),
            Some(_) => {}
            None => {
                pair_texts.insert(key, &w.id);
            }
        }
    }

    for (i, n) in d.examples.iter().enumerate() {
        let loc = format!("example {i}");
        match context_ids.get(n.context().id.as_str()) {
            Some(cs) if cs.contains(&n.context()) => {}
            _ => report.error(
                &loc,
                IssueKind::DanglingReference,
                format!("context {:?} is not in the context list", n.context().id),
            ),
        }
        match pair_ids.get(n.word_pair().id.as_str()) {
            Some(ws) if ws.contains(&n.word_pair()) => {}
            _ => report.error(
                &loc,
                IssueKind::DanglingReference,
                format!("word pair {:?} is not in the word pair list", n.word_pair().id),
            ),
        }
        if n.gold() != gold_label(n.monotonicity(), n.relation()) {
            report.error(&loc, IssueKind::GoldMismatch, "stored gold differs from the gold table");
        }
    }
    report
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub contexts: usize,
    pub word_pairs: usize,
    pub examples: usize,
    pub by_monotonicity: BTreeMap<Monotonicity, usize>,
    pub by_relation: BTreeMap<ConceptRelation, usize>,
    pub by_gold: BTreeMap<Label2, usize>,
}

pub fn dataset_stats(d: &Dataset) -> DatasetStats {
    let mut stats = DatasetStats {
        contexts: d.contexts.len(),
        word_pairs: d.word_pairs.len(),
        examples: d.examples.len(),
        ..Default::default()
    };
    for m in Monotonicity::ALL {
        stats.by_monotonicity.insert(m, 0);
    }
    for r in ConceptRelation::ALL {
        stats.by_relation.insert(r, 0);
    }
    for g in Label2::ALL {
        stats.by_gold.insert(g, 0);
    }
    for n in &d.examples {
        *stats.by_monotonicity.entry(n.monotonicity()).or_default() += 1;
        *stats.by_relation.entry(n.relation()).or_default() += 1;
        *stats.by_gold.entry(n.gold()).or_default() += 1;
    }
    stats
}

impl DatasetStats {
    pub fn render(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("contexts    {}\n", self.contexts));
        out.push_str(&format!("word pairs  {}\n", self.word_pairs));
        out.push_str(&format!("examples    {}\n", self.examples));
        for (m, n) in &self.by_monotonicity {
            out.push_str(&format!("  monotonicity {:<8} {n}\n", m.tag()));
        }
        for (r, n) in &self.by_relation {
            out.push_str(&format!("  relation     {:<8} {n}\n", r.tag()));
        }
        for (g, n) in &self.by_gold {
            out.push_str(&format!("  gold         {:<14} {n}\n", g.name()));
        }
        out
    }
}

#[derive(Serialize)]
struct ContextRecord<'a> {
    id: &'a str,
    template: &'a str,
    monotonicity: Monotonicity,
}

#[derive(Serialize)]
struct PairRecord<'a> {
    id: &'a str,
    premise_word: &'a str,
    hypothesis_word: &'a str,
    relation: ConceptRelation,
}

#[derive(Serialize)]
struct FlatRecord<'a> {
    context_id: &'a str,
    template: &'a str,
    monotonicity: Monotonicity,
    pair_id: &'a str,
    premise_word: &'a str,
    hypothesis_word: &'a str,
    relation: ConceptRelation,
}

fn write_line<W: Write, T: Serialize>(out: &mut W, record: &T) -> io::Result<()> {
    serde_json::to_writer(&mut *out, record)?;
    out.write_all(b"\n")
}

pub fn write_components<W1: Write, W2: Write>(d: &Dataset, contexts: &mut W1, word_pairs: &mut W2) -> io::Result<()> {
    for c in &d.contexts {
        write_line(
            contexts,
            &ContextRecord {
                id: &c.id,
                template: &c.template_text,
                monotonicity: c.monotonicity,
            },
        )?;
    }
    for w in &d.word_pairs {
        write_line(
            word_pairs,
            &PairRecord {
                id: &w.id,
                premise_word: &w.premise_word,
                hypothesis_word: &w.hypothesis_word,
                relation: w.relation,
            },
        )?;
    }
    Ok(())
}

pub fn write_flat<W: Write>(d: &Dataset, out: &mut W) -> io::Result<()> {
    for n in &d.examples {
        let c = n.context();
        let w = n.word_pair();
        write_line(
            out,
            &FlatRecord {
                context_id: &c.id,
                template: &c.template_text,
                monotonicity: c.monotonicity,
                pair_id: &w.id,
                premise_word: &w.premise_word,
                hypothesis_word: &w.hypothesis_word,
                relation: w.relation,
            },
        )?;
    }
    Ok(())
}

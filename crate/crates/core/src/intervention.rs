//! Intervention schemas and construction of (before, after) example pairs.

use std::collections::HashMap;
use std::fmt;
use std::io::{self, BufRead, Write};
use std::str::FromStr;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::Dataset;
use crate::effects::EffectKind;
use crate::natlog::NliXyExample;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VariableConstraint {
    MustEqual,
    MustDiffer,
}

impl VariableConstraint {
    pub fn holds<T: PartialEq + ?Sized>(self, a: &T, b: &T) -> bool {
        match self {
            VariableConstraint::MustEqual => a == b,
            VariableConstraint::MustDiffer => a != b,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            VariableConstraint::MustEqual => "=",
            VariableConstraint::MustDiffer => "≠",
        }
    }
}

/// The five example variables an intervention schema constrains.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Variable {
    C,
    W,
    M,
    R,
    G,
}

impl Variable {
    pub const ALL: [Variable; 5] = [Variable::C, Variable::W, Variable::M, Variable::R, Variable::G];
}

impl fmt::Display for Variable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SchemaId {
    I0,
    I1,
    I2,
    I3,
}

impl SchemaId {
    pub const ALL: [SchemaId; 4] = [SchemaId::I0, SchemaId::I1, SchemaId::I2, SchemaId::I3];

    pub fn schema(self) -> InterventionSchema {
        standard_schemas()[self as usize]
    }
}

impl fmt::Display for SchemaId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

impl FromStr for SchemaId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "I0" => Ok(SchemaId::I0),
            "I1" => Ok(SchemaId::I1),
            "I2" => Ok(SchemaId::I2),
            "I3" => Ok(SchemaId::I3),
            other => Err(format!("unknown schema id {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InterventionSchema {
    pub id: SchemaId,
    pub constraint_c: VariableConstraint,
    pub constraint_w: VariableConstraint,
    pub constraint_m: VariableConstraint,
    pub constraint_r: VariableConstraint,
    pub constraint_g: VariableConstraint,
    pub target_effect: EffectKind,
}

impl InterventionSchema {
    pub fn constraint(&self, v: Variable) -> VariableConstraint {
        match v {
            Variable::C => self.constraint_c,
            Variable::W => self.constraint_w,
            Variable::M => self.constraint_m,
            Variable::R => self.constraint_r,
            Variable::G => self.constraint_g,
        }
    }

    /// An equal context forces an equal monotonicity; an equal word pair
    /// forces an equal relation.
    pub fn is_consistent(&self) -> bool {
        use VariableConstraint::*;
        !(self.constraint_c == MustEqual && self.constraint_m == MustDiffer)
            && !(self.constraint_w == MustEqual && self.constraint_r == MustDiffer)
    }

    /// Constraint row as `(C≠, W=, M≠, R=, G≠)`.
    pub fn constraint_row(&self) -> String {
        let cells: Vec<String> = Variable::ALL
            .iter()
            .map(|v| format!("{v}{}", self.constraint(*v).symbol()))
            .collect();
        format!("({})", cells.join(", "))
    }
}

/// The four schemas I0..I3, in order.
pub fn standard_schemas() -> [InterventionSchema; 4] {
    use VariableConstraint::{MustDiffer as D, MustEqual as E};
    let schema = |id, c, w, m, r, g, target_effect| InterventionSchema {
        id,
        constraint_c: c,
        constraint_w: w,
        constraint_m: m,
        constraint_r: r,
        constraint_g: g,
        target_effect,
    };
    [
        schema(SchemaId::I0, D, E, D, E, D, EffectKind::TceContext),
        schema(SchemaId::I1, E, D, E, D, D, EffectKind::TceWordPair),
        schema(SchemaId::I2, D, E, E, E, E, EffectKind::DceContextSurface),
        schema(SchemaId::I3, E, D, E, E, E, EffectKind::DceWordSurface),
    ]
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InterventionPair {
    pub before: NliXyExample,
    pub after: NliXyExample,
    pub schema_id: SchemaId,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PairCheck {
    pub violations: Vec<Variable>,
}

impl PairCheck {
    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Whether `(before, after)` satisfies each constraint of `schema`.
/// Contexts and word pairs compare by id; M, R and G by value.
pub fn check_examples(before: &NliXyExample, after: &NliXyExample, schema: &InterventionSchema) -> PairCheck {
    let holds = |v: Variable| -> bool {
        let c = schema.constraint(v);
        match v {
            Variable::C => c.holds(before.context().id.as_str(), after.context().id.as_str()),
            Variable::W => c.holds(before.word_pair().id.as_str(), after.word_pair().id.as_str()),
            Variable::M => c.holds(&before.monotonicity(), &after.monotonicity()),
            Variable::R => c.holds(&before.relation(), &after.relation()),
            Variable::G => c.holds(&before.gold(), &after.gold()),
        }
    };
    PairCheck {
        violations: Variable::ALL.into_iter().filter(|v| !holds(*v)).collect(),
    }
}

pub fn verify_pair(pair: &InterventionPair, schema: &InterventionSchema) -> PairCheck {
    check_examples(&pair.before, &pair.after, schema)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pairing {
    /// One pair per schema-conforming candidate of every seed.
    #[default]
    AllCandidates,
    /// One uniformly chosen candidate per seed.
    OnePerSeed,
}

impl FromStr for Pairing {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.replace('-', "_").as_str() {
            "all_candidates" => Ok(Pairing::AllCandidates),
            "one_per_seed" => Ok(Pairing::OnePerSeed),
            other => Err(format!("unknown pairing mode {other:?}")),
        }
    }
}

impl fmt::Display for Pairing {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Pairing::AllCandidates => "all_candidates",
            Pairing::OnePerSeed => "one_per_seed",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BuildSummary {
    pub seeds_sampled: usize,
    pub seeds_without_candidates: usize,
    pub pair_count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InterventionSet {
    pub schema: InterventionSchema,
    pub pairs: Vec<InterventionPair>,
    pub seed_count_requested: usize,
    pub rng_seed: u64,
    pub pairing: Pairing,
    pub summary: BuildSummary,
}

impl InterventionSet {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

#[derive(Debug, Error)]
pub enum InterventionError {
    #[error("cannot build interventions over an empty dataset")]
    EmptyDataset,
    #[error("schema {0} is inconsistent: an equal variable must have equal derived attributes")]
    InvalidSchema(SchemaId),
    #[error("seed count must be at least 1")]
    ZeroSeedCount,
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Per-run RNG; distinct schemas get distinct streams from the same seed.
fn rng_for(rng_seed: u64, schema: SchemaId) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    rng.set_stream(schema as u64);
    rng
}

/// Indices of every example satisfying `schema` against `examples[seed]`.
/// Uses the shared-context or shared-pair index when the schema fixes one.
fn candidates(
    examples: &[NliXyExample],
    by_context: &HashMap<&str, Vec<usize>>,
    by_pair: &HashMap<&str, Vec<usize>>,
    schema: &InterventionSchema,
    seed: usize,
) -> Vec<usize> {
    let n = &examples[seed];
    let pool: Box<dyn Iterator<Item = usize> + '_> = if schema.constraint_c == VariableConstraint::MustEqual {
        Box::new(by_context[n.context().id.as_str()].iter().copied())
    } else if schema.constraint_w == VariableConstraint::MustEqual {
        Box::new(by_pair[n.word_pair().id.as_str()].iter().copied())
    } else {
        Box::new(0..examples.len())
    };
    pool.filter(|&j| check_examples(n, &examples[j], schema).ok()).collect()
}

pub fn build_intervention_set(
    d: &Dataset,
    schema: &InterventionSchema,
    seed_count: usize,
    rng_seed: u64,
    pairing: Pairing,
) -> Result<InterventionSet, InterventionError> {
    if d.examples.is_empty() {
        return Err(InterventionError::EmptyDataset);
    }
    if !schema.is_consistent() {
        return Err(InterventionError::InvalidSchema(schema.id));
    }
    if seed_count == 0 {
        return Err(InterventionError::ZeroSeedCount);
    }

    let examples = &d.examples;
    let mut rng = rng_for(rng_seed, schema.id);
    let amount = seed_count.min(examples.len());
    let seeds = index::sample(&mut rng, examples.len(), amount).into_vec();

    let mut by_context: HashMap<&str, Vec<usize>> = HashMap::new();
    let mut by_pair: HashMap<&str, Vec<usize>> = HashMap::new();
    for (i, n) in examples.iter().enumerate() {
        by_context.entry(n.context().id.as_str()).or_default().push(i);
        by_pair.entry(n.word_pair().id.as_str()).or_default().push(i);
    }

    let candidate_sets: Vec<Vec<usize>> = seeds
        .par_iter()
        .map(|&s| candidates(examples, &by_context, &by_pair, schema, s))
        .collect();

    let mut pairs = Vec::new();
    let mut seeds_without_candidates = 0;
    for (&seed, cands) in seeds.iter().zip(&candidate_sets) {
        if cands.is_empty() {
            seeds_without_candidates += 1;
            continue;
        }
        let chosen: &[usize] = match pairing {
            Pairing::AllCandidates => cands,
            Pairing::OnePerSeed => {
                let k = rng.random_range(0..cands.len());
                std::slice::from_ref(&cands[k])
            }
        };
        for &j in chosen {
            pairs.push(InterventionPair {
                before: examples[seed].clone(),
                after: examples[j].clone(),
                schema_id: schema.id,
            });
        }
    }
    let summary = BuildSummary {
        seeds_sampled: seeds.len(),
        seeds_without_candidates,
        pair_count: pairs.len(),
    };
    Ok(InterventionSet {
        schema: *schema,
        pairs,
        seed_count_requested: seed_count,
        rng_seed,
        pairing,
        summary,
    })
}

#[derive(Debug, Serialize, Deserialize)]
struct SetHeader {
    record: String,
    schema_id: SchemaId,
    target_effect: EffectKind,
    constraints: SchemaConstraints,
    rng_seed: u64,
    seed_count_requested: usize,
    pairing: Pairing,
    seeds_sampled: usize,
    seeds_without_candidates: usize,
    pair_count: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct SchemaConstraints {
    c: VariableConstraint,
    w: VariableConstraint,
    m: VariableConstraint,
    r: VariableConstraint,
    g: VariableConstraint,
}

#[derive(Debug, Serialize, Deserialize)]
struct ExampleRef {
    context_id: String,
    pair_id: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct PairRecord {
    schema_id: SchemaId,
    before: ExampleRef,
    after: ExampleRef,
}

fn example_ref(n: &NliXyExample) -> ExampleRef {
    ExampleRef {
        context_id: n.context().id.clone(),
        pair_id: n.word_pair().id.clone(),
    }
}

/// Header line followed by one line per pair.
pub fn write_set<W: Write>(set: &InterventionSet, out: &mut W) -> io::Result<()> {
    let s = &set.schema;
    let header = SetHeader {
        record: "header".into(),
        schema_id: s.id,
        target_effect: s.target_effect,
        constraints: SchemaConstraints {
            c: s.constraint_c,
            w: s.constraint_w,
            m: s.constraint_m,
            r: s.constraint_r,
            g: s.constraint_g,
        },
        rng_seed: set.rng_seed,
        seed_count_requested: set.seed_count_requested,
        pairing: set.pairing,
        seeds_sampled: set.summary.seeds_sampled,
        seeds_without_candidates: set.summary.seeds_without_candidates,
        pair_count: set.pairs.len(),
    };
    serde_json::to_writer(&mut *out, &header)?;
    out.write_all(b"\n")?;
    for p in &set.pairs {
        serde_json::to_writer(
            &mut *out,
            &PairRecord {
                schema_id: p.schema_id,
                before: example_ref(&p.before),
                after: example_ref(&p.after),
            },
        )?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Reads a set written by [`write_set`], resolving example references
/// against `d`. Every pair is re-verified against its schema.
pub fn read_set<R: BufRead>(input: R, d: &Dataset) -> Result<InterventionSet, InterventionError> {
    let fmt_err = |line: usize, message: String| InterventionError::Format { line, message };
    let index = d.index();
    let mut lines = input.lines().enumerate().filter(|(_, l)| match l {
        Ok(l) => !l.trim().is_empty(),
        Err(_) => true,
    });
    let (_, first) = lines.next().ok_or_else(|| fmt_err(1, "missing header record".into()))?;
    let header: SetHeader = serde_json::from_str(&first?).map_err(|e| fmt_err(1, e.to_string()))?;
    if header.record != "header" {
        return Err(fmt_err(1, "first record must be the header".into()));
    }
    let schema = header.schema_id.schema();
    let mut pairs = Vec::with_capacity(header.pair_count);
    for (i, line) in lines {
        let line_no = i + 1;
        let rec: PairRecord = serde_json::from_str(&line?).map_err(|e| fmt_err(line_no, e.to_string()))?;
        if rec.schema_id != schema.id {
            return Err(fmt_err(
                line_no,
                format!("pair belongs to {} inside a {} set", rec.schema_id, schema.id),
            ));
        }
        let resolve = |r: &ExampleRef| {
            index
                .get(&(r.context_id.as_str(), r.pair_id.as_str()))
                .map(|&i| d.examples[i].clone())
                .ok_or_else(|| fmt_err(line_no, format!("unknown example ({}, {})", r.context_id, r.pair_id)))
        };
        let pair = InterventionPair {
            before: resolve(&rec.before)?,
            after: resolve(&rec.after)?,
            schema_id: rec.schema_id,
        };
        let check = verify_pair(&pair, &schema);
        if !check.ok() {
            return Err(fmt_err(
                line_no,
                format!("pair violates {} on {:?}", schema.id, check.violations),
            ));
        }
        pairs.push(pair);
    }
    if pairs.len() != header.pair_count {
        return Err(fmt_err(
            0,
            format!("header announces {} pairs, found {}", header.pair_count, pairs.len()),
        ));
    }
    Ok(InterventionSet {
        schema,
        summary: BuildSummary {
            seeds_sampled: header.seeds_sampled,
            seeds_without_candidates: header.seeds_without_candidates,
            pair_count: pairs.len(),
        },
        pairs,
        seed_count_requested: header.seed_count_requested,
        rng_seed: header.rng_seed,
        pairing: header.pairing,
    })
}

//! Stepwise instruction sets, the statement corpus, and name handling.
//!
//! The knowledge base is a JSON array of records, each with exactly the
//! keys `name`, `steps`, `ground_truth`, `operations`. A record holds the
//! ordered diagnostic questions for one fallacy, the expected yes/no
//! answer for each question, and the and/or connective joining each
//! consecutive pair of step results.

use serde::{Deserialize, Serialize};
use std::collections::{HashMap, HashSet};
use std::fmt;
use thiserror::Error;

/// A binary step answer. The domain is closed: anything that is not
/// exactly yes or no is a format error upstream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Answer {
    Yes,
    No,
}

impl Answer {
    pub fn flip(self) -> Answer {
        match self {
            Answer::Yes => Answer::No,
            Answer::No => Answer::Yes,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Answer::Yes => "yes",
            Answer::No => "no",
        }
    }
}

impl fmt::Display for Answer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Connective joining two consecutive step results. A record with n steps
/// carries exactly n-1 of these.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Connective {
    And,
    Or,
}

impl Connective {
    pub fn apply(self, left: bool, right: bool) -> bool {
        match self {
            Connective::And => left && right,
            Connective::Or => left || right,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Connective::And => "and",
            Connective::Or => "or",
        }
    }
}

impl fmt::Display for Connective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One fallacy's atomic diagnostic procedure.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstructionRecord {
    pub name: String,
    pub steps: Vec<String>,
    pub ground_truth: Vec<Answer>,
    pub operations: Vec<Connective>,
}

impl InstructionRecord {
    pub fn step_count(&self) -> usize {
        self.steps.len()
    }
}

/// The full knowledge base, in file order, with a name index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InstructionSet {
    records: Vec<InstructionRecord>,
    index: HashMap<String, usize>,
}

impl InstructionSet {
    pub fn records(&self) -> &[InstructionRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Dataset position of a canonical name. Positions drive tie-breaking
    /// downstream, so they are exactly file order.
    pub fn position(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn get(&self, name: &str) -> Option<&InstructionRecord> {
        self.position(name).map(|i| &self.records[i])
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.records.iter().map(|r| r.name.as_str())
    }

    /// Map name → dataset position, for ranking.
    pub fn dataset_order(&self) -> &HashMap<String, usize> {
        &self.index
    }
}

#[derive(Debug, Error)]
pub enum InstructionError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("record {record} ({name:?}): {violation}")]
    Schema {
        record: usize,
        name: String,
        violation: SchemaViolation,
    },
    #[error("duplicate fallacy name {name:?} (records {first} and {second})")]
    DuplicateName {
        name: String,
        first: usize,
        second: usize,
    },
}

/// A per-record schema violation, naming the offending field.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum SchemaViolation {
    #[error("steps arity: a record must contain at least one step")]
    EmptySteps,
    #[error("ground_truth arity: {got} answers for {steps} steps")]
    GroundTruthArity { got: usize, steps: usize },
    #[error("operations arity: {got} operations for {steps} steps (expected {})", steps.saturating_sub(1))]
    OperationsArity { got: usize, steps: usize },
    #[error("illegal answer vocabulary in ground_truth[{index}]: {value:?}")]
    IllegalAnswer { index: usize, value: String },
    #[error("illegal operation vocabulary in operations[{index}]: {value:?}")]
    IllegalOperation { index: usize, value: String },
    #[error("name: {0}")]
    BadName(NameError),
}

// Raw shape of one record on disk. Key names match the knowledge-base file
// exactly; unknown keys are rejected.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRecord {
    name: String,
    steps: Vec<String>,
    ground_truth: Vec<String>,
    operations: Vec<String>,
}

/// Parse and validate an instruction-set file.
///
/// File order is preserved; record names are canonicalized on load.
pub fn parse_instruction_set(bytes: &[u8]) -> Result<InstructionSet, InstructionError> {
    let raw: Vec<RawRecord> = serde_json::from_slice(bytes).map_err(|e| {
        InstructionError::Syntax {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        }
    })?;

    let mut records = Vec::with_capacity(raw.len());
    let mut index = HashMap::with_capacity(raw.len());
    for (pos, r) in raw.into_iter().enumerate() {
        let record = validate_record(pos, r)?;
        if let Some(&first) = index.get(&record.name) {
            return Err(InstructionError::DuplicateName {
                name: record.name,
                first,
                second: pos,
            });
        }
        index.insert(record.name.clone(), pos);
        records.push(record);
    }
    Ok(InstructionSet { records, index })
}

fn validate_record(pos: usize, raw: RawRecord) -> Result<InstructionRecord, InstructionError> {
    let schema = |violation| InstructionError::Schema {
        record: pos,
        name: raw.name.clone(),
        violation,
    };

    let name = canonicalize_name(&raw.name)
        .map_err(|e| schema(SchemaViolation::BadName(e)))?;
    if raw.steps.is_empty() {
        return Err(schema(SchemaViolation::EmptySteps));
    }
    if raw.ground_truth.len() != raw.steps.len() {
        return Err(schema(SchemaViolation::GroundTruthArity {
            got: raw.ground_truth.len(),
            steps: raw.steps.len(),
        }));
    }
    if raw.operations.len() != raw.steps.len() - 1 {
        return Err(schema(SchemaViolation::OperationsArity {
            got: raw.operations.len(),
            steps: raw.steps.len(),
        }));
    }

    let mut ground_truth = Vec::with_capacity(raw.ground_truth.len());
    for (i, v) in raw.ground_truth.iter().enumerate() {
        ground_truth.push(match v.as_str() {
            "yes" => Answer::Yes,
            "no" => Answer::No,
            other => {
                return Err(schema(SchemaViolation::IllegalAnswer {
                    index: i,
                    value: other.to_string(),
                }))
            }
        });
    }
    let mut operations = Vec::with_capacity(raw.operations.len());
    for (i, v) in raw.operations.iter().enumerate() {
        operations.push(match v.as_str() {
            "and" => Connective::And,
            "or" => Connective::Or,
            other => {
                return Err(schema(SchemaViolation::IllegalOperation {
                    index: i,
                    value: other.to_string(),
                }))
            }
        });
    }

    Ok(InstructionRecord {
        name,
        steps: raw.steps,
        ground_truth,
        operations,
    })
}

/// Serialize an instruction set back to the on-disk format.
/// parse ∘ serialize ∘ parse is the identity.
pub fn serialize_instruction_set(set: &InstructionSet) -> Vec<u8> {
    let raw: Vec<RawRecord> = set
        .records
        .iter()
        .map(|r| RawRecord {
            name: r.name.clone(),
            steps: r.steps.clone(),
            ground_truth: r.ground_truth.iter().map(|a| a.as_str().to_string()).collect(),
            operations: r.operations.iter().map(|o| o.as_str().to_string()).collect(),
        })
        .collect();
    let mut out = serde_json::to_vec_pretty(&raw).expect("instruction records serialize");
    out.push(b'\n');
    out
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum NameError {
    #[error("name is empty after normalization (raw: {raw:?})")]
    EmptyAfterNormalization { raw: String },
}

/// Canonicalize a fallacy name: lowercase, collapse whitespace runs,
/// strip surrounding punctuation, map underscores to spaces (file atoms
/// and model outputs both show up in underscore form).
///
/// Idempotent. Alias resolution is a separate, data-driven layer
/// ([`AliasTable`]).
pub fn canonicalize_name(raw: &str) -> Result<String, NameError> {
    let lowered = raw.to_lowercase().replace('_', " ");
    let trimmed = lowered
        .trim_matches(|c: char| !c.is_alphanumeric());
    let collapsed: String = trimmed
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ");
    if collapsed.is_empty() {
        return Err(NameError::EmptyAfterNormalization {
            raw: raw.to_string(),
        });
    }
    Ok(collapsed)
}

/// Drop one trailing "fallacy" token, if present and not the whole name.
/// The hierarchical prompts ask models to answer "with no \"fallacy\"",
/// so `accent fallacy` comes back as `accent`.
pub fn strip_fallacy_suffix(canonical: &str) -> &str {
    match canonical.strip_suffix(" fallacy") {
        Some(base) if !base.is_empty() => base,
        _ => canonical,
    }
}

/// Maps raw model-output spellings onto canonical dataset names.
///
/// The table is explicit data, not code: model output conventions drift,
/// so aliases live in a versioned file of `raw -> canonical` lines.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AliasTable {
    map: HashMap<String, String>,
}

#[derive(Debug, Error)]
pub enum AliasError {
    #[error("alias file line {line}: expected `raw -> canonical`, got {content:?}")]
    Malformed { line: usize, content: String },
    #[error("alias file line {1}: {0}")]
    BadName(NameError, usize),
    #[error("alias file line {line}: conflicting alias for {raw:?} ({existing:?} vs {new:?})")]
    Conflict {
        line: usize,
        raw: String,
        existing: String,
        new: String,
    },
}

impl AliasTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// Parse the alias file: one `raw -> canonical` pair per line,
    /// `#` starts a comment, blank lines ignored.
    pub fn parse(text: &str) -> Result<AliasTable, AliasError> {
        let mut table = AliasTable::new();
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            let content = match line.find('#') {
                Some(pos) => &line[..pos],
                None => line,
            };
            if content.trim().is_empty() {
                continue;
            }
            let (raw, canonical) = content.split_once("->").ok_or_else(|| {
                AliasError::Malformed {
                    line: line_no,
                    content: content.trim().to_string(),
                }
            })?;
            let raw = canonicalize_name(raw).map_err(|e| AliasError::BadName(e, line_no))?;
            let canonical =
                canonicalize_name(canonical).map_err(|e| AliasError::BadName(e, line_no))?;
            table.insert(line_no, raw, canonical)?;
        }
        Ok(table)
    }

    fn insert(&mut self, line: usize, raw: String, canonical: String) -> Result<(), AliasError> {
        if let Some(existing) = self.map.get(&raw) {
            if *existing != canonical {
                return Err(AliasError::Conflict {
                    line,
                    raw,
                    existing: existing.clone(),
                    new: canonical,
                });
            }
            return Ok(());
        }
        self.map.insert(raw, canonical);
        Ok(())
    }

    /// Build the strip-"fallacy" aliases from a dataset name list:
    /// for every name ending in " fallacy", alias the stripped form back
    /// to the full name, unless the stripped form is itself a dataset name.
    pub fn from_name_list<'a>(names: impl IntoIterator<Item = &'a str>) -> AliasTable {
        let names: Vec<&str> = names.into_iter().collect();
        let full: HashSet<&str> = names.iter().copied().collect();
        let mut table = AliasTable::new();
        for name in &names {
            let base = strip_fallacy_suffix(name);
            if base != *name && !full.contains(base) {
                // First record wins on collisions; dataset order is the tie-break.
                table
                    .map
                    .entry(base.to_string())
                    .or_insert_with(|| name.to_string());
            }
        }
        table
    }

    /// Merge another table into this one. Existing entries win.
    pub fn merge(&mut self, other: &AliasTable) {
        for (raw, canonical) in &other.map {
            self.map
                .entry(raw.clone())
                .or_insert_with(|| canonical.clone());
        }
    }

    /// Canonicalize, then apply at most one alias hop.
    pub fn resolve(&self, raw: &str) -> Result<String, NameError> {
        let canonical = canonicalize_name(raw)?;
        Ok(self.map.get(&canonical).cloned().unwrap_or(canonical))
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

/// Lint categories for instruction steps. Lints never fail a record; they
/// flag phrasing that models are known to mishandle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LintKind {
    /// Step contains a negation marker; models misread negated questions.
    Negation,
    /// Step conjoins two questions with "and"; steps should stay atomic.
    /// A disjunctive noun phrase ("a claim or statement") is still one
    /// binary question, so "or" is not flagged.
    NonAtomic,
    /// Step is not phrased as a question (no terminal question mark).
    NotAQuestion,
}

impl fmt::Display for LintKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            LintKind::Negation => "negation",
            LintKind::NonAtomic => "non-atomic",
            LintKind::NotAQuestion => "not-a-question",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LintWarning {
    pub record: String,
    pub step: usize,
    pub kind: LintKind,
    pub message: String,
}

impl fmt::Display for LintWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} step {}: [{}] {}",
            self.record, self.step, self.kind, self.message
        )
    }
}

const NEGATION_WORDS: &[&str] = &[
    "not", "no", "never", "none", "nor", "neither", "cannot", "nothing",
];

/// Lint a schema-valid record. Returns zero or more warnings.
pub fn lint_record(record: &InstructionRecord) -> Vec<LintWarning> {
    let mut warnings = Vec::new();
    for (i, step) in record.steps.iter().enumerate() {
        let lowered = step.to_lowercase();
        let words: Vec<&str> = lowered
            .split(|c: char| !c.is_alphanumeric() && c != '\'')
            .filter(|w| !w.is_empty())
            .collect();

        let negation = words
            .iter()
            .find(|w| NEGATION_WORDS.contains(&w.trim_matches('\'')) || w.ends_with("n't"));
        if let Some(word) = negation {
            warnings.push(LintWarning {
                record: record.name.clone(),
                step: i,
                kind: LintKind::Negation,
                message: format!("contains negation marker {:?}", word),
            });
        }
        if words.contains(&"and") {
            warnings.push(LintWarning {
                record: record.name.clone(),
                step: i,
                kind: LintKind::NonAtomic,
                message: "conjoins clauses with \"and\"; split into separate steps".to_string(),
            });
        }
        if !step.trim_end().ends_with('?') {
            warnings.push(LintWarning {
                record: record.name.clone(),
                step: i,
                kind: LintKind::NotAQuestion,
                message: "not phrased as a question (no terminal '?')".to_string(),
            });
        }
    }
    warnings
}

/// Lint every record in a set.
pub fn lint_set(set: &InstructionSet) -> Vec<LintWarning> {
    set.records().iter().flat_map(lint_record).collect()
}

/// One statement to classify, with its expected label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestCase {
    pub id: String,
    pub statement: String,
    pub gold: String,
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("corpus line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("corpus line {line}: duplicate case id {id:?}")]
    DuplicateId { line: usize, id: String },
    #[error("corpus line {1}: case {2:?}: {0}")]
    BadGold(NameError, usize, String),
    #[error("case {id:?}: gold label {gold:?} does not resolve to an instruction-set name")]
    UnresolvableGold { id: String, gold: String },
}

/// Parse the line-delimited statement corpus: one JSON record per line
/// with keys `id`, `statement`, `gold`. Gold labels are canonicalized.
pub fn parse_test_cases(bytes: &[u8]) -> Result<Vec<TestCase>, CorpusError> {
    let text = String::from_utf8_lossy(bytes);
    let mut cases = Vec::new();
    let mut seen: HashMap<String, usize> = HashMap::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let mut case: TestCase =
            serde_json::from_str(line).map_err(|e| CorpusError::Syntax {
                line: line_no,
                message: e.to_string(),
            })?;
        if seen.insert(case.id.clone(), line_no).is_some() {
            return Err(CorpusError::DuplicateId {
                line: line_no,
                id: case.id,
            });
        }
        case.gold = canonicalize_name(&case.gold)
            .map_err(|e| CorpusError::BadGold(e, line_no, case.id.clone()))?;
        cases.push(case);
    }
    Ok(cases)
}

/// Check every gold label resolves (via aliases) to an instruction-set name.
pub fn validate_gold_labels(
    cases: &[TestCase],
    set: &InstructionSet,
    aliases: &AliasTable,
) -> Result<(), CorpusError> {
    for case in cases {
        let resolved = aliases
            .resolve(&case.gold)
            .map_err(|_| CorpusError::UnresolvableGold {
                id: case.id.clone(),
                gold: case.gold.clone(),
            })?;
        if set.position(&resolved).is_none() {
            return Err(CorpusError::UnresolvableGold {
                id: case.id.clone(),
                gold: case.gold.clone(),
            });
        }
    }
    Ok(())
}

/// One catalog entry: a fallacy name with its prose description, as shown
/// to models in the baseline prompt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CatalogEntry {
    pub name: String,
    pub description: String,
}

#[derive(Debug, Error)]
pub enum CatalogError {
    #[error("catalog syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("catalog entry {1}: {0}")]
    BadName(NameError, usize),
}

/// Parse the descriptions catalog: a JSON array of `{name, description}`.
/// Names are canonicalized on load.
pub fn parse_catalog(bytes: &[u8]) -> Result<Vec<CatalogEntry>, CatalogError> {
    let mut entries: Vec<CatalogEntry> =
        serde_json::from_slice(bytes).map_err(|e| CatalogError::Syntax {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
    for (i, entry) in entries.iter_mut().enumerate() {
        entry.name = canonicalize_name(&entry.name).map_err(|e| CatalogError::BadName(e, i))?;
    }
    Ok(entries)
}

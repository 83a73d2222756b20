//! Scoring and analysis: accuracy, per-fallacy correctness, confusion
//! pairs, top misclassifications, second-best rate, and deterministic
//! report serialization.

use crate::instructions::{AliasTable, TestCase};
use crate::pipelines::{Label, Mode, Outcome, Pipeline, Prediction};
use crate::taxonomy::{gold_path, score_hierarchical, TaxonomyNode};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap, HashSet};
use thiserror::Error;

/// Display-precision percentage: one decimal place, half-up, computed in
/// integer arithmetic so emitted reports are byte-stable.
pub fn percent_1dp(numerator: u64, denominator: u64) -> String {
    if denominator == 0 {
        return "0.0".to_string();
    }
    let scaled = u128::from(numerator) * 1000 + u128::from(denominator) / 2;
    let tenths = scaled / u128::from(denominator);
    format!("{}.{}", tenths / 10, tenths % 10)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct FallacyTally {
    pub correct: u32,
    pub total: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCount {
    pub gold: String,
    pub predicted: String,
    pub count: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelCount {
    pub label: String,
    pub count: u32,
}

/// Second-best rate over misclassified cases that carry rankings.
/// Never fabricated: without rankings it stays not-applicable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SecondBest {
    NotApplicable,
    Rate { numerator: u32, denominator: u32 },
}

impl SecondBest {
    pub fn display(&self) -> String {
        match self {
            SecondBest::NotApplicable => "n/a".to_string(),
            SecondBest::Rate {
                numerator,
                denominator,
            } => format!(
                "{numerator}/{denominator} ({}%)",
                percent_1dp(u64::from(*numerator), u64::from(*denominator))
            ),
        }
    }
}

/// The scored result of one run (one predictions set over one corpus).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineScore {
    pub pipeline: Pipeline,
    pub mode: Option<Mode>,
    pub model: String,
    /// Reference to the run manifest this score belongs to (file name or
    /// content hash), when the run persisted artifacts.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub manifest_ref: Option<String>,
    pub n_cases: u32,
    pub n_correct: u32,
    /// Format/transport/abstain failures: scored incorrect and itemized.
    pub failures: u32,
    pub failure_ids: Vec<String>,
    /// Cases whose extracted label was replaced from the manual-patch file.
    pub patched: u32,
    pub accuracy_display: String,
    pub per_fallacy: BTreeMap<String, FallacyTally>,
    /// (gold, predicted) counts over bona fide misclassifications
    /// (failures excluded), gold ≠ predicted.
    pub confusion_pairs: Vec<ConfusionCount>,
    /// Predicted-label counts among errors, descending, ties by label.
    pub top_misclassifications: Vec<LabelCount>,
    pub second_best: SecondBest,
}

impl PipelineScore {
    pub fn accuracy(&self) -> f64 {
        if self.n_cases == 0 {
            0.0
        } else {
            f64::from(self.n_correct) / f64::from(self.n_cases)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct EvaluationReport {
    pub rows: Vec<PipelineScore>,
}

impl EvaluationReport {
    pub fn single(row: PipelineScore) -> EvaluationReport {
        EvaluationReport { rows: vec![row] }
    }

    pub fn merged(reports: impl IntoIterator<Item = EvaluationReport>) -> EvaluationReport {
        EvaluationReport {
            rows: reports.into_iter().flat_map(|r| r.rows).collect(),
        }
    }
}

#[derive(Debug, Error)]
pub enum ScoreError {
    #[error("duplicate prediction for case {id:?}")]
    DuplicatePrediction { id: String },
    #[error("prediction for unknown case {id:?}")]
    UnknownCase { id: String },
    #[error("no prediction for case {id:?}")]
    MissingPrediction { id: String },
    #[error("hierarchical predictions present but no taxonomy supplied")]
    TaxonomyRequired,
    #[error("case {id:?}: gold label {gold:?} has no unique path in the taxonomy: {message}")]
    GoldPath {
        id: String,
        gold: String,
        message: String,
    },
}

/// Everything scoring needs besides the predictions and the corpus.
pub struct ScoringContext<'a> {
    pub aliases: &'a AliasTable,
    pub taxonomy: Option<&'a TaxonomyNode>,
    /// case id → corrected label, from the manual-patch file.
    pub patches: Option<&'a HashMap<String, String>>,
    /// Recorded in the report row; predictions do not carry the model.
    pub model: String,
}

impl<'a> ScoringContext<'a> {
    pub fn new(aliases: &'a AliasTable) -> ScoringContext<'a> {
        ScoringContext {
            aliases,
            taxonomy: None,
            patches: None,
            model: String::new(),
        }
    }
}

/// Score one prediction set against the corpus. Predictions must cover
/// the corpus ids exactly once; failures score incorrect and are counted
/// separately.
pub fn score_run(
    predictions: &[Prediction],
    cases: &[TestCase],
    ctx: &ScoringContext<'_>,
) -> Result<PipelineScore, ScoreError> {
    let case_by_id: HashMap<&str, &TestCase> =
        cases.iter().map(|c| (c.id.as_str(), c)).collect();
    let mut seen: HashSet<&str> = HashSet::new();

    let mut n_correct = 0u32;
    let mut failures = 0u32;
    let mut failure_ids = Vec::new();
    let mut patched = 0u32;
    let mut per_fallacy: BTreeMap<String, FallacyTally> = BTreeMap::new();
    let mut confusion: BTreeMap<(String, String), u32> = BTreeMap::new();
    let mut error_labels: BTreeMap<String, u32> = BTreeMap::new();
    let mut second_best_numerator = 0u32;
    let mut second_best_denominator = 0u32;

    for prediction in predictions {
        let case = case_by_id
            .get(prediction.case_id.as_str())
            .ok_or_else(|| ScoreError::UnknownCase {
                id: prediction.case_id.clone(),
            })?;
        if !seen.insert(case.id.as_str()) {
            return Err(ScoreError::DuplicatePrediction {
                id: case.id.clone(),
            });
        }

        let gold_leaf = ctx
            .aliases
            .resolve(&case.gold)
            .unwrap_or_else(|_| case.gold.clone());

        // Manual patches replace the extracted label (or a failure) before
        // anything is scored.
        let patched_outcome;
        let outcome = match ctx.patches.and_then(|p| p.get(&case.id)) {
            Some(label) => {
                patched += 1;
                let resolved = ctx
                    .aliases
                    .resolve(label)
                    .unwrap_or_else(|_| label.clone());
                patched_outcome = Outcome::Predicted(match &prediction.outcome {
                    Outcome::Predicted(Label::Path(path)) => Label::Path(
                        crate::taxonomy::PredictionPath {
                            tier1: path.tier1.clone(),
                            tier2: path.tier2.clone(),
                            tier3: resolved,
                        },
                    ),
                    _ => Label::Flat(resolved),
                });
                &patched_outcome
            }
            None => &prediction.outcome,
        };

        let tally = per_fallacy.entry(gold_leaf.clone()).or_default();
        tally.total += 1;

        match outcome {
            Outcome::Failed(_) => {
                failures += 1;
                failure_ids.push(case.id.clone());
            }
            Outcome::Predicted(label) => {
                let correct = match label {
                    Label::Path(path) => {
                        let taxonomy = ctx.taxonomy.ok_or(ScoreError::TaxonomyRequired)?;
                        let gold = gold_path(taxonomy, &gold_leaf).map_err(|e| {
                            ScoreError::GoldPath {
                                id: case.id.clone(),
                                gold: gold_leaf.clone(),
                                message: e.to_string(),
                            }
                        })?;
                        score_hierarchical(path, &gold)
                    }
                    Label::Flat(name) => {
                        let resolved = ctx
                            .aliases
                            .resolve(name)
                            .unwrap_or_else(|_| name.clone());
                        resolved == gold_leaf
                    }
                };
                if correct {
                    n_correct += 1;
                    tally.correct += 1;
                } else {
                    let predicted_leaf = ctx
                        .aliases
                        .resolve(label.leaf())
                        .unwrap_or_else(|_| label.leaf().to_string());
                    *confusion
                        .entry((gold_leaf.clone(), predicted_leaf.clone()))
                        .or_insert(0) += 1;
                    *error_labels.entry(predicted_leaf).or_insert(0) += 1;
                    if let Some(ranking) = &prediction.ranking {
                        second_best_denominator += 1;
                        if ranking.rank_of(&gold_leaf) == Some(2) {
                            second_best_numerator += 1;
                        }
                    }
                }
            }
        }
    }

    for case in cases {
        if !seen.contains(case.id.as_str()) {
            return Err(ScoreError::MissingPrediction {
                id: case.id.clone(),
            });
        }
    }

    let n_cases = cases.len() as u32;
    let mut top_misclassifications: Vec<LabelCount> = error_labels
        .into_iter()
        .map(|(label, count)| LabelCount { label, count })
        .collect();
    top_misclassifications.sort_by(|a, b| b.count.cmp(&a.count).then(a.label.cmp(&b.label)));

    Ok(PipelineScore {
        pipeline: predictions
            .first()
            .map(|p| p.pipeline)
            .unwrap_or(Pipeline::Baseline),
        mode: predictions.first().and_then(|p| p.mode),
        model: ctx.model.clone(),
        manifest_ref: None,
        n_cases,
        n_correct,
        failures,
        failure_ids,
        patched,
        accuracy_display: percent_1dp(u64::from(n_correct), u64::from(n_cases)),
        per_fallacy,
        confusion_pairs: confusion
            .into_iter()
            .map(|((gold, predicted), count)| ConfusionCount {
                gold,
                predicted,
                count,
            })
            .collect(),
        top_misclassifications,
        second_best: if second_best_denominator == 0 {
            SecondBest::NotApplicable
        } else {
            SecondBest::Rate {
                numerator: second_best_numerator,
                denominator: second_best_denominator,
            }
        },
    })
}

/// The k most frequent wrong labels, preserving the documented ordering.
pub fn top_misclassifications(score: &PipelineScore, k: usize) -> Vec<LabelCount> {
    score.top_misclassifications.iter().take(k).cloned().collect()
}

/// Standalone second-best rate: among misclassified (leaf-level,
/// non-failure) cases that carry rankings, the fraction whose gold label
/// sits at rank 2. Agrees with the field [`score_run`] computes.
pub fn second_best_rate(
    predictions: &[Prediction],
    cases: &[TestCase],
    aliases: &AliasTable,
) -> SecondBest {
    let gold_by_id: HashMap<&str, String> = cases
        .iter()
        .map(|c| {
            (
                c.id.as_str(),
                aliases.resolve(&c.gold).unwrap_or_else(|_| c.gold.clone()),
            )
        })
        .collect();
    let mut numerator = 0;
    let mut denominator = 0;
    for prediction in predictions {
        let Some(gold) = gold_by_id.get(prediction.case_id.as_str()) else {
            continue;
        };
        let Some(label) = prediction.outcome.predicted() else {
            continue;
        };
        let predicted = aliases
            .resolve(label.leaf())
            .unwrap_or_else(|_| label.leaf().to_string());
        if predicted == *gold {
            continue;
        }
        if let Some(ranking) = &prediction.ranking {
            denominator += 1;
            if ranking.rank_of(gold) == Some(2) {
                numerator += 1;
            }
        }
    }
    if denominator == 0 {
        SecondBest::NotApplicable
    } else {
        SecondBest::Rate {
            numerator,
            denominator,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
    Markdown,
}

impl ReportFormat {
    pub fn from_name(name: &str) -> Option<ReportFormat> {
        match name {
            "json" => Some(ReportFormat::Json),
            "csv" => Some(ReportFormat::Csv),
            "markdown" | "md" => Some(ReportFormat::Markdown),
            _ => None,
        }
    }
}

/// Deterministic serialization: stable key order, display rounding fixed
/// at one decimal place. The same report emits byte-identical output.
pub fn emit_report(report: &EvaluationReport, format: ReportFormat) -> Vec<u8> {
    match format {
        ReportFormat::Json => {
            let mut bytes = serde_json::to_vec_pretty(report).expect("report serializes");
            bytes.push(b'\n');
            bytes
        }
        ReportFormat::Csv => emit_csv(report),
        ReportFormat::Markdown => emit_markdown(report),
    }
}

fn emit_csv(report: &EvaluationReport) -> Vec<u8> {
    let mut out = String::from(
        "pipeline,mode,model,n_cases,n_correct,failures,patched,accuracy_percent,second_best\n",
    );
    for row in &report.rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            row.pipeline.name(),
            row.mode.map(Mode::name).unwrap_or(""),
            csv_field(&row.model),
            row.n_cases,
            row.n_correct,
            row.failures,
            row.patched,
            row.accuracy_display,
            csv_field(&row.second_best.display()),
        ));
    }
    out.into_bytes()
}

fn csv_field(value: &str) -> String {
    if value.contains(',') || value.contains('"') {
        format!("\"{}\"", value.replace('"', "\"\""))
    } else {
        value.to_string()
    }
}

fn pipeline_row_label(pipeline: Pipeline, mode: Option<Mode>) -> String {
    let base = match pipeline {
        Pipeline::Baseline => "Baseline Classification",
        Pipeline::Hierarchical => "Hierarchical Classification",
        Pipeline::Stepwise => "Stepwise Classification",
        Pipeline::GraphAugmented => "Enhanced Classification",
    };
    match mode {
        Some(Mode::PerStep) => format!("{base} (per-step)"),
        _ => base.to_string(),
    }
}

// Accuracy table shaped pipeline rows × model columns.
fn emit_markdown(report: &EvaluationReport) -> Vec<u8> {
    let mut models: Vec<&str> = Vec::new();
    let mut row_keys: Vec<(Pipeline, Option<Mode>)> = Vec::new();
    let mut cells: BTreeMap<(String, String), &PipelineScore> = BTreeMap::new();
    for row in &report.rows {
        if !models.contains(&row.model.as_str()) {
            models.push(&row.model);
        }
        let key = (row.pipeline, row.mode);
        if !row_keys.contains(&key) {
            row_keys.push(key);
        }
        cells
            .entry((pipeline_row_label(row.pipeline, row.mode), row.model.clone()))
            .or_insert(row);
    }

    let mut out = String::from("| Evaluation Type |");
    for model in &models {
        let label = if model.is_empty() { "Accuracy" } else { model };
        out.push_str(&format!(" {label} |"));
    }
    out.push('\n');
    out.push_str("|---|");
    for _ in &models {
        out.push_str("---|");
    }
    out.push('\n');
    for (pipeline, mode) in &row_keys {
        let label = pipeline_row_label(*pipeline, *mode);
        out.push_str(&format!("| {label} |"));
        for model in &models {
            match cells.get(&(label.clone(), (*model).to_string())) {
                Some(score) => out.push_str(&format!(" {}% |", score.accuracy_display)),
                None => out.push_str(" - |"),
            }
        }
        out.push('\n');
    }
    out.into_bytes()
}

/// The manual-patch file: one `{case_id, label}` JSON record per line.
pub fn parse_patches(bytes: &[u8]) -> Result<HashMap<String, String>, PatchError> {
    #[derive(Deserialize)]
    struct Row {
        case_id: String,
        label: String,
    }
    let text = String::from_utf8_lossy(bytes);
    let mut patches = HashMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row: Row = serde_json::from_str(line).map_err(|e| PatchError::Syntax {
            line: i + 1,
            message: e.to_string(),
        })?;
        if patches.insert(row.case_id.clone(), row.label).is_some() {
            return Err(PatchError::Duplicate {
                line: i + 1,
                id: row.case_id,
            });
        }
    }
    Ok(patches)
}

#[derive(Debug, Error)]
pub enum PatchError {
    #[error("patch file line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("patch file line {line}: duplicate case id {id:?}")]
    Duplicate { line: usize, id: String },
}

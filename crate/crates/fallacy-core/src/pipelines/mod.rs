//! The four classification procedures, end to end.
//!
//! Each run function takes one test case and produces one [`Prediction`]
//! carrying the outcome, the candidate ranking (per-step modes), and a
//! full trace: per-candidate match results, transcript references, and
//! phase bookkeeping.

mod baseline;
mod graph;
mod hierarchical;
mod stepwise;

pub use baseline::run_baseline;
pub use graph::{run_graph_augmented_monolithic, run_graph_augmented_per_step};
pub use hierarchical::run_hierarchical;
pub use stepwise::{run_stepwise_monolithic, run_stepwise_per_step, Strictness, StepwiseOptions};

use crate::instructions::TestCase;
use crate::matching::{CandidateRanking, MatchResult};
use crate::providers::parse::FormatError;
use crate::providers::{CompletionClient, CompletionRequest};
use crate::relations::ClosurePolicy;
use crate::taxonomy::PredictionPath;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pipeline {
    Baseline,
    Hierarchical,
    Stepwise,
    GraphAugmented,
}

impl Pipeline {
    pub fn name(self) -> &'static str {
        match self {
            Pipeline::Baseline => "baseline",
            Pipeline::Hierarchical => "hierarchical",
            Pipeline::Stepwise => "stepwise",
            Pipeline::GraphAugmented => "graph_augmented",
        }
    }

    pub fn from_name(name: &str) -> Option<Pipeline> {
        match name {
            "baseline" => Some(Pipeline::Baseline),
            "hierarchical" => Some(Pipeline::Hierarchical),
            "stepwise" => Some(Pipeline::Stepwise),
            "graph_augmented" => Some(Pipeline::GraphAugmented),
            _ => None,
        }
    }

    /// Modes apply only to the stepwise and graph-augmented pipelines.
    pub fn supports_mode(self) -> bool {
        matches!(self, Pipeline::Stepwise | Pipeline::GraphAugmented)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Monolithic,
    PerStep,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Monolithic => "monolithic",
            Mode::PerStep => "per_step",
        }
    }

    pub fn from_name(name: &str) -> Option<Mode> {
        match name {
            "monolithic" => Some(Mode::Monolithic),
            "per_step" => Some(Mode::PerStep),
            _ => None,
        }
    }
}

/// A final classification: a flat fallacy name, or a three-tier path for
/// the hierarchical pipeline.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Flat(String),
    Path(PredictionPath),
}

impl Label {
    /// The leaf-level name, for confusion reporting.
    pub fn leaf(&self) -> &str {
        match self {
            Label::Flat(name) => name,
            Label::Path(path) => &path.tier3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureKind {
    Format,
    Transport,
    Answer,
    Abstain,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FailureRecord {
    pub kind: FailureKind,
    pub stage: String,
    pub attempts: u32,
    /// Raw response texts that failed to parse, for postmortems and the
    /// manual-patch workflow.
    pub raw_responses: Vec<String>,
    pub message: String,
}

/// Exactly one of predicted or failed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Predicted(Label),
    Failed(FailureRecord),
}

impl Outcome {
    pub fn predicted(&self) -> Option<&Label> {
        match self {
            Outcome::Predicted(label) => Some(label),
            Outcome::Failed(_) => None,
        }
    }

    pub fn failure(&self) -> Option<&FailureRecord> {
        match self {
            Outcome::Failed(record) => Some(record),
            Outcome::Predicted(_) => None,
        }
    }
}

/// Which rule produced the final selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Selector {
    /// Not recorded (externally loaded predictions).
    #[default]
    Unrecorded,
    /// A verdict-true record decided: the first full match in dataset order.
    FirstMatch,
    /// No full match; the strength ranking decided.
    Ranked,
    /// The model itself selected (monolithic modes).
    ModelChoice,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Initial,
    Expanded,
}

/// One candidate's evaluation in the trace, tagged with the phase that
/// introduced it. `shared` marks expansion candidates whose evaluation
/// was reused from phase 1 rather than re-run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceCandidate {
    pub phase: Phase,
    pub shared: bool,
    pub result: MatchResult,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExpansionSummary {
    /// Phase-1 matches (verdict-true set, or the best-strength carry).
    pub initial_matches: Vec<String>,
    /// Names pulled in by the relation graph, after dedup against the
    /// initial matches.
    pub expanded: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct TraceBundle {
    pub candidates: Vec<TraceCandidate>,
    /// Keys into the transcript store for every completion consulted.
    pub transcripts: Vec<String>,
    pub expansion: Option<ExpansionSummary>,
    pub selector: Selector,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub case_id: String,
    pub pipeline: Pipeline,
    #[serde(default)]
    pub mode: Option<Mode>,
    pub outcome: Outcome,
    /// Present in per-step modes (absent for failures that stopped the
    /// evaluation before a ranking existed).
    #[serde(default)]
    pub ranking: Option<CandidateRanking>,
    #[serde(default)]
    pub trace: TraceBundle,
}

impl Prediction {
    pub fn predicted_leaf(&self) -> Option<&str> {
        self.outcome.predicted().map(Label::leaf)
    }

    pub fn is_failure(&self) -> bool {
        matches!(self.outcome, Outcome::Failed(_))
    }
}

/// Completion settings shared by the LLM-backed pipelines.
#[derive(Debug, Clone, PartialEq)]
pub struct LlmOptions {
    pub model: String,
    pub temperature: f64,
    pub max_output: u32,
    /// Total attempts per prompt when the response fails format parsing.
    pub format_attempts: u32,
}

impl LlmOptions {
    pub fn new(model: impl Into<String>) -> LlmOptions {
        LlmOptions {
            model: model.into(),
            temperature: 0.0,
            max_output: 4096,
            format_attempts: 3,
        }
    }
}

pub(crate) struct ParsedCompletion<T> {
    pub value: T,
    pub transcripts: Vec<String>,
    pub response_text: String,
}

/// Run one prompt through the client with the bounded format-retry loop.
/// Retry prompts carry an attempt-numbered reminder so they get distinct,
/// stable cache keys.
pub(crate) fn complete_parsed<T>(
    client: &dyn CompletionClient,
    options: &LlmOptions,
    stage: &str,
    base_prompt: &str,
    metadata: &[(&str, String)],
    parse: impl Fn(&str) -> Result<T, FormatError>,
) -> Result<ParsedCompletion<T>, (FailureRecord, Vec<String>)> {
    use crate::providers::prompts::with_format_reminder;

    let attempts = options.format_attempts.max(1);
    let mut transcripts = Vec::new();
    let mut raw_responses = Vec::new();
    for attempt in 0..attempts {
        let prompt = if attempt == 0 {
            base_prompt.to_string()
        } else {
            with_format_reminder(base_prompt, attempt)
        };
        let mut request = CompletionRequest::new(&options.model, prompt);
        request.temperature = options.temperature;
        request.max_output = options.max_output;
        for (k, v) in metadata {
            request.metadata.insert((*k).to_string(), v.clone());
        }
        let response = match client.complete(&request) {
            Ok(response) => response,
            Err(error) => {
                return Err((
                    FailureRecord {
                        kind: FailureKind::Transport,
                        stage: stage.to_string(),
                        attempts: attempt + 1,
                        raw_responses,
                        message: error.to_string(),
                    },
                    transcripts,
                ));
            }
        };
        transcripts.push(response.key.clone());
        match parse(&response.text) {
            Ok(value) => {
                return Ok(ParsedCompletion {
                    value,
                    transcripts,
                    response_text: response.text,
                })
            }
            Err(error) => {
                raw_responses.push(response.text.clone());
                if attempt + 1 == attempts {
                    return Err((
                        FailureRecord {
                            kind: FailureKind::Format,
                            stage: stage.to_string(),
                            attempts,
                            raw_responses,
                            message: error.to_string(),
                        },
                        transcripts,
                    ));
                }
            }
        }
    }
    unreachable!("format retry loop returns within the attempt budget")
}

/// Run a whole corpus, preserving corpus order in the output regardless
/// of completion order. Cases run concurrently when `parallelism > 1`;
/// all steps within one case stay sequential inside `run_one`.
pub fn run_cases<F>(cases: &[TestCase], parallelism: usize, run_one: F) -> Vec<Prediction>
where
    F: Fn(&TestCase) -> Prediction + Sync,
{
    if parallelism <= 1 || cases.len() <= 1 {
        return cases.iter().map(&run_one).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<Prediction>>> = Mutex::new(vec![None; cases.len()]);
    let workers = parallelism.min(cases.len());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let index = next.fetch_add(1, Ordering::SeqCst);
                if index >= cases.len() {
                    break;
                }
                let prediction = run_one(&cases[index]);
                slots.lock().expect("result slot lock")[index] = Some(prediction);
            });
        }
    });
    slots
        .into_inner()
        .expect("result slot lock")
        .into_iter()
        .map(|slot| slot.expect("every case produced a prediction"))
        .collect()
}

/// Reproducibility record written alongside every run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub pipeline: Pipeline,
    pub mode: Option<Mode>,
    pub provider: String,
    pub model: String,
    pub temperature: f64,
    pub format_attempts: u32,
    pub parallelism: usize,
    #[serde(default)]
    pub policy: Option<ClosurePolicy>,
    /// SHA-256 of each prompt template asset.
    pub template_hashes: BTreeMap<String, String>,
    /// SHA-256 of the corpus file.
    pub corpus_hash: String,
    /// SHA-256 of the other input files, keyed by role
    /// (instructions/relations/taxonomy/catalog/aliases).
    #[serde(default)]
    pub input_hashes: BTreeMap<String, String>,
    #[serde(default)]
    pub patched_cases: u32,
}

impl RunManifest {
    pub fn new(
        pipeline: Pipeline,
        mode: Option<Mode>,
        provider: impl Into<String>,
        model: impl Into<String>,
    ) -> RunManifest {
        use crate::providers::prompts;
        let template_hashes = prompts::all()
            .iter()
            .map(|(name, text)| ((*name).to_string(), prompts::content_hash(text.as_bytes())))
            .collect();
        RunManifest {
            pipeline,
            mode,
            provider: provider.into(),
            model: model.into(),
            temperature: 0.0,
            format_attempts: 3,
            parallelism: 1,
            policy: None,
            template_hashes,
            corpus_hash: String::new(),
            input_hashes: BTreeMap::new(),
            patched_cases: 0,
        }
    }

    pub fn to_json(&self) -> Vec<u8> {
        let mut bytes = serde_json::to_vec_pretty(self).expect("manifest serializes");
        bytes.push(b'\n');
        bytes
    }
}

/// Serialize predictions as one JSON object per line.
pub fn serialize_predictions(predictions: &[Prediction]) -> Vec<u8> {
    let mut out = Vec::new();
    for prediction in predictions {
        out.extend(serde_json::to_vec(prediction).expect("prediction serializes"));
        out.push(b'\n');
    }
    out
}

#[derive(Debug, thiserror::Error)]
pub enum PredictionsParseError {
    #[error("predictions line {line}: {message}")]
    Syntax { line: usize, message: String },
}

pub fn parse_predictions(bytes: &[u8]) -> Result<Vec<Prediction>, PredictionsParseError> {
    let text = String::from_utf8_lossy(bytes);
    let mut predictions = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        predictions.push(serde_json::from_str(line).map_err(|e| {
            PredictionsParseError::Syntax {
                line: i + 1,
                message: e.to_string(),
            }
        })?);
    }
    Ok(predictions)
}

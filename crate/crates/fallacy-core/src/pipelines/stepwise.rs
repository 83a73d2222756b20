//! Stepwise instructed classification.
//!
//! Monolithic mode sends one prompt with the whole knowledge base inlined
//! and parses the model's selection. Per-step mode asks every diagnostic
//! step as an isolated binary question, executes the symbolic semantics
//! itself, and returns the first full match in dataset order (falling
//! back to the strength ranking when nothing fully matches).

use super::{
    complete_parsed, FailureKind, FailureRecord, Label, LlmOptions, Mode, Outcome, Phase,
    Pipeline, Prediction, Selector, TraceBundle, TraceCandidate,
};
use crate::instructions::{serialize_instruction_set, AliasTable, InstructionSet, TestCase};
use crate::matching::{evaluate_candidate, rank_candidates, AnswerPattern, MatchResult};
use crate::providers::oracle::{AnswerError, BinaryAnswerer, StepQuery};
use crate::providers::parse::{parse_classification_output, parse_step_evaluations};
use crate::providers::{prompts, CompletionClient};

/// How per-step evaluation treats a step whose answer stayed unparseable
/// after the answerer's own retry budget.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Strictness {
    /// Record the step as a mismatch and continue (noted in the trace).
    #[default]
    ForceMismatch,
    /// Fail the whole case.
    FailCase,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct StepwiseOptions {
    pub strictness: Strictness,
    /// Abstain (record a failure) instead of predicting when no record
    /// fully matches. Off by default: the published pipelines always
    /// emit a classification.
    pub abstain_without_full_match: bool,
}

pub(crate) struct EvaluatedCase {
    pub results: Vec<MatchResult>,
    pub transcripts: Vec<String>,
    pub notes: Vec<String>,
}

/// Execute every record's steps against the statement, in dataset order.
pub(crate) fn evaluate_all_records(
    case: &TestCase,
    instructions: &InstructionSet,
    answerer: &dyn BinaryAnswerer,
    strictness: Strictness,
) -> Result<EvaluatedCase, (FailureRecord, Vec<String>)> {
    let mut results = Vec::with_capacity(instructions.len());
    let mut transcripts = Vec::new();
    let mut notes = Vec::new();
    for record in instructions.records() {
        let mut answers = Vec::with_capacity(record.step_count());
        for (i, question) in record.steps.iter().enumerate() {
            let query = StepQuery {
                fallacy: &record.name,
                step_index: i,
                question,
                statement: &case.statement,
                case_id: &case.id,
            };
            match answerer.answer(&query) {
                Ok(outcome) => {
                    transcripts.extend(outcome.transcripts);
                    answers.push(outcome.answer);
                }
                Err(AnswerError::Unparseable {
                    raw,
                    attempts,
                    transcripts: keys,
                }) => {
                    transcripts.extend(keys);
                    match strictness {
                        Strictness::ForceMismatch => {
                            answers.push(record.ground_truth[i].flip());
                            notes.push(format!(
                                "forced mismatch: {} step {} unparseable after {} attempts",
                                record.name, i, attempts
                            ));
                        }
                        Strictness::FailCase => {
                            return Err((
                                FailureRecord {
                                    kind: FailureKind::Format,
                                    stage: format!("step:{}:{}", record.name, i),
                                    attempts,
                                    raw_responses: vec![raw],
                                    message: "step answer unparseable".into(),
                                },
                                transcripts,
                            ));
                        }
                    }
                }
                Err(AnswerError::MissingKey { fallacy, step, case_id }) => {
                    return Err((
                        FailureRecord {
                            kind: FailureKind::Answer,
                            stage: format!("step:{fallacy}:{step}"),
                            attempts: 1,
                            raw_responses: Vec::new(),
                            message: format!(
                                "no scripted answer for ({fallacy:?}, step {step}, case {case_id:?})"
                            ),
                        },
                        transcripts,
                    ));
                }
                Err(AnswerError::Completion(error)) => {
                    return Err((
                        FailureRecord {
                            kind: FailureKind::Transport,
                            stage: format!("step:{}:{}", record.name, i),
                            attempts: 1,
                            raw_responses: Vec::new(),
                            message: error.to_string(),
                        },
                        transcripts,
                    ));
                }
            }
        }
        let result = evaluate_candidate(record, &AnswerPattern(answers))
            .expect("answer pattern arity matches by construction");
        results.push(result);
    }
    Ok(EvaluatedCase {
        results,
        transcripts,
        notes,
    })
}

pub fn run_stepwise_per_step(
    case: &TestCase,
    instructions: &InstructionSet,
    answerer: &dyn BinaryAnswerer,
    options: StepwiseOptions,
) -> Prediction {
    let evaluated = match evaluate_all_records(case, instructions, answerer, options.strictness) {
        Ok(evaluated) => evaluated,
        Err((failure, transcripts)) => {
            return Prediction {
                case_id: case.id.clone(),
                pipeline: Pipeline::Stepwise,
                mode: Some(Mode::PerStep),
                outcome: Outcome::Failed(failure),
                ranking: None,
                trace: TraceBundle {
                    candidates: Vec::new(),
                    transcripts,
                    expansion: None,
                    selector: Selector::Unrecorded,
                    notes: Vec::new(),
                },
            }
        }
    };

    let ranking = rank_candidates(evaluated.results.clone(), instructions.dataset_order())
        .expect("evaluated names come from the instruction set");
    let best = ranking.best();
    let selector = if best.verdict {
        Selector::FirstMatch
    } else {
        Selector::Ranked
    };
    let outcome = if !best.verdict && options.abstain_without_full_match {
        Outcome::Failed(FailureRecord {
            kind: FailureKind::Abstain,
            stage: "selection".into(),
            attempts: 0,
            raw_responses: Vec::new(),
            message: format!(
                "no full match; best candidate {} at strength {}",
                best.fallacy, best.strength
            ),
        })
    } else {
        Outcome::Predicted(Label::Flat(best.fallacy.clone()))
    };

    Prediction {
        case_id: case.id.clone(),
        pipeline: Pipeline::Stepwise,
        mode: Some(Mode::PerStep),
        outcome,
        ranking: Some(ranking),
        trace: TraceBundle {
            candidates: evaluated
                .results
                .into_iter()
                .map(|result| TraceCandidate {
                    phase: Phase::Initial,
                    shared: false,
                    result,
                })
                .collect(),
            transcripts: evaluated.transcripts,
            expansion: None,
            selector,
            notes: evaluated.notes,
        },
    }
}

pub fn run_stepwise_monolithic(
    case: &TestCase,
    instructions: &InstructionSet,
    client: &dyn CompletionClient,
    aliases: &AliasTable,
    options: &LlmOptions,
) -> Prediction {
    let instructions_json = String::from_utf8(serialize_instruction_set(instructions))
        .expect("instruction JSON is UTF-8");
    let prompt = prompts::render(
        prompts::STEPWISE,
        &[
            ("instructions", instructions_json.as_str()),
            ("example", case.statement.as_str()),
        ],
    );
    monolithic_with_prompt(case, instructions, client, aliases, options, Pipeline::Stepwise, &prompt)
}

/// Shared monolithic flow for the stepwise and graph-augmented prompts.
pub(crate) fn monolithic_with_prompt(
    case: &TestCase,
    instructions: &InstructionSet,
    client: &dyn CompletionClient,
    aliases: &AliasTable,
    options: &LlmOptions,
    pipeline: Pipeline,
    prompt: &str,
) -> Prediction {
    let metadata = [
        ("case_id", case.id.clone()),
        ("pipeline", pipeline.name().to_string()),
    ];
    match complete_parsed(
        client,
        options,
        "classification",
        prompt,
        &metadata,
        parse_classification_output,
    ) {
        Ok(parsed) => {
            let name = aliases
                .resolve(&parsed.value)
                .unwrap_or_else(|_| parsed.value.clone());
            let mut notes = Vec::new();
            let mut candidates = Vec::new();
            // Fold the model's reported per-step answers into the trace
            // when they line up with the claimed record.
            let reported = parse_step_evaluations(&parsed.response_text);
            match instructions.get(&name) {
                Some(record) if reported.len() == record.step_count() => {
                    let result = evaluate_candidate(record, &AnswerPattern(reported))
                        .expect("arity checked above");
                    if !result.verdict {
                        notes.push(format!(
                            "model-reported answers do not fully match {} (strength {})",
                            name, result.strength
                        ));
                    }
                    candidates.push(TraceCandidate {
                        phase: Phase::Initial,
                        shared: false,
                        result,
                    });
                }
                Some(record) if !reported.is_empty() => {
                    notes.push(format!(
                        "model reported {} step evaluations for {} which has {} steps",
                        reported.len(),
                        name,
                        record.step_count()
                    ));
                }
                Some(_) => {}
                None => {
                    notes.push(format!("predicted name {name:?} is not in the instruction set"));
                }
            }
            Prediction {
                case_id: case.id.clone(),
                pipeline,
                mode: Some(Mode::Monolithic),
                outcome: Outcome::Predicted(Label::Flat(name)),
                ranking: None,
                trace: TraceBundle {
                    candidates,
                    transcripts: parsed.transcripts,
                    expansion: None,
                    selector: Selector::ModelChoice,
                    notes,
                },
            }
        }
        Err((failure, transcripts)) => Prediction {
            case_id: case.id.clone(),
            pipeline,
            mode: Some(Mode::Monolithic),
            outcome: Outcome::Failed(failure),
            ranking: None,
            trace: TraceBundle {
                candidates: Vec::new(),
                transcripts,
                expansion: None,
                selector: Selector::ModelChoice,
                notes: Vec::new(),
            },
        },
    }
}

//! Instruction-guided classification with relational graphs: the
//! three-phase protocol.
//!
//! Phase 1 executes every record's steps and collects the initial matches
//! (the verdict-true set, or the single best-strength candidate when
//! nothing fully matches). Phase 2 expands the initial matches through
//! the confused-with graph; expansion candidates already evaluated in
//! phase 1 are reused, not re-asked. Phase 3 ranks the combined candidate
//! set and selects its best.
//!
//! An empty graph degenerates to the stepwise pipeline and returns its
//! output bit for bit.

use super::stepwise::{evaluate_all_records, monolithic_with_prompt};
use super::{
    Label, LlmOptions, Mode, Outcome, Phase, Pipeline, Prediction, Selector, StepwiseOptions,
    TraceBundle, TraceCandidate,
};
use crate::instructions::{serialize_instruction_set, AliasTable, InstructionSet, TestCase};
use crate::matching::rank_candidates;
use crate::providers::oracle::BinaryAnswerer;
use crate::providers::{prompts, CompletionClient};
use crate::relations::{related, ClosurePolicy, RelationalGraph};
use std::collections::BTreeSet;

pub fn run_graph_augmented_per_step(
    case: &TestCase,
    instructions: &InstructionSet,
    graph: &RelationalGraph,
    policy: ClosurePolicy,
    answerer: &dyn BinaryAnswerer,
    options: StepwiseOptions,
) -> Prediction {
    if graph.is_empty() {
        return super::run_stepwise_per_step(case, instructions, answerer, options);
    }

    let evaluated = match evaluate_all_records(case, instructions, answerer, options.strictness) {
        Ok(evaluated) => evaluated,
        Err((failure, transcripts)) => {
            return Prediction {
                case_id: case.id.clone(),
                pipeline: Pipeline::GraphAugmented,
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
    let mut notes = evaluated.notes;

    // Phase 1: initial matches.
    let full_ranking = rank_candidates(evaluated.results.clone(), instructions.dataset_order())
        .expect("evaluated names come from the instruction set");
    let verdict_true: Vec<String> = evaluated
        .results
        .iter()
        .filter(|r| r.verdict)
        .map(|r| r.fallacy.clone())
        .collect();
    let initial_matches: Vec<String> = if verdict_true.is_empty() {
        // Carry the single best-strength candidate into phase 2.
        vec![full_ranking.best().fallacy.clone()]
    } else {
        verdict_true
    };

    // Phase 2: expansion through the graph. Everything was evaluated in
    // phase 1, so expansion candidates are shared, never re-asked.
    let initial_set: BTreeSet<&str> = initial_matches.iter().map(String::as_str).collect();
    let mut expanded: BTreeSet<String> = BTreeSet::new();
    for name in &initial_matches {
        for neighbor in related(graph, name, policy) {
            if initial_set.contains(neighbor.as_str()) {
                continue;
            }
            if instructions.position(&neighbor).is_none() {
                notes.push(format!(
                    "expansion candidate {neighbor:?} is not in the instruction set; skipped"
                ));
                continue;
            }
            expanded.insert(neighbor);
        }
    }

    // Phase 3: rank the combined candidate set and take its best.
    let candidate_names: Vec<&str> = initial_matches
        .iter()
        .map(String::as_str)
        .chain(expanded.iter().map(String::as_str))
        .collect();
    let candidate_results: Vec<_> = evaluated
        .results
        .iter()
        .filter(|r| candidate_names.contains(&r.fallacy.as_str()))
        .cloned()
        .collect();
    let phase3 = rank_candidates(candidate_results, instructions.dataset_order())
        .expect("candidate names come from the instruction set");
    let best = phase3.best();
    let selector = if best.verdict {
        Selector::FirstMatch
    } else {
        Selector::Ranked
    };
    notes.push(format!(
        "phase 3 selected {} from {} candidates",
        best.fallacy,
        phase3.len()
    ));
    let outcome = if !best.verdict && options.abstain_without_full_match {
        Outcome::Failed(super::FailureRecord {
            kind: super::FailureKind::Abstain,
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
        pipeline: Pipeline::GraphAugmented,
        mode: Some(Mode::PerStep),
        outcome,
        // The full ranking over every record, as in stepwise mode; the
        // phase-3 subset is recorded in the expansion summary.
        ranking: Some(full_ranking),
        trace: TraceBundle {
            candidates: evaluated
                .results
                .into_iter()
                .map(|result| {
                    let phase = if expanded.contains(&result.fallacy) {
                        Phase::Expanded
                    } else {
                        Phase::Initial
                    };
                    let shared = phase == Phase::Expanded;
                    TraceCandidate {
                        phase,
                        shared,
                        result,
                    }
                })
                .collect(),
            transcripts: evaluated.transcripts,
            expansion: Some(super::ExpansionSummary {
                initial_matches,
                expanded: expanded.into_iter().collect(),
            }),
            selector,
            notes,
        },
    }
}

pub fn run_graph_augmented_monolithic(
    case: &TestCase,
    instructions: &InstructionSet,
    graph: &RelationalGraph,
    client: &dyn CompletionClient,
    aliases: &AliasTable,
    options: &LlmOptions,
) -> Prediction {
    if graph.is_empty() {
        return super::run_stepwise_monolithic(case, instructions, client, aliases, options);
    }
    let instructions_json = String::from_utf8(serialize_instruction_set(instructions))
        .expect("instruction JSON is UTF-8");
    let relations_text = graph.to_fact_text();
    let prompt = prompts::render(
        prompts::GRAPH_AUGMENTED,
        &[
            ("instructions", instructions_json.as_str()),
            ("relations", relations_text.as_str()),
            ("example", case.statement.as_str()),
        ],
    );
    monolithic_with_prompt(
        case,
        instructions,
        client,
        aliases,
        options,
        Pipeline::GraphAugmented,
        &prompt,
    )
}

//! Three-tier hierarchical classification.
//!
//! Three sequential prompts: formal/informal, the subcategory under the
//! chosen branch, then the leaf under the chosen subcategory. Models may
//! revise earlier levels in later responses; the final value parsed per
//! level wins. A level that fails its format budget aborts the deeper
//! levels and the case scores incorrect.

use super::{
    complete_parsed, Label, LlmOptions, Outcome, Pipeline, Prediction, Selector, TraceBundle,
};
use crate::instructions::{strip_fallacy_suffix, AliasTable, TestCase};
use crate::providers::parse::{parse_level_output, FormatError};
use crate::providers::{prompts, CompletionClient};
use crate::taxonomy::{PredictionPath, TaxonomyNode};

fn render_options(nodes: &[TaxonomyNode]) -> String {
    nodes
        .iter()
        .map(|n| {
            if n.definition.is_empty() {
                n.label.clone()
            } else {
                format!("{} ({})", n.label, n.definition)
            }
        })
        .collect::<Vec<_>>()
        .join(", ")
}

fn branch<'a>(taxonomy: &'a TaxonomyNode, label: &str) -> Option<&'a TaxonomyNode> {
    taxonomy.children.iter().find(|c| c.label == label)
}

fn find_tier2<'a>(taxonomy: &'a TaxonomyNode, label: &str) -> Option<&'a TaxonomyNode> {
    taxonomy
        .children
        .iter()
        .flat_map(|branch| branch.children.iter())
        .find(|n| n.label == label)
}

/// Track the final value seen per level across all responses.
#[derive(Default)]
struct Revisions {
    levels: [Option<String>; 3],
}

impl Revisions {
    fn absorb(&mut self, response: &str) {
        for level in 1..=3u8 {
            if let Ok(value) = parse_level_output(response, level) {
                self.levels[usize::from(level) - 1] =
                    Some(strip_if_tier(&value, level));
            }
        }
    }

    fn get(&self, level: u8) -> Option<&str> {
        self.levels[usize::from(level) - 1].as_deref()
    }
}

// Tier-1/2 labels drop the "fallacy" suffix; the leaf keeps its full name.
fn strip_if_tier(value: &str, level: u8) -> String {
    if level == 3 {
        value.to_string()
    } else {
        strip_fallacy_suffix(value).to_string()
    }
}

pub fn run_hierarchical(
    case: &TestCase,
    taxonomy: &TaxonomyNode,
    client: &dyn CompletionClient,
    aliases: &AliasTable,
    options: &LlmOptions,
) -> Prediction {
    let mut transcripts = Vec::new();
    let mut notes = Vec::new();
    let mut revisions = Revisions::default();

    let fail = |failure, transcripts: Vec<String>, notes: Vec<String>| Prediction {
        case_id: case.id.clone(),
        pipeline: Pipeline::Hierarchical,
        mode: None,
        outcome: Outcome::Failed(failure),
        ranking: None,
        trace: TraceBundle {
            candidates: Vec::new(),
            transcripts,
            expansion: None,
            selector: Selector::ModelChoice,
            notes,
        },
    };

    // Level 1: formal or informal.
    let formal_definition = branch(taxonomy, "formal").map(|b| b.definition.clone()).unwrap_or_default();
    let informal_definition = branch(taxonomy, "informal").map(|b| b.definition.clone()).unwrap_or_default();
    let tier1_prompt = prompts::render(
        prompts::HIERARCHICAL_TIER1,
        &[
            ("formal_definition", formal_definition.as_str()),
            ("informal_definition", informal_definition.as_str()),
            ("example", case.statement.as_str()),
        ],
    );
    let tier1_vocab = ["formal", "informal"];
    let metadata = [("case_id", case.id.clone()), ("level", "1".to_string())];
    let parsed = complete_parsed(client, options, "level_1", &tier1_prompt, &metadata, |text| {
        let value = parse_level_output(text, 1)?;
        let stripped = strip_fallacy_suffix(&value).to_string();
        if tier1_vocab.contains(&stripped.as_str()) {
            Ok(stripped)
        } else {
            Err(FormatError::OutOfVocabulary {
                label: stripped,
                expected: tier1_vocab.iter().map(|s| s.to_string()).collect(),
            })
        }
    });
    let tier1_response = match parsed {
        Ok(parsed) => {
            transcripts.extend(parsed.transcripts.iter().cloned());
            parsed
        }
        Err((failure, mut keys)) => {
            transcripts.append(&mut keys);
            return fail(failure, transcripts, notes);
        }
    };
    revisions.absorb(&tier1_response.response_text);
    let tier1 = revisions.get(1).unwrap_or("informal").to_string();

    // Level 2: subcategory under the chosen branch.
    let Some(tier1_node) = branch(taxonomy, &tier1) else {
        // Unreachable given the vocabulary check, kept as a hard failure.
        return fail(
            super::FailureRecord {
                kind: super::FailureKind::Format,
                stage: "level_2_options".into(),
                attempts: 0,
                raw_responses: Vec::new(),
                message: format!("no branch {tier1:?} in the taxonomy"),
            },
            transcripts,
            notes,
        );
    };
    let tier2_vocab: Vec<String> = taxonomy
        .children
        .iter()
        .flat_map(|b| b.children.iter().map(|n| n.label.clone()))
        .collect();
    let tier2_prompt = prompts::render(
        prompts::HIERARCHICAL_TIER2,
        &[
            ("tier1", tier1.as_str()),
            ("options", render_options(&tier1_node.children).as_str()),
            ("example", case.statement.as_str()),
        ],
    );
    let metadata = [("case_id", case.id.clone()), ("level", "2".to_string())];
    let vocab = tier2_vocab.clone();
    let parsed = complete_parsed(client, options, "level_2", &tier2_prompt, &metadata, move |text| {
        let value = parse_level_output(text, 2)?;
        let stripped = strip_fallacy_suffix(&value).to_string();
        // Revisions may legitimately answer from the other branch.
        if vocab.contains(&stripped) {
            Ok(stripped)
        } else {
            Err(FormatError::OutOfVocabulary {
                label: stripped,
                expected: vocab.clone(),
            })
        }
    });
    let tier2_response = match parsed {
        Ok(parsed) => {
            transcripts.extend(parsed.transcripts.iter().cloned());
            parsed
        }
        Err((failure, mut keys)) => {
            transcripts.append(&mut keys);
            return fail(failure, transcripts, notes);
        }
    };
    revisions.absorb(&tier2_response.response_text);
    let tier2 = revisions
        .get(2)
        .map(str::to_string)
        .unwrap_or_else(|| tier2_response.value.clone());

    // Level 3: leaf under the chosen subcategory.
    let Some(tier2_node) = find_tier2(taxonomy, &tier2) else {
        return fail(
            super::FailureRecord {
                kind: super::FailureKind::Format,
                stage: "level_3_options".into(),
                attempts: 0,
                raw_responses: Vec::new(),
                message: format!("no tier-2 node {tier2:?} in the taxonomy"),
            },
            transcripts,
            notes,
        );
    };
    if tier2_node.children.is_empty() {
        notes.push(format!("tier-2 node {tier2:?} has no leaves"));
    }
    let tier3_prompt = prompts::render(
        prompts::HIERARCHICAL_TIER3,
        &[
            ("tier1", revisions.get(1).unwrap_or(&tier1).to_string().as_str()),
            ("tier2", tier2.as_str()),
            ("options", render_options(&tier2_node.children).as_str()),
            ("example", case.statement.as_str()),
        ],
    );
    let metadata = [("case_id", case.id.clone()), ("level", "3".to_string())];
    let parsed = complete_parsed(client, options, "level_3", &tier3_prompt, &metadata, |text| {
        parse_level_output(text, 3)
    });
    let tier3_response = match parsed {
        Ok(parsed) => {
            transcripts.extend(parsed.transcripts.iter().cloned());
            parsed
        }
        Err((failure, mut keys)) => {
            transcripts.append(&mut keys);
            return fail(failure, transcripts, notes);
        }
    };
    revisions.absorb(&tier3_response.response_text);

    let final_tier1 = revisions.get(1).unwrap_or(&tier1).to_string();
    let final_tier2 = revisions.get(2).unwrap_or(&tier2).to_string();
    let final_tier3_raw = revisions
        .get(3)
        .map(str::to_string)
        .unwrap_or_else(|| tier3_response.value.clone());
    // Leaves come back "with no fallacy"; the alias table restores the
    // dataset spelling.
    let final_tier3 = aliases
        .resolve(&final_tier3_raw)
        .unwrap_or(final_tier3_raw);

    Prediction {
        case_id: case.id.clone(),
        pipeline: Pipeline::Hierarchical,
        mode: None,
        outcome: Outcome::Predicted(Label::Path(PredictionPath {
            tier1: final_tier1,
            tier2: final_tier2,
            tier3: final_tier3,
        })),
        ranking: None,
        trace: TraceBundle {
            candidates: Vec::new(),
            transcripts,
            expansion: None,
            selector: Selector::ModelChoice,
            notes,
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instructions::AliasTable;
    use crate::providers::ScriptedClient;
    use crate::taxonomy::load_taxonomy;

    fn taxonomy() -> TaxonomyNode {
        load_taxonomy(
            br#"{"label": "fallacies", "definition": "", "children": [
                {"label": "formal", "definition": "an error in the argument's form", "children": [
                    {"label": "syllogism", "definition": "errors in syllogisms", "children": [
                        {"label": "illicit major", "definition": "d1", "children": []}
                    ]}
                ]},
                {"label": "informal", "definition": "unsound premises", "children": [
                    {"label": "ambiguity", "definition": "vagueness of terms", "children": [
                        {"label": "accent fallacy", "definition": "d2", "children": []},
                        {"label": "contextomy", "definition": "d3", "children": []}
                    ]}
                ]}
            ]}"#,
        )
        .unwrap()
    }

    fn case() -> TestCase {
        TestCase {
            id: "c1".into(),
            statement: "statement".into(),
            gold: "accent fallacy".into(),
        }
    }

    fn aliases() -> AliasTable {
        AliasTable::from_name_list(["accent fallacy", "contextomy", "illicit major"])
    }

    fn scripted_by_level() -> ScriptedClient {
        ScriptedClient::new("scripted").with_fallback(|req| {
            if req.prompt.contains("level_1_results") && req.prompt.contains("first level") {
                Some("level_1_results:#informal#".into())
            } else if req.prompt.contains("level 2 of classification") {
                Some("level_2_results:#ambiguity#".into())
            } else if req.prompt.contains("Moving on to level three") {
                Some("level_3_results:#accent#".into())
            } else {
                None
            }
        })
    }

    #[test]
    fn three_levels_assemble_a_path() {
        let prediction = run_hierarchical(
            &case(),
            &taxonomy(),
            &scripted_by_level(),
            &aliases(),
            &LlmOptions::new("m"),
        );
        match prediction.outcome.predicted().unwrap() {
            Label::Path(path) => {
                assert_eq!(path.tier1, "informal");
                assert_eq!(path.tier2, "ambiguity");
                // Alias restores the dataset spelling of the leaf.
                assert_eq!(path.tier3, "accent fallacy");
            }
            other => panic!("expected a path, got {other:?}"),
        }
        assert_eq!(prediction.trace.transcripts.len(), 3);
    }

    #[test]
    fn later_revision_overrides_earlier_level() {
        let client = ScriptedClient::new("scripted").with_fallback(|req| {
            if req.prompt.contains("first level") {
                Some("level_1_results:#formal#".into())
            } else if req.prompt.contains("level 2 of classification") {
                // Revises level 1 while answering level 2.
                Some("level_1_results:#informal#\nlevel_2_results:#ambiguity#".into())
            } else if req.prompt.contains("Moving on to level three") {
                Some("level_3_results:#contextomy#".into())
            } else {
                None
            }
        });
        let prediction =
            run_hierarchical(&case(), &taxonomy(), &client, &aliases(), &LlmOptions::new("m"));
        match prediction.outcome.predicted().unwrap() {
            Label::Path(path) => {
                assert_eq!(path.tier1, "informal");
                assert_eq!(path.tier2, "ambiguity");
                assert_eq!(path.tier3, "contextomy");
            }
            other => panic!("expected a path, got {other:?}"),
        }
    }

    #[test]
    fn tier1_failure_aborts_deeper_levels() {
        let client = ScriptedClient::new("scripted").with_fallback(|req| {
            if req.prompt.contains("first level") {
                Some("I cannot classify this".into())
            } else {
                panic!("deeper levels must not run after a level-1 failure");
            }
        });
        let prediction =
            run_hierarchical(&case(), &taxonomy(), &client, &aliases(), &LlmOptions::new("m"));
        let failure = prediction.outcome.failure().unwrap();
        assert_eq!(failure.stage, "level_1");
        assert_eq!(failure.attempts, 3);
    }

    #[test]
    fn out_of_vocabulary_tier2_fails_after_budget() {
        let client = ScriptedClient::new("scripted").with_fallback(|req| {
            if req.prompt.contains("first level") {
                Some("level_1_results:#informal#".into())
            } else if req.prompt.contains("level 2 of classification") {
                Some("level_2_results:#rhetoric#".into())
            } else {
                None
            }
        });
        let prediction =
            run_hierarchical(&case(), &taxonomy(), &client, &aliases(), &LlmOptions::new("m"));
        let failure = prediction.outcome.failure().unwrap();
        assert_eq!(failure.stage, "level_2");
        assert!(failure.message.contains("rhetoric"));
    }
}

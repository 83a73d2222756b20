//! Baseline classification: one prompt carrying every fallacy's
//! description, one parsed name back.

use super::{
    complete_parsed, Label, LlmOptions, Outcome, Pipeline, Prediction, Selector, TraceBundle,
};
use crate::instructions::{AliasTable, CatalogEntry, TestCase};
use crate::providers::parse::parse_classification_output;
use crate::providers::{prompts, CompletionClient};

pub(crate) fn render_catalog(catalog: &[CatalogEntry]) -> String {
    catalog
        .iter()
        .map(|entry| format!("{}: {}", entry.name, entry.description))
        .collect::<Vec<_>>()
        .join("\n")
}

pub fn run_baseline(
    case: &TestCase,
    catalog: &[CatalogEntry],
    client: &dyn CompletionClient,
    aliases: &AliasTable,
    options: &LlmOptions,
) -> Prediction {
    let prompt = prompts::render(
        prompts::BASELINE,
        &[
            ("catalog", render_catalog(catalog).as_str()),
            ("example", case.statement.as_str()),
        ],
    );
    let metadata = [
        ("case_id", case.id.clone()),
        ("pipeline", Pipeline::Baseline.name().to_string()),
    ];
    match complete_parsed(
        client,
        options,
        "classification",
        &prompt,
        &metadata,
        parse_classification_output,
    ) {
        Ok(parsed) => {
            let name = aliases
                .resolve(&parsed.value)
                .unwrap_or_else(|_| parsed.value.clone());
            Prediction {
                case_id: case.id.clone(),
                pipeline: Pipeline::Baseline,
                mode: None,
                outcome: Outcome::Predicted(Label::Flat(name)),
                ranking: None,
                trace: TraceBundle {
                    candidates: Vec::new(),
                    transcripts: parsed.transcripts,
                    expansion: None,
                    selector: Selector::ModelChoice,
                    notes: Vec::new(),
                },
            }
        }
        Err((failure, transcripts)) => Prediction {
            case_id: case.id.clone(),
            pipeline: Pipeline::Baseline,
            mode: None,
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

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instructions::parse_catalog;
    use crate::pipelines::FailureKind;
    use crate::providers::ScriptedClient;

    fn catalog() -> Vec<CatalogEntry> {
        parse_catalog(
            br#"[{"name": "accent fallacy", "description": "meaning shifts with emphasis"},
                {"name": "contextomy", "description": "meaning shifts with context"}]"#,
        )
        .unwrap()
    }

    fn case() -> TestCase {
        TestCase {
            id: "c1".into(),
            statement: "I never said she stole my money.".into(),
            gold: "accent fallacy".into(),
        }
    }

    #[test]
    fn parses_classification_marker() {
        let client = ScriptedClient::new("scripted")
            .with_fallback(|_| Some("#classification: contextomy#".to_string()));
        let aliases = AliasTable::new();
        let prediction = run_baseline(&case(), &catalog(), &client, &aliases, &LlmOptions::new("m"));
        assert_eq!(prediction.predicted_leaf(), Some("contextomy"));
        assert_eq!(prediction.trace.transcripts.len(), 1);
        assert_eq!(prediction.trace.selector, Selector::ModelChoice);
        assert!(prediction.ranking.is_none());
    }

    #[test]
    fn unparseable_thrice_records_failure_with_raw_texts() {
        let client =
            ScriptedClient::new("scripted").with_fallback(|_| Some("I think it is sarcasm".into()));
        let aliases = AliasTable::new();
        let prediction = run_baseline(&case(), &catalog(), &client, &aliases, &LlmOptions::new("m"));
        let failure = prediction.outcome.failure().expect("failure recorded");
        assert_eq!(failure.kind, FailureKind::Format);
        assert_eq!(failure.attempts, 3);
        assert_eq!(failure.raw_responses.len(), 3);
        assert_eq!(prediction.trace.transcripts.len(), 3);
    }

    #[test]
    fn catalog_renders_name_description_lines() {
        let text = render_catalog(&catalog());
        assert_eq!(
            text,
            "accent fallacy: meaning shifts with emphasis\ncontextomy: meaning shifts with context"
        );
    }
}

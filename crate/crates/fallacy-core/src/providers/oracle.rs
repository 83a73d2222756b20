//! The binary-answer contract and its implementations: a scripted oracle
//! for desk-scale verification and an LLM-backed answerer for the
//! per-step query mode.

use super::parse::parse_binary_answer;
use super::prompts;
use super::{CompletionClient, CompletionError, CompletionRequest};
use crate::instructions::{AliasTable, Answer, InstructionSet, TestCase};
use crate::matching::falsifying_steps;
use std::collections::{BTreeSet, HashMap};
use thiserror::Error;

/// One isolated binary question about one statement, with full provenance
/// so scripted implementations can key on it.
#[derive(Debug, Clone, Copy)]
pub struct StepQuery<'a> {
    pub fallacy: &'a str,
    pub step_index: usize,
    pub question: &'a str,
    pub statement: &'a str,
    pub case_id: &'a str,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnswerOutcome {
    pub answer: Answer,
    /// Transcript keys consulted while producing the answer (empty for
    /// scripted implementations).
    pub transcripts: Vec<String>,
}

impl AnswerOutcome {
    pub fn scripted(answer: Answer) -> AnswerOutcome {
        AnswerOutcome {
            answer,
            transcripts: Vec::new(),
        }
    }
}

#[derive(Debug, Error)]
pub enum AnswerError {
    #[error("no scripted answer for ({fallacy:?}, step {step}, case {case_id:?})")]
    MissingKey {
        fallacy: String,
        step: usize,
        case_id: String,
    },
    #[error("unparseable answer after {attempts} attempts: {raw:?}")]
    Unparseable {
        raw: String,
        attempts: u32,
        transcripts: Vec<String>,
    },
    #[error(transparent)]
    Completion(#[from] CompletionError),
}

/// Answer contract for per-step modes. Implementations must be
/// deterministic for identical inputs at temperature 0 with a warm cache,
/// and must tolerate concurrent callers.
pub trait BinaryAnswerer: Sync {
    fn answer(&self, query: &StepQuery<'_>) -> Result<AnswerOutcome, AnswerError>;
}

/// What a scripted oracle does when a key is absent from its table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MissingKeyPolicy {
    #[default]
    Error,
    FixedNo,
}

/// A lookup-table answerer keyed by (fallacy, step index, case id).
#[derive(Debug, Clone, Default)]
pub struct ScriptedOracle {
    table: HashMap<(String, usize, String), Answer>,
    policy: MissingKeyPolicy,
}

#[derive(Debug, Error)]
pub enum OracleBuildError {
    #[error("case {case_id:?}: gold label {gold:?} does not resolve to an instruction-set name")]
    UnresolvableGold { case_id: String, gold: String },
}

impl ScriptedOracle {
    pub fn new(policy: MissingKeyPolicy) -> ScriptedOracle {
        ScriptedOracle {
            table: HashMap::new(),
            policy,
        }
    }

    pub fn set_answer(
        &mut self,
        fallacy: impl Into<String>,
        step: usize,
        case_id: impl Into<String>,
        answer: Answer,
    ) {
        self.table.insert((fallacy.into(), step, case_id.into()), answer);
    }

    pub fn lookup(&self, fallacy: &str, step: usize, case_id: &str) -> Option<Answer> {
        self.table
            .get(&(fallacy.to_string(), step, case_id.to_string()))
            .copied()
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }

    /// Build the perfect oracle: for every case the gold record's answers
    /// equal its ground truth, and every non-gold record mismatches on a
    /// designated falsifying set (so its fold verdict is false no matter
    /// what the remaining steps hold) while matching everywhere else.
    ///
    /// The gold record is therefore the unique full match and the unique
    /// verdict-true candidate for its case.
    pub fn perfect(
        instructions: &InstructionSet,
        cases: &[TestCase],
        aliases: &AliasTable,
    ) -> Result<ScriptedOracle, OracleBuildError> {
        let mut oracle = ScriptedOracle::new(MissingKeyPolicy::Error);
        for case in cases {
            let gold = aliases
                .resolve(&case.gold)
                .ok()
                .filter(|g| instructions.position(g).is_some())
                .ok_or_else(|| OracleBuildError::UnresolvableGold {
                    case_id: case.id.clone(),
                    gold: case.gold.clone(),
                })?;
            for record in instructions.records() {
                let mismatches: BTreeSet<usize> = if record.name == gold {
                    BTreeSet::new()
                } else {
                    falsifying_steps(&record.operations)
                };
                for (i, truth) in record.ground_truth.iter().enumerate() {
                    let answer = if mismatches.contains(&i) {
                        truth.flip()
                    } else {
                        *truth
                    };
                    oracle.set_answer(record.name.clone(), i, case.id.clone(), answer);
                }
            }
        }
        Ok(oracle)
    }

    /// The designated mismatch positions the perfect constructor uses for
    /// a non-gold record.
    pub fn designated_mismatches(record: &crate::instructions::InstructionRecord) -> BTreeSet<usize> {
        falsifying_steps(&record.operations)
    }
}

#[derive(Debug, Error)]
pub enum OracleParseError {
    #[error("oracle table line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("oracle table line {line}: answer must be yes or no, got {value:?}")]
    BadAnswer { line: usize, value: String },
}

/// Parse a scripted oracle from its file form: one JSON record per line
/// with keys `fallacy`, `step`, `case_id`, `answer`.
pub fn parse_oracle_table(
    bytes: &[u8],
    policy: MissingKeyPolicy,
) -> Result<ScriptedOracle, OracleParseError> {
    #[derive(serde::Deserialize)]
    struct Row {
        fallacy: String,
        step: usize,
        case_id: String,
        answer: String,
    }
    let text = String::from_utf8_lossy(bytes);
    let mut oracle = ScriptedOracle::new(policy);
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row: Row = serde_json::from_str(line).map_err(|e| OracleParseError::Syntax {
            line: i + 1,
            message: e.to_string(),
        })?;
        let answer = match row.answer.as_str() {
            "yes" => Answer::Yes,
            "no" => Answer::No,
            other => {
                return Err(OracleParseError::BadAnswer {
                    line: i + 1,
                    value: other.to_string(),
                })
            }
        };
        oracle.set_answer(row.fallacy, row.step, row.case_id, answer);
    }
    Ok(oracle)
}

impl BinaryAnswerer for ScriptedOracle {
    fn answer(&self, query: &StepQuery<'_>) -> Result<AnswerOutcome, AnswerError> {
        match self.lookup(query.fallacy, query.step_index, query.case_id) {
            Some(answer) => Ok(AnswerOutcome::scripted(answer)),
            None => match self.policy {
                MissingKeyPolicy::FixedNo => Ok(AnswerOutcome::scripted(Answer::No)),
                MissingKeyPolicy::Error => Err(AnswerError::MissingKey {
                    fallacy: query.fallacy.to_string(),
                    step: query.step_index,
                    case_id: query.case_id.to_string(),
                }),
            },
        }
    }
}

/// LLM-backed answerer: one isolated prompt per step. Unparseable
/// responses re-prompt with a format reminder up to the budget; the
/// reminder changes the prompt, so retries get distinct cache keys and
/// replay stays exact.
pub struct LlmStepAnswerer<'a> {
    pub client: &'a dyn CompletionClient,
    pub model: String,
    pub temperature: f64,
    pub max_output: u32,
    /// Total attempts per step, including the first (default 3).
    pub format_attempts: u32,
}

impl<'a> LlmStepAnswerer<'a> {
    pub fn new(client: &'a dyn CompletionClient, model: impl Into<String>) -> Self {
        LlmStepAnswerer {
            client,
            model: model.into(),
            temperature: 0.0,
            max_output: 4096,
            format_attempts: 3,
        }
    }
}

impl BinaryAnswerer for LlmStepAnswerer<'_> {
    fn answer(&self, query: &StepQuery<'_>) -> Result<AnswerOutcome, AnswerError> {
        let base = prompts::render(
            prompts::PER_STEP,
            &[("question", query.question), ("statement", query.statement)],
        );
        let mut transcripts = Vec::new();
        let mut last_raw = String::new();
        let attempts = self.format_attempts.max(1);
        for attempt in 0..attempts {
            let prompt = if attempt == 0 {
                base.clone()
            } else {
                prompts::with_format_reminder(&base, attempt)
            };
            let mut request = CompletionRequest::new(&self.model, prompt);
            request.temperature = self.temperature;
            request.max_output = self.max_output;
            request
                .metadata
                .insert("case_id".into(), query.case_id.to_string());
            request
                .metadata
                .insert("fallacy".into(), query.fallacy.to_string());
            request
                .metadata
                .insert("step".into(), query.step_index.to_string());
            let response = self.client.complete(&request)?;
            transcripts.push(response.key.clone());
            match parse_binary_answer(&response.text) {
                Ok(answer) => {
                    return Ok(AnswerOutcome {
                        answer,
                        transcripts,
                    })
                }
                Err(_) => last_raw = response.text,
            }
        }
        Err(AnswerError::Unparseable {
            raw: last_raw,
            attempts,
            transcripts,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instructions::{parse_instruction_set, parse_test_cases};
    use crate::matching::{evaluate_candidate, AnswerPattern};

    fn fixture() -> (InstructionSet, Vec<TestCase>, AliasTable) {
        let set = parse_instruction_set(
            br#"[{"name": "alpha", "steps": ["A?", "B?"], "ground_truth": ["yes", "no"], "operations": ["and"]},
                {"name": "beta", "steps": ["C?", "D?", "E?"], "ground_truth": ["no", "yes", "yes"], "operations": ["or", "or"]},
                {"name": "gamma", "steps": ["F?"], "ground_truth": ["yes"], "operations": []}]"#,
        )
        .unwrap();
        let cases = parse_test_cases(
            br#"{"id": "c1", "statement": "s1", "gold": "alpha"}
{"id": "c2", "statement": "s2", "gold": "beta"}
{"id": "c3", "statement": "s3", "gold": "gamma"}"#,
        )
        .unwrap();
        let aliases = AliasTable::from_name_list(set.names());
        (set, cases, aliases)
    }

    fn pattern_for(
        oracle: &ScriptedOracle,
        record: &crate::instructions::InstructionRecord,
        case_id: &str,
    ) -> AnswerPattern {
        AnswerPattern(
            (0..record.step_count())
                .map(|i| oracle.lookup(&record.name, i, case_id).unwrap())
                .collect(),
        )
    }

    #[test]
    fn perfect_oracle_makes_gold_the_unique_full_match() {
        let (set, cases, aliases) = fixture();
        let oracle = ScriptedOracle::perfect(&set, &cases, &aliases).unwrap();
        for case in &cases {
            for record in set.records() {
                let pattern = pattern_for(&oracle, record, &case.id);
                let result = evaluate_candidate(record, &pattern).unwrap();
                if record.name == case.gold {
                    assert!(result.verdict, "{} should match for {}", record.name, case.id);
                    assert!(result.strength.is_full());
                } else {
                    assert!(!result.verdict, "{} should not match for {}", record.name, case.id);
                    assert!(!result.strength.is_full());
                }
            }
        }
    }

    #[test]
    fn or_records_are_falsified_despite_partial_matches() {
        // beta's connectives are all-or: a single mismatch cannot falsify
        // it, so the designated set must cover every step.
        let (set, _, _) = fixture();
        let beta = set.get("beta").unwrap();
        let designated = ScriptedOracle::designated_mismatches(beta);
        assert_eq!(designated.len(), 3);

        let alpha = set.get("alpha").unwrap();
        assert_eq!(ScriptedOracle::designated_mismatches(alpha).len(), 1);
    }

    #[test]
    fn oracle_table_parses_from_jsonl() {
        let oracle = parse_oracle_table(
            br#"{"fallacy": "alpha", "step": 0, "case_id": "c1", "answer": "yes"}
{"fallacy": "alpha", "step": 1, "case_id": "c1", "answer": "no"}"#,
            MissingKeyPolicy::Error,
        )
        .unwrap();
        assert_eq!(oracle.lookup("alpha", 0, "c1"), Some(Answer::Yes));
        assert_eq!(oracle.lookup("alpha", 1, "c1"), Some(Answer::No));

        let bad = parse_oracle_table(
            br#"{"fallacy": "alpha", "step": 0, "case_id": "c1", "answer": "maybe"}"#,
            MissingKeyPolicy::Error,
        );
        assert!(matches!(bad, Err(OracleParseError::BadAnswer { .. })));
    }

    #[test]
    fn missing_key_policies() {
        let oracle = ScriptedOracle::new(MissingKeyPolicy::Error);
        let query = StepQuery {
            fallacy: "x",
            step_index: 0,
            question: "Q?",
            statement: "s",
            case_id: "c",
        };
        assert!(matches!(
            oracle.answer(&query),
            Err(AnswerError::MissingKey { .. })
        ));

        let lenient = ScriptedOracle::new(MissingKeyPolicy::FixedNo);
        assert_eq!(lenient.answer(&query).unwrap().answer, Answer::No);
    }
}

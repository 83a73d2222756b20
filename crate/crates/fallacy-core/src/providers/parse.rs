//! Lenient parsers for model output formats.

use crate::instructions::{canonicalize_name, Answer};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FormatError {
    #[error("unparseable yes/no answer: {raw:?}")]
    UnparseableAnswer { raw: String },
    #[error("missing {marker:?} marker in response: {raw:?}")]
    MissingMarker { marker: String, raw: String },
    #[error("empty name inside {marker:?} marker")]
    EmptyName { marker: String },
    #[error("label {label:?} is not one of {expected:?}")]
    OutOfVocabulary {
        label: String,
        expected: Vec<String>,
    },
}

/// Read a leading yes/no token, case-insensitively, skipping leading
/// punctuation and markdown. The token must end at a word boundary, so
/// "yesterday" does not parse.
pub fn parse_binary_answer(text: &str) -> Result<Answer, FormatError> {
    let rest = text.trim_start_matches(|c: char| !c.is_alphanumeric());
    let token: String = rest
        .chars()
        .take_while(|c| c.is_alphabetic())
        .flat_map(|c| c.to_lowercase())
        .collect();
    match token.as_str() {
        "yes" => Ok(Answer::Yes),
        "no" => Ok(Answer::No),
        _ => Err(FormatError::UnparseableAnswer {
            raw: truncate(text),
        }),
    }
}

/// Extract the first well-formed `#classification: X#` block and
/// canonicalize X.
pub fn parse_classification_output(text: &str) -> Result<String, FormatError> {
    const MARKER: &str = "#classification:";
    extract_block(text, MARKER, Occurrence::First)
}

/// Extract the hierarchical `level_N_results:#X#` value. Models may
/// revise earlier levels in later output, so the last well-formed
/// occurrence wins.
pub fn parse_level_output(text: &str, level: u8) -> Result<String, FormatError> {
    let marker = format!("level_{level}_results:");
    extract_block(text, &marker, Occurrence::Last)
}

enum Occurrence {
    First,
    Last,
}

// The classification marker already opens its block (`#classification: X#`);
// the level markers are followed by a fresh `#X#` pair.
fn extract_block(text: &str, marker: &str, which: Occurrence) -> Result<String, FormatError> {
    let opens_block = marker.starts_with('#');
    let mut found_marker = false;
    let mut best: Option<String> = None;
    let mut search = 0;
    while let Some(offset) = text[search..].find(marker) {
        found_marker = true;
        let after = search + offset + marker.len();
        search = after;
        let tail = &text[after..];
        let inner = if opens_block {
            tail
        } else {
            match tail.trim_start().strip_prefix('#') {
                Some(rest) => rest,
                None => continue,
            }
        };
        let Some(end) = inner.find('#') else {
            continue;
        };
        // Malformed or empty bodies never clobber an earlier good value.
        if let Ok(name) = canonicalize_name(&inner[..end]) {
            best = Some(name);
            if matches!(which, Occurrence::First) {
                break;
            }
        }
    }
    if !found_marker {
        return Err(FormatError::MissingMarker {
            marker: marker.to_string(),
            raw: truncate(text),
        });
    }
    best.ok_or(FormatError::EmptyName {
        marker: marker.to_string(),
    })
}

/// Pull the per-step evaluation lines out of a monolithic response:
/// `Step N evaluation: [Yes/No] - reasoning`. Returns answers in step
/// order; best-effort, for the trace only.
pub fn parse_step_evaluations(text: &str) -> Vec<Answer> {
    let mut numbered: Vec<(u32, Answer)> = Vec::new();
    for line in text.lines() {
        let trimmed = line.trim();
        let lowered = trimmed.to_lowercase();
        let Some(rest) = lowered.strip_prefix("step ") else {
            continue;
        };
        let digits: String = rest.chars().take_while(|c| c.is_ascii_digit()).collect();
        let Ok(number) = digits.parse::<u32>() else {
            continue;
        };
        let Some(after_number) = rest.strip_prefix(&digits) else {
            continue;
        };
        let Some(value) = after_number.trim_start().strip_prefix("evaluation:") else {
            continue;
        };
        if let Ok(answer) = parse_binary_answer(value) {
            numbered.push((number, answer));
        }
    }
    numbered.sort_by_key(|(n, _)| *n);
    numbered.into_iter().map(|(_, a)| a).collect()
}

fn truncate(s: &str) -> String {
    const LIMIT: usize = 160;
    if s.len() <= LIMIT {
        s.to_string()
    } else {
        let mut end = LIMIT;
        while !s.is_char_boundary(end) {
            end -= 1;
        }
        format!("{}…", &s[..end])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instructions::Answer::{No, Yes};

    #[test]
    fn binary_answer_hand_labeled_fixture() {
        // 20 hand-labeled strings exercising the leading-token rule.
        let fixture: [(&str, Option<Answer>); 20] = [
            ("yes", Some(Yes)),
            ("Yes.", Some(Yes)),
            ("YES!", Some(Yes)),
            ("  yes, the emphasis shifts", Some(Yes)),
            ("**Yes**", Some(Yes)),
            ("\"yes\"", Some(Yes)),
            ("Yes - the context is altered", Some(Yes)),
            ("yes\nBecause the meaning changes.", Some(Yes)),
            ("no", Some(No)),
            ("No.", Some(No)),
            ("no - the emphasis is unchanged", Some(No)),
            ("NO, there is no shift", Some(No)),
            ("- no", Some(No)),
            ("(no)", Some(No)),
            ("possibly", None),
            ("yesterday it was", None),
            ("nope", None),
            ("maybe yes", None),
            ("The answer is yes", None),
            ("", None),
        ];
        for (raw, expected) in fixture {
            match expected {
                Some(answer) => assert_eq!(parse_binary_answer(raw).unwrap(), answer, "{raw:?}"),
                None => assert!(parse_binary_answer(raw).is_err(), "{raw:?} should not parse"),
            }
        }
    }

    #[test]
    fn binary_answer_round_trips_domain() {
        for answer in [Yes, No] {
            assert_eq!(parse_binary_answer(answer.as_str()).unwrap(), answer);
        }
    }

    #[test]
    fn classification_marker() {
        assert_eq!(
            parse_classification_output("#classification: accent fallacy#").unwrap(),
            "accent fallacy"
        );
        // Bracket placeholders and case are normalized away.
        assert_eq!(
            parse_classification_output("noise\n#classification: [Contextomy]#\ntrailing").unwrap(),
            "contextomy"
        );
        // First well-formed block wins.
        assert_eq!(
            parse_classification_output("#classification: a# then #classification: b#").unwrap(),
            "a"
        );
        assert!(matches!(
            parse_classification_output("no markers here"),
            Err(FormatError::MissingMarker { .. })
        ));
        assert!(matches!(
            parse_classification_output("#classification: #"),
            Err(FormatError::EmptyName { .. })
        ));
    }

    #[test]
    fn level_markers() {
        assert_eq!(parse_level_output("level_1_results:#informal#", 1).unwrap(), "informal");
        assert_eq!(parse_level_output("level_2_results: #ambiguity#", 2).unwrap(), "ambiguity");
        // Last occurrence wins: the model revised itself.
        assert_eq!(
            parse_level_output("level_1_results:#formal# ... level_1_results:#informal#", 1).unwrap(),
            "informal"
        );
        assert!(parse_level_output("level_2_results:#x#", 1).is_err());
    }

    #[test]
    fn step_evaluation_block() {
        let text = "#classification: accent fallacy#\n\nFor accent fallacy:\nStep 1 evaluation: Yes - there is a claim\nStep 2 evaluation: Yes - emphasis present\nStep 3 evaluation: No - no reinterpretation\n\nPattern comparison: My answers Y/Y/N do not match\n#";
        assert_eq!(parse_step_evaluations(text), vec![Yes, Yes, No]);
        assert!(parse_step_evaluations("nothing structured").is_empty());
    }
}

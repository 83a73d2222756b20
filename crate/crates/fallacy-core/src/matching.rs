//! Core symbolic semantics: pointwise step comparison, the connective
//! fold, match strength, and candidate ranking.
//!
//! The fold is a strict left-to-right fold with no precedence: the steps
//! execute in order, so `acc := m1; acc := acc op_i m_{i+1}`.

use crate::instructions::{Answer, Connective, InstructionRecord};
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::collections::HashMap;
use std::fmt;
use thiserror::Error;

/// An ordered answer pattern, one answer per step of the target record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnswerPattern(pub Vec<Answer>);

impl AnswerPattern {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn answers(&self) -> &[Answer] {
        &self.0
    }
}

impl From<Vec<Answer>> for AnswerPattern {
    fn from(answers: Vec<Answer>) -> Self {
        AnswerPattern(answers)
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MatchError {
    #[error("answer pattern length {answers} does not match step count {steps}")]
    LengthMismatch { answers: usize, steps: usize },
    #[error("operations arity {operations} does not fit {matches} step matches")]
    ArityMismatch { operations: usize, matches: usize },
    #[error("empty step-match sequence")]
    Empty,
    #[error("name {name:?} not present in dataset order")]
    UnknownName { name: String },
}

/// Exact match strength: the fraction of steps whose answer equals the
/// ground truth. Stored as a ratio so comparisons and display rounding
/// never drift. Equality and ordering are by value (1/2 == 2/4).
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Strength {
    pub matched: u32,
    pub total: u32,
}

impl PartialEq for Strength {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Strength {}

impl Strength {
    pub fn new(matched: usize, total: usize) -> Strength {
        Strength {
            matched: matched as u32,
            total: total as u32,
        }
    }

    pub fn is_full(&self) -> bool {
        self.matched == self.total
    }

    pub fn as_f64(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            f64::from(self.matched) / f64::from(self.total)
        }
    }
}

impl PartialOrd for Strength {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Strength {
    fn cmp(&self, other: &Self) -> Ordering {
        // Cross-multiplied comparison keeps ordering exact.
        let left = u64::from(self.matched) * u64::from(other.total);
        let right = u64::from(other.matched) * u64::from(self.total);
        left.cmp(&right)
    }
}

impl fmt::Display for Strength {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.matched, self.total)
    }
}

/// The outcome of executing one record's steps against an answer pattern.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    pub fallacy: String,
    pub step_matches: Vec<bool>,
    pub verdict: bool,
    pub strength: Strength,
    pub answers: AnswerPattern,
}

/// Pointwise comparison: element i is `answers[i] == ground_truth[i]`.
pub fn step_matches(
    record: &InstructionRecord,
    answers: &AnswerPattern,
) -> Result<Vec<bool>, MatchError> {
    if answers.len() != record.steps.len() {
        return Err(MatchError::LengthMismatch {
            answers: answers.len(),
            steps: record.steps.len(),
        });
    }
    Ok(answers
        .answers()
        .iter()
        .zip(&record.ground_truth)
        .map(|(a, g)| a == g)
        .collect())
}

/// Strict left-to-right fold of the step matches through the connectives,
/// with no precedence between and/or.
pub fn fold_pattern(matches: &[bool], operations: &[Connective]) -> Result<bool, MatchError> {
    if matches.is_empty() {
        return Err(MatchError::Empty);
    }
    if operations.len() != matches.len() - 1 {
        return Err(MatchError::ArityMismatch {
            operations: operations.len(),
            matches: matches.len(),
        });
    }
    let mut acc = matches[0];
    for (op, &m) in operations.iter().zip(&matches[1..]) {
        acc = op.apply(acc, m);
    }
    Ok(acc)
}

/// Execute one candidate: pointwise matches, fold verdict, strength.
pub fn evaluate_candidate(
    record: &InstructionRecord,
    answers: &AnswerPattern,
) -> Result<MatchResult, MatchError> {
    let matches = step_matches(record, answers)?;
    let verdict = fold_pattern(&matches, &record.operations)?;
    let matched = matches.iter().filter(|m| **m).count();
    Ok(MatchResult {
        fallacy: record.name.clone(),
        step_matches: matches,
        verdict,
        strength: Strength::new(matched, record.steps.len()),
        answers: answers.clone(),
    })
}

/// A set of step positions that forces the fold false whenever every
/// position in the set mismatches, regardless of the other positions.
///
/// For an all-and record the last step alone suffices; an `or` at the end
/// pulls the preceding accumulator in, so the set grows leftwards until
/// an `and` (or the first step) anchors it.
pub fn falsifying_steps(operations: &[Connective]) -> std::collections::BTreeSet<usize> {
    let mut set = std::collections::BTreeSet::new();
    let mut i = operations.len();
    loop {
        set.insert(i);
        if i == 0 {
            break;
        }
        match operations[i - 1] {
            Connective::And => break,
            Connective::Or => i -= 1,
        }
    }
    set
}

/// Candidate results ordered best-first.
///
/// Sort key, descending priority: verdict true before false, higher
/// strength, earlier dataset position. Positions are unique, so the order
/// is total and deterministic regardless of input order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateRanking(Vec<MatchResult>);

impl CandidateRanking {
    /// Wrap results that are already in ranked order (deserialized runs,
    /// hand-built fixtures). [`rank_candidates`] is the sorting path.
    pub fn from_sorted(results: Vec<MatchResult>) -> CandidateRanking {
        CandidateRanking(results)
    }

    pub fn results(&self) -> &[MatchResult] {
        &self.0
    }

    pub fn best(&self) -> &MatchResult {
        &self.0[0]
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// 1-based rank of a fallacy name, if present.
    pub fn rank_of(&self, name: &str) -> Option<usize> {
        self.0.iter().position(|r| r.fallacy == name).map(|i| i + 1)
    }
}

pub fn rank_candidates(
    results: Vec<MatchResult>,
    dataset_order: &HashMap<String, usize>,
) -> Result<CandidateRanking, MatchError> {
    if results.is_empty() {
        return Err(MatchError::Empty);
    }
    let mut keyed: Vec<(usize, MatchResult)> = Vec::with_capacity(results.len());
    for result in results {
        let position = *dataset_order
            .get(&result.fallacy)
            .ok_or_else(|| MatchError::UnknownName {
                name: result.fallacy.clone(),
            })?;
        keyed.push((position, result));
    }
    keyed.sort_by(|(pa, a), (pb, b)| {
        b.verdict
            .cmp(&a.verdict)
            .then_with(|| b.strength.cmp(&a.strength))
            .then_with(|| pa.cmp(pb))
    });
    Ok(CandidateRanking(keyed.into_iter().map(|(_, r)| r).collect()))
}

//! Symbolic engine and evaluation harness for stepwise logical fallacy
//! classification.
//!
//! The library is organized around a small number of data contracts:
//!
//! - [`instructions`] — the stepwise instruction knowledge base (one record
//!   per fallacy: diagnostic yes/no steps, a ground-truth answer pattern,
//!   and the and/or connectives joining consecutive steps), plus the
//!   statement corpus and name canonicalization.
//! - [`matching`] — the core symbolic semantics: compare an answer pattern
//!   to a record's ground truth, fold the per-step matches through the
//!   connectives, compute match strength, and rank candidates.
//! - [`relations`] — the confused-with fact file (a Prolog-subset syntax)
//!   and neighborhood queries over it.
//! - [`taxonomy`] — the formal/informal → subcategory → leaf hierarchy and
//!   the all-levels scoring rule.
//! - [`providers`] — every way the system obtains answers: live chat
//!   completion clients, a replayable transcript cache, scripted clients
//!   and oracles for deterministic runs, and response-format parsing.
//! - [`pipelines`] — the four classification procedures end to end.
//! - [`scoring`] — accuracy, confusion pairs, top misclassifications,
//!   second-best rate, and report serialization.

pub mod instructions;
pub mod matching;
pub mod pipelines;
pub mod providers;
pub mod relations;
pub mod scoring;
pub mod taxonomy;

pub use instructions::{
    Answer, Connective, InstructionRecord, InstructionSet, TestCase,
};
pub use matching::{AnswerPattern, CandidateRanking, MatchResult, Strength};
pub use relations::{ClosurePolicy, ConfusionFact, RelationalGraph};
pub use taxonomy::{PredictionPath, TaxonomyNode};

//! The confused-with relation store.
//!
//! Facts come from a Prolog-subset file: ground binary clauses of a single
//! predicate, `confused_with(<atom>, <atom>).`, one per line, with `%`
//! comments. Atoms are lowercase-with-underscores and map onto the
//! space-separated canonical names used everywhere else. There is no
//! resolution, no variables, no rules — the file is purely a relation
//! store.

use crate::instructions::InstructionSet;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;
use thiserror::Error;

pub const PREDICATE: &str = "confused_with";

/// One ground fact: `source` is commonly confused with `target`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ConfusionFact {
    pub source: String,
    pub target: String,
}

/// How neighborhoods are computed from the raw facts.
///
/// The published experiments treated the confusion as mutual, so edges
/// default to undirected; directed mode is kept behind the flag. Depth 1
/// expands a candidate once; deeper closure is opt-in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClosurePolicy {
    pub symmetric: bool,
    pub depth: usize,
}

impl Default for ClosurePolicy {
    fn default() -> Self {
        ClosurePolicy {
            symmetric: true,
            depth: 1,
        }
    }
}

impl ClosurePolicy {
    pub fn new(symmetric: bool, depth: usize) -> Result<Self, RelationError> {
        if depth == 0 {
            return Err(RelationError::ZeroDepth);
        }
        Ok(ClosurePolicy { symmetric, depth })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RelationalGraph {
    facts: BTreeSet<ConfusionFact>,
    // Directed adjacency as written in the file; symmetric queries walk
    // both directions.
    forward: BTreeMap<String, BTreeSet<String>>,
    backward: BTreeMap<String, BTreeSet<String>>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RelationError {
    #[error("line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("line {line}: self-loop fact {name:?}")]
    SelfLoop { line: usize, name: String },
    #[error("closure depth must be at least 1")]
    ZeroDepth,
}

/// Non-fatal observations made while parsing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RelationWarning {
    DuplicateFact { line: usize, fact: ConfusionFact },
}

impl fmt::Display for RelationWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RelationWarning::DuplicateFact { line, fact } => write!(
                f,
                "line {line}: duplicate fact confused_with({}, {})",
                fact.source, fact.target
            ),
        }
    }
}

impl RelationalGraph {
    pub fn facts(&self) -> impl Iterator<Item = &ConfusionFact> {
        self.facts.iter()
    }

    pub fn fact_count(&self) -> usize {
        self.facts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.facts.is_empty()
    }

    /// Every name that appears as a fact endpoint.
    pub fn names(&self) -> BTreeSet<&str> {
        self.facts
            .iter()
            .flat_map(|f| [f.source.as_str(), f.target.as_str()])
            .collect()
    }

    pub fn contains_name(&self, name: &str) -> bool {
        self.forward.contains_key(name) || self.backward.contains_key(name)
    }

    fn add_fact(&mut self, fact: ConfusionFact) -> bool {
        let fresh = self.facts.insert(fact.clone());
        if fresh {
            self.forward
                .entry(fact.source.clone())
                .or_default()
                .insert(fact.target.clone());
            self.backward
                .entry(fact.target)
                .or_default()
                .insert(fact.source);
        }
        fresh
    }

    fn neighbors<'a>(&'a self, name: &str, symmetric: bool) -> BTreeSet<&'a str> {
        let mut out: BTreeSet<&str> = BTreeSet::new();
        if let Some(targets) = self.forward.get(name) {
            out.extend(targets.iter().map(String::as_str));
        }
        if symmetric {
            if let Some(sources) = self.backward.get(name) {
                out.extend(sources.iter().map(String::as_str));
            }
        }
        out
    }

    /// Render the graph back to fact-file syntax. parse ∘ print ∘ parse
    /// yields an equal fact set.
    pub fn to_fact_text(&self) -> String {
        let mut out = String::new();
        for fact in &self.facts {
            out.push_str(PREDICATE);
            out.push('(');
            out.push_str(&to_atom(&fact.source));
            out.push_str(", ");
            out.push_str(&to_atom(&fact.target));
            out.push_str(").\n");
        }
        out
    }
}

fn to_atom(canonical: &str) -> String {
    canonical.replace(' ', "_")
}

fn atom_to_name(atom: &str) -> String {
    atom.replace('_', " ")
}

/// Parse the fact file. Returns the graph plus dedup warnings.
pub fn parse_relation_facts(
    text: &str,
) -> Result<(RelationalGraph, Vec<RelationWarning>), RelationError> {
    let mut graph = RelationalGraph::default();
    let mut warnings = Vec::new();
    for (i, raw_line) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = match raw_line.find('%') {
            Some(pos) => &raw_line[..pos],
            None => raw_line,
        };
        if line.trim().is_empty() {
            continue;
        }
        let fact = parse_clause(line, line_no)?;
        if fact.source == fact.target {
            return Err(RelationError::SelfLoop {
                line: line_no,
                name: fact.source,
            });
        }
        if !graph.add_fact(fact.clone()) {
            warnings.push(RelationWarning::DuplicateFact {
                line: line_no,
                fact,
            });
        }
    }
    Ok((graph, warnings))
}

// Clause grammar: `confused_with ( atom , atom ) .` with whitespace free
// between tokens; atoms match [a-z][a-z0-9_]*.
fn parse_clause(line: &str, line_no: usize) -> Result<ConfusionFact, RelationError> {
    let mut scanner = Scanner::new(line, line_no);
    scanner.expect_ident(PREDICATE)?;
    scanner.expect_char('(')?;
    let source = scanner.expect_atom()?;
    scanner.expect_char(',')?;
    let target = scanner.expect_atom()?;
    scanner.expect_char(')')?;
    scanner.expect_char('.')?;
    scanner.expect_end()?;
    Ok(ConfusionFact {
        source: atom_to_name(&source),
        target: atom_to_name(&target),
    })
}

struct Scanner<'a> {
    chars: Vec<char>,
    pos: usize,
    line: usize,
    source: &'a str,
}

impl<'a> Scanner<'a> {
    fn new(source: &'a str, line: usize) -> Self {
        Scanner {
            chars: source.chars().collect(),
            pos: 0,
            line,
            source,
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.chars.len() && self.chars[self.pos].is_whitespace() {
            self.pos += 1;
        }
    }

    fn error(&self, message: String) -> RelationError {
        RelationError::Syntax {
            line: self.line,
            column: self.pos + 1,
            message: format!("{message} in {:?}", self.source.trim()),
        }
    }

    fn expect_ident(&mut self, ident: &str) -> Result<(), RelationError> {
        self.skip_ws();
        let end = self.pos + ident.chars().count();
        if end <= self.chars.len() && self.chars[self.pos..end].iter().collect::<String>() == ident
        {
            self.pos = end;
            Ok(())
        } else {
            Err(self.error(format!("expected predicate {ident:?}")))
        }
    }

    fn expect_char(&mut self, c: char) -> Result<(), RelationError> {
        self.skip_ws();
        if self.pos < self.chars.len() && self.chars[self.pos] == c {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.error(format!("expected {c:?}")))
        }
    }

    fn expect_atom(&mut self) -> Result<String, RelationError> {
        self.skip_ws();
        let start = self.pos;
        if self.pos >= self.chars.len() || !self.chars[self.pos].is_ascii_lowercase() {
            return Err(self.error("expected atom ([a-z][a-z0-9_]*)".to_string()));
        }
        self.pos += 1;
        while self.pos < self.chars.len() {
            let c = self.chars[self.pos];
            if c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_' {
                self.pos += 1;
            } else {
                break;
            }
        }
        Ok(self.chars[start..self.pos].iter().collect())
    }

    fn expect_end(&mut self) -> Result<(), RelationError> {
        self.skip_ws();
        if self.pos == self.chars.len() {
            Ok(())
        } else {
            Err(self.error("trailing input after clause".to_string()))
        }
    }
}

/// All names reachable from `name` within `policy.depth` hops, excluding
/// `name` itself. Unknown names yield the empty set.
pub fn related(
    graph: &RelationalGraph,
    name: &str,
    policy: ClosurePolicy,
) -> BTreeSet<String> {
    let mut reached: BTreeSet<&str> = BTreeSet::new();
    let mut queue: VecDeque<(&str, usize)> = VecDeque::new();
    let mut visited: BTreeSet<&str> = BTreeSet::new();

    let Some(start) = graph
        .forward
        .keys()
        .chain(graph.backward.keys())
        .find(|k| k.as_str() == name)
    else {
        return BTreeSet::new();
    };
    queue.push_back((start.as_str(), 0));
    visited.insert(start.as_str());

    while let Some((current, depth)) = queue.pop_front() {
        if depth == policy.depth {
            continue;
        }
        for neighbor in graph.neighbors(current, policy.symmetric) {
            if visited.insert(neighbor) {
                reached.insert(neighbor);
                queue.push_back((neighbor, depth + 1));
            }
        }
    }
    reached.remove(name);
    reached.into_iter().map(String::from).collect()
}

/// A fact endpoint that does not resolve to an instruction-set name.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GraphViolation {
    pub fact: ConfusionFact,
    pub endpoint: String,
}

impl fmt::Display for GraphViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "fact confused_with({}, {}): endpoint {:?} is not an instruction-set name",
            self.fact.source, self.fact.target, self.endpoint
        )
    }
}

/// Cross-check every fact endpoint against the instruction set.
pub fn validate_graph(
    graph: &RelationalGraph,
    instructions: &InstructionSet,
) -> Vec<GraphViolation> {
    let mut violations = Vec::new();
    for fact in graph.facts() {
        for endpoint in [&fact.source, &fact.target] {
            if instructions.position(endpoint).is_none() {
                violations.push(GraphViolation {
                    fact: fact.clone(),
                    endpoint: endpoint.clone(),
                });
            }
        }
    }
    violations
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instructions::parse_instruction_set;
    use proptest::prelude::*;

    #[test]
    fn parses_single_fact() {
        let (graph, warnings) =
            parse_relation_facts("confused_with(contextomy, accent_fallacy).\n").unwrap();
        assert!(warnings.is_empty());
        let facts: Vec<_> = graph.facts().collect();
        assert_eq!(facts.len(), 1);
        assert_eq!(facts[0].source, "contextomy");
        assert_eq!(facts[0].target, "accent fallacy");
    }

    #[test]
    fn comments_and_blanks_ignored() {
        let (graph, _) = parse_relation_facts("% just a comment\n\n  % another\n").unwrap();
        assert!(graph.is_empty());
        let (graph, _) =
            parse_relation_facts("confused_with(a, b). % trailing comment\n").unwrap();
        assert_eq!(graph.fact_count(), 1);
    }

    #[test]
    fn self_loop_is_an_error() {
        let err = parse_relation_facts("confused_with(x, x).").unwrap_err();
        assert_eq!(
            err,
            RelationError::SelfLoop {
                line: 1,
                name: "x".into()
            }
        );
    }

    #[test]
    fn duplicates_warn_and_dedup() {
        let (graph, warnings) =
            parse_relation_facts("confused_with(a, b).\nconfused_with(a, b).\n").unwrap();
        assert_eq!(graph.fact_count(), 1);
        assert_eq!(warnings.len(), 1);
    }

    #[test]
    fn syntax_errors_carry_line_numbers() {
        let err = parse_relation_facts("confused_with(a, b).\nconfuzed_with(a, b).\n").unwrap_err();
        match err {
            RelationError::Syntax { line, .. } => assert_eq!(line, 2),
            other => panic!("expected syntax error, got {other:?}"),
        }
        for bad in [
            "confused_with(A, b).",
            "confused_with(a b).",
            "confused_with(a, b)",
            "confused_with(a, b). extra",
            "confused_with(a, b, c).",
        ] {
            assert!(
                matches!(parse_relation_facts(bad), Err(RelationError::Syntax { .. })),
                "{bad:?} should be a syntax error"
            );
        }
    }

    #[test]
    fn whitespace_is_insignificant_between_tokens() {
        let (graph, _) =
            parse_relation_facts("  confused_with (  straw_man ,red_herring )  .  ").unwrap();
        let facts: Vec<_> = graph.facts().collect();
        assert_eq!(facts[0].source, "straw man");
        assert_eq!(facts[0].target, "red herring");
    }

    #[test]
    fn related_symmetric_depth_one() {
        let (graph, _) = parse_relation_facts("confused_with(contextomy, accent_fallacy).").unwrap();
        let policy = ClosurePolicy::default();
        let related_to_accent = related(&graph, "accent fallacy", policy);
        assert_eq!(
            related_to_accent.into_iter().collect::<Vec<_>>(),
            vec!["contextomy".to_string()]
        );
        let related_to_contextomy = related(&graph, "contextomy", policy);
        assert_eq!(
            related_to_contextomy.into_iter().collect::<Vec<_>>(),
            vec!["accent fallacy".to_string()]
        );
    }

    #[test]
    fn related_unknown_or_empty_is_empty() {
        let (graph, _) = parse_relation_facts("").unwrap();
        assert!(related(&graph, "anything", ClosurePolicy::default()).is_empty());
        let (graph, _) = parse_relation_facts("confused_with(a, b).").unwrap();
        assert!(related(&graph, "zzz", ClosurePolicy::default()).is_empty());
    }

    #[test]
    fn related_chain_depths_match_bfs() {
        let (graph, _) = parse_relation_facts("confused_with(a, b).\nconfused_with(b, c).").unwrap();
        let depth1 = related(&graph, "a", ClosurePolicy::new(true, 1).unwrap());
        assert_eq!(depth1.into_iter().collect::<Vec<_>>(), vec!["b".to_string()]);
        let depth2 = related(&graph, "a", ClosurePolicy::new(true, 2).unwrap());
        assert_eq!(
            depth2.into_iter().collect::<Vec<_>>(),
            vec!["b".to_string(), "c".to_string()]
        );
    }

    #[test]
    fn directed_mode_follows_arrows_only() {
        let (graph, _) = parse_relation_facts("confused_with(a, b).").unwrap();
        let policy = ClosurePolicy::new(false, 1).unwrap();
        assert_eq!(related(&graph, "a", policy).len(), 1);
        assert!(related(&graph, "b", policy).is_empty());
    }

    #[test]
    fn validate_against_instruction_set() {
        let set = parse_instruction_set(
            br#"[{"name": "accent fallacy", "steps": ["Q?"], "ground_truth": ["yes"], "operations": []},
                {"name": "contextomy", "steps": ["Q?"], "ground_truth": ["yes"], "operations": []}]"#,
        )
        .unwrap();
        let (graph, _) = parse_relation_facts(
            "confused_with(contextomy, accent_fallacy).\nconfused_with(contextomy, nonexistent_fallacy).\nconfused_with(ghost, accent_fallacy).",
        )
        .unwrap();
        let violations = validate_graph(&graph, &set);
        assert_eq!(violations.len(), 2);
        assert!(violations.iter().any(|v| v.endpoint == "nonexistent fallacy"));
        assert!(violations.iter().any(|v| v.endpoint == "ghost"));
    }

    #[test]
    fn pretty_print_round_trips() {
        let text = "confused_with(a, b).\nconfused_with(b, c).\nconfused_with(accent_fallacy, contextomy).\n";
        let (graph, _) = parse_relation_facts(text).unwrap();
        let printed = graph.to_fact_text();
        let (reparsed, _) = parse_relation_facts(&printed).unwrap();
        assert_eq!(graph, reparsed);
    }

    fn arb_graph() -> impl Strategy<Value = RelationalGraph> {
        proptest::collection::vec((0usize..50, 0usize..50), 0..120).prop_map(|pairs| {
            let mut graph = RelationalGraph::default();
            for (a, b) in pairs {
                if a != b {
                    graph.add_fact(ConfusionFact {
                        source: format!("n{a}"),
                        target: format!("n{b}"),
                    });
                }
            }
            graph
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn symmetric_policy_is_symmetric(graph in arb_graph(), depth in 1usize..4) {
            let policy = ClosurePolicy::new(true, depth).unwrap();
            let names: Vec<String> = graph.names().into_iter().map(String::from).collect();
            for a in &names {
                for b in related(&graph, a, policy) {
                    let back = related(&graph, &b, policy);
                    prop_assert!(back.contains(a), "{b} reaches {a}?");
                }
            }
        }

        #[test]
        fn related_never_contains_query(graph in arb_graph(), depth in 1usize..4, symmetric in any::<bool>()) {
            let policy = ClosurePolicy::new(symmetric, depth).unwrap();
            for name in graph.names().into_iter().map(String::from).collect::<Vec<_>>() {
                prop_assert!(!related(&graph, &name, policy).contains(&name));
            }
        }

        #[test]
        fn depth_is_monotone(graph in arb_graph(), depth in 1usize..4, symmetric in any::<bool>()) {
            let shallow = ClosurePolicy::new(symmetric, depth).unwrap();
            let deep = ClosurePolicy::new(symmetric, depth + 1).unwrap();
            for name in graph.names().into_iter().map(String::from).collect::<Vec<_>>() {
                let near = related(&graph, &name, shallow);
                let far = related(&graph, &name, deep);
                prop_assert!(near.is_subset(&far));
            }
        }

        #[test]
        fn print_parse_round_trip(graph in arb_graph()) {
            let (reparsed, warnings) = parse_relation_facts(&graph.to_fact_text()).unwrap();
            prop_assert!(warnings.is_empty());
            prop_assert_eq!(graph, reparsed);
        }
    }
}

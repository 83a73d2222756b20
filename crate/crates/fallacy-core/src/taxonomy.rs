//! The three-tier fallacy hierarchy and the all-levels scoring rule.
//!
//! Tier 1 splits formal from informal; tier 2 is a closed vocabulary of
//! subcategories per branch; tier 3 holds the leaf fallacies. The tree
//! content ships as an input data file and is validated, never invented.

use crate::instructions::{canonicalize_name, strip_fallacy_suffix, InstructionSet, NameError};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use thiserror::Error;

pub const FORMAL_TIER2: &[&str] = &["proposition", "quantification", "syllogism", "probability"];
pub const INFORMAL_TIER2: &[&str] = &[
    "ambiguity",
    "inconsistency",
    "irrelevance",
    "insufficiency",
    "inappropriate presumption",
];

/// A node in the hierarchy. The root sits at tier 0 and only holds the
/// two tier-1 branches.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaxonomyNode {
    pub label: String,
    #[serde(default)]
    pub definition: String,
    #[serde(default)]
    pub children: Vec<TaxonomyNode>,
    #[serde(skip)]
    pub tier: u8,
}

impl TaxonomyNode {
    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }
}

/// One final root-to-leaf classification. No structural invariants:
/// models may emit inconsistent paths, and scoring catches it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictionPath {
    pub tier1: String,
    pub tier2: String,
    pub tier3: String,
}

impl PredictionPath {
    pub fn new(tier1: impl Into<String>, tier2: impl Into<String>, tier3: impl Into<String>) -> Self {
        PredictionPath {
            tier1: tier1.into(),
            tier2: tier2.into(),
            tier3: tier3.into(),
        }
    }
}

#[derive(Debug, Error)]
pub enum TaxonomyError {
    #[error("taxonomy syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("node {1:?}: {0}")]
    BadLabel(NameError, String),
    #[error("root must have exactly the two tier-1 branches formal and informal, got {got:?}")]
    BadTier1 { got: Vec<String> },
    #[error("unknown tier-2 label {label:?} under {parent:?}")]
    UnknownTier2 { parent: String, label: String },
    #[error("taxonomy too deep: {label:?} sits below tier 3")]
    TooDeep { label: String },
    #[error("tier-2 node {label:?} duplicated under {parent:?}")]
    DuplicateTier2 { parent: String, label: String },
    #[error("leaf {leaf:?} appears under multiple parents ({first} and {second})")]
    AmbiguousLeaf {
        leaf: String,
        first: String,
        second: String,
    },
    #[error("unknown leaf {leaf:?}")]
    UnknownLeaf { leaf: String },
    #[error("leaf {leaf:?} does not resolve to an instruction-set name")]
    LeafNotInInstructionSet { leaf: String },
}

/// Parse and validate the taxonomy file: nested `{label, definition,
/// children}` records with tiers inferred by depth.
pub fn load_taxonomy(bytes: &[u8]) -> Result<TaxonomyNode, TaxonomyError> {
    let mut root: TaxonomyNode =
        serde_json::from_slice(bytes).map_err(|e| TaxonomyError::Syntax {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
    canonicalize_tree(&mut root, 0)?;
    validate_structure(&root)?;
    // Leaf uniqueness is checked eagerly so gold_path is total on valid trees.
    let _ = leaf_index(&root)?;
    Ok(root)
}

fn canonicalize_tree(node: &mut TaxonomyNode, tier: u8) -> Result<(), TaxonomyError> {
    let canonical = canonicalize_name(&node.label)
        .map_err(|e| TaxonomyError::BadLabel(e, node.label.clone()))?;
    // Tier labels are compared without the optional "fallacy" suffix; leaf
    // names keep it (the dataset spells leaves in full).
    node.label = if tier == 3 {
        canonical
    } else {
        strip_fallacy_suffix(&canonical).to_string()
    };
    node.tier = tier;
    if tier >= 3 && !node.children.is_empty() {
        return Err(TaxonomyError::TooDeep {
            label: node.children[0].label.clone(),
        });
    }
    for child in &mut node.children {
        canonicalize_tree(child, tier + 1)?;
    }
    Ok(())
}

fn validate_structure(root: &TaxonomyNode) -> Result<(), TaxonomyError> {
    let tier1: Vec<String> = root.children.iter().map(|c| c.label.clone()).collect();
    let mut sorted = tier1.clone();
    sorted.sort();
    if sorted != ["formal", "informal"] {
        return Err(TaxonomyError::BadTier1 { got: tier1 });
    }
    for branch in &root.children {
        let vocabulary: &[&str] = if branch.label == "formal" {
            FORMAL_TIER2
        } else {
            INFORMAL_TIER2
        };
        let mut seen = Vec::new();
        for sub in &branch.children {
            if !vocabulary.contains(&sub.label.as_str()) {
                return Err(TaxonomyError::UnknownTier2 {
                    parent: branch.label.clone(),
                    label: sub.label.clone(),
                });
            }
            if seen.contains(&sub.label) {
                return Err(TaxonomyError::DuplicateTier2 {
                    parent: branch.label.clone(),
                    label: sub.label.clone(),
                });
            }
            seen.push(sub.label.clone());
        }
    }
    Ok(())
}

fn leaf_index(root: &TaxonomyNode) -> Result<HashMap<String, (String, String)>, TaxonomyError> {
    let mut index: HashMap<String, (String, String)> = HashMap::new();
    for branch in &root.children {
        for sub in &branch.children {
            for leaf in &sub.children {
                if let Some((first_tier1, first_tier2)) = index.get(&leaf.label) {
                    return Err(TaxonomyError::AmbiguousLeaf {
                        leaf: leaf.label.clone(),
                        first: format!("{first_tier1}/{first_tier2}"),
                        second: format!("{}/{}", branch.label, sub.label),
                    });
                }
                index.insert(
                    leaf.label.clone(),
                    (branch.label.clone(), sub.label.clone()),
                );
            }
        }
    }
    Ok(index)
}

/// The unique root-to-leaf path for a leaf fallacy.
pub fn gold_path(root: &TaxonomyNode, leaf: &str) -> Result<PredictionPath, TaxonomyError> {
    let canonical = canonicalize_name(leaf).map_err(|e| TaxonomyError::BadLabel(e, leaf.into()))?;
    let index = leaf_index(root)?;
    let (tier1, tier2) = index
        .get(&canonical)
        .ok_or(TaxonomyError::UnknownLeaf { leaf: canonical.clone() })?;
    Ok(PredictionPath {
        tier1: tier1.clone(),
        tier2: tier2.clone(),
        tier3: canonical,
    })
}

/// Cross-check that every leaf resolves to an instruction-set name.
pub fn validate_leaves(
    root: &TaxonomyNode,
    instructions: &InstructionSet,
) -> Result<(), TaxonomyError> {
    let index = leaf_index(root)?;
    for leaf in index.keys() {
        if instructions.position(leaf).is_none() {
            return Err(TaxonomyError::LeafNotInInstructionSet { leaf: leaf.clone() });
        }
    }
    Ok(())
}

/// All-levels scoring: correct only when every tier matches after
/// canonicalization (tier labels compared without the "fallacy" suffix).
pub fn score_hierarchical(pred: &PredictionPath, gold: &PredictionPath) -> bool {
    fn tier_eq(a: &str, b: &str, strip: bool) -> bool {
        let norm = |s: &str| -> Option<String> {
            let c = canonicalize_name(s).ok()?;
            Some(if strip {
                strip_fallacy_suffix(&c).to_string()
            } else {
                c
            })
        };
        match (norm(a), norm(b)) {
            (Some(x), Some(y)) => x == y,
            _ => false,
        }
    }
    tier_eq(&pred.tier1, &gold.tier1, true)
        && tier_eq(&pred.tier2, &gold.tier2, true)
        && tier_eq(&pred.tier3, &gold.tier3, false)
}

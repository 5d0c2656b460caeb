//! Nested conditional logic and its flattening into an ordered rule list.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eval::Record;
use crate::model::{Condition, OutcomeSpec, Provenance, Rule, RuleSet};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum Node {
    Branch {
        /// Conjunction guarding `then`; never empty.
        conditions: Vec<Condition>,
        then: Box<Node>,
        /// Absent means the outcome default applies.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        otherwise: Option<Box<Node>>,
    },
    Leaf {
        outcome: String,
    },
}

impl Node {
    pub fn leaf(outcome: &str) -> Node {
        Node::Leaf { outcome: outcome.to_string() }
    }

    pub fn branch(conditions: Vec<Condition>, then: Node, otherwise: Option<Node>) -> Node {
        Node::Branch { conditions, then: Box::new(then), otherwise: otherwise.map(Box::new) }
    }

    /// Leaves plus one implicit default leaf per absent else.
    pub fn leaf_count(&self) -> usize {
        match self {
            Node::Leaf { .. } => 1,
            Node::Branch { then, otherwise, .. } => {
                then.leaf_count() + otherwise.as_ref().map_or(1, |o| o.leaf_count())
            }
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            Node::Leaf { .. } => 0,
            Node::Branch { then, otherwise, .. } => {
                1 + then.depth().max(otherwise.as_ref().map_or(0, |o| o.depth()))
            }
        }
    }

    fn outcomes<'a>(&'a self, out: &mut Vec<&'a str>) {
        match self {
            Node::Leaf { outcome } => out.push(outcome),
            Node::Branch { then, otherwise, .. } => {
                then.outcomes(out);
                if let Some(o) = otherwise {
                    o.outcomes(out);
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub root: Node,
    pub outcome_variable: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FlattenError {
    #[error("leaf outcome `{0}` is not one of the outcome levels")]
    UnknownOutcome(String),
    #[error("branch with an empty condition list")]
    EmptyBranch,
}

impl DecisionTree {
    /// Every leaf outcome in pre-order (implicit defaults excluded).
    pub fn leaf_outcomes(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.root.outcomes(&mut out);
        out
    }

    /// Walks the tree directly. `None` if a condition cannot be decided on `record`.
    pub fn interpret(&self, record: &Record, default_level: &str) -> Option<String> {
        let mut node = &self.root;
        loop {
            match node {
                Node::Leaf { outcome } => return Some(outcome.clone()),
                Node::Branch { conditions, then, otherwise } => {
                    let mut holds = true;
                    for c in conditions {
                        let value = record.get(&c.variable)?;
                        if !c.operator.apply(value, &c.value)? {
                            holds = false;
                            break;
                        }
                    }
                    node = match (holds, otherwise) {
                        (true, _) => then,
                        (false, Some(o)) => o,
                        (false, None) => return Some(default_level.to_string()),
                    };
                }
            }
        }
    }

    /// Outcome spec inferred from the leaves: levels in first-seen order, the
    /// default being the outcome reached when every branch is false.
    pub fn inferred_outcome_spec(&self) -> OutcomeSpec {
        let mut levels: Vec<String> = Vec::new();
        for o in self.leaf_outcomes() {
            if !levels.iter().any(|l| l == o) {
                levels.push(o.to_string());
            }
        }
        let mut node = &self.root;
        let default_level = loop {
            match node {
                Node::Leaf { outcome } => break Some(outcome.clone()),
                Node::Branch { otherwise: Some(o), .. } => node = o,
                Node::Branch { otherwise: None, .. } => break None,
            }
        };
        let default_level = match default_level {
            Some(level) => level,
            None => {
                let mut other = "NONE".to_string();
                while levels.contains(&other) {
                    other.push('_');
                }
                levels.push(other.clone());
                other
            }
        };
        if levels.len() < 2 {
            let mut other = "OTHER".to_string();
            while levels.contains(&other) {
                other.push('_');
            }
            levels.push(other);
        }
        OutcomeSpec { name: self.outcome_variable.clone(), levels, default_level }
    }
}

/// Ordered first-match-wins rule list equivalent to `tree`.
///
/// Leaves are visited in pre-order. A leaf's rule carries the conditions of
/// every ancestor whose then-branch leads to it; else-branches add nothing
/// because earlier rules already captured the then-side. An absent else yields
/// a rule for `outcome.default_level`. The leaf reached only through
/// else-branches has no conditions and lands last.
pub fn flatten(tree: &DecisionTree, outcome: &OutcomeSpec) -> Result<Vec<Rule>, FlattenError> {
    fn walk(
        node: &Node,
        path: &mut Vec<Condition>,
        outcome: &OutcomeSpec,
        out: &mut Vec<Rule>,
    ) -> Result<(), FlattenError> {
        match node {
            Node::Leaf { outcome: level } => {
                let level = outcome
                    .match_level(level)
                    .ok_or_else(|| FlattenError::UnknownOutcome(level.clone()))?;
                out.push(Rule { index: out.len(), conditions: path.clone(), outcome: level.to_string() });
            }
            Node::Branch { conditions, then, otherwise } => {
                if conditions.is_empty() {
                    return Err(FlattenError::EmptyBranch);
                }
                let mark = path.len();
                for c in conditions {
                    if !path.contains(c) {
                        path.push(c.clone());
                    }
                }
                walk(then, path, outcome, out)?;
                path.truncate(mark);
                match otherwise {
                    Some(o) => walk(o, path, outcome, out)?,
                    None => out.push(Rule {
                        index: out.len(),
                        conditions: path.clone(),
                        outcome: outcome.default_level.clone(),
                    }),
                }
            }
        }
        Ok(())
    }
    let mut rules = Vec::new();
    walk(&tree.root, &mut Vec::new(), outcome, &mut rules)?;
    Ok(rules)
}

/// Flattens into a complete rule set.
pub fn flatten_to_ruleset(
    tree: &DecisionTree,
    outcome: OutcomeSpec,
    name: &str,
    domain: &str,
    objective: &str,
    provenance: Provenance,
) -> Result<RuleSet, FlattenError> {
    let rules = flatten(tree, &outcome)?;
    Ok(RuleSet::new(name, domain, objective, outcome, rules, provenance))
}

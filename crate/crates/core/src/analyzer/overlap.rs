use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::Rational;
use crate::registry::VariableRegistry;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlapReport {
    pub left_vars: BTreeSet<String>,
    pub right_vars: BTreeSet<String>,
    pub intersection: BTreeSet<String>,
    pub union: BTreeSet<String>,
    /// 1 when both sides are empty.
    pub jaccard: Rational,
    pub only_left: BTreeSet<String>,
    pub only_right: BTreeSet<String>,
}

pub fn variable_overlap(a: &BTreeSet<String>, b: &BTreeSet<String>) -> OverlapReport {
    let intersection: BTreeSet<String> = a.intersection(b).cloned().collect();
    let union: BTreeSet<String> = a.union(b).cloned().collect();
    let jaccard = if union.is_empty() {
        Rational::ONE
    } else {
        Rational::new(intersection.len() as i64, union.len() as i64)
    };
    OverlapReport {
        left_vars: a.clone(),
        right_vars: b.clone(),
        only_left: a.difference(b).cloned().collect(),
        only_right: b.difference(a).cloned().collect(),
        intersection,
        union,
        jaccard,
    }
}

/// Overlap at the granularity of the registry's composite variables: members
/// of a composite (e.g. the comorbidities) count as the composite itself.
pub fn variable_overlap_in(registry: &VariableRegistry, a: &BTreeSet<String>, b: &BTreeSet<String>) -> OverlapReport {
    let a = registry.collapse_composites(a);
    let b = registry.collapse_composites(b);
    variable_overlap(&a, &b)
}

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{AnalyzerError, Rational};
use crate::model::RuleSet;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RulesetMetrics {
    pub id: String,
    pub name: String,
    pub rule_count: usize,
    /// One entry per rule, default rules included.
    pub condition_count_per_rule: Vec<usize>,
    /// Over non-default rules only; zero when there are none.
    pub mean_conditions: Rational,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub ruleset_count: usize,
    pub per_ruleset: Vec<RulesetMetrics>,
    /// Pooled over the non-default rules of every rule set.
    pub mean_conditions_overall: Rational,
    pub variables_used: BTreeSet<String>,
}

fn mean_of(counts: impl Iterator<Item = usize>) -> Rational {
    let (sum, n) = counts.fold((0i64, 0i64), |(s, n), c| (s + c as i64, n + 1));
    if n == 0 {
        Rational::ZERO
    } else {
        Rational::new(sum, n)
    }
}

pub fn compute_metrics(rulesets: &[RuleSet]) -> Result<MetricsReport, AnalyzerError> {
    if rulesets.is_empty() {
        return Err(AnalyzerError::EmptyInput);
    }
    let per_ruleset = rulesets
        .iter()
        .map(|rs| RulesetMetrics {
            id: rs.id.clone(),
            name: rs.name.clone(),
            rule_count: rs.rules.len(),
            condition_count_per_rule: rs.rules.iter().map(|r| r.conditions.len()).collect(),
            mean_conditions: mean_of(rs.rules.iter().filter(|r| !r.is_default()).map(|r| r.conditions.len())),
        })
        .collect();
    let pooled = rulesets.iter().flat_map(|rs| rs.rules.iter()).filter(|r| !r.is_default());
    Ok(MetricsReport {
        ruleset_count: rulesets.len(),
        per_ruleset,
        mean_conditions_overall: mean_of(pooled.map(|r| r.conditions.len())),
        variables_used: rulesets.iter().flat_map(|rs| rs.variables()).collect(),
    })
}

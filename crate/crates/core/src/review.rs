//! Structured SME edits applied to a rule set.

use serde::{Deserialize, Serialize};

use crate::model::{validate_ruleset, Condition, Diagnostic, DiagnosticCode, Provenance, Rule, RuleSet};
use crate::registry::VariableRegistry;

/// One reviewer action. Rule indices refer to the rule set under review.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum ReviewAction {
    Accept {
        rule: usize,
    },
    Edit {
        rule: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        conditions: Option<Vec<Condition>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        outcome: Option<String>,
    },
    Delete {
        rule: usize,
    },
    /// Inserted before rule `position`; without one, before a trailing
    /// default rule or else at the end.
    Add {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        position: Option<usize>,
        conditions: Vec<Condition>,
        outcome: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewDecision {
    pub ruleset_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resulting_ruleset_id: Option<String>,
    #[serde(default)]
    pub actions: Vec<ReviewAction>,
    pub reviewer: String,
    /// RFC 3339; copied into the edited rule set's provenance.
    pub timestamp: String,
}

fn bad(rule: Option<usize>, message: String) -> Diagnostic {
    Diagnostic::new(DiagnosticCode::InvalidReviewAction, rule, None, message)
}

/// The edited rule set with provenance `edited(parent = rs.id)`, or every
/// problem found. The result passes `validate_ruleset`.
pub fn apply_review(
    rs: &RuleSet,
    decision: &ReviewDecision,
    registry: &VariableRegistry,
) -> Result<RuleSet, Vec<Diagnostic>> {
    let mut problems = Vec::new();
    if decision.ruleset_id != rs.id {
        problems.push(bad(None, format!("decision targets {}, not {}", decision.ruleset_id, rs.id)));
    }
    let n = rs.rules.len();
    let mut slots: Vec<Option<Rule>> = rs.rules.iter().cloned().map(Some).collect();
    // (insert-before original index, rule); n means "at the end".
    let mut inserts: Vec<(usize, Rule)> = Vec::new();
    for action in &decision.actions {
        match action {
            ReviewAction::Accept { rule } | ReviewAction::Delete { rule } | ReviewAction::Edit { rule, .. }
                if *rule >= n =>
            {
                problems.push(bad(Some(*rule), format!("no rule {rule}; the rule set has {n}")));
            }
            ReviewAction::Accept { rule } => {
                if slots[*rule].is_none() {
                    problems.push(bad(Some(*rule), format!("rule {rule} was deleted")));
                }
            }
            ReviewAction::Delete { rule } => {
                if slots[*rule].take().is_none() {
                    problems.push(bad(Some(*rule), format!("rule {rule} deleted twice")));
                }
            }
            ReviewAction::Edit { rule, conditions, outcome } => match &mut slots[*rule] {
                Some(r) => {
                    if let Some(c) = conditions {
                        r.conditions = c.clone();
                    }
                    if let Some(o) = outcome {
                        r.outcome = o.clone();
                    }
                }
                None => problems.push(bad(Some(*rule), format!("rule {rule} was deleted"))),
            },
            ReviewAction::Add { position, conditions, outcome } => {
                let at = match position {
                    Some(p) if *p > n => {
                        problems.push(bad(None, format!("insert position {p} is past the end ({n})")));
                        continue;
                    }
                    Some(p) => *p,
                    None if rs.rules.last().is_some_and(Rule::is_default) => n - 1,
                    None => n,
                };
                inserts.push((at, Rule { index: 0, conditions: conditions.clone(), outcome: outcome.clone() }));
            }
        }
    }
    if !problems.is_empty() {
        return Err(problems);
    }

    let mut rules = Vec::new();
    for (i, slot) in slots.into_iter().enumerate() {
        rules.extend(inserts.iter().filter(|(at, _)| *at == i).map(|(_, r)| r.clone()));
        rules.extend(slot);
    }
    rules.extend(inserts.iter().filter(|(at, _)| *at == n).map(|(_, r)| r.clone()));

    let edited = RuleSet::new(
        &rs.name,
        &rs.domain,
        &rs.objective,
        rs.outcome.clone(),
        rules,
        Provenance::Edited {
            parent: rs.id.clone(),
            editor: decision.reviewer.clone(),
            timestamp: decision.timestamp.clone(),
        },
    );
    let diags = validate_ruleset(&edited, registry);
    if diags.is_empty() {
        Ok(edited)
    } else {
        Err(diags)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Literal, Operator, OutcomeSpec};

    fn base() -> RuleSet {
        let rules = vec![
            Rule {
                index: 0,
                conditions: vec![Condition::new("body_temperature", Operator::Ge, Literal::Number(37.5))],
                outcome: "RED".into(),
            },
            Rule { index: 1, conditions: vec![], outcome: "GREEN".into() },
        ];
        RuleSet::new("t", "Medical", "o", OutcomeSpec::triage(), rules, Provenance::Generated { run: "r".into() })
    }

    fn decision(rs: &RuleSet, actions: Vec<ReviewAction>) -> ReviewDecision {
        ReviewDecision {
            ruleset_id: rs.id.clone(),
            resulting_ruleset_id: None,
            actions,
            reviewer: "sme".into(),
            timestamp: "2024-01-01T00:00:00Z".into(),
        }
    }

    #[test]
    fn edit_changes_one_literal_and_links_parent() {
        let rs = base();
        let reg = VariableRegistry::medical();
        let edit = ReviewAction::Edit {
            rule: 0,
            conditions: Some(vec![Condition::new("body_temperature", Operator::Ge, Literal::Number(38.0))]),
            outcome: None,
        };
        let out = apply_review(&rs, &decision(&rs, vec![edit]), &reg).unwrap();
        assert_eq!(out.rules[0].conditions[0].value, Literal::Number(38.0));
        assert_eq!(out.rules[1], rs.rules[1]);
        assert!(matches!(&out.provenance, Provenance::Edited { parent, .. } if *parent == rs.id));
    }

    #[test]
    fn add_goes_before_trailing_default_and_delete_removes() {
        let rs = base();
        let reg = VariableRegistry::medical();
        let add = ReviewAction::Add {
            position: None,
            conditions: vec![Condition::new("cough", Operator::Eq, Literal::Bool(true))],
            outcome: "AMBER".into(),
        };
        let out = apply_review(&rs, &decision(&rs, vec![add, ReviewAction::Delete { rule: 0 }]), &reg).unwrap();
        let outcomes: Vec<&str> = out.rules.iter().map(|r| r.outcome.as_str()).collect();
        assert_eq!(outcomes, vec!["AMBER", "GREEN"]);
        assert_eq!(out.rules[1].index, 1);
    }

    #[test]
    fn unknown_outcome_fails_validation() {
        let rs = base();
        let reg = VariableRegistry::medical();
        let edit = ReviewAction::Edit { rule: 0, conditions: None, outcome: Some("PURPLE".into()) };
        let err = apply_review(&rs, &decision(&rs, vec![edit]), &reg).unwrap_err();
        assert!(err.iter().any(|d| d.code == DiagnosticCode::UnknownOutcomeLevel));
    }

    #[test]
    fn zero_actions_is_deterministic() {
        let rs = base();
        let reg = VariableRegistry::medical();
        let a = apply_review(&rs, &decision(&rs, vec![]), &reg).unwrap();
        let b = apply_review(&rs, &decision(&rs, vec![]), &reg).unwrap();
        assert_eq!(a.id, b.id);
        assert_eq!(a.rules, rs.rules);
    }

    #[test]
    fn out_of_range_rule_is_reported() {
        let rs = base();
        let reg = VariableRegistry::medical();
        let err = apply_review(&rs, &decision(&rs, vec![ReviewAction::Delete { rule: 9 }]), &reg).unwrap_err();
        assert_eq!(err[0].code, DiagnosticCode::InvalidReviewAction);
    }

    #[test]
    fn actions_use_tagged_json() {
        let json = r#"{"action":"edit","rule":0,"outcome":"AMBER"}"#;
        let a: ReviewAction = serde_json::from_str(json).unwrap();
        assert_eq!(a, ReviewAction::Edit { rule: 0, conditions: None, outcome: Some("AMBER".into()) });
    }
}

//! First-match-wins evaluation and boundary-value record generation.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::canonical::canonical_json;
use crate::model::{Condition, Literal, RuleSet};
use crate::registry::{VariableKind, VariableRegistry};

/// One observation vector: canonical variable name → value.
pub type Record = BTreeMap<String, Literal>;

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize)]
#[serde(tag = "code", content = "variable")]
pub enum EvalError {
    #[error("record is missing variable `{0}`")]
    MissingVariable(String),
    #[error("record value for `{0}` has the wrong type")]
    TypeMismatch(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleTrace {
    pub index: usize,
    /// Per-condition results, in condition order.
    pub conditions: Vec<bool>,
    pub matched: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalTrace {
    pub outcome: String,
    /// Index of the winning rule; `None` when the outcome default applied.
    pub matched_rule: Option<usize>,
    /// Every rule scanned up to and including the winner.
    pub trace: Vec<RuleTrace>,
}

fn check_condition(c: &Condition, record: &Record) -> Result<bool, EvalError> {
    let value = record.get(&c.variable).ok_or_else(|| EvalError::MissingVariable(c.variable.clone()))?;
    c.operator.apply(value, &c.value).ok_or_else(|| EvalError::TypeMismatch(c.variable.clone()))
}

/// Scans rules in index order; the first fully satisfied rule wins.
///
/// Every referenced variable is checked for presence and type before any rule
/// is scanned, so errors do not depend on rule order.
pub fn evaluate(rs: &RuleSet, record: &Record) -> Result<EvalTrace, EvalError> {
    for rule in &rs.rules {
        for c in &rule.conditions {
            check_condition(c, record)?;
        }
    }
    let mut trace = Vec::new();
    for rule in &rs.rules {
        let results: Vec<bool> = rule
            .conditions
            .iter()
            .map(|c| check_condition(c, record))
            .collect::<Result<_, _>>()?;
        let matched = results.iter().all(|&b| b);
        trace.push(RuleTrace { index: rule.index, conditions: results, matched });
        if matched {
            return Ok(EvalTrace { outcome: rule.outcome.clone(), matched_rule: Some(rule.index), trace });
        }
    }
    Ok(EvalTrace { outcome: rs.outcome.default_level.clone(), matched_rule: None, trace })
}

/// Rounds away binary noise from `t ± ε` (e.g. 37.5 - 0.1).
fn tidy(x: f64) -> f64 {
    let scaled = (x * 1e9).round() / 1e9;
    if scaled == 0.0 {
        0.0
    } else {
        scaled
    }
}

fn neutral(registry: &VariableRegistry, name: &str, rs: &RuleSet) -> Literal {
    if let Some(v) = registry.neutral_value(name) {
        return v;
    }
    // Unregistered variable: fall back on the literal type used in the rules.
    let sample = rs
        .rules
        .iter()
        .flat_map(|r| r.conditions.iter())
        .find(|c| c.variable == name)
        .map(|c| &c.value);
    match sample {
        Some(Literal::Number(_)) | None => Literal::Number(0.0),
        Some(Literal::Bool(_)) => Literal::Bool(false),
        Some(Literal::Level(l)) => Literal::Level(l.clone()),
    }
}

/// Candidate values for one variable: `t-ε, t, t+ε` per numeric threshold,
/// every level for booleans and categoricals.
fn probe_values(rs: &RuleSet, registry: &VariableRegistry, var: &str, epsilon: f64) -> Vec<Literal> {
    let mut values: Vec<Literal> = Vec::new();
    let push = |v: Literal, values: &mut Vec<Literal>| {
        if !values.contains(&v) {
            values.push(v);
        }
    };
    for c in rs.rules.iter().flat_map(|r| r.conditions.iter()).filter(|c| c.variable == var) {
        match (&c.value, registry.get(var).map(|s| &s.kind)) {
            (Literal::Number(t), _) => {
                for x in [t - epsilon, *t, t + epsilon] {
                    push(Literal::Number(tidy(x)), &mut values);
                }
            }
            (_, Some(VariableKind::Boolean)) | (Literal::Bool(_), None) => {
                push(Literal::Bool(false), &mut values);
                push(Literal::Bool(true), &mut values);
            }
            (_, Some(VariableKind::Categorical { levels })) => {
                for l in levels {
                    push(Literal::Level(l.clone()), &mut values);
                }
            }
            (lit, _) => push(lit.clone(), &mut values),
        }
    }
    values
}

/// Boundary-value records for `rs`.
///
/// Each numeric condition with threshold `t` yields records with the variable
/// at `t-ε`, `t` and `t+ε`; each boolean or categorical variable yields one
/// record per level. All other variables sit at their neutral values. For a
/// rule with several conditions, one extra record sets all of its variables
/// at once to probe values that satisfy it, when such values exist. A rule
/// set without conditions yields the single neutral record. Duplicates are
/// dropped, first occurrence kept.
pub fn boundary_records(rs: &RuleSet, registry: &VariableRegistry, epsilon: f64) -> Vec<Record> {
    assert!(epsilon > 0.0 && epsilon.is_finite(), "epsilon must be positive");
    let vars = rs.variables();
    let base: Record = vars.iter().map(|v| (v.clone(), neutral(registry, v, rs))).collect();
    let probes: BTreeMap<&String, Vec<Literal>> =
        vars.iter().map(|v| (v, probe_values(rs, registry, v, epsilon))).collect();

    let mut out: Vec<Record> = Vec::new();
    let mut seen = BTreeSet::new();
    let mut emit = |rec: Record, out: &mut Vec<Record>| {
        let key = canonical_json(&rec).expect("records serialize");
        if seen.insert(key) {
            out.push(rec);
        }
    };

    // Single-variable probes in order of first appearance.
    let mut order: Vec<&String> = Vec::new();
    for c in rs.rules.iter().flat_map(|r| r.conditions.iter()) {
        if !order.contains(&&c.variable) {
            order.push(&c.variable);
        }
    }
    for var in order {
        for value in &probes[var] {
            let mut rec = base.clone();
            rec.insert(var.clone(), value.clone());
            emit(rec, &mut out);
        }
    }

    // Joint witnesses for multi-variable rules.
    for rule in &rs.rules {
        let rule_vars: BTreeSet<&String> = rule.conditions.iter().map(|c| &c.variable).collect();
        if rule_vars.len() < 2 {
            continue;
        }
        let mut rec = base.clone();
        let mut satisfiable = true;
        for var in rule_vars {
            let mut candidates = vec![base[var].clone()];
            candidates.extend(probes[var].iter().cloned());
            let pick = candidates.into_iter().find(|value| {
                rule.conditions
                    .iter()
                    .filter(|c| &c.variable == var)
                    .all(|c| c.operator.apply(value, &c.value) == Some(true))
            });
            match pick {
                Some(value) => {
                    rec.insert(var.clone(), value);
                }
                None => {
                    satisfiable = false;
                    break;
                }
            }
        }
        if satisfiable {
            emit(rec, &mut out);
        }
    }

    if out.is_empty() {
        emit(base, &mut out);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Operator, OutcomeSpec, Provenance, Rule};

    fn rs_of(rules: Vec<(Vec<Condition>, &str)>) -> RuleSet {
        RuleSet::new(
            "t",
            "Medical",
            "o",
            OutcomeSpec::triage(),
            rules
                .into_iter()
                .map(|(conditions, outcome)| Rule { index: 0, conditions, outcome: outcome.into() })
                .collect(),
            Provenance::Expert,
        )
    }

    fn num(x: f64) -> Literal {
        Literal::Number(x)
    }

    fn rec(pairs: &[(&str, Literal)]) -> Record {
        pairs.iter().map(|(k, v)| (k.to_string(), v.clone())).collect()
    }

    fn fever() -> RuleSet {
        rs_of(vec![(vec![Condition::new("body_temperature", Operator::Ge, num(38.0))], "RED")])
    }

    #[test]
    fn fever_rule_fires_at_38_2() {
        let t = evaluate(&fever(), &rec(&[("body_temperature", num(38.2))])).unwrap();
        assert_eq!((t.outcome.as_str(), t.matched_rule), ("RED", Some(0)));
    }

    #[test]
    fn below_threshold_falls_to_default() {
        let t = evaluate(&fever(), &rec(&[("body_temperature", num(37.9))])).unwrap();
        assert_eq!((t.outcome.as_str(), t.matched_rule), ("GREEN", None));
        assert_eq!(t.trace, vec![RuleTrace { index: 0, conditions: vec![false], matched: false }]);
    }

    #[test]
    fn first_match_wins() {
        let rs = rs_of(vec![
            (vec![Condition::new("x", Operator::Ge, num(1.0))], "RED"),
            (vec![Condition::new("x", Operator::Ge, num(0.0))], "AMBER"),
        ]);
        // Oracle: sequential scan.
        for (x, want) in [(2.0, "RED"), (0.5, "AMBER"), (-1.0, "GREEN")] {
            let expected = if x >= 1.0 { "RED" } else if x >= 0.0 { "AMBER" } else { "GREEN" };
            assert_eq!(expected, want);
            assert_eq!(evaluate(&rs, &rec(&[("x", num(x))])).unwrap().outcome, want);
        }
    }

    #[test]
    fn missing_and_mistyped_variables() {
        assert_eq!(evaluate(&fever(), &Record::new()), Err(EvalError::MissingVariable("body_temperature".into())));
        assert_eq!(
            evaluate(&fever(), &rec(&[("body_temperature", Literal::Bool(true))])),
            Err(EvalError::TypeMismatch("body_temperature".into()))
        );
    }

    #[test]
    fn threshold_probes() {
        let reg = VariableRegistry::medical();
        let recs = boundary_records(&fever(), &reg, 0.1);
        let temps: Vec<f64> = recs.iter().map(|r| r["body_temperature"].as_number().unwrap()).collect();
        assert_eq!(temps, vec![37.9, 38.0, 38.1]);
    }

    #[test]
    fn boolean_only_rule_set_gives_two_records() {
        let reg = VariableRegistry::medical();
        let rs = rs_of(vec![(vec![Condition::new("cough", Operator::Eq, Literal::Bool(true))], "AMBER")]);
        let recs = boundary_records(&rs, &reg, 0.1);
        assert_eq!(recs, vec![rec(&[("cough", Literal::Bool(false))]), rec(&[("cough", Literal::Bool(true))])]);
    }

    #[test]
    fn two_thresholds_same_variable() {
        let reg = VariableRegistry::medical();
        let rs = rs_of(vec![
            (vec![Condition::new("body_temperature", Operator::Ge, num(38.0))], "RED"),
            (vec![Condition::new("body_temperature", Operator::Ge, num(37.5))], "AMBER"),
        ]);
        let got: BTreeSet<String> = boundary_records(&rs, &reg, 0.1)
            .iter()
            .map(|r| r["body_temperature"].to_string())
            .collect();
        // Oracle: enumerate {t-ε, t, t+ε} for each threshold as a set.
        let want: BTreeSet<String> = [38.0_f64, 37.5]
            .iter()
            .flat_map(|t| [t - 0.1, *t, t + 0.1])
            .map(|x| format!("{:.1}", x).trim_end_matches(".0").to_string())
            .collect();
        assert_eq!(got, want);
        assert_eq!(got.len(), 6);

        let overlapping = rs_of(vec![
            (vec![Condition::new("body_temperature", Operator::Ge, num(38.0))], "RED"),
            (vec![Condition::new("body_temperature", Operator::Ge, num(38.1))], "AMBER"),
        ]);
        assert_eq!(boundary_records(&overlapping, &reg, 0.1).len(), 4);
    }

    #[test]
    fn empty_rule_set_gives_neutral_record() {
        let reg = VariableRegistry::medical();
        let rs = rs_of(vec![(vec![], "GREEN")]);
        assert_eq!(boundary_records(&rs, &reg, 0.1), vec![Record::new()]);
    }

    #[test]
    fn conjunctive_rule_gets_joint_witness() {
        let reg = VariableRegistry::medical();
        let rs = rs_of(vec![(
            vec![
                Condition::new("body_temperature", Operator::Ge, num(38.0)),
                Condition::new("oxygen_saturation", Operator::Lt, num(92.0)),
            ],
            "RED",
        )]);
        let recs = boundary_records(&rs, &reg, 0.1);
        assert!(recs.iter().any(|r| evaluate(&rs, r).unwrap().outcome == "RED"));
        assert!(recs.iter().any(|r| evaluate(&rs, r).unwrap().outcome == "GREEN"));
    }
}

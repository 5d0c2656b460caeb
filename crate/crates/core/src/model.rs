//! Canonical rule representation: ordered, first-match-wins rule sets.

use std::collections::BTreeSet;
use std::fmt;

use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::canonical::{content_id, format_number};
use crate::registry::{VariableKind, VariableRegistry};

/// A comparison right-hand side: a number, a boolean, or a categorical level.
#[derive(Debug, Clone)]
pub enum Literal {
    Number(f64),
    Bool(bool),
    Level(String),
}

impl Literal {
    pub fn type_name(&self) -> &'static str {
        match self {
            Literal::Number(_) => "number",
            Literal::Bool(_) => "boolean",
            Literal::Level(_) => "level",
        }
    }

    pub fn same_type(&self, other: &Literal) -> bool {
        std::mem::discriminant(self) == std::mem::discriminant(other)
    }

    pub fn as_number(&self) -> Option<f64> {
        match self {
            Literal::Number(x) => Some(*x),
            _ => None,
        }
    }
}

impl PartialEq for Literal {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            // -0.0 == 0.0 and both print as "0"
            (Literal::Number(a), Literal::Number(b)) => a == b,
            (Literal::Bool(a), Literal::Bool(b)) => a == b,
            (Literal::Level(a), Literal::Level(b)) => a == b,
            _ => false,
        }
    }
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Literal::Number(x) => f.write_str(&format_number(*x)),
            Literal::Bool(b) => write!(f, "{b}"),
            Literal::Level(l) => f.write_str(l),
        }
    }
}

impl Serialize for Literal {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Literal::Number(x) if x.fract() == 0.0 && x.abs() < 9.0e15 => s.serialize_i64(*x as i64),
            Literal::Number(x) => s.serialize_f64(*x),
            Literal::Bool(b) => s.serialize_bool(*b),
            Literal::Level(l) => s.serialize_str(l),
        }
    }
}

impl<'de> Deserialize<'de> for Literal {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct LiteralVisitor;
        impl Visitor<'_> for LiteralVisitor {
            type Value = Literal;
            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a number, boolean or string literal")
            }
            fn visit_bool<E: de::Error>(self, v: bool) -> Result<Literal, E> {
                Ok(Literal::Bool(v))
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> Result<Literal, E> {
                Ok(Literal::Number(v as f64))
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> Result<Literal, E> {
                Ok(Literal::Number(v as f64))
            }
            fn visit_f64<E: de::Error>(self, v: f64) -> Result<Literal, E> {
                Ok(Literal::Number(v))
            }
            fn visit_str<E: de::Error>(self, v: &str) -> Result<Literal, E> {
                Ok(Literal::Level(v.to_string()))
            }
        }
        d.deserialize_any(LiteralVisitor)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Operator {
    #[serde(rename = ">=")]
    Ge,
    #[serde(rename = ">")]
    Gt,
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = "<")]
    Lt,
    #[serde(rename = "==")]
    Eq,
    #[serde(rename = "!=")]
    Ne,
}

impl Operator {
    pub const ALL: [Operator; 6] =
        [Operator::Ge, Operator::Gt, Operator::Le, Operator::Lt, Operator::Eq, Operator::Ne];

    pub fn symbol(self) -> &'static str {
        match self {
            Operator::Ge => ">=",
            Operator::Gt => ">",
            Operator::Le => "<=",
            Operator::Lt => "<",
            Operator::Eq => "==",
            Operator::Ne => "!=",
        }
    }

    pub fn from_symbol(s: &str) -> Option<Operator> {
        Operator::ALL.into_iter().find(|op| op.symbol() == s)
    }

    /// True for the ordering comparisons, which need a numeric variable.
    pub fn is_ordering(self) -> bool {
        matches!(self, Operator::Ge | Operator::Gt | Operator::Le | Operator::Lt)
    }

    /// Operator after swapping operands: `38 <= x` becomes `x >= 38`.
    pub fn mirrored(self) -> Operator {
        match self {
            Operator::Ge => Operator::Le,
            Operator::Gt => Operator::Lt,
            Operator::Le => Operator::Ge,
            Operator::Lt => Operator::Gt,
            op => op,
        }
    }

    /// Operator of the logical negation: `not (x >= 1)` is `x < 1`.
    pub fn complement(self) -> Operator {
        match self {
            Operator::Ge => Operator::Lt,
            Operator::Gt => Operator::Le,
            Operator::Le => Operator::Gt,
            Operator::Lt => Operator::Ge,
            Operator::Eq => Operator::Ne,
            Operator::Ne => Operator::Eq,
        }
    }

    /// Applies the comparison; `None` when the literal types are incomparable.
    pub fn apply(self, lhs: &Literal, rhs: &Literal) -> Option<bool> {
        match (lhs, rhs) {
            (Literal::Number(a), Literal::Number(b)) => Some(match self {
                Operator::Ge => a >= b,
                Operator::Gt => a > b,
                Operator::Le => a <= b,
                Operator::Lt => a < b,
                Operator::Eq => a == b,
                Operator::Ne => a != b,
            }),
            _ if !lhs.same_type(rhs) => None,
            _ => match self {
                Operator::Eq => Some(lhs == rhs),
                Operator::Ne => Some(lhs != rhs),
                _ => None,
            },
        }
    }
}

impl fmt::Display for Operator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Condition {
    pub variable: String,
    pub operator: Operator,
    pub value: Literal,
}

impl Condition {
    pub fn new(variable: &str, operator: Operator, value: Literal) -> Self {
        Condition { variable: variable.to_string(), operator, value }
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {}", self.variable, self.operator, self.value)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rule {
    pub index: usize,
    pub conditions: Vec<Condition>,
    pub outcome: String,
}

impl Rule {
    pub fn is_default(&self) -> bool {
        self.conditions.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutcomeSpec {
    pub name: String,
    pub levels: Vec<String>,
    #[serde(rename = "default")]
    pub default_level: String,
}

impl OutcomeSpec {
    pub fn new(name: &str, levels: &[&str], default_level: &str) -> Self {
        OutcomeSpec {
            name: name.to_string(),
            levels: levels.iter().map(|s| s.to_string()).collect(),
            default_level: default_level.to_string(),
        }
    }

    /// GREEN / AMBER / RED triage status, defaulting to GREEN.
    pub fn triage() -> Self {
        OutcomeSpec::new("status", &["GREEN", "AMBER", "RED"], "GREEN")
    }

    /// Level whose spelling matches `raw` case-insensitively.
    pub fn match_level(&self, raw: &str) -> Option<&str> {
        self.levels
            .iter()
            .find(|l| l.as_str() == raw)
            .or_else(|| self.levels.iter().find(|l| l.eq_ignore_ascii_case(raw)))
            .map(String::as_str)
    }

    fn problems(&self) -> Option<String> {
        let distinct: BTreeSet<&String> = self.levels.iter().collect();
        if self.levels.len() < 2 {
            Some("outcome needs at least two levels".into())
        } else if distinct.len() != self.levels.len() {
            Some("outcome levels are not distinct".into())
        } else if !self.levels.contains(&self.default_level) {
            Some(format!("default level `{}` is not one of the outcome levels", self.default_level))
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Provenance {
    Expert,
    /// Produced by a generation run; `run` is the run's deterministic key.
    Generated { run: String },
    Edited { parent: String, editor: String, timestamp: String },
}

impl Provenance {
    pub fn is_reviewed(&self) -> bool {
        !matches!(self, Provenance::Generated { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleSet {
    pub id: String,
    pub name: String,
    pub domain: String,
    pub objective: String,
    pub outcome: OutcomeSpec,
    pub rules: Vec<Rule>,
    pub provenance: Provenance,
}

impl RuleSet {
    /// Builds a rule set, renumbering rules 0..n and computing the content id.
    pub fn new(
        name: &str,
        domain: &str,
        objective: &str,
        outcome: OutcomeSpec,
        rules: Vec<Rule>,
        provenance: Provenance,
    ) -> Self {
        let mut rs = RuleSet {
            id: String::new(),
            name: name.to_string(),
            domain: domain.to_string(),
            objective: objective.to_string(),
            outcome,
            rules,
            provenance,
        };
        rs.reindex();
        rs.seal();
        rs
    }

    pub fn reindex(&mut self) {
        for (i, rule) in self.rules.iter_mut().enumerate() {
            rule.index = i;
        }
    }

    pub fn compute_id(&self) -> String {
        content_id(&serde_json::to_value(self).expect("rule sets always serialize"))
    }

    /// Recomputes `id` from the current content.
    pub fn seal(&mut self) {
        self.id = self.compute_id();
    }

    /// Canonical names of every variable referenced by a condition, sorted.
    pub fn variables(&self) -> BTreeSet<String> {
        self.rules
            .iter()
            .flat_map(|r| r.conditions.iter().map(|c| c.variable.clone()))
            .collect()
    }

    pub fn condition_count(&self) -> usize {
        self.rules.iter().map(|r| r.conditions.len()).sum()
    }

    /// Equality ignoring id and provenance.
    pub fn same_structure(&self, other: &RuleSet) -> bool {
        self.name == other.name
            && self.domain == other.domain
            && self.objective == other.objective
            && self.outcome == other.outcome
            && self.rules == other.rules
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum DiagnosticCode {
    IdMismatch,
    InvalidOutcomeSpec,
    IndexGap,
    EmptyRule,
    UnknownOutcomeLevel,
    DuplicateCondition,
    UnknownVariable,
    NonCanonicalVariable,
    OperatorKindMismatch,
    ValueKindMismatch,
    NonFiniteNumber,
    AutoRegisteredVariable,
    InvalidReviewAction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub code: DiagnosticCode,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rule: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub condition: Option<usize>,
    pub message: String,
}

impl Diagnostic {
    pub fn new(code: DiagnosticCode, rule: Option<usize>, condition: Option<usize>, message: impl Into<String>) -> Self {
        Diagnostic { code, rule, condition, message: message.into() }
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.code)?;
        if let Some(r) = self.rule {
            write!(f, " rule {r}")?;
        }
        if let Some(c) = self.condition {
            write!(f, " condition {c}")?;
        }
        write!(f, ": {}", self.message)
    }
}

/// Checks every rule-set invariant; an empty result means the set is valid.
pub fn validate_ruleset(rs: &RuleSet, registry: &VariableRegistry) -> Vec<Diagnostic> {
    use DiagnosticCode::*;
    let mut out = Vec::new();

    if rs.id != rs.compute_id() {
        out.push(Diagnostic::new(IdMismatch, None, None, "id does not match content hash"));
    }
    if let Some(problem) = rs.outcome.problems() {
        out.push(Diagnostic::new(InvalidOutcomeSpec, None, None, problem));
    }

    let last = rs.rules.len().saturating_sub(1);
    for (pos, rule) in rs.rules.iter().enumerate() {
        let r = Some(pos);
        if rule.index != pos {
            out.push(Diagnostic::new(IndexGap, r, None, format!("rule at position {pos} has index {}", rule.index)));
        }
        if rule.conditions.is_empty() && pos != last {
            out.push(Diagnostic::new(EmptyRule, r, None, "only the last rule may have no conditions"));
        }
        if !rs.outcome.levels.contains(&rule.outcome) {
            out.push(Diagnostic::new(
                UnknownOutcomeLevel,
                r,
                None,
                format!("outcome `{}` is not one of {:?}", rule.outcome, rs.outcome.levels),
            ));
        }
        for (ci, cond) in rule.conditions.iter().enumerate() {
            let c = Some(ci);
            if rule.conditions[..ci].contains(cond) {
                out.push(Diagnostic::new(DuplicateCondition, r, c, format!("`{cond}` repeats an earlier condition")));
            }
            if let Literal::Number(x) = cond.value {
                if !x.is_finite() {
                    out.push(Diagnostic::new(NonFiniteNumber, r, c, "thresholds must be finite"));
                }
            }
            let Some(spec) = registry.get(&cond.variable) else {
                let (code, msg) = match registry.resolve(&cond.variable) {
                    Ok(spec) => (
                        NonCanonicalVariable,
                        format!("`{}` should be written as `{}`", cond.variable, spec.canonical_name),
                    ),
                    Err(_) => (UnknownVariable, format!("`{}` is not in the registry", cond.variable)),
                };
                out.push(Diagnostic::new(code, r, c, msg));
                continue;
            };
            let numeric = matches!(spec.kind, VariableKind::Numeric { .. });
            if cond.operator.is_ordering() && !numeric {
                out.push(Diagnostic::new(
                    OperatorKindMismatch,
                    r,
                    c,
                    format!("`{}` needs a numeric variable but `{}` is {}", cond.operator, cond.variable, spec.kind.label()),
                ));
            } else if !spec.kind.admits(&cond.value) {
                out.push(Diagnostic::new(
                    ValueKindMismatch,
                    r,
                    c,
                    format!("`{}` is not a valid {} value for `{}`", cond.value, spec.kind.label(), cond.variable),
                ));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fever_rule(outcome: &str) -> RuleSet {
        RuleSet::new(
            "fever",
            "Medical",
            "triage",
            OutcomeSpec::triage(),
            vec![Rule {
                index: 0,
                conditions: vec![Condition::new("body_temperature", Operator::Ge, Literal::Number(38.0))],
                outcome: outcome.into(),
            }],
            Provenance::Expert,
        )
    }

    #[test]
    fn well_formed_single_rule_set_is_valid() {
        assert!(validate_ruleset(&fever_rule("RED"), &VariableRegistry::medical()).is_empty());
    }

    #[test]
    fn unknown_outcome_level_is_reported() {
        let diags = validate_ruleset(&fever_rule("PURPLE"), &VariableRegistry::medical());
        assert_eq!(diags.iter().map(|d| d.code).collect::<Vec<_>>(), vec![DiagnosticCode::UnknownOutcomeLevel]);
        assert_eq!(diags[0].rule, Some(0));
    }

    #[test]
    fn ordering_operator_on_boolean_is_reported() {
        let mut rs = fever_rule("RED");
        rs.rules[0].conditions = vec![Condition::new("cough", Operator::Ge, Literal::Number(2.0))];
        rs.seal();
        let diags = validate_ruleset(&rs, &VariableRegistry::medical());
        assert_eq!(diags.iter().map(|d| d.code).collect::<Vec<_>>(), vec![DiagnosticCode::OperatorKindMismatch]);
        assert_eq!((diags[0].rule, diags[0].condition), (Some(0), Some(0)));
    }

    #[test]
    fn structural_problems_are_reported() {
        let reg = VariableRegistry::medical();
        let mut rs = fever_rule("RED");
        rs.rules.insert(0, Rule { index: 0, conditions: vec![], outcome: "GREEN".into() });
        let dup = rs.rules[1].conditions[0].clone();
        rs.rules[1].conditions.push(dup);
        rs.rules[1].conditions.push(Condition::new("qzx", Operator::Eq, Literal::Bool(true)));
        rs.rules[1].conditions.push(Condition::new("temp", Operator::Ge, Literal::Number(39.0)));
        rs.rules[1].conditions.push(Condition::new("cough", Operator::Eq, Literal::Number(1.0)));
        rs.seal();
        let codes: Vec<_> = validate_ruleset(&rs, &reg).into_iter().map(|d| d.code).collect();
        use DiagnosticCode::*;
        assert_eq!(
            codes,
            vec![EmptyRule, IndexGap, DuplicateCondition, UnknownVariable, NonCanonicalVariable, ValueKindMismatch]
        );
    }

    #[test]
    fn stale_id_is_reported() {
        let mut rs = fever_rule("RED");
        rs.name = "renamed".into();
        let codes: Vec<_> = validate_ruleset(&rs, &VariableRegistry::medical()).into_iter().map(|d| d.code).collect();
        assert_eq!(codes, vec![DiagnosticCode::IdMismatch]);
    }

    #[test]
    fn json_shape_uses_operator_symbols() {
        let rs = fever_rule("RED");
        let v = serde_json::to_value(&rs).unwrap();
        assert_eq!(v["rules"][0]["conditions"][0]["operator"], ">=");
        assert_eq!(v["rules"][0]["conditions"][0]["value"], 38);
        assert_eq!(v["outcome"]["default"], "GREEN");
        assert_eq!(v["provenance"]["kind"], "expert");
        let back: RuleSet = serde_json::from_value(v).unwrap();
        assert_eq!(back, rs);
    }

    #[test]
    fn id_changes_with_any_content_change() {
        let a = fever_rule("RED");
        let mut b = a.clone();
        b.rules[0].conditions[0].value = Literal::Number(38.5);
        b.seal();
        assert_ne!(a.id, b.id);
        assert_eq!(a.id, fever_rule("RED").id);
    }

    #[test]
    fn operator_algebra() {
        for op in Operator::ALL {
            assert_eq!(op.mirrored().mirrored(), op);
            assert_eq!(op.complement().complement(), op);
            assert_eq!(Operator::from_symbol(op.symbol()), Some(op));
        }
        let two = Literal::Number(2.0);
        let one = Literal::Number(1.0);
        assert_eq!(Operator::Ge.apply(&two, &one), Some(true));
        assert_eq!(Operator::Eq.apply(&Literal::Bool(true), &Literal::Bool(true)), Some(true));
        assert_eq!(Operator::Ge.apply(&Literal::Bool(true), &Literal::Bool(true)), None);
        assert_eq!(Operator::Eq.apply(&Literal::Bool(true), &one), None);
    }
}

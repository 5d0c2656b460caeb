//! Service descriptors and boundary test suites for reviewed rule sets.

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use thiserror::Error;

use crate::eval::{boundary_records, evaluate, Record};
use crate::model::{validate_ruleset, Diagnostic, RuleSet};
use crate::registry::{VariableKind, VariableRegistry};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ApiGenError {
    #[error("rule set {0} has not been reviewed; accept or edit it first")]
    UnreviewedRuleSet(String),
    #[error("variable `{0}` is not in the registry")]
    UnknownVariable(String),
    #[error("rule set is invalid: {}", .0.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<Diagnostic>),
    #[error("epsilon must be positive and finite")]
    InvalidEpsilon,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputField {
    pub name: String,
    /// `number`, `boolean` or `string`.
    #[serde(rename = "type")]
    pub field_type: String,
    #[serde(rename = "enum", default, skip_serializing_if = "Option::is_none")]
    pub enum_values: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unit: Option<String>,
    pub required: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputSchema {
    pub outcome_variable: String,
    pub outcome_levels: Vec<String>,
    pub default_level: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EndpointSpec {
    pub method: String,
    pub path: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServiceDescriptor {
    pub service_name: String,
    pub ruleset_id: String,
    pub input: Vec<InputField>,
    pub output: OutputSchema,
    pub endpoint: EndpointSpec,
}

fn gate(rs: &RuleSet, registry: &VariableRegistry) -> Result<(), ApiGenError> {
    if !rs.provenance.is_reviewed() {
        return Err(ApiGenError::UnreviewedRuleSet(rs.id.clone()));
    }
    if let Some(v) = rs.variables().into_iter().find(|v| registry.get(v).is_none()) {
        return Err(ApiGenError::UnknownVariable(v));
    }
    let diags = validate_ruleset(rs, registry);
    if !diags.is_empty() {
        return Err(ApiGenError::Invalid(diags));
    }
    Ok(())
}

pub fn generate_descriptor(rs: &RuleSet, registry: &VariableRegistry) -> Result<ServiceDescriptor, ApiGenError> {
    gate(rs, registry)?;
    let input = rs
        .variables()
        .into_iter()
        .map(|name| {
            let kind = &registry.get(&name).expect("checked by gate").kind;
            let (field_type, enum_values, unit) = match kind {
                VariableKind::Numeric { unit, .. } => ("number", None, unit.clone()),
                VariableKind::Boolean => ("boolean", None, None),
                VariableKind::Categorical { levels } => ("string", Some(levels.clone()), None),
            };
            InputField { name, field_type: field_type.into(), enum_values, unit, required: true }
        })
        .collect();
    let slug: String = rs
        .name
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_lowercase() } else { '-' })
        .collect();
    Ok(ServiceDescriptor {
        service_name: format!("{}-evaluator", slug.trim_matches('-')),
        ruleset_id: rs.id.clone(),
        input,
        output: OutputSchema {
            outcome_variable: rs.outcome.name.clone(),
            outcome_levels: rs.outcome.levels.clone(),
            default_level: rs.outcome.default_level.clone(),
        },
        endpoint: EndpointSpec { method: "POST".into(), path: "/evaluate".into() },
    })
}

impl ServiceDescriptor {
    /// OpenAPI 3 document; the typed descriptor rides along under `x-ruleflex`.
    pub fn to_openapi(&self) -> Value {
        let mut properties = Map::new();
        for f in &self.input {
            let mut schema = json!({ "type": f.field_type });
            if let Some(levels) = &f.enum_values {
                schema["enum"] = json!(levels);
            }
            if let Some(unit) = &f.unit {
                schema["description"] = json!(format!("unit: {unit}"));
            }
            properties.insert(f.name.clone(), schema);
        }
        let required: Vec<&str> = self.input.iter().filter(|f| f.required).map(|f| f.name.as_str()).collect();
        let mut record = json!({ "type": "object", "properties": properties });
        if !required.is_empty() {
            record["required"] = json!(required);
        }
        json!({
            "openapi": "3.0.3",
            "info": {
                "title": self.service_name,
                "version": "1.0.0",
                "description": format!("Evaluates rule set {}", self.ruleset_id),
            },
            "paths": {
                "/evaluate": {
                    "post": {
                        "operationId": "evaluate",
                        "requestBody": {
                            "required": true,
                            "content": { "application/json": { "schema": { "$ref": "#/components/schemas/Record" } } }
                        },
                        "responses": {
                            "200": {
                                "description": "Outcome of the first matching rule",
                                "content": { "application/json": { "schema": { "$ref": "#/components/schemas/Evaluation" } } }
                            },
                            "400": {
                                "description": "Missing variable or type mismatch",
                                "content": { "application/json": { "schema": { "$ref": "#/components/schemas/Error" } } }
                            }
                        }
                    }
                },
                "/health": {
                    "get": { "operationId": "health", "responses": { "200": { "description": "Service is up" } } }
                }
            },
            "components": {
                "schemas": {
                    "Record": record,
                    "Evaluation": {
                        "type": "object",
                        "required": ["outcome", "matched_rule"],
                        "properties": {
                            "outcome": { "type": "string", "enum": self.output.outcome_levels },
                            "matched_rule": { "type": "integer", "nullable": true }
                        }
                    },
                    "Error": {
                        "type": "object",
                        "required": ["code", "message"],
                        "properties": { "code": { "type": "string" }, "message": { "type": "string" } }
                    }
                }
            },
            "x-ruleflex": self,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestCase {
    pub record: Record,
    pub expected_outcome: String,
    pub expected_rule: Option<usize>,
    pub note: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratedTestSuite {
    pub ruleset_id: String,
    pub epsilon: f64,
    pub cases: Vec<TestCase>,
}

/// One case per boundary record, expectations computed by the evaluator.
pub fn generate_test_suite(
    rs: &RuleSet,
    registry: &VariableRegistry,
    epsilon: f64,
) -> Result<GeneratedTestSuite, ApiGenError> {
    gate(rs, registry)?;
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(ApiGenError::InvalidEpsilon);
    }
    let cases = boundary_records(rs, registry, epsilon)
        .into_iter()
        .map(|record| {
            let trace = evaluate(rs, &record).expect("boundary records bind every referenced variable");
            let note = match trace.matched_rule {
                Some(i) => format!("matches rule {i}"),
                None => "no rule matches; default outcome".to_string(),
            };
            TestCase { record, expected_outcome: trace.outcome, expected_rule: trace.matched_rule, note }
        })
        .collect();
    Ok(GeneratedTestSuite { ruleset_id: rs.id.clone(), epsilon, cases })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Condition, Literal, Operator, OutcomeSpec, Provenance, Rule};

    fn rs(rules: Vec<Rule>, provenance: Provenance) -> RuleSet {
        RuleSet::new("Triage v1", "Medical", "o", OutcomeSpec::triage(), rules, provenance)
    }

    fn fever() -> Rule {
        Rule {
            index: 0,
            conditions: vec![Condition::new("body_temperature", Operator::Ge, Literal::Number(38.0))],
            outcome: "RED".into(),
        }
    }

    #[test]
    fn descriptor_types_follow_registry_kinds() {
        let reg = VariableRegistry::medical();
        let mut cough = fever();
        cough.conditions = vec![Condition::new("cough", Operator::Eq, Literal::Bool(true))];
        cough.outcome = "AMBER".into();
        let d = generate_descriptor(&rs(vec![fever(), cough], Provenance::Expert), &reg).unwrap();
        let types: Vec<(&str, &str)> = d.input.iter().map(|f| (f.name.as_str(), f.field_type.as_str())).collect();
        assert_eq!(types, vec![("body_temperature", "number"), ("cough", "boolean")]);
        assert_eq!(d.output.outcome_levels, vec!["GREEN", "AMBER", "RED"]);
        assert_eq!(d.service_name, "triage-v1-evaluator");
        let doc = d.to_openapi();
        assert_eq!(doc["openapi"], "3.0.3");
        assert!(doc["paths"]["/evaluate"]["post"].is_object());
    }

    #[test]
    fn generated_rule_sets_are_refused() {
        let reg = VariableRegistry::medical();
        let r = rs(vec![fever()], Provenance::Generated { run: "abc".into() });
        assert!(matches!(generate_descriptor(&r, &reg), Err(ApiGenError::UnreviewedRuleSet(_))));
        assert!(matches!(generate_test_suite(&r, &reg, 0.1), Err(ApiGenError::UnreviewedRuleSet(_))));
    }

    #[test]
    fn default_only_rule_set() {
        let reg = VariableRegistry::medical();
        let r = rs(vec![Rule { index: 0, conditions: vec![], outcome: "AMBER".into() }], Provenance::Expert);
        let d = generate_descriptor(&r, &reg).unwrap();
        assert!(d.input.is_empty());
        assert_eq!(d.output.outcome_levels.len(), 3);
        let suite = generate_test_suite(&r, &reg, 0.1).unwrap();
        assert_eq!(suite.cases.len(), 1);
        assert_eq!(suite.cases[0].expected_outcome, "AMBER");
    }

    #[test]
    fn fever_suite_probes_the_threshold() {
        let reg = VariableRegistry::medical();
        let suite = generate_test_suite(&rs(vec![fever()], Provenance::Expert), &reg, 0.1).unwrap();
        let got: Vec<(String, String)> = suite
            .cases
            .iter()
            .map(|c| (c.record["body_temperature"].to_string(), c.expected_outcome.clone()))
            .collect();
        let want: Vec<(String, String)> = [("37.9", "GREEN"), ("38", "RED"), ("38.1", "RED")]
            .iter()
            .map(|(a, b)| (a.to_string(), b.to_string()))
            .collect();
        assert_eq!(got, want);
    }
}

use std::collections::BTreeMap;

use ruleflex_core::code::parse_response;
use ruleflex_core::prompt::{render_prompt, PromptStrategy, TRIAGE_OBJECTIVE};
use ruleflex_core::{evaluate, validate_ruleset, Literal, Provenance, VariableRegistry};

fn exemplar() -> String {
    let text = render_prompt(PromptStrategy::FewShot, "Medical", TRIAGE_OBJECTIVE).unwrap().text();
    let start = text.find("Problem domain: Financial").unwrap();
    let end = start + text[start..].find("\"\"\"\"\"\"").unwrap();
    text[start..end].to_string()
}

#[test]
fn prompt_exemplar_flattens_to_three_rules() {
    let reg = VariableRegistry::medical();
    let parsed = parse_response(&exemplar(), &reg, None, "Financial services", "Fraud detection", &Provenance::Expert);
    assert_eq!(parsed.rulesets.len(), 1, "{:?}", parsed.diagnostics);
    let rs = &parsed.rulesets[0];
    assert_eq!(rs.rules.len(), 3);
    let outcomes: Vec<&str> = rs.rules.iter().map(|r| r.outcome.as_str()).collect();
    assert_eq!(outcomes, vec!["POSSIBLE", "YES", "NO"]);
    assert_eq!(rs.rules.iter().map(|r| r.conditions.len()).collect::<Vec<_>>(), vec![2, 2, 0]);

    let mut reg = reg;
    reg.extend_with(&parsed.new_variables).unwrap();
    assert!(validate_ruleset(rs, &reg).is_empty());

    let record = |amount: f64, kind: &str, currency: &str| {
        BTreeMap::from([
            ("transaction_amount".to_string(), Literal::Number(amount)),
            ("transaction_type".to_string(), Literal::Level(kind.into())),
            ("transaction_currency".to_string(), Literal::Level(currency.into())),
        ])
    };
    assert_eq!(evaluate(rs, &record(100.0, "Daily", "EUR")).unwrap().outcome, "POSSIBLE");
    assert_eq!(evaluate(rs, &record(60000.0, "Weekly", "USD")).unwrap().outcome, "YES");
    assert_eq!(evaluate(rs, &record(60000.0, "Daily", "USD")).unwrap().outcome, "NO");
    assert_eq!(evaluate(rs, &record(100.0, "Daily", "USD")).unwrap().outcome, "NO");
}

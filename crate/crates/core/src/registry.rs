//! Variable vocabulary: canonical names, aliases, kinds and composite expansions.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::Literal;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum VariableKind {
    Numeric {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        unit: Option<String>,
        /// Neutral value used when a boundary record pins some other variable.
        #[serde(default)]
        nominal: f64,
    },
    Boolean,
    Categorical { levels: Vec<String> },
}

impl VariableKind {
    pub fn numeric(unit: &str, nominal: f64) -> Self {
        VariableKind::Numeric { unit: Some(unit.to_string()), nominal }
    }

    pub fn label(&self) -> &'static str {
        match self {
            VariableKind::Numeric { .. } => "numeric",
            VariableKind::Boolean => "boolean",
            VariableKind::Categorical { .. } => "categorical",
        }
    }

    /// Whether `value` has the literal type this kind admits.
    pub fn admits(&self, value: &Literal) -> bool {
        match (self, value) {
            (VariableKind::Numeric { .. }, Literal::Number(_)) => true,
            (VariableKind::Boolean, Literal::Bool(_)) => true,
            (VariableKind::Categorical { levels }, Literal::Level(l)) => levels.contains(l),
            _ => false,
        }
    }

    pub fn neutral(&self) -> Literal {
        match self {
            VariableKind::Numeric { nominal, .. } => Literal::Number(*nominal),
            VariableKind::Boolean => Literal::Bool(false),
            VariableKind::Categorical { levels } => Literal::Level(levels[0].clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariableSpec {
    pub canonical_name: String,
    #[serde(default)]
    pub aliases: Vec<String>,
    pub kind: VariableKind,
}

impl VariableSpec {
    pub fn new(name: &str, aliases: &[&str], kind: VariableKind) -> Self {
        VariableSpec {
            canonical_name: name.to_string(),
            aliases: aliases.iter().map(|a| canonicalize_name(a)).collect(),
            kind,
        }
    }

    /// Spec for a variable first seen in generated code, kind inferred from a literal.
    pub fn inferred(raw_name: &str, seen: &[Literal]) -> Self {
        let canonical_name = canonicalize_name(raw_name);
        let kind = match seen.first() {
            Some(Literal::Bool(_)) => VariableKind::Boolean,
            Some(Literal::Level(_)) => {
                let mut levels: Vec<String> = Vec::new();
                for lit in seen {
                    if let Literal::Level(l) = lit {
                        if !levels.contains(l) {
                            levels.push(l.clone());
                        }
                    }
                }
                if levels.len() < 2 {
                    let mut other = "OTHER".to_string();
                    while levels.contains(&other) {
                        other.push('_');
                    }
                    levels.push(other);
                }
                VariableKind::Categorical { levels }
            }
            _ => VariableKind::Numeric { unit: None, nominal: 0.0 },
        };
        VariableSpec { canonical_name, aliases: Vec::new(), kind }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RegistryError {
    #[error("unknown variable `{0}`")]
    UnknownVariable(String),
    #[error("invalid canonical name `{0}`")]
    InvalidName(String),
    #[error("alias `{alias}` maps to both `{first}` and `{second}`")]
    DuplicateAlias { alias: String, first: String, second: String },
    #[error("categorical variable `{0}` needs at least two distinct levels")]
    TooFewLevels(String),
    #[error("expansion `{composite}` targets unknown variable `{target}`")]
    DanglingExpansion { composite: String, target: String },
}

/// Lowercase, trim, and turn runs of spaces/hyphens/underscores into one underscore.
pub fn canonicalize_name(raw: &str) -> String {
    let mut out = String::with_capacity(raw.len());
    let mut pending_sep = false;
    for ch in raw.trim().chars() {
        if ch.is_whitespace() || ch == '-' || ch == '_' {
            pending_sep = !out.is_empty();
            continue;
        }
        if pending_sep {
            out.push('_');
            pending_sep = false;
        }
        out.extend(ch.to_lowercase());
    }
    out
}

fn is_valid_canonical(name: &str) -> bool {
    let mut chars = name.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_lowercase())
        && chars.all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_')
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RegistryDoc", into = "RegistryDoc")]
pub struct VariableRegistry {
    variables: Vec<VariableSpec>,
    expansions: BTreeMap<String, Vec<String>>,
    lookup: HashMap<String, usize>,
}

#[derive(Serialize, Deserialize)]
struct RegistryDoc {
    variables: Vec<VariableSpec>,
    #[serde(default)]
    expansions: BTreeMap<String, Vec<String>>,
}

impl TryFrom<RegistryDoc> for VariableRegistry {
    type Error = RegistryError;
    fn try_from(doc: RegistryDoc) -> Result<Self, Self::Error> {
        VariableRegistry::new(doc.variables, doc.expansions)
    }
}

impl From<VariableRegistry> for RegistryDoc {
    fn from(r: VariableRegistry) -> Self {
        RegistryDoc { variables: r.variables, expansions: r.expansions }
    }
}

impl VariableRegistry {
    pub fn new(
        variables: Vec<VariableSpec>,
        expansions: BTreeMap<String, Vec<String>>,
    ) -> Result<Self, RegistryError> {
        let mut registry = VariableRegistry {
            variables: Vec::new(),
            expansions: BTreeMap::new(),
            lookup: HashMap::new(),
        };
        for spec in variables {
            registry.register(spec)?;
        }
        for (composite, targets) in &expansions {
            for target in targets {
                if registry.get(target).is_none() {
                    return Err(RegistryError::DanglingExpansion {
                        composite: composite.clone(),
                        target: target.clone(),
                    });
                }
            }
        }
        registry.expansions = expansions;
        Ok(registry)
    }

    pub fn empty() -> Self {
        VariableRegistry { variables: Vec::new(), expansions: BTreeMap::new(), lookup: HashMap::new() }
    }

    /// Adds a variable, enforcing name validity and alias uniqueness.
    pub fn register(&mut self, spec: VariableSpec) -> Result<(), RegistryError> {
        if !is_valid_canonical(&spec.canonical_name) {
            return Err(RegistryError::InvalidName(spec.canonical_name));
        }
        if let VariableKind::Categorical { levels } = &spec.kind {
            let distinct: BTreeSet<&String> = levels.iter().collect();
            if distinct.len() < 2 || distinct.len() != levels.len() {
                return Err(RegistryError::TooFewLevels(spec.canonical_name));
            }
        }
        let idx = self.variables.len();
        let mut keys = vec![spec.canonical_name.clone()];
        keys.extend(spec.aliases.iter().map(|a| canonicalize_name(a)));
        let mut seen = BTreeSet::new();
        for key in &keys {
            if !seen.insert(key.clone()) {
                continue;
            }
            if let Some(&other) = self.lookup.get(key) {
                return Err(RegistryError::DuplicateAlias {
                    alias: key.clone(),
                    first: self.variables[other].canonical_name.clone(),
                    second: spec.canonical_name.clone(),
                });
            }
        }
        for key in seen {
            self.lookup.insert(key, idx);
        }
        self.variables.push(spec);
        Ok(())
    }

    pub fn resolve(&self, raw_name: &str) -> Result<&VariableSpec, RegistryError> {
        self.lookup
            .get(&canonicalize_name(raw_name))
            .map(|&i| &self.variables[i])
            .ok_or_else(|| RegistryError::UnknownVariable(raw_name.to_string()))
    }

    /// Exact lookup by canonical name (no alias resolution).
    pub fn get(&self, canonical_name: &str) -> Option<&VariableSpec> {
        self.lookup
            .get(canonical_name)
            .map(|&i| &self.variables[i])
            .filter(|spec| spec.canonical_name == canonical_name)
    }

    pub fn variables(&self) -> &[VariableSpec] {
        &self.variables
    }

    pub fn expansions(&self) -> &BTreeMap<String, Vec<String>> {
        &self.expansions
    }

    pub fn neutral_value(&self, canonical_name: &str) -> Option<Literal> {
        self.get(canonical_name).map(|spec| spec.kind.neutral())
    }

    /// Members of a composite (e.g. the comorbidities) fold into the composite
    /// name, giving the vocabulary granularity used for overlap reporting.
    pub fn collapse_composites<'a, I>(&self, names: I) -> BTreeSet<String>
    where
        I: IntoIterator<Item = &'a String>,
    {
        names
            .into_iter()
            .map(|name| {
                self.expansions
                    .iter()
                    .find(|(_, members)| members.contains(name))
                    .map(|(composite, _)| composite.clone())
                    .unwrap_or_else(|| name.clone())
            })
            .collect()
    }

    /// Composite names replaced by their member variables.
    pub fn expand_composites<'a, I>(&self, names: I) -> BTreeSet<String>
    where
        I: IntoIterator<Item = &'a String>,
    {
        let mut out = BTreeSet::new();
        for name in names {
            match self.expansions.get(name) {
                Some(members) => out.extend(members.iter().cloned()),
                None => {
                    out.insert(name.clone());
                }
            }
        }
        out
    }

    /// Merges variables from `other` that are not yet known here.
    pub fn extend_with(&mut self, other: &[VariableSpec]) -> Result<(), RegistryError> {
        for spec in other {
            if self.get(&spec.canonical_name).is_none() {
                self.register(spec.clone())?;
            }
        }
        Ok(())
    }

    /// The medical triage vocabulary: fifteen monitored variables plus the five
    /// comorbidity members that `comorbidity` expands to.
    pub fn medical() -> Self {
        use VariableKind::*;
        let vars = vec![
            VariableSpec::new(
                "body_temperature",
                &["temp", "temperature", "bodytemperature", "body_temp", "body temp", "fever"],
                VariableKind::numeric("°C", 36.8),
            ),
            VariableSpec::new(
                "shortness_of_breath",
                &["sob", "shortnessofbreath", "breathlessness", "dyspnea", "dyspnoea", "difficulty_breathing"],
                Boolean,
            ),
            VariableSpec::new("cough", &["has_cough", "coughing", "persistent_cough"], Boolean),
            VariableSpec::new(
                "loss_of_taste_or_smell",
                &["loss_of_taste", "loss_of_smell", "anosmia", "ageusia", "loss_of_taste_and_smell", "taste_smell_loss"],
                Boolean,
            ),
            VariableSpec::new("sore_throat", &["sorethroat", "throat_pain"], Boolean),
            VariableSpec::new(
                "respiratory_rate",
                &["resp_rate", "respiratoryrate", "rr", "breathing_rate", "respiration_rate"],
                VariableKind::numeric("breaths/min", 16.0),
            ),
            VariableSpec::new("fatigue", &["tiredness", "tired", "exhaustion"], Boolean),
            VariableSpec::new(
                "oxygen_saturation",
                &["spo2", "sp_o2", "o2_sat", "o2_saturation", "oxygen_level", "oxygensaturation", "oxygen_sat", "sats"],
                VariableKind::numeric("%", 98.0),
            ),
            VariableSpec::new(
                "heart_rate",
                &["hr", "pulse", "pulse_rate", "heartrate"],
                VariableKind::numeric("bpm", 75.0),
            ),
            VariableSpec::new("age", &["patient_age", "age_years"], VariableKind::numeric("years", 40.0)),
            VariableSpec::new("comorbidity", &["comorbidities", "has_comorbidity", "underlying_conditions"], Boolean),
            VariableSpec::new(
                "gender",
                &["sex"],
                Categorical { levels: vec!["female".into(), "male".into(), "other".into()] },
            ),
            VariableSpec::new("myalgia", &["muscle_pain", "muscle_aches", "body_aches"], Boolean),
            VariableSpec::new("diarrhoea", &["diarrhea"], Boolean),
            VariableSpec::new("runny_nose", &["runnynose", "rhinorrhea", "rhinorrhoea", "nasal_congestion"], Boolean),
            VariableSpec::new("hypertension", &["high_blood_pressure"], Boolean),
            VariableSpec::new("lung_disease", &["chronic_lung_disease", "copd", "asthma"], Boolean),
            VariableSpec::new("cardiac_disease", &["heart_disease", "cardiovascular_disease"], Boolean),
            VariableSpec::new("immunosuppressed", &["immunocompromised", "immunosuppression"], Boolean),
            VariableSpec::new("diabetes", &["diabetic"], Boolean),
        ];
        let mut expansions = BTreeMap::new();
        expansions.insert(
            "comorbidity".to_string(),
            ["hypertension", "lung_disease", "cardiac_disease", "immunosuppressed", "diabetes"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
        );
        VariableRegistry::new(vars, expansions).expect("built-in medical registry is valid")
    }
}

/// Names of the fifteen monitored variables (excluding comorbidity members).
pub const MEDICAL_MONITORED: [&str; 15] = [
    "body_temperature",
    "shortness_of_breath",
    "cough",
    "loss_of_taste_or_smell",
    "sore_throat",
    "respiratory_rate",
    "fatigue",
    "oxygen_saturation",
    "heart_rate",
    "age",
    "comorbidity",
    "gender",
    "myalgia",
    "diarrhoea",
    "runny_nose",
];

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn resolves_exact_and_spaced_names() {
        let reg = VariableRegistry::medical();
        assert_eq!(reg.resolve("body_temperature").unwrap().canonical_name, "body_temperature");
        assert_eq!(reg.resolve("Body Temperature").unwrap().canonical_name, "body_temperature");
        assert_eq!(reg.resolve("SpO2").unwrap().canonical_name, "oxygen_saturation");
        assert_eq!(reg.resolve("heart-rate").unwrap().canonical_name, "heart_rate");
        assert_eq!(reg.resolve("qzx"), Err(RegistryError::UnknownVariable("qzx".into())));
    }

    #[test]
    fn medical_registry_has_twenty_variables() {
        let reg = VariableRegistry::medical();
        assert_eq!(reg.variables().len(), 20);
        for name in MEDICAL_MONITORED {
            assert!(reg.get(name).is_some(), "{name}");
        }
        assert_eq!(reg.expansions()["comorbidity"].len(), 5);
    }

    #[test]
    fn rejects_duplicate_alias() {
        let err = VariableRegistry::new(
            vec![
                VariableSpec::new("a", &["x"], VariableKind::Boolean),
                VariableSpec::new("b", &["x"], VariableKind::Boolean),
            ],
            BTreeMap::new(),
        )
        .unwrap_err();
        assert!(matches!(err, RegistryError::DuplicateAlias { .. }));
    }

    #[test]
    fn rejects_bad_names_and_single_level_categoricals() {
        let bad = VariableSpec::new("Bad", &[], VariableKind::Boolean);
        assert!(matches!(VariableRegistry::new(vec![bad], BTreeMap::new()), Err(RegistryError::InvalidName(_))));
        let one = VariableSpec::new("c", &[], VariableKind::Categorical { levels: vec!["a".into(), "a".into()] });
        assert!(matches!(VariableRegistry::new(vec![one], BTreeMap::new()), Err(RegistryError::TooFewLevels(_))));
    }

    #[test]
    fn rejects_dangling_expansion() {
        let mut exp = BTreeMap::new();
        exp.insert("combo".to_string(), vec!["missing".to_string()]);
        assert!(matches!(
            VariableRegistry::new(vec![], exp),
            Err(RegistryError::DanglingExpansion { .. })
        ));
    }

    #[test]
    fn collapse_folds_members_into_composite() {
        let reg = VariableRegistry::medical();
        let names: Vec<String> = vec!["diabetes".into(), "cough".into(), "hypertension".into()];
        let collapsed = reg.collapse_composites(&names);
        assert_eq!(collapsed, ["comorbidity", "cough"].iter().map(|s| s.to_string()).collect());
        let expanded = reg.expand_composites(&vec!["comorbidity".to_string()]);
        assert_eq!(expanded.len(), 5);
    }

    #[test]
    fn inferred_categorical_gets_two_levels() {
        let spec = VariableSpec::inferred("transactionCurrency", &[Literal::Level("USD".into())]);
        assert_eq!(spec.canonical_name, "transactioncurrency");
        assert_eq!(spec.kind, VariableKind::Categorical { levels: vec!["USD".into(), "OTHER".into()] });
    }

    #[test]
    fn registry_serde_round_trip() {
        let reg = VariableRegistry::medical();
        let json = serde_json::to_string(&reg).unwrap();
        let back: VariableRegistry = serde_json::from_str(&json).unwrap();
        assert_eq!(back.resolve("spo2").unwrap().canonical_name, "oxygen_saturation");
    }

    proptest! {
        #[test]
        fn resolve_is_idempotent(idx in 0usize..20, upper in any::<bool>()) {
            let reg = VariableRegistry::medical();
            let spec = &reg.variables()[idx];
            let mut names = vec![spec.canonical_name.clone()];
            names.extend(spec.aliases.iter().cloned());
            for name in names {
                let raw = if upper { name.to_uppercase().replace('_', " ") } else { name.clone() };
                let first = reg.resolve(&raw).unwrap();
                let again = reg.resolve(&first.canonical_name).unwrap();
                prop_assert_eq!(first, again);
                prop_assert_eq!(reg.resolve(&name).unwrap(), first);
            }
        }

        #[test]
        fn canonicalization_ignores_case_and_spacing(s in "[a-zA-Z]{1,6}( [a-zA-Z]{1,6}){0,3}") {
            let lowered = s.to_lowercase();
            let underscored = s.replace(' ', "_");
            let hyphened = s.to_uppercase().replace(' ', " - ");
            prop_assert_eq!(canonicalize_name(&s), canonicalize_name(&lowered));
            prop_assert_eq!(canonicalize_name(&s), canonicalize_name(&underscored));
            prop_assert_eq!(canonicalize_name(&s), canonicalize_name(&hyphened));
        }
    }
}

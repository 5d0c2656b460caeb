use serde::{Deserialize, Serialize};

use super::hungarian::best_partial_total;
use super::{AnalyzerError, Rational};
use crate::model::{Condition, Literal, Rule, RuleSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ClassificationKind {
    Match,
    WrongThreshold,
    WrongOperator,
    ExtraCondition,
    MissingCondition,
}

impl ClassificationKind {
    pub const ALL: [ClassificationKind; 5] = [
        ClassificationKind::Match,
        ClassificationKind::WrongThreshold,
        ClassificationKind::WrongOperator,
        ClassificationKind::ExtraCondition,
        ClassificationKind::MissingCondition,
    ];

    pub fn label(self) -> &'static str {
        match self {
            ClassificationKind::Match => "Match",
            ClassificationKind::WrongThreshold => "Wrong Threshold",
            ClassificationKind::WrongOperator => "Wrong Operator",
            ClassificationKind::ExtraCondition => "Extra Condition",
            ClassificationKind::MissingCondition => "Missing Condition",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionClassification {
    pub kind: ClassificationKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub candidate: Option<Condition>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<Condition>,
}

/// Per-kind score weights. Stored as floats but applied in thousandths so
/// scores stay exact.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Weights {
    #[serde(rename = "match")]
    pub match_: f64,
    pub wrong_threshold: f64,
    pub wrong_operator: f64,
    pub extra_condition: f64,
    pub missing_condition: f64,
}

impl Default for Weights {
    fn default() -> Self {
        Weights { match_: 1.0, wrong_threshold: 0.5, wrong_operator: 0.5, extra_condition: 0.0, missing_condition: 0.0 }
    }
}

impl Weights {
    pub fn get(&self, kind: ClassificationKind) -> f64 {
        match kind {
            ClassificationKind::Match => self.match_,
            ClassificationKind::WrongThreshold => self.wrong_threshold,
            ClassificationKind::WrongOperator => self.wrong_operator,
            ClassificationKind::ExtraCondition => self.extra_condition,
            ClassificationKind::MissingCondition => self.missing_condition,
        }
    }

    pub fn milli(&self, kind: ClassificationKind) -> i64 {
        (self.get(kind) * 1000.0).round() as i64
    }

    pub fn validate(&self) -> Result<(), AnalyzerError> {
        for kind in ClassificationKind::ALL {
            let w = self.get(kind);
            if !w.is_finite() || !(0.0..=1000.0).contains(&w) {
                return Err(AnalyzerError::InvalidWeights(format!("{} weight {w} must be in [0, 1000]", kind.label())));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompareOptions {
    pub weights: Weights,
    /// Absolute tolerance under which numeric thresholds count as equal.
    pub threshold_tolerance: f64,
}

impl Default for CompareOptions {
    fn default() -> Self {
        CompareOptions { weights: Weights::default(), threshold_tolerance: 0.0 }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Totals {
    #[serde(rename = "match")]
    pub match_: usize,
    pub wrong_threshold: usize,
    pub wrong_operator: usize,
    pub extra_condition: usize,
    pub missing_condition: usize,
}

impl Totals {
    pub fn get(&self, kind: ClassificationKind) -> usize {
        match kind {
            ClassificationKind::Match => self.match_,
            ClassificationKind::WrongThreshold => self.wrong_threshold,
            ClassificationKind::WrongOperator => self.wrong_operator,
            ClassificationKind::ExtraCondition => self.extra_condition,
            ClassificationKind::MissingCondition => self.missing_condition,
        }
    }

    fn slot(&mut self, kind: ClassificationKind) -> &mut usize {
        match kind {
            ClassificationKind::Match => &mut self.match_,
            ClassificationKind::WrongThreshold => &mut self.wrong_threshold,
            ClassificationKind::WrongOperator => &mut self.wrong_operator,
            ClassificationKind::ExtraCondition => &mut self.extra_condition,
            ClassificationKind::MissingCondition => &mut self.missing_condition,
        }
    }

    pub fn add(&mut self, kind: ClassificationKind, n: usize) {
        *self.slot(kind) += n;
    }

    pub fn merge(&mut self, other: &Totals) {
        for kind in ClassificationKind::ALL {
            self.add(kind, other.get(kind));
        }
    }

    pub fn candidate_conditions(&self) -> usize {
        self.match_ + self.wrong_threshold + self.wrong_operator + self.extra_condition
    }

    pub fn reference_conditions(&self) -> usize {
        self.match_ + self.wrong_threshold + self.wrong_operator + self.missing_condition
    }

    pub fn of(classes: &[ConditionClassification]) -> Totals {
        let mut t = Totals::default();
        for c in classes {
            t.add(c.kind, 1);
        }
        t
    }
}

fn values_equal(a: &Literal, b: &Literal, tolerance: f64) -> bool {
    match (a, b) {
        (Literal::Number(x), Literal::Number(y)) => (x - y).abs() <= tolerance,
        _ => a == b,
    }
}

/// Classifies conditions of `cand` against `reference`, pairing them by
/// variable in source order. Candidate-side verdicts come first in candidate
/// order, then missing reference conditions in reference order.
pub fn classify_pair(cand: &Rule, reference: &Rule) -> Vec<ConditionClassification> {
    classify_pair_with(cand, reference, 0.0)
}

pub fn classify_pair_with(cand: &Rule, reference: &Rule, tolerance: f64) -> Vec<ConditionClassification> {
    let mut used = vec![false; reference.conditions.len()];
    let mut out = Vec::with_capacity(cand.conditions.len() + reference.conditions.len());
    for c in &cand.conditions {
        let partner = reference.conditions.iter().enumerate().find(|(j, r)| !used[*j] && r.variable == c.variable);
        let (kind, r) = match partner {
            Some((j, r)) => {
                used[j] = true;
                let kind = if r.operator != c.operator {
                    ClassificationKind::WrongOperator
                } else if values_equal(&c.value, &r.value, tolerance) {
                    ClassificationKind::Match
                } else {
                    ClassificationKind::WrongThreshold
                };
                (kind, Some(r.clone()))
            }
            None => (ClassificationKind::ExtraCondition, None),
        };
        out.push(ConditionClassification { kind, candidate: Some(c.clone()), reference: r });
    }
    for (j, r) in reference.conditions.iter().enumerate() {
        if !used[j] {
            out.push(ConditionClassification {
                kind: ClassificationKind::MissingCondition,
                candidate: None,
                reference: Some(r.clone()),
            });
        }
    }
    out
}

/// Weighted score of one classified pair, in thousandths.
pub fn pair_score_milli(classes: &[ConditionClassification], weights: &Weights) -> i64 {
    classes.iter().map(|c| weights.milli(c.kind)).sum()
}

/// Pair keys for alignment. `None` marks pairs with different outcomes.
///
/// The key orders first by weighted score, then by matches, wrong thresholds
/// and wrong operators, so that among equal-score assignments the paired
/// condition counts are the same whichever side is the candidate.
fn pair_keys(cand: &RuleSet, reference: &RuleSet, opts: &CompareOptions) -> Vec<Vec<Option<i128>>> {
    let k = (cand.condition_count() + reference.condition_count() + 1) as i128;
    cand.rules
        .iter()
        .map(|c| {
            reference
                .rules
                .iter()
                .map(|r| {
                    (c.outcome == r.outcome).then(|| {
                        let classes = classify_pair_with(c, r, opts.threshold_tolerance);
                        let t = Totals::of(&classes);
                        let score = pair_score_milli(&classes, &opts.weights) as i128;
                        ((score * k + t.match_ as i128) * k + t.wrong_threshold as i128) * k + t.wrong_operator as i128
                    })
                })
                .collect()
        })
        .collect()
}

/// Optimal one-to-one pairing of same-outcome rules.
///
/// Maximises the summed pair score. Among optimal assignments, the vector of
/// partners indexed by candidate rule (unpaired ranking after every reference
/// index) is lexicographically smallest, which pairs identical rule sets
/// rule-for-rule.
pub fn align_rules(cand: &RuleSet, reference: &RuleSet) -> Vec<(usize, usize)> {
    align_rules_with(cand, reference, &CompareOptions::default())
}

pub fn align_rules_with(cand: &RuleSet, reference: &RuleSet, opts: &CompareOptions) -> Vec<(usize, usize)> {
    let keys = pair_keys(cand, reference, opts);
    let n = cand.rules.len();
    let m = reference.rules.len();
    let all_cols: Vec<usize> = (0..m).collect();
    let best = best_partial_total(&keys, &(0..n).collect::<Vec<_>>(), &all_cols);

    let mut free_cols = all_cols;
    let mut gained: i128 = 0;
    let mut pairs = Vec::new();
    for i in 0..n {
        let rest: Vec<usize> = (i + 1..n).collect();
        let mut chosen = None;
        for (pos, &j) in free_cols.iter().enumerate() {
            let Some(key) = keys[i][j] else { continue };
            let mut cols = free_cols.clone();
            cols.remove(pos);
            if gained + key + best_partial_total(&keys, &rest, &cols) == best {
                chosen = Some((pos, j, key));
                break;
            }
        }
        if let Some((pos, j, key)) = chosen {
            gained += key;
            free_cols.remove(pos);
            pairs.push((i, j));
        }
    }
    pairs
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignedPair {
    pub candidate: usize,
    pub reference: usize,
    pub classifications: Vec<ConditionClassification>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub candidate_id: String,
    pub reference_id: String,
    pub aligned_pairs: Vec<AlignedPair>,
    pub unmatched_candidate_rules: Vec<usize>,
    pub unmatched_reference_rules: Vec<usize>,
    pub totals: Totals,
    pub similarity: Rational,
}

pub fn compare(cand: &RuleSet, reference: &RuleSet) -> ComparisonReport {
    compare_with(cand, reference, &CompareOptions::default())
}

pub fn compare_with(cand: &RuleSet, reference: &RuleSet, opts: &CompareOptions) -> ComparisonReport {
    let alignment = align_rules_with(cand, reference, opts);
    let mut totals = Totals::default();
    let aligned_pairs: Vec<AlignedPair> = alignment
        .iter()
        .map(|&(i, j)| {
            let classifications = classify_pair_with(&cand.rules[i], &reference.rules[j], opts.threshold_tolerance);
            totals.merge(&Totals::of(&classifications));
            AlignedPair { candidate: i, reference: j, classifications }
        })
        .collect();
    let unmatched_candidate_rules: Vec<usize> =
        (0..cand.rules.len()).filter(|i| !alignment.iter().any(|p| p.0 == *i)).collect();
    let unmatched_reference_rules: Vec<usize> =
        (0..reference.rules.len()).filter(|j| !alignment.iter().any(|p| p.1 == *j)).collect();
    for &i in &unmatched_candidate_rules {
        totals.add(ClassificationKind::ExtraCondition, cand.rules[i].conditions.len());
    }
    for &j in &unmatched_reference_rules {
        totals.add(ClassificationKind::MissingCondition, reference.rules[j].conditions.len());
    }
    let mut report = ComparisonReport {
        candidate_id: cand.id.clone(),
        reference_id: reference.id.clone(),
        aligned_pairs,
        unmatched_candidate_rules,
        unmatched_reference_rules,
        totals,
        similarity: Rational::ZERO,
    };
    report.similarity = similarity_score(&report, reference, &opts.weights);
    report
}

/// `Σ w(kind)·count(kind) / reference condition count`, clamped to [0, 1].
/// A reference without conditions scores 1 only against a candidate without
/// conditions.
pub fn similarity_score(report: &ComparisonReport, reference: &RuleSet, weights: &Weights) -> Rational {
    let ref_conditions = reference.condition_count() as i64;
    if ref_conditions == 0 {
        return if report.totals.candidate_conditions() == 0 { Rational::ONE } else { Rational::ZERO };
    }
    let weighted: i64 =
        ClassificationKind::ALL.iter().map(|&k| weights.milli(k) * report.totals.get(k) as i64).sum();
    let score = Rational::new(weighted, 1000 * ref_conditions);
    score.clamp(Rational::ZERO, Rational::ONE)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusEntry {
    pub candidate: usize,
    pub candidate_id: String,
    pub expert: usize,
    pub expert_id: String,
    pub shared_variables: usize,
    pub report: ComparisonReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusComparison {
    pub entries: Vec<CorpusEntry>,
    pub totals: Totals,
}

/// Compares every candidate against the expert rule set sharing the most
/// variables with it (lowest index on ties).
pub fn compare_corpus(
    candidates: &[RuleSet],
    experts: &[RuleSet],
    opts: &CompareOptions,
) -> Result<CorpusComparison, AnalyzerError> {
    if experts.is_empty() {
        return Err(AnalyzerError::EmptyInput);
    }
    let expert_vars: Vec<_> = experts.iter().map(RuleSet::variables).collect();
    let mut totals = Totals::default();
    let entries = candidates
        .iter()
        .enumerate()
        .map(|(ci, cand)| {
            let vars = cand.variables();
            let (expert, shared) = expert_vars
                .iter()
                .enumerate()
                .map(|(ei, ev)| (ei, ev.intersection(&vars).count()))
                .fold((0, None), |best, (ei, shared)| match best.1 {
                    Some(b) if b >= shared => best,
                    _ => (ei, Some(shared)),
                });
            let report = compare_with(cand, &experts[expert], opts);
            totals.merge(&report.totals);
            CorpusEntry {
                candidate: ci,
                candidate_id: cand.id.clone(),
                expert,
                expert_id: experts[expert].id.clone(),
                shared_variables: shared.unwrap_or(0),
                report,
            }
        })
        .collect();
    Ok(CorpusComparison { entries, totals })
}

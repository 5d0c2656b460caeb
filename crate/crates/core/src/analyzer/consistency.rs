use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{AnalyzerError, MetricsReport, Rational};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub mean: Rational,
    pub sample_stddev: f64,
    pub min: Rational,
    pub max: Rational,
    pub values: Vec<Rational>,
}

impl MetricSummary {
    fn of(values: Vec<Rational>) -> MetricSummary {
        let mean = Rational::mean(&values);
        let n = values.len();
        let var = values.iter().map(|v| (v.to_f64() - mean.to_f64()).powi(2)).sum::<f64>() / (n - 1) as f64;
        MetricSummary {
            mean,
            sample_stddev: var.sqrt(),
            min: *values.iter().min().expect("at least two runs"),
            max: *values.iter().max().expect("at least two runs"),
            values,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyReport {
    pub runs: usize,
    pub ruleset_count: MetricSummary,
    pub mean_conditions: MetricSummary,
    /// Fraction of runs whose rule sets use each variable.
    pub variable_stability: BTreeMap<String, Rational>,
}

pub fn consistency(reports: &[MetricsReport]) -> Result<ConsistencyReport, AnalyzerError> {
    if reports.len() < 2 {
        return Err(AnalyzerError::InsufficientRuns(reports.len()));
    }
    let n = reports.len() as i64;
    let mut counts: BTreeMap<String, i64> = BTreeMap::new();
    for r in reports {
        for v in &r.variables_used {
            *counts.entry(v.clone()).or_default() += 1;
        }
    }
    Ok(ConsistencyReport {
        runs: reports.len(),
        ruleset_count: MetricSummary::of(reports.iter().map(|r| Rational::from_int(r.ruleset_count as i64)).collect()),
        mean_conditions: MetricSummary::of(reports.iter().map(|r| r.mean_conditions_overall).collect()),
        variable_stability: counts.into_iter().map(|(v, c)| (v, Rational::new(c, n))).collect(),
    })
}

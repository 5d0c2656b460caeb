//! One function per subcommand. Each returns the text to print on stdout.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};

use ruleflex_core::analyzer::{
    compare_corpus, compare_with, compute_metrics, consistency, ClassificationKind, CompareOptions, ComparisonReport,
    CorpusComparison, MetricsReport, Rational, Totals,
};
use ruleflex_core::apigen::{generate_descriptor, generate_test_suite};
use ruleflex_core::code::parse_response;
use ruleflex_core::prompt::PromptStrategy;
use ruleflex_core::workspace::{EntryKind, Workspace, WorkspaceError};
use ruleflex_core::{evaluate, parse_dsl, Provenance, Record, RuleSet};
use ruleflex_gateway::{
    outcome_for_objective, GenerateRequest, GenerationRun, HttpProvider, Provider, ProviderConfig, ReplayProvider,
    StoredRun,
};

use crate::CliError;

pub fn to_json<T: Serialize>(value: &T) -> Result<String, CliError> {
    Ok(serde_json::to_string_pretty(value)? + "\n")
}

#[derive(Debug, Clone, Default)]
pub struct GenerateArgs {
    pub domain: Option<String>,
    pub objective: Option<String>,
    pub strategy: String,
    pub model: Option<String>,
    pub runs: usize,
    pub temperature: Option<f64>,
    pub max_tokens: Option<u32>,
    pub endpoint: Option<String>,
    pub replay: bool,
    /// Replay fixture directory; the workspace's `fixtures/` by default.
    pub fixtures: Option<PathBuf>,
}

pub fn run_summary(id: &str, run: &GenerationRun) -> Value {
    json!({
        "id": id,
        "run_index": run.run_index,
        "strategy": run.strategy,
        "model": run.config.model,
        "provider": run.provider,
        "started_at": run.started_at,
        "ruleset_ids": run.ruleset_ids,
        "error": run.error,
        "diagnostics": run.diagnostics.len(),
        "rejected": run.rejected.len(),
    })
}

pub async fn generate(ws: &Workspace, args: &GenerateArgs) -> Result<Vec<StoredRun>, CliError> {
    let strategy: PromptStrategy = args.strategy.parse().map_err(|e| CliError::Usage(format!("{e}")))?;
    if args.runs == 0 {
        return Err(CliError::Usage("--runs must be at least 1".into()));
    }
    let config = ws.config()?;
    let mut provider_config = ProviderConfig::from_defaults(&config.provider);
    if let Some(m) = &args.model {
        provider_config.model = m.clone();
    }
    if let Some(t) = args.temperature {
        provider_config.temperature = t;
    }
    if let Some(n) = args.max_tokens {
        provider_config.max_response_tokens = n;
    }
    if let Some(e) = &args.endpoint {
        provider_config.endpoint = e.clone();
    }
    provider_config.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let objective = args.objective.clone().unwrap_or(config.objective.clone());
    let request = GenerateRequest {
        strategy,
        domain: args.domain.clone().unwrap_or(config.domain.clone()),
        outcome: outcome_for_objective(&objective, &config.outcome),
        objective,
        runs: args.runs,
    };
    let provider: Box<dyn Provider> = if args.replay {
        Box::new(ReplayProvider::new(args.fixtures.clone().unwrap_or_else(|| ws.fixtures_dir())))
    } else {
        Box::new(HttpProvider::new())
    };
    ruleflex_gateway::generate(provider.as_ref(), &provider_config, &request, ws)
        .await
        .map_err(|e| CliError::Domain(e.to_string()))
}

/// Rule sets named by `id`: the rule set itself, or every rule set of a run.
pub fn resolve_rulesets(ws: &Workspace, id: &str) -> Result<Vec<RuleSet>, WorkspaceError> {
    let entry = ws.load(id)?;
    match entry.kind {
        EntryKind::Ruleset => Ok(vec![entry.decode()?]),
        EntryKind::Run => {
            let run: GenerationRun = entry.decode()?;
            run.ruleset_ids.iter().map(|r| ws.load_ruleset(r)).collect()
        }
        found => Err(WorkspaceError::KindMismatch { id: entry.id, expected: EntryKind::Ruleset, found }),
    }
}

fn ruleset_summaries(rulesets: &[RuleSet]) -> Vec<Value> {
    rulesets
        .iter()
        .map(|rs| json!({"id": rs.id, "name": rs.name, "rules": rs.rules.len(), "conditions": rs.condition_count()}))
        .collect()
}

/// Parses a DSL file, a file of model output or code, or the response of a stored run.
pub fn parse(ws: &Workspace, target: &str) -> Result<String, CliError> {
    let path = Path::new(target);
    if !path.exists() {
        let entry = ws.load_kind(EntryKind::Run, target)?;
        let run: GenerationRun = entry.decode()?;
        let text = run.response.as_deref().ok_or_else(|| CliError::Domain(format!("run {} has no response", entry.id)))?;
        let config = ws.config()?;
        let outcome = outcome_for_objective(&run.objective, &config.outcome);
        let parsed = parse_response(
            text,
            &ws.registry()?,
            outcome.as_ref(),
            &run.domain,
            &run.objective,
            &Provenance::Generated { run: run.run_key.clone() },
        );
        return store_parsed(ws, parsed.rulesets, json!(parsed.diagnostics), &parsed.new_variables);
    }

    let text = std::fs::read_to_string(path)?;
    let is_dsl = path.extension().is_some_and(|e| e == "dsl")
        || text.lines().map(str::trim).find(|l| !l.is_empty() && !l.starts_with('#')).is_some_and(|l| l.starts_with("ruleset"));
    if is_dsl {
        let rulesets = parse_dsl(&text).map_err(|e| CliError::Domain(format!("{}: {e}", path.display())))?;
        return store_parsed(ws, rulesets, json!([]), &[]);
    }
    let config = ws.config()?;
    let outcome = outcome_for_objective(&config.objective, &config.outcome);
    let parsed = parse_response(&text, &ws.registry()?, outcome.as_ref(), &config.domain, &config.objective, &Provenance::Expert);
    store_parsed(ws, parsed.rulesets, json!(parsed.diagnostics), &parsed.new_variables)
}

fn store_parsed(
    ws: &Workspace,
    rulesets: Vec<RuleSet>,
    diagnostics: Value,
    new_variables: &[ruleflex_core::VariableSpec],
) -> Result<String, CliError> {
    ws.extend_registry(new_variables)?;
    let mut stored = Vec::new();
    let mut rejected = Vec::new();
    for rs in &rulesets {
        match ws.store_ruleset(rs) {
            Ok(_) => stored.push(rs.clone()),
            Err(WorkspaceError::ValidationFailed(d)) => rejected.push(json!({"name": rs.name, "diagnostics": d})),
            Err(e) => return Err(e.into()),
        }
    }
    let out = to_json(&json!({
        "rulesets": ruleset_summaries(&stored),
        "rejected": rejected,
        "diagnostics": diagnostics,
        "new_variables": new_variables.iter().map(|v| &v.canonical_name).collect::<Vec<_>>(),
    }))?;
    if stored.is_empty() {
        return Err(CliError::Domain(format!("no valid rule set recovered\n{out}")));
    }
    Ok(out)
}

#[derive(Debug, Serialize)]
struct MetricsGroup {
    /// Run key for a run, rule set id for a lone rule set.
    source: String,
    report: MetricsReport,
}

fn metrics_groups(ws: &Workspace, ids: &[String]) -> Result<Vec<MetricsGroup>, CliError> {
    if ids.is_empty() {
        return Err(CliError::Usage("at least one run or rule set id is required".into()));
    }
    let mut groups = Vec::new();
    for id in ids {
        let entry = ws.load(id)?;
        let source = match entry.kind {
            EntryKind::Run => entry.decode::<GenerationRun>()?.run_key,
            _ => entry.id.clone(),
        };
        let rulesets = resolve_rulesets(ws, id)?;
        let report = compute_metrics(&rulesets).map_err(|e| CliError::Domain(format!("{id}: {e}")))?;
        groups.push(MetricsGroup { source, report });
    }
    Ok(groups)
}

/// Per-run metrics plus their means over runs.
pub fn metrics(ws: &Workspace, ids: &[String]) -> Result<String, CliError> {
    let groups = metrics_groups(ws, ids)?;
    let counts: Vec<Rational> = groups.iter().map(|g| Rational::from_int(g.report.ruleset_count as i64)).collect();
    let conditions: Vec<Rational> = groups.iter().map(|g| g.report.mean_conditions_overall).collect();
    to_json(&json!({
        "runs": groups,
        "mean_ruleset_count": Rational::mean(&counts),
        "mean_conditions": Rational::mean(&conditions),
    }))
}

pub fn consistency_report(ws: &Workspace, ids: &[String]) -> Result<String, CliError> {
    let groups = metrics_groups(ws, ids)?;
    let reports: Vec<MetricsReport> = groups.into_iter().map(|g| g.report).collect();
    let report = consistency(&reports).map_err(|e| CliError::Domain(e.to_string()))?;
    to_json(&report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Json,
    Table,
}

pub enum Comparison {
    Pair(ComparisonReport),
    Corpus(CorpusComparison),
}

/// Compares one rule set with another. When the ids name several rule sets
/// (runs, or repeated ids), each candidate is paired with the reference
/// sharing the most variables.
pub fn compare_ids(ws: &Workspace, candidates: &[String], references: &[String]) -> Result<Comparison, CliError> {
    if candidates.is_empty() || references.is_empty() {
        return Err(CliError::Usage("need at least one candidate and one reference".into()));
    }
    let config = ws.config()?;
    let opts = CompareOptions { weights: config.weights, threshold_tolerance: config.threshold_tolerance };
    let mut cands = Vec::new();
    for id in candidates {
        cands.extend(resolve_rulesets(ws, id)?);
    }
    let mut refs = Vec::new();
    for id in references {
        refs.extend(resolve_rulesets(ws, id)?);
    }
    if cands.len() == 1 && refs.len() == 1 {
        return Ok(Comparison::Pair(compare_with(&cands[0], &refs[0], &opts)));
    }
    compare_corpus(&cands, &refs, &opts).map(Comparison::Corpus).map_err(|e| CliError::Domain(e.to_string()))
}

pub fn compare(ws: &Workspace, candidates: &[String], references: &[String], format: Format) -> Result<String, CliError> {
    let result = compare_ids(ws, candidates, references)?;
    match &result {
        Comparison::Pair(r) => ws.store_value(EntryKind::Comparison, r)?,
        Comparison::Corpus(c) => ws.store_value(EntryKind::Comparison, c)?,
    };
    match (format, result) {
        (Format::Json, Comparison::Pair(r)) => to_json(&r),
        (Format::Json, Comparison::Corpus(c)) => to_json(&c),
        (Format::Table, Comparison::Pair(r)) => Ok(comparison_table(&r)),
        (Format::Table, Comparison::Corpus(c)) => {
            let mut out = String::new();
            for e in &c.entries {
                out.push_str(&comparison_table(&e.report));
                out.push('\n');
            }
            let _ = writeln!(out, "corpus totals: {}", totals_line(&c.totals));
            Ok(out)
        }
    }
}

fn totals_line(t: &Totals) -> String {
    ClassificationKind::ALL.iter().map(|k| format!("{} {}", k.label(), t.get(*k))).collect::<Vec<_>>().join(" | ")
}

fn short(id: &str) -> &str {
    &id[..id.len().min(12)]
}

fn comparison_table(r: &ComparisonReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "candidate {}  reference {}", short(&r.candidate_id), short(&r.reference_id));
    let _ = writeln!(out, "{:<10} {:<18} {:<36} {}", "rules", "classification", "candidate", "reference");
    let show = |c: &Option<ruleflex_core::Condition>| {
        c.as_ref().map(|c| format!("{} {} {}", c.variable, c.operator.symbol(), c.value)).unwrap_or_else(|| "-".into())
    };
    for p in &r.aligned_pairs {
        for c in &p.classifications {
            let _ = writeln!(
                out,
                "{:<10} {:<18} {:<36} {}",
                format!("{} ~ {}", p.candidate, p.reference),
                c.kind.label(),
                show(&c.candidate),
                show(&c.reference)
            );
        }
    }
    for i in &r.unmatched_candidate_rules {
        let _ = writeln!(out, "{:<10} unmatched candidate rule", format!("{i} ~ -"));
    }
    for j in &r.unmatched_reference_rules {
        let _ = writeln!(out, "{:<10} unmatched reference rule", format!("- ~ {j}"));
    }
    let _ = writeln!(out, "totals: {}", totals_line(&r.totals));
    let _ = writeln!(out, "similarity: {} ({:.4})", r.similarity, r.similarity.to_f64());
    out
}

pub fn eval(ws: &Workspace, ruleset: &str, record_path: &Path) -> Result<String, CliError> {
    let rs = ws.load_ruleset(ruleset)?;
    let record: Record = serde_json::from_str(&std::fs::read_to_string(record_path)?)
        .map_err(|e| CliError::Usage(format!("{}: {e}", record_path.display())))?;
    let trace = evaluate(&rs, &record).map_err(|e| CliError::Domain(e.to_string()))?;
    to_json(&trace)
}

pub fn gen_api(ws: &Workspace, ruleset: &str, out: &Path, epsilon: Option<f64>) -> Result<String, CliError> {
    let rs = ws.load_ruleset(ruleset)?;
    let registry = ws.registry()?;
    let epsilon = epsilon.unwrap_or(ws.config()?.epsilon);
    let descriptor = generate_descriptor(&rs, &registry).map_err(|e| CliError::Domain(e.to_string()))?;
    let suite = generate_test_suite(&rs, &registry, epsilon).map_err(|e| CliError::Domain(e.to_string()))?;
    std::fs::create_dir_all(out)?;
    std::fs::write(out.join("descriptor.json"), to_json(&descriptor.to_openapi())?)?;
    std::fs::write(out.join("tests.json"), to_json(&suite)?)?;
    to_json(&json!({
        "ruleset_id": rs.id,
        "descriptor": out.join("descriptor.json"),
        "tests": out.join("tests.json"),
        "cases": suite.cases.len(),
    }))
}

pub fn show(ws: &Workspace, id: &str) -> Result<String, CliError> {
    to_json(&ws.load(id)?)
}

pub fn list(ws: &Workspace, kind: EntryKind) -> Result<String, CliError> {
    let mut rows = Vec::new();
    for entry in ws.list(kind)? {
        let row = match kind {
            EntryKind::Ruleset => {
                let rs: RuleSet = entry.decode()?;
                json!({"id": entry.id, "name": rs.name, "provenance": rs.provenance, "rules": rs.rules.len(), "created_at": entry.created_at})
            }
            EntryKind::Run => run_summary(&entry.id, &entry.decode()?),
            _ => json!({"id": entry.id, "created_at": entry.created_at}),
        };
        rows.push(row);
    }
    to_json(&rows)
}

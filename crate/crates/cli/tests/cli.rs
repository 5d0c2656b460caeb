use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn ruleflex(ws: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ruleflex"))
        .arg("--workspace")
        .arg(ws)
        .args(args)
        .env_remove("RULEFLEX_API_KEY")
        .output()
        .unwrap()
}

fn json_out(out: &Output) -> Value {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

fn path_str(p: PathBuf) -> String {
    p.to_string_lossy().into_owned()
}

#[test]
fn exit_codes() {
    let ws = tempfile::tempdir().unwrap();
    assert_eq!(ruleflex(ws.path(), &["no-such-command"]).status.code(), Some(2));
    assert_eq!(ruleflex(ws.path(), &["generate", "--strategy", "zero-shot", "--replay"]).status.code(), Some(2));
    assert_eq!(ruleflex(ws.path(), &["generate", "--temperature", "3", "--replay"]).status.code(), Some(2));
    assert_eq!(ruleflex(ws.path(), &["show", "0123abcd"]).status.code(), Some(1));
    // Live provider without a credential.
    let out = ruleflex(ws.path(), &["generate", "--runs", "1"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("RULEFLEX_API_KEY"));
    // Replay miss.
    let empty = tempfile::tempdir().unwrap();
    let out = ruleflex(ws.path(), &["generate", "--replay", "--fixtures", &path_str(empty.path().to_path_buf())]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn parse_compare_eval_gen_api() {
    let ws = tempfile::tempdir().unwrap();
    let cand = json_out(&ruleflex(ws.path(), &["parse", &path_str(fixtures().join("examples/fever_candidate.dsl"))]));
    let reference = json_out(&ruleflex(ws.path(), &["parse", &path_str(fixtures().join("examples/fever_reference.dsl"))]));
    let c = cand["rulesets"][0]["id"].as_str().unwrap();
    let r = reference["rulesets"][0]["id"].as_str().unwrap();

    let report = json_out(&ruleflex(ws.path(), &["compare", "--candidate", c, "--reference", r, "--format", "json"]));
    assert_eq!(report["totals"]["wrong_threshold"], 1);
    assert_eq!(report["totals"]["extra_condition"], 1);
    assert_eq!(report["similarity"]["exact"], "1/2");
    let table = ruleflex(ws.path(), &["compare", "--candidate", &c[..8], "--reference", &r[..8]]);
    assert!(String::from_utf8_lossy(&table.stdout).contains("Wrong Threshold"));

    let trace = json_out(&ruleflex(
        ws.path(),
        &["eval", "--ruleset", r, "--record", &path_str(fixtures().join("examples/record.json"))],
    ));
    assert_eq!(trace["outcome"], "RED");
    let missing = tempfile::NamedTempFile::new().unwrap();
    std::fs::write(missing.path(), "{}").unwrap();
    assert_eq!(ruleflex(ws.path(), &["eval", "--ruleset", r, "--record", &path_str(missing.path().to_path_buf())]).status.code(), Some(1));

    let out = tempfile::tempdir().unwrap();
    json_out(&ruleflex(ws.path(), &["gen-api", "--ruleset", r, "--out", &path_str(out.path().to_path_buf())]));
    let descriptor: Value = serde_json::from_str(&std::fs::read_to_string(out.path().join("descriptor.json")).unwrap()).unwrap();
    assert_eq!(descriptor["openapi"], "3.0.3");
    let tests: Value = serde_json::from_str(&std::fs::read_to_string(out.path().join("tests.json")).unwrap()).unwrap();
    let outcomes: Vec<&str> = tests["cases"].as_array().unwrap().iter().map(|c| c["expected_outcome"].as_str().unwrap()).collect();
    assert_eq!(outcomes, vec!["GREEN", "RED", "RED"]);
}

#[test]
fn generated_rule_sets_need_review_before_gen_api() {
    let ws = tempfile::tempdir().unwrap();
    let runs = json_out(&ruleflex(
        ws.path(),
        &["generate", "--replay", "--model", "gpt-4", "--fixtures", &path_str(fixtures().join("replay"))],
    ));
    let rs = runs[0]["ruleset_ids"][0].as_str().unwrap();
    let out = tempfile::tempdir().unwrap();
    let res = ruleflex(ws.path(), &["gen-api", "--ruleset", rs, "--out", &path_str(out.path().to_path_buf())]);
    assert_eq!(res.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&res.stderr).contains("reviewed"));
    assert!(!out.path().join("descriptor.json").exists());
}

#[test]
fn consistency_over_replayed_runs() {
    let ws = tempfile::tempdir().unwrap();
    let runs = json_out(&ruleflex(
        ws.path(),
        &["generate", "--replay", "--runs", "10", "--model", "gpt-3.5-turbo", "--fixtures", &path_str(fixtures().join("replay"))],
    ));
    let ids: Vec<&str> = runs.as_array().unwrap().iter().map(|r| r["id"].as_str().unwrap()).collect();
    let mut args = vec!["consistency"];
    args.extend(&ids);
    let report = json_out(&ruleflex(ws.path(), &args));
    assert_eq!(report["runs"], 10);
    assert_eq!(report["ruleset_count"]["mean"]["exact"], "16/5");
    assert_eq!(report["ruleset_count"]["min"]["exact"], "3");
    assert_eq!(report["ruleset_count"]["max"]["exact"], "4");

    let listed = json_out(&ruleflex(ws.path(), &["list", "runs"]));
    assert_eq!(listed.as_array().unwrap().len(), 10);
    let parsed = json_out(&ruleflex(ws.path(), &["parse", ids[0]]));
    assert_eq!(parsed["rulesets"].as_array().unwrap().len(), 3);
}

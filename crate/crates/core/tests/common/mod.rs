#![allow(dead_code)]

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use ruleflex_core::eval::Record;
use ruleflex_core::{Condition, DecisionTree, Literal, Node, Operator, OutcomeSpec, Provenance, Rule, RuleSet};

pub const NUMERIC: [(&str, f64); 5] = [
    ("body_temperature", 38.0),
    ("heart_rate", 100.0),
    ("oxygen_saturation", 94.0),
    ("respiratory_rate", 20.0),
    ("age", 60.0),
];
pub const BOOLEAN: [&str; 3] = ["cough", "fatigue", "shortness_of_breath"];
pub const GENDER: [&str; 3] = ["female", "male", "other"];
pub const LEVELS: [&str; 3] = ["GREEN", "AMBER", "RED"];

pub fn random_condition(rng: &mut ChaCha8Rng, vars: &[&str]) -> Condition {
    let var = *vars.choose(rng).unwrap();
    if let Some((_, centre)) = NUMERIC.iter().find(|(n, _)| *n == var) {
        let op = *Operator::ALL.choose(rng).unwrap();
        let offset = rng.gen_range(-2..=2) as f64 * 0.5;
        Condition::new(var, op, Literal::Number(centre + offset))
    } else if var == "gender" {
        let op = *[Operator::Eq, Operator::Ne].choose(rng).unwrap();
        Condition::new(var, op, Literal::Level(GENDER.choose(rng).unwrap().to_string()))
    } else {
        let op = *[Operator::Eq, Operator::Ne].choose(rng).unwrap();
        Condition::new(var, op, Literal::Bool(rng.gen()))
    }
}

pub fn variable_pool(rng: &mut ChaCha8Rng, max: usize) -> Vec<&'static str> {
    let mut all: Vec<&str> = NUMERIC.iter().map(|(n, _)| *n).chain(BOOLEAN).chain(["gender"]).collect();
    all.shuffle(rng);
    all.truncate(rng.gen_range(1..=max));
    all
}

/// Valid rule set: 1..=max_rules rules, conditions without duplicates, an
/// optional trailing default rule.
pub fn random_ruleset(rng: &mut ChaCha8Rng, max_rules: usize, vars: &[&str], max_conditions: usize) -> RuleSet {
    let n = rng.gen_range(1..=max_rules);
    let mut rules = Vec::new();
    for i in 0..n {
        let last = i + 1 == n;
        let k = if last && rng.gen_bool(0.4) { 0 } else { rng.gen_range(1..=max_conditions) };
        let mut conditions: Vec<Condition> = Vec::new();
        while conditions.len() < k {
            let c = random_condition(rng, vars);
            if !conditions.contains(&c) {
                conditions.push(c);
            }
        }
        rules.push(Rule { index: i, conditions, outcome: LEVELS.choose(rng).unwrap().to_string() });
    }
    RuleSet::new("random", "Medical", "test", OutcomeSpec::triage(), rules, Provenance::Expert)
}

pub fn random_tree(rng: &mut ChaCha8Rng, depth: usize, vars: &[&str]) -> Node {
    if depth == 0 || rng.gen_bool(0.25) {
        return Node::leaf(LEVELS.choose(rng).unwrap());
    }
    let k = rng.gen_range(1..=2);
    let conditions = (0..k).map(|_| random_condition(rng, vars)).collect();
    let then = random_tree(rng, depth - 1, vars);
    let otherwise = if rng.gen_bool(0.3) { None } else { Some(random_tree(rng, depth - 1, vars)) };
    Node::branch(conditions, then, otherwise)
}

pub fn random_decision_tree(rng: &mut ChaCha8Rng, depth: usize, vars: &[&str]) -> DecisionTree {
    DecisionTree { root: random_tree(rng, depth, vars), outcome_variable: "status".into() }
}

/// Record binding every variable in `vars`, values drawn near the thresholds
/// that `random_condition` uses so that branches are exercised.
pub fn random_record(rng: &mut ChaCha8Rng, vars: &[&str]) -> Record {
    vars.iter()
        .map(|&v| {
            let value = if let Some((_, centre)) = NUMERIC.iter().find(|(n, _)| *n == v) {
                Literal::Number(centre + rng.gen_range(-6..=6) as f64 * 0.25)
            } else if v == "gender" {
                Literal::Level(GENDER.choose(rng).unwrap().to_string())
            } else {
                Literal::Bool(rng.gen())
            };
            (v.to_string(), value)
        })
        .collect()
}

/// Reference semantics for one comparison, written independently of the library.
pub fn holds(c: &Condition, record: &Record) -> bool {
    let value = &record[&c.variable];
    match (value, &c.value) {
        (Literal::Number(x), Literal::Number(t)) => match c.operator {
            Operator::Ge => x >= t,
            Operator::Gt => x > t,
            Operator::Le => x <= t,
            Operator::Lt => x < t,
            Operator::Eq => x == t,
            Operator::Ne => x != t,
        },
        (a, b) => match c.operator {
            Operator::Eq => a == b,
            Operator::Ne => a != b,
            _ => panic!("ordering on non-numeric"),
        },
    }
}

/// Direct recursive walk of a tree.
pub fn walk_tree(node: &Node, record: &Record, default: &str) -> String {
    match node {
        Node::Leaf { outcome } => outcome.clone(),
        Node::Branch { conditions, then, otherwise } => {
            if conditions.iter().all(|c| holds(c, record)) {
                walk_tree(then, record, default)
            } else {
                match otherwise {
                    Some(o) => walk_tree(o, record, default),
                    None => default.to_string(),
                }
            }
        }
    }
}

/// Linear first-match scan.
pub fn scan_rules(rs: &RuleSet, record: &Record) -> String {
    rs.rules
        .iter()
        .find(|r| r.conditions.iter().all(|c| holds(c, record)))
        .map(|r| r.outcome.clone())
        .unwrap_or_else(|| rs.outcome.default_level.clone())
}

// Alignment oracle: exhaustive enumeration, independent of the Hungarian solver.

/// (match, wrong threshold, wrong operator, extra, missing) for one rule pair.
pub fn oracle_classify(cand: &Rule, reference: &Rule) -> [usize; 5] {
    let mut counts = [0; 5];
    let mut taken = vec![false; reference.conditions.len()];
    for c in &cand.conditions {
        let mut paired = false;
        for (j, r) in reference.conditions.iter().enumerate() {
            if !taken[j] && r.variable == c.variable {
                taken[j] = true;
                paired = true;
                if r.operator != c.operator {
                    counts[2] += 1;
                } else if r.value == c.value {
                    counts[0] += 1;
                } else {
                    counts[1] += 1;
                }
                break;
            }
        }
        if !paired {
            counts[3] += 1;
        }
    }
    counts[4] = taken.iter().filter(|t| !**t).count();
    counts
}

/// Score in half-units: 2·match + wrong threshold + wrong operator.
pub fn half_score(c: &[usize; 5]) -> i64 {
    (2 * c[0] + c[1] + c[2]) as i64
}

/// Every partial injective map from candidate rules to same-outcome reference rules.
pub fn all_assignments(cand: &RuleSet, reference: &RuleSet) -> Vec<Vec<Option<usize>>> {
    fn go(i: usize, cand: &RuleSet, reference: &RuleSet, used: &mut Vec<bool>, cur: &mut Vec<Option<usize>>, out: &mut Vec<Vec<Option<usize>>>) {
        if i == cand.rules.len() {
            out.push(cur.clone());
            return;
        }
        for j in 0..reference.rules.len() {
            if !used[j] && reference.rules[j].outcome == cand.rules[i].outcome {
                used[j] = true;
                cur.push(Some(j));
                go(i + 1, cand, reference, used, cur, out);
                cur.pop();
                used[j] = false;
            }
        }
        cur.push(None);
        go(i + 1, cand, reference, used, cur, out);
        cur.pop();
    }
    let mut out = Vec::new();
    go(0, cand, reference, &mut vec![false; reference.rules.len()], &mut Vec::new(), &mut out);
    out
}

pub fn assignment_counts(cand: &RuleSet, reference: &RuleSet, a: &[Option<usize>]) -> [usize; 5] {
    let mut total = [0; 5];
    let mut ref_used = vec![false; reference.rules.len()];
    for (i, partner) in a.iter().enumerate() {
        match partner {
            Some(j) => {
                ref_used[*j] = true;
                let c = oracle_classify(&cand.rules[i], &reference.rules[*j]);
                for k in 0..5 {
                    total[k] += c[k];
                }
            }
            None => total[3] += cand.rules[i].conditions.len(),
        }
    }
    for (j, used) in ref_used.iter().enumerate() {
        if !used {
            total[4] += reference.rules[j].conditions.len();
        }
    }
    total
}

pub fn pair_half_score_sum(cand: &RuleSet, reference: &RuleSet, pairs: &[(usize, usize)]) -> i64 {
    pairs.iter().map(|&(i, j)| half_score(&oracle_classify(&cand.rules[i], &reference.rules[j]))).sum()
}

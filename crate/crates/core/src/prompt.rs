//! Prompt strategies and rendering.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::canonical::sha256_hex;

/// Objective used for the clinical triage experiments.
pub const TRIAGE_OBJECTIVE: &str = "Classify COVID-19 patient's health status for developing pandemic intervention monitoring system to help clinicians determine if patient should receive medical attention. The classification must be as follows: GREEN, AMBER, RED.";

const FEW_SHOT: &str = include_str!("prompts/few_shot.txt");
const IMITATION: &str = include_str!("prompts/imitation.txt");
const CHAIN_OF_THOUGHT: &str = include_str!("prompts/chain_of_thought.txt");
const INSTRUCTION_FOLLOWING: &str = include_str!("prompts/instruction_following.txt");
const FRAUD_EXAMPLE: &str = include_str!("prompts/fraud_example.txt");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptStrategy {
    InstructionFollowing,
    Imitation,
    ChainOfThought,
    FewShot,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PromptError {
    #[error("unknown prompt strategy `{0}` (expected instruction, imitation, cot or few-shot)")]
    UnknownStrategy(String),
    #[error("template leaves placeholder `{{{0}}}` unresolved")]
    UnresolvedPlaceholder(String),
}

impl PromptStrategy {
    pub const ALL: [PromptStrategy; 4] = [
        PromptStrategy::InstructionFollowing,
        PromptStrategy::Imitation,
        PromptStrategy::ChainOfThought,
        PromptStrategy::FewShot,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PromptStrategy::InstructionFollowing => "instruction_following",
            PromptStrategy::Imitation => "imitation",
            PromptStrategy::ChainOfThought => "chain_of_thought",
            PromptStrategy::FewShot => "few_shot",
        }
    }

    pub fn template(self) -> &'static str {
        let raw = match self {
            PromptStrategy::InstructionFollowing => INSTRUCTION_FOLLOWING,
            PromptStrategy::Imitation => IMITATION,
            PromptStrategy::ChainOfThought => CHAIN_OF_THOUGHT,
            PromptStrategy::FewShot => FEW_SHOT,
        };
        raw.trim_end_matches('\n')
    }
}

impl fmt::Display for PromptStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PromptStrategy {
    type Err = PromptError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key = s.trim().to_ascii_lowercase().replace(['-', ' '], "_");
        Ok(match key.as_str() {
            "instruction" | "instruction_following" => PromptStrategy::InstructionFollowing,
            "imitation" => PromptStrategy::Imitation,
            "cot" | "chain_of_thought" => PromptStrategy::ChainOfThought,
            "few_shot" | "fewshot" | "one_shot" => PromptStrategy::FewShot,
            _ => return Err(PromptError::UnknownStrategy(s.to_string())),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: String,
    pub content: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderedPrompt {
    pub strategy: PromptStrategy,
    pub messages: Vec<Message>,
}

impl RenderedPrompt {
    /// Message contents joined by blank lines; what the prompt hash covers.
    pub fn text(&self) -> String {
        self.messages.iter().map(|m| m.content.as_str()).collect::<Vec<_>>().join("\n\n")
    }

    pub fn hash(&self) -> String {
        sha256_hex(self.text().as_bytes())
    }
}

/// Single-pass `{name}` substitution. Substituted values are not rescanned;
/// braces that do not enclose an identifier are kept as written.
fn substitute(template: &str, vars: &[(&str, &str)]) -> Result<String, PromptError> {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        let close = after.find('}');
        let name = close.map(|c| &after[..c]);
        match name {
            Some(name) if !name.is_empty() && name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') => {
                let value = vars
                    .iter()
                    .find(|(k, _)| *k == name)
                    .map(|(_, v)| *v)
                    .ok_or_else(|| PromptError::UnresolvedPlaceholder(name.to_string()))?;
                out.push_str(value);
                rest = &after[name.len() + 1..];
            }
            _ => {
                out.push('{');
                rest = after;
            }
        }
    }
    out.push_str(rest);
    Ok(out)
}

pub fn render_prompt(strategy: PromptStrategy, domain: &str, objective: &str) -> Result<RenderedPrompt, PromptError> {
    let example = FRAUD_EXAMPLE.trim_end_matches('\n');
    let content = substitute(
        strategy.template(),
        &[("domain", domain), ("objective", objective), ("example_block", example)],
    )?;
    Ok(RenderedPrompt { strategy, messages: vec![Message { role: "user".into(), content }] })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strategies_parse_by_short_and_long_names() {
        assert_eq!("few-shot".parse::<PromptStrategy>().unwrap(), PromptStrategy::FewShot);
        assert_eq!("cot".parse::<PromptStrategy>().unwrap(), PromptStrategy::ChainOfThought);
        assert_eq!("instruction".parse::<PromptStrategy>().unwrap(), PromptStrategy::InstructionFollowing);
        assert_eq!("Imitation".parse::<PromptStrategy>().unwrap(), PromptStrategy::Imitation);
        assert_eq!(
            "zero-shot".parse::<PromptStrategy>(),
            Err(PromptError::UnknownStrategy("zero-shot".into()))
        );
    }

    #[test]
    fn every_strategy_resolves_all_placeholders() {
        for s in PromptStrategy::ALL {
            let p = render_prompt(s, "Medical", TRIAGE_OBJECTIVE).unwrap();
            let text = p.text();
            assert!(!text.contains("{domain}") && !text.contains("{objective}") && !text.contains("{example_block}"));
            assert!(text.contains("Problem domain: Medical"));
            assert_eq!(p.hash().len(), 64);
        }
    }

    #[test]
    fn imitation_opens_with_role_line() {
        let p = render_prompt(PromptStrategy::Imitation, "Medical", "x").unwrap();
        assert_eq!(p.text().lines().next(), Some("You are subject-matter expert (SME)."));
    }

    #[test]
    fn few_shot_embeds_exemplar_and_ends_with_problem() {
        let text = render_prompt(PromptStrategy::FewShot, "Medical", TRIAGE_OBJECTIVE).unwrap().text();
        assert!(text.contains("Problem domain: Financial services"));
        assert!(text.contains("allowedTransactionAmount = 50000"));
        assert!(text.ends_with("The classification must be as follows: GREEN, AMBER, RED."));
    }

    #[test]
    fn values_are_not_rescanned_and_unknown_placeholders_fail() {
        assert_eq!(substitute("a {x} b", &[("x", "{y}")]).unwrap(), "a {y} b");
        assert_eq!(substitute("{ not a name }", &[]).unwrap(), "{ not a name }");
        assert_eq!(substitute("{nope}", &[]), Err(PromptError::UnresolvedPlaceholder("nope".into())));
    }
}

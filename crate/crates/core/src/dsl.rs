//! The rule-set authoring language.
//!
//! ```text
//! ruleset "fever" {
//!   domain: "Medical"
//!   objective: "Flag febrile patients"
//!   outcome status in [GREEN, AMBER, RED] default GREEN
//!   rule r0: IF body_temperature >= 38 AND cough == true THEN status = RED
//!   rule r1: DEFAULT status = GREEN
//! }
//! ```
//!
//! `#` starts a comment that runs to the end of the line. Levels that are not
//! identifiers may be written as quoted strings.

use std::fmt::Write as _;
use std::ops::Range;

use thiserror::Error;

use crate::model::{Condition, Literal, Operator, OutcomeSpec, Provenance, Rule, RuleSet};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("syntax error at {}..{}: {message}", span.start, span.end)]
pub struct SyntaxError {
    pub span: Range<usize>,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Str(String),
    Num(f64),
    Op(Operator),
    LBrace,
    RBrace,
    LBracket,
    RBracket,
    Comma,
    Colon,
    Assign,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("identifier `{s}`"),
            Tok::Str(s) => format!("string {s:?}"),
            Tok::Num(n) => format!("number {n}"),
            Tok::Op(op) => format!("`{op}`"),
            Tok::LBrace => "`{`".into(),
            Tok::RBrace => "`}`".into(),
            Tok::LBracket => "`[`".into(),
            Tok::RBracket => "`]`".into(),
            Tok::Comma => "`,`".into(),
            Tok::Colon => "`:`".into(),
            Tok::Assign => "`=`".into(),
        }
    }
}

fn is_ident_start(c: char) -> bool {
    c.is_ascii_alphabetic() || c == '_'
}

fn is_ident_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_'
}

fn lex(text: &str) -> Result<Vec<(Tok, Range<usize>)>, SyntaxError> {
    let bytes = text.as_bytes();
    let mut toks = Vec::new();
    let mut i = 0;
    let err = |span: Range<usize>, message: String| SyntaxError { span, message };
    while i < bytes.len() {
        let c = text[i..].chars().next().unwrap();
        let start = i;
        if c.is_whitespace() {
            i += c.len_utf8();
            continue;
        }
        if c == '#' {
            while i < bytes.len() && bytes[i] != b'\n' {
                i += 1;
            }
            continue;
        }
        let single = match c {
            '{' => Some(Tok::LBrace),
            '}' => Some(Tok::RBrace),
            '[' => Some(Tok::LBracket),
            ']' => Some(Tok::RBracket),
            ',' => Some(Tok::Comma),
            ':' => Some(Tok::Colon),
            _ => None,
        };
        if let Some(tok) = single {
            i += 1;
            toks.push((tok, start..i));
            continue;
        }
        let two = text.get(i..i + 2).unwrap_or("");
        if let Some(op) = Operator::from_symbol(two) {
            i += 2;
            toks.push((Tok::Op(op), start..i));
            continue;
        }
        match c {
            '>' => {
                i += 1;
                toks.push((Tok::Op(Operator::Gt), start..i));
            }
            '<' => {
                i += 1;
                toks.push((Tok::Op(Operator::Lt), start..i));
            }
            '=' => {
                i += 1;
                toks.push((Tok::Assign, start..i));
            }
            '"' => {
                i += 1;
                let mut s = String::new();
                loop {
                    let Some(ch) = text[i..].chars().next() else {
                        return Err(err(start..i, "unterminated string".into()));
                    };
                    i += ch.len_utf8();
                    match ch {
                        '"' => break,
                        '\\' => {
                            let Some(esc) = text[i..].chars().next() else {
                                return Err(err(start..i, "unterminated string".into()));
                            };
                            i += esc.len_utf8();
                            match esc {
                                '"' => s.push('"'),
                                '\\' => s.push('\\'),
                                'n' => s.push('\n'),
                                't' => s.push('\t'),
                                other => {
                                    return Err(err(i - 2..i, format!("unknown escape `\\{other}`")));
                                }
                            }
                        }
                        ch => s.push(ch),
                    }
                }
                toks.push((Tok::Str(s), start..i));
            }
            c if c.is_ascii_digit() || (c == '-' || c == '+' || c == '.') => {
                i += 1;
                while i < bytes.len() {
                    let b = bytes[i];
                    let prev = bytes[i - 1];
                    if b.is_ascii_digit() || b == b'.' || b == b'e' || b == b'E'
                        || ((b == b'-' || b == b'+') && (prev == b'e' || prev == b'E'))
                    {
                        i += 1;
                    } else {
                        break;
                    }
                }
                let lit = &text[start..i];
                let n: f64 = lit.parse().map_err(|_| err(start..i, format!("malformed number `{lit}`")))?;
                if !n.is_finite() {
                    return Err(err(start..i, format!("number `{lit}` is out of range")));
                }
                toks.push((Tok::Num(n), start..i));
            }
            c if is_ident_start(c) => {
                while i < bytes.len() && is_ident_char(bytes[i] as char) {
                    i += 1;
                }
                toks.push((Tok::Ident(text[start..i].to_string()), start..i));
            }
            other => return Err(err(start..start + other.len_utf8(), format!("unexpected character `{other}`"))),
        }
    }
    Ok(toks)
}

struct Parser {
    toks: Vec<(Tok, Range<usize>)>,
    pos: usize,
    end: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(t, _)| t)
    }

    fn span(&self) -> Range<usize> {
        self.toks.get(self.pos).map(|(_, s)| s.clone()).unwrap_or(self.end..self.end)
    }

    fn fail<T>(&self, message: impl Into<String>) -> Result<T, SyntaxError> {
        Err(SyntaxError { span: self.span(), message: message.into() })
    }

    fn found(&self) -> String {
        self.peek().map(Tok::describe).unwrap_or_else(|| "end of input".into())
    }

    fn next(&mut self) -> Option<Tok> {
        let tok = self.toks.get(self.pos).map(|(t, _)| t.clone());
        self.pos += 1;
        tok
    }

    fn expect(&mut self, want: Tok) -> Result<(), SyntaxError> {
        if self.peek() == Some(&want) {
            self.pos += 1;
            Ok(())
        } else {
            self.fail(format!("expected {}, found {}", want.describe(), self.found()))
        }
    }

    fn keyword(&mut self, kw: &str) -> Result<(), SyntaxError> {
        match self.peek() {
            Some(Tok::Ident(s)) if s == kw => {
                self.pos += 1;
                Ok(())
            }
            _ => self.fail(format!("expected `{kw}`, found {}", self.found())),
        }
    }

    fn at_keyword(&self, kw: &str) -> bool {
        matches!(self.peek(), Some(Tok::Ident(s)) if s == kw)
    }

    fn ident(&mut self, what: &str) -> Result<String, SyntaxError> {
        match self.peek() {
            Some(Tok::Ident(s)) => {
                let s = s.clone();
                self.pos += 1;
                Ok(s)
            }
            _ => self.fail(format!("expected {what}, found {}", self.found())),
        }
    }

    fn string(&mut self, what: &str) -> Result<String, SyntaxError> {
        match self.peek() {
            Some(Tok::Str(s)) => {
                let s = s.clone();
                self.pos += 1;
                Ok(s)
            }
            _ => self.fail(format!("expected {what} string, found {}", self.found())),
        }
    }

    /// A level: identifier or quoted string.
    fn level(&mut self) -> Result<String, SyntaxError> {
        match self.peek() {
            Some(Tok::Ident(s)) | Some(Tok::Str(s)) => {
                let s = s.clone();
                self.pos += 1;
                Ok(s)
            }
            _ => self.fail(format!("expected outcome level, found {}", self.found())),
        }
    }

    fn ruleset(&mut self) -> Result<RuleSet, SyntaxError> {
        self.keyword("ruleset")?;
        let name = self.string("rule set name")?;
        self.expect(Tok::LBrace)?;
        self.keyword("domain")?;
        self.expect(Tok::Colon)?;
        let domain = self.string("domain")?;
        self.keyword("objective")?;
        self.expect(Tok::Colon)?;
        let objective = self.string("objective")?;

        self.keyword("outcome")?;
        let outcome_name = self.ident("outcome variable")?;
        self.keyword("in")?;
        self.expect(Tok::LBracket)?;
        let mut levels = vec![self.level()?];
        while self.peek() == Some(&Tok::Comma) {
            self.pos += 1;
            levels.push(self.level()?);
        }
        self.expect(Tok::RBracket)?;
        self.keyword("default")?;
        let default_level = self.level()?;
        let outcome = OutcomeSpec { name: outcome_name, levels, default_level };

        let mut rules = Vec::new();
        while self.at_keyword("rule") {
            rules.push(self.rule(&outcome)?);
        }
        if rules.is_empty() {
            return self.fail(format!("rule set \"{name}\" has no rules"));
        }
        self.expect(Tok::RBrace)?;
        Ok(RuleSet::new(&name, &domain, &objective, outcome, rules, Provenance::Expert))
    }

    fn rule(&mut self, outcome: &OutcomeSpec) -> Result<Rule, SyntaxError> {
        self.keyword("rule")?;
        self.ident("rule name")?;
        self.expect(Tok::Colon)?;
        let mut conditions = Vec::new();
        if self.at_keyword("DEFAULT") {
            self.pos += 1;
        } else {
            self.keyword("IF")?;
            conditions.push(self.condition()?);
            while self.at_keyword("AND") {
                self.pos += 1;
                conditions.push(self.condition()?);
            }
            self.keyword("THEN")?;
        }
        let target_span = self.span();
        let target = self.ident("outcome variable")?;
        if target != outcome.name {
            return Err(SyntaxError {
                span: target_span,
                message: format!("rule assigns `{target}` but the outcome variable is `{}`", outcome.name),
            });
        }
        self.expect(Tok::Assign)?;
        let level = self.level()?;
        Ok(Rule { index: 0, conditions, outcome: level })
    }

    fn condition(&mut self) -> Result<Condition, SyntaxError> {
        let variable = self.ident("variable name")?;
        let operator = match self.next() {
            Some(Tok::Op(op)) => op,
            _ => {
                self.pos -= 1;
                return self.fail(format!("expected comparison operator, found {}", self.found()));
            }
        };
        let value = match self.next() {
            Some(Tok::Num(n)) => Literal::Number(n),
            Some(Tok::Ident(s)) if s == "true" => Literal::Bool(true),
            Some(Tok::Ident(s)) if s == "false" => Literal::Bool(false),
            Some(Tok::Ident(s)) | Some(Tok::Str(s)) => Literal::Level(s),
            _ => {
                self.pos -= 1;
                return self.fail(format!("expected literal, found {}", self.found()));
            }
        };
        Ok(Condition { variable, operator, value })
    }
}

/// Parses every `ruleset` block in `text`, in source order.
pub fn parse_dsl(text: &str) -> Result<Vec<RuleSet>, SyntaxError> {
    let toks = lex(text)?;
    let mut parser = Parser { toks, pos: 0, end: text.len() };
    let mut out = Vec::new();
    while parser.peek().is_some() {
        out.push(parser.ruleset()?);
    }
    Ok(out)
}

const KEYWORDS: [&str; 11] =
    ["ruleset", "domain", "objective", "outcome", "in", "default", "rule", "IF", "AND", "THEN", "DEFAULT"];

fn bare_ok(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if is_ident_start(c))
        && chars.all(is_ident_char)
        && s != "true"
        && s != "false"
        && !KEYWORDS.contains(&s)
}

fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for ch in s.chars() {
        match ch {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

fn level_text(s: &str) -> String {
    if bare_ok(s) {
        s.to_string()
    } else {
        quote(s)
    }
}

fn literal_text(lit: &Literal) -> String {
    match lit {
        Literal::Level(l) => level_text(l),
        other => other.to_string(),
    }
}

/// Renders rule sets in the authoring language; rule names are `r<index>`.
pub fn serialize_dsl(rulesets: &[RuleSet]) -> String {
    let mut out = String::new();
    for (n, rs) in rulesets.iter().enumerate() {
        if n > 0 {
            out.push('\n');
        }
        let _ = writeln!(out, "ruleset {} {{", quote(&rs.name));
        let _ = writeln!(out, "  domain: {}", quote(&rs.domain));
        let _ = writeln!(out, "  objective: {}", quote(&rs.objective));
        let levels: Vec<String> = rs.outcome.levels.iter().map(|l| level_text(l)).collect();
        let _ = writeln!(
            out,
            "  outcome {} in [{}] default {}",
            rs.outcome.name,
            levels.join(", "),
            level_text(&rs.outcome.default_level)
        );
        for rule in &rs.rules {
            let _ = write!(out, "  rule r{}: ", rule.index);
            if rule.conditions.is_empty() {
                out.push_str("DEFAULT ");
            } else {
                let conds: Vec<String> = rule
                    .conditions
                    .iter()
                    .map(|c| format!("{} {} {}", c.variable, c.operator, literal_text(&c.value)))
                    .collect();
                let _ = write!(out, "IF {} THEN ", conds.join(" AND "));
            }
            let _ = writeln!(out, "{} = {}", rs.outcome.name, level_text(&rule.outcome));
        }
        out.push_str("}\n");
    }
    out
}

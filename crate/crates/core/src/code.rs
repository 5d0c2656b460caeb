//! Model-emitted conditional code → decision trees.
//!
//! Accepts the Python-like subset that rule-set responses are asked to use:
//! literal assignments, `def` blocks, `if`/`elif`/`else` over conjunctions of
//! comparisons, and outcome assignments or `return`s in the leaves. Anything
//! else (loops, calls, disjunctions, arithmetic) is reported as an unsupported
//! construct with its byte span so the response can be routed to manual review.

use std::collections::HashMap;
use std::fmt;
use std::ops::Range;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::canonical::format_number;
use crate::model::{Condition, Literal, Operator, OutcomeSpec, Provenance, RuleSet};
use crate::registry::{VariableKind, VariableRegistry, VariableSpec};
use crate::tree::{flatten_to_ruleset, DecisionTree, Node};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Warning,
    Error,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ParseCode {
    Syntax,
    UnsupportedConstruct,
    KindMismatch,
    UnknownLevel,
    MultipleOutcomeVariables,
    NoOutcome,
    UnknownOutcome,
    AutoRegisteredVariable,
    BareNameLevel,
    IgnoredStatement,
    ProseLine,
    NoCode,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParseDiagnostic {
    pub severity: Severity,
    pub span: Range<usize>,
    pub code: ParseCode,
    pub message: String,
    /// Index of the code block the span refers to, when parsing a whole response.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub block: Option<usize>,
}

impl ParseDiagnostic {
    fn error(code: ParseCode, span: Range<usize>, message: impl Into<String>) -> Self {
        ParseDiagnostic { severity: Severity::Error, span, code, message: message.into(), block: None }
    }

    fn warning(code: ParseCode, span: Range<usize>, message: impl Into<String>) -> Self {
        ParseDiagnostic { severity: Severity::Warning, span, code, message: message.into(), block: None }
    }
}

impl fmt::Display for ParseDiagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?} {:?} at {}..{}: {}", self.severity, self.code, self.span.start, self.span.end, self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{0}")]
pub struct CodeError(pub ParseDiagnostic);

impl CodeError {
    fn new(code: ParseCode, span: Range<usize>, message: impl Into<String>) -> Self {
        CodeError(ParseDiagnostic::error(code, span, message))
    }

    fn unsupported(span: Range<usize>, what: impl fmt::Display) -> Self {
        CodeError::new(ParseCode::UnsupportedConstruct, span, format!("unsupported construct: {what}"))
    }
}

// ---------------------------------------------------------------------------
// Code block extraction

/// Fenced code blocks in document order; failing that, each unfenced `def`
/// through the end of its indented body, preceded by the top-level constant
/// assignments that appeared since the previous function.
pub fn extract_code_blocks(response_text: &str) -> Vec<String> {
    let lines: Vec<&str> = response_text.split_inclusive('\n').collect();
    let mut fenced = Vec::new();
    let mut i = 0;
    while i < lines.len() {
        let trimmed = lines[i].trim_start();
        if let Some(fence) = ["```", "~~~"].into_iter().find(|f| trimmed.starts_with(f)) {
            let mut body = String::new();
            i += 1;
            while i < lines.len() && !lines[i].trim_start().starts_with(fence) {
                body.push_str(lines[i]);
                i += 1;
            }
            fenced.push(body);
        }
        i += 1;
    }
    if !fenced.is_empty() {
        return fenced;
    }

    let indent_of = |line: &str| line.len() - line.trim_start().len();
    let is_constant = |line: &str| {
        let Some((lhs, rhs)) = line.split_once('=') else { return false };
        !line.starts_with([' ', '\t'])
            && !rhs.starts_with('=')
            && !lhs.trim().is_empty()
            && lhs.trim().chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
    };
    let mut out = Vec::new();
    // Top-level constants seen since the last function; they prefix its block.
    let mut constants = String::new();
    let mut i = 0;
    while i < lines.len() {
        let line = lines[i];
        if is_constant(line) {
            constants.push_str(line);
            if !line.ends_with('\n') {
                constants.push('\n');
            }
            i += 1;
        } else if line.trim_start().starts_with("def ") {
            let base = indent_of(line);
            let mut end = i + 1;
            let mut last_code = i;
            while end < lines.len() {
                let l = lines[end];
                if l.trim().is_empty() {
                    end += 1;
                    continue;
                }
                if indent_of(l) <= base {
                    break;
                }
                last_code = end;
                end += 1;
            }
            out.push(std::mem::take(&mut constants) + &lines[i..=last_code].concat());
            i = last_code + 1;
        } else {
            i += 1;
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Tokenizer

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Name(String),
    Num(f64),
    Str(String),
    Op(&'static str),
    Newline,
    Indent,
    Dedent,
    Eof,
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    span: Range<usize>,
}

const OPS: [&str; 47] = [
    "**=", "//=", ">>=", "<<=", "...", "==", "!=", ">=", "<=", "->", "**", "//", "+=", "-=", "*=", "/=", "%=",
    "<<", ">>", ":=", "&=", "|=", "^=", "(", ")", "[", "]", "{", "}", ":", ",", ".", ";", "=", ">", "<", "+", "-",
    "*", "/", "%", "@", "&", "|", "^", "~", "!",
];

/// Blanks out column-0 prose lines such as `Problem domain: Medical` that
/// responses copy from the prompt, keeping byte offsets intact.
fn mask_prose(code: &str, diags: &mut Vec<ParseDiagnostic>) -> String {
    let mut out = String::with_capacity(code.len());
    let mut offset = 0;
    for line in code.split_inclusive('\n') {
        let body = line.trim_end_matches(['\n', '\r']);
        let is_prose = !body.starts_with([' ', '\t'])
            && body.find(':').is_some_and(|colon| {
                let key = &body[..colon];
                let rest = &body[colon + 1..];
                let first = key.split_whitespace().next().unwrap_or("");
                !key.is_empty()
                    && key.chars().all(|c| c.is_ascii_alphanumeric() || c == ' ' || c == '_' || c == '-')
                    && key.chars().next().is_some_and(|c| c.is_ascii_alphabetic())
                    && !PY_KEYWORDS.contains(&first)
                    && rest.starts_with(' ')
                    && !rest.trim().is_empty()
                    && !rest.contains('=')
                    && (key.contains(' ') || rest.trim().contains(' ') || rest.trim().starts_with(char::is_uppercase))
            });
        if is_prose {
            diags.push(ParseDiagnostic::warning(
                ParseCode::ProseLine,
                offset..offset + body.len(),
                format!("ignored prose line `{body}`"),
            ));
            for c in line.chars() {
                if c == '\n' {
                    out.push('\n');
                } else {
                    out.extend(std::iter::repeat_n(' ', c.len_utf8()));
                }
            }
        } else {
            out.push_str(line);
        }
        offset += line.len();
    }
    out
}

const PY_KEYWORDS: [&str; 35] = [
    "False", "None", "True", "and", "as", "assert", "async", "await", "break", "class", "continue", "def", "del",
    "elif", "else", "except", "finally", "for", "from", "global", "if", "import", "in", "is", "lambda", "nonlocal",
    "not", "or", "pass", "raise", "return", "try", "while", "with", "yield",
];

fn tokenize(src: &str) -> Result<Vec<Token>, CodeError> {
    let bytes = src.as_bytes();
    let mut toks: Vec<Token> = Vec::new();
    let mut indents = vec![0usize];
    let mut depth = 0usize;
    let mut i = 0;
    let mut line_start = true;

    while i < bytes.len() {
        if line_start && depth == 0 {
            let mut col = 0;
            let mut j = i;
            while j < bytes.len() && (bytes[j] == b' ' || bytes[j] == b'\t') {
                col = if bytes[j] == b'\t' { (col / 8 + 1) * 8 } else { col + 1 };
                j += 1;
            }
            if j >= bytes.len() || bytes[j] == b'\n' || bytes[j] == b'\r' || bytes[j] == b'#' {
                // blank or comment-only line
                while j < bytes.len() && bytes[j] != b'\n' {
                    j += 1;
                }
                i = j + 1;
                continue;
            }
            let top = *indents.last().unwrap();
            if col > top {
                indents.push(col);
                toks.push(Token { tok: Tok::Indent, span: j..j });
            } else {
                while col < *indents.last().unwrap() {
                    indents.pop();
                    toks.push(Token { tok: Tok::Dedent, span: j..j });
                }
                if col != *indents.last().unwrap() {
                    return Err(CodeError::new(ParseCode::Syntax, i..j, "inconsistent dedent"));
                }
            }
            i = j;
            line_start = false;
        }
        let c = src[i..].chars().next().unwrap();
        let start = i;
        match c {
            '\n' => {
                i += 1;
                if depth == 0 {
                    toks.push(Token { tok: Tok::Newline, span: start..i });
                    line_start = true;
                }
            }
            '\\' if bytes.get(i + 1) == Some(&b'\n') => i += 2,
            '\\' if bytes.get(i + 1) == Some(&b'\r') && bytes.get(i + 2) == Some(&b'\n') => i += 3,
            '#' => {
                while i < bytes.len() && bytes[i] != b'\n' {
                    i += 1;
                }
            }
            c if c.is_whitespace() => i += c.len_utf8(),
            c if c.is_ascii_digit() || (c == '.' && bytes.get(i + 1).is_some_and(u8::is_ascii_digit)) => {
                while i < bytes.len() {
                    let b = bytes[i];
                    let prev = bytes[i - 1];
                    if b.is_ascii_alphanumeric() || b == b'.' || b == b'_'
                        || ((b == b'-' || b == b'+') && (prev == b'e' || prev == b'E'))
                    {
                        i += 1;
                    } else {
                        break;
                    }
                }
                let text = src[start..i].replace('_', "");
                let n: f64 = text
                    .parse()
                    .map_err(|_| CodeError::new(ParseCode::Syntax, start..i, format!("malformed number `{text}`")))?;
                toks.push(Token { tok: Tok::Num(n), span: start..i });
            }
            c if c.is_alphabetic() || c == '_' => {
                while i < src.len() {
                    let ch = src[i..].chars().next().unwrap();
                    if ch.is_alphanumeric() || ch == '_' {
                        i += ch.len_utf8();
                    } else {
                        break;
                    }
                }
                let word = &src[start..i];
                let is_prefix = word.len() <= 2 && word.chars().all(|ch| "rRbBuUfF".contains(ch));
                if is_prefix && matches!(bytes.get(i), Some(b'"') | Some(b'\'')) {
                    if word.contains(['f', 'F']) {
                        let (_, end) = scan_string(src, i)?;
                        toks.push(Token { tok: Tok::Op("f-string"), span: start..end });
                        i = end;
                    } else {
                        let (s, end) = scan_string(src, i)?;
                        toks.push(Token { tok: Tok::Str(s), span: start..end });
                        i = end;
                    }
                } else {
                    toks.push(Token { tok: Tok::Name(word.to_string()), span: start..i });
                }
            }
            '"' | '\'' => {
                let (s, end) = scan_string(src, i)?;
                toks.push(Token { tok: Tok::Str(s), span: start..end });
                i = end;
            }
            _ => {
                let op = OPS
                    .iter()
                    .find(|op| src[i..].starts_with(**op))
                    .ok_or_else(|| CodeError::new(ParseCode::Syntax, start..start + c.len_utf8(), format!("unexpected character `{c}`")))?;
                i += op.len();
                match *op {
                    "(" | "[" | "{" => depth += 1,
                    ")" | "]" | "}" => depth = depth.saturating_sub(1),
                    _ => {}
                }
                toks.push(Token { tok: Tok::Op(op), span: start..i });
            }
        }
    }
    let end = src.len();
    if !matches!(toks.last().map(|t| &t.tok), None | Some(Tok::Newline) | Some(Tok::Dedent)) {
        toks.push(Token { tok: Tok::Newline, span: end..end });
    }
    while indents.len() > 1 {
        indents.pop();
        toks.push(Token { tok: Tok::Dedent, span: end..end });
    }
    toks.push(Token { tok: Tok::Eof, span: end..end });
    Ok(toks)
}

fn scan_string(src: &str, start: usize) -> Result<(String, usize), CodeError> {
    let quote = &src[start..start + 1];
    let triple = src[start..].starts_with(&quote.repeat(3));
    let delim = if triple { quote.repeat(3) } else { quote.to_string() };
    let mut i = start + delim.len();
    let mut out = String::new();
    loop {
        if src[i..].starts_with(&delim) {
            return Ok((out, i + delim.len()));
        }
        let Some(ch) = src[i..].chars().next() else {
            return Err(CodeError::new(ParseCode::Syntax, start..src.len(), "unterminated string"));
        };
        if ch == '\n' && !triple {
            return Err(CodeError::new(ParseCode::Syntax, start..i, "unterminated string"));
        }
        i += ch.len_utf8();
        if ch == '\\' {
            if let Some(esc) = src[i..].chars().next() {
                i += esc.len_utf8();
                match esc {
                    'n' => out.push('\n'),
                    't' => out.push('\t'),
                    '\n' => {}
                    other => out.push(other),
                }
            }
        } else {
            out.push(ch);
        }
    }
}

// ---------------------------------------------------------------------------
// Syntax tree

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum CmpOp {
    Plain(Operator),
    Is,
    IsNot,
    In,
    NotIn,
}

#[derive(Debug, Clone, PartialEq)]
enum Expr {
    Name(String),
    Num(f64),
    Str(String),
    Bool(bool),
    NoneLit,
    And(Vec<SExpr>),
    Or(Vec<SExpr>),
    Not(Box<SExpr>),
    Compare(Box<SExpr>, Vec<(CmpOp, SExpr)>),
    Unsupported(String),
}

#[derive(Debug, Clone, PartialEq)]
struct SExpr {
    expr: Expr,
    span: Range<usize>,
}

#[derive(Debug, Clone)]
enum Stmt {
    Assign { target: String, value: SExpr, span: Range<usize> },
    Expr { value: SExpr, span: Range<usize> },
    If { arms: Vec<(SExpr, Vec<Stmt>)>, otherwise: Option<Vec<Stmt>>, span: Range<usize> },
    Return { value: Option<SExpr>, span: Range<usize> },
    Def { name: String, body: Vec<Stmt>, span: Range<usize> },
    Pass,
    Unsupported { what: String, span: Range<usize> },
}

impl Stmt {
    fn span(&self) -> Range<usize> {
        match self {
            Stmt::Assign { span, .. }
            | Stmt::Expr { span, .. }
            | Stmt::If { span, .. }
            | Stmt::Return { span, .. }
            | Stmt::Def { span, .. }
            | Stmt::Unsupported { span, .. } => span.clone(),
            Stmt::Pass => 0..0,
        }
    }
}

struct StmtParser {
    toks: Vec<Token>,
    pos: usize,
}

impl StmtParser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn peek_at(&self, n: usize) -> &Tok {
        &self.toks[(self.pos + n).min(self.toks.len() - 1)].tok
    }

    fn span(&self) -> Range<usize> {
        self.toks[self.pos].span.clone()
    }

    fn bump(&mut self) -> Token {
        let t = self.toks[self.pos].clone();
        if self.pos < self.toks.len() - 1 {
            self.pos += 1;
        }
        t
    }

    fn prev_end(&self) -> usize {
        self.toks[self.pos.saturating_sub(1)].span.end
    }

    fn is_op(&self, op: &str) -> bool {
        matches!(self.peek(), Tok::Op(o) if *o == op)
    }

    fn is_name(&self, name: &str) -> bool {
        matches!(self.peek(), Tok::Name(n) if n == name)
    }

    fn expect_op(&mut self, op: &str) -> Result<(), CodeError> {
        if self.is_op(op) {
            self.bump();
            Ok(())
        } else {
            Err(CodeError::new(ParseCode::Syntax, self.span(), format!("expected `{op}`, found {:?}", self.peek())))
        }
    }

    fn expect_newline(&mut self) -> Result<(), CodeError> {
        match self.peek() {
            Tok::Newline => {
                self.bump();
                Ok(())
            }
            Tok::Eof | Tok::Dedent => Ok(()),
            other => Err(CodeError::new(ParseCode::Syntax, self.span(), format!("expected end of line, found {other:?}"))),
        }
    }

    fn module(&mut self) -> Result<Vec<Stmt>, CodeError> {
        let mut out = Vec::new();
        loop {
            match self.peek() {
                Tok::Eof => return Ok(out),
                Tok::Newline => {
                    self.bump();
                }
                Tok::Indent => {
                    return Err(CodeError::new(ParseCode::Syntax, self.span(), "unexpected indent"));
                }
                Tok::Dedent => {
                    self.bump();
                }
                _ => out.push(self.statement()?),
            }
        }
    }

    /// Body after a `:`; either an indented block or one simple statement.
    fn suite(&mut self) -> Result<Vec<Stmt>, CodeError> {
        if matches!(self.peek(), Tok::Newline) {
            self.bump();
            if !matches!(self.peek(), Tok::Indent) {
                return Err(CodeError::new(ParseCode::Syntax, self.span(), "expected an indented block"));
            }
            self.bump();
            let mut body = Vec::new();
            loop {
                match self.peek() {
                    Tok::Dedent => {
                        self.bump();
                        return Ok(body);
                    }
                    Tok::Eof => return Ok(body),
                    Tok::Newline => {
                        self.bump();
                    }
                    _ => body.push(self.statement()?),
                }
            }
        } else {
            Ok(vec![self.simple_statement()?])
        }
    }

    /// Skips the rest of a compound statement (header line plus indented body).
    fn skip_compound(&mut self) {
        while !matches!(self.peek(), Tok::Newline | Tok::Eof) {
            self.bump();
        }
        if matches!(self.peek(), Tok::Newline) {
            self.bump();
        }
        if matches!(self.peek(), Tok::Indent) {
            let mut level = 0;
            loop {
                match self.bump().tok {
                    Tok::Indent => level += 1,
                    Tok::Dedent => {
                        level -= 1;
                        if level == 0 {
                            break;
                        }
                    }
                    Tok::Eof => break,
                    _ => {}
                }
            }
        }
    }

    fn statement(&mut self) -> Result<Stmt, CodeError> {
        let start = self.span().start;
        let Tok::Name(word) = self.peek().clone() else {
            return self.simple_statement();
        };
        match word.as_str() {
            "if" => {
                self.bump();
                let mut arms = Vec::new();
                let cond = self.expr()?;
                self.expect_op(":")?;
                arms.push((cond, self.suite()?));
                let mut otherwise = None;
                loop {
                    if self.is_name("elif") {
                        self.bump();
                        let cond = self.expr()?;
                        self.expect_op(":")?;
                        arms.push((cond, self.suite()?));
                    } else if self.is_name("else") {
                        self.bump();
                        self.expect_op(":")?;
                        otherwise = Some(self.suite()?);
                        break;
                    } else {
                        break;
                    }
                }
                Ok(Stmt::If { arms, otherwise, span: start..self.prev_end() })
            }
            "def" => {
                self.bump();
                let name = match self.bump().tok {
                    Tok::Name(n) => n,
                    _ => return Err(CodeError::new(ParseCode::Syntax, start..self.prev_end(), "expected function name")),
                };
                self.expect_op("(")?;
                let mut level = 1;
                while level > 0 {
                    match self.bump().tok {
                        Tok::Op("(") => level += 1,
                        Tok::Op(")") => level -= 1,
                        Tok::Eof => return Err(CodeError::new(ParseCode::Syntax, start..self.prev_end(), "unclosed parameter list")),
                        _ => {}
                    }
                }
                if self.is_op("->") {
                    while !self.is_op(":") && !matches!(self.peek(), Tok::Eof | Tok::Newline) {
                        self.bump();
                    }
                }
                self.expect_op(":")?;
                let body = self.suite()?;
                Ok(Stmt::Def { name, body, span: start..self.prev_end() })
            }
            "elif" | "else" => Err(CodeError::new(ParseCode::Syntax, self.span(), format!("`{word}` without a matching `if`"))),
            "while" | "for" | "try" | "with" | "class" | "async" | "match" | "except" | "finally" => {
                self.skip_compound();
                Ok(Stmt::Unsupported { what: format!("`{word}` statement"), span: start..self.prev_end() })
            }
            _ => self.simple_statement(),
        }
    }

    fn simple_statement(&mut self) -> Result<Stmt, CodeError> {
        let start = self.span().start;
        if let Tok::Name(word) = self.peek().clone() {
            match word.as_str() {
                "pass" => {
                    self.bump();
                    self.expect_newline()?;
                    return Ok(Stmt::Pass);
                }
                "return" => {
                    self.bump();
                    let value = if matches!(self.peek(), Tok::Newline | Tok::Eof | Tok::Dedent) {
                        None
                    } else {
                        Some(self.expr()?)
                    };
                    let span = start..self.prev_end();
                    self.expect_newline()?;
                    return Ok(Stmt::Return { value, span });
                }
                "import" | "from" | "global" | "nonlocal" | "raise" | "assert" | "del" | "break" | "continue"
                | "yield" | "lambda" | "print" => {
                    while !matches!(self.peek(), Tok::Newline | Tok::Eof) {
                        self.bump();
                    }
                    let span = start..self.prev_end();
                    self.expect_newline()?;
                    let what = if word == "print" { "function call".to_string() } else { format!("`{word}` statement") };
                    return Ok(Stmt::Unsupported { what, span });
                }
                _ => {}
            }
        }
        let value = self.expr()?;
        if self.is_op("=") {
            self.bump();
            let rhs = self.expr()?;
            let span = start..self.prev_end();
            if self.is_op("=") {
                while !matches!(self.peek(), Tok::Newline | Tok::Eof) {
                    self.bump();
                }
                self.expect_newline()?;
                return Ok(Stmt::Unsupported { what: "chained assignment".into(), span });
            }
            self.expect_newline()?;
            return Ok(match value.expr {
                Expr::Name(target) => Stmt::Assign { target, value: rhs, span },
                _ => Stmt::Unsupported { what: "assignment to a non-name target".into(), span },
            });
        }
        if matches!(self.peek(), Tok::Op(op) if op.ends_with('=') && op.len() >= 2 && !matches!(*op, "==" | "!=" | ">=" | "<=")) {
            while !matches!(self.peek(), Tok::Newline | Tok::Eof) {
                self.bump();
            }
            let span = start..self.prev_end();
            self.expect_newline()?;
            return Ok(Stmt::Unsupported { what: "augmented assignment".into(), span });
        }
        if self.is_op(":") {
            // annotated assignment: `x: int = 3`
            self.bump();
            self.expr()?;
            if self.is_op("=") {
                self.bump();
                let rhs = self.expr()?;
                let span = start..self.prev_end();
                self.expect_newline()?;
                if let Expr::Name(target) = value.expr {
                    return Ok(Stmt::Assign { target, value: rhs, span });
                }
                return Ok(Stmt::Unsupported { what: "assignment to a non-name target".into(), span });
            }
        }
        let span = start..self.prev_end();
        if self.is_op(";") {
            self.bump();
            let rest_start = self.span().start;
            while !matches!(self.peek(), Tok::Newline | Tok::Eof) {
                self.bump();
            }
            self.expect_newline()?;
            return Ok(Stmt::Unsupported { what: "multiple statements on one line".into(), span: rest_start..self.prev_end() });
        }
        self.expect_newline()?;
        Ok(Stmt::Expr { value, span })
    }

    fn expr(&mut self) -> Result<SExpr, CodeError> {
        let start = self.span().start;
        let first = self.and_expr()?;
        if !self.is_name("or") {
            if self.is_name("if") {
                // conditional expression `a if c else b`
                while !matches!(self.peek(), Tok::Newline | Tok::Eof | Tok::Op(":")) {
                    self.bump();
                }
                return Ok(SExpr { expr: Expr::Unsupported("conditional expression".into()), span: start..self.prev_end() });
            }
            return Ok(first);
        }
        let mut items = vec![first];
        while self.is_name("or") {
            self.bump();
            items.push(self.and_expr()?);
        }
        Ok(SExpr { expr: Expr::Or(items), span: start..self.prev_end() })
    }

    fn and_expr(&mut self) -> Result<SExpr, CodeError> {
        let start = self.span().start;
        let first = self.not_expr()?;
        if !self.is_name("and") {
            return Ok(first);
        }
        let mut items = vec![first];
        while self.is_name("and") {
            self.bump();
            items.push(self.not_expr()?);
        }
        Ok(SExpr { expr: Expr::And(items), span: start..self.prev_end() })
    }

    fn not_expr(&mut self) -> Result<SExpr, CodeError> {
        let start = self.span().start;
        if self.is_name("not") {
            self.bump();
            let inner = self.not_expr()?;
            return Ok(SExpr { expr: Expr::Not(Box::new(inner)), span: start..self.prev_end() });
        }
        self.comparison()
    }

    fn cmp_op(&mut self) -> Option<CmpOp> {
        let op = match self.peek() {
            Tok::Op(s) => Operator::from_symbol(s).map(CmpOp::Plain),
            Tok::Name(n) if n == "in" => Some(CmpOp::In),
            Tok::Name(n) if n == "is" => {
                if matches!(self.peek_at(1), Tok::Name(m) if m == "not") {
                    self.bump();
                    Some(CmpOp::IsNot)
                } else {
                    Some(CmpOp::Is)
                }
            }
            Tok::Name(n) if n == "not" && matches!(self.peek_at(1), Tok::Name(m) if m == "in") => {
                self.bump();
                Some(CmpOp::NotIn)
            }
            _ => None,
        };
        if op.is_some() {
            self.bump();
        }
        op
    }

    fn comparison(&mut self) -> Result<SExpr, CodeError> {
        let start = self.span().start;
        let first = self.arith()?;
        let mut rest = Vec::new();
        while let Some(op) = self.cmp_op() {
            rest.push((op, self.arith()?));
        }
        if rest.is_empty() {
            return Ok(first);
        }
        Ok(SExpr { expr: Expr::Compare(Box::new(first), rest), span: start..self.prev_end() })
    }

    fn arith(&mut self) -> Result<SExpr, CodeError> {
        let start = self.span().start;
        let first = self.atom()?;
        let mut arithmetic = false;
        while matches!(self.peek(), Tok::Op(o) if ["+", "-", "*", "/", "%", "**", "//", "@", "&", "|", "^", "<<", ">>"].contains(o)) {
            self.bump();
            self.atom()?;
            arithmetic = true;
        }
        if arithmetic {
            return Ok(SExpr { expr: Expr::Unsupported("arithmetic expression".into()), span: start..self.prev_end() });
        }
        Ok(first)
    }

    fn skip_balanced(&mut self) -> Result<(), CodeError> {
        let start = self.span();
        let mut level = 0;
        loop {
            match self.bump().tok {
                Tok::Op("(") | Tok::Op("[") | Tok::Op("{") => level += 1,
                Tok::Op(")") | Tok::Op("]") | Tok::Op("}") => {
                    level -= 1;
                    if level == 0 {
                        return Ok(());
                    }
                }
                Tok::Eof => return Err(CodeError::new(ParseCode::Syntax, start, "unclosed bracket")),
                _ => {}
            }
        }
    }

    fn atom(&mut self) -> Result<SExpr, CodeError> {
        let start = self.span().start;
        let t = self.peek().clone();
        let expr = match t {
            Tok::Num(n) => {
                self.bump();
                Expr::Num(n)
            }
            Tok::Str(s) => {
                self.bump();
                let mut s = s;
                // implicit concatenation of adjacent literals
                while let Tok::Str(more) = self.peek().clone() {
                    self.bump();
                    s.push_str(&more);
                }
                Expr::Str(s)
            }
            Tok::Op("f-string") => {
                self.bump();
                Expr::Unsupported("f-string".into())
            }
            Tok::Op("-") | Tok::Op("+") => {
                let negative = self.is_op("-");
                self.bump();
                match self.peek().clone() {
                    Tok::Num(n) => {
                        self.bump();
                        Expr::Num(if negative { -n } else { n })
                    }
                    _ => {
                        self.atom()?;
                        Expr::Unsupported("arithmetic expression".into())
                    }
                }
            }
            Tok::Op("(") => {
                self.bump();
                if self.is_op(")") {
                    self.bump();
                    Expr::Unsupported("tuple".into())
                } else {
                    let inner = self.expr()?;
                    if self.is_op(",") {
                        while !self.is_op(")") && !matches!(self.peek(), Tok::Eof) {
                            self.bump();
                        }
                        self.expect_op(")")?;
                        Expr::Unsupported("tuple".into())
                    } else {
                        self.expect_op(")")?;
                        inner.expr
                    }
                }
            }
            Tok::Op("[") | Tok::Op("{") => {
                self.skip_balanced()?;
                Expr::Unsupported("collection literal".into())
            }
            Tok::Name(n) => {
                self.bump();
                match n.as_str() {
                    "True" => Expr::Bool(true),
                    "False" => Expr::Bool(false),
                    "None" => Expr::NoneLit,
                    "lambda" => {
                        while !matches!(self.peek(), Tok::Newline | Tok::Eof) {
                            self.bump();
                        }
                        Expr::Unsupported("lambda".into())
                    }
                    _ => {
                        let mut expr = Expr::Name(n);
                        loop {
                            if self.is_op("(") {
                                self.skip_balanced()?;
                                expr = Expr::Unsupported("function call".into());
                            } else if self.is_op("[") {
                                self.skip_balanced()?;
                                expr = Expr::Unsupported("subscript".into());
                            } else if self.is_op(".") {
                                self.bump();
                                self.bump();
                                expr = Expr::Unsupported("attribute access".into());
                            } else {
                                break;
                            }
                        }
                        expr
                    }
                }
            }
            other => {
                return Err(CodeError::new(ParseCode::Syntax, self.span(), format!("unexpected token {other:?}")));
            }
        };
        Ok(SExpr { expr, span: start..self.prev_end() })
    }
}

// ---------------------------------------------------------------------------
// Lowering to decision trees

#[derive(Debug, Clone, PartialEq)]
enum Effect {
    Assign(String),
    Return(String),
}

/// Control flow of a statement list with respect to the outcome variable.
/// `Keep` leaves fall through with the value unchanged.
#[derive(Debug, Clone, PartialEq)]
enum Flow {
    Keep,
    Leaf(Effect),
    Branch(Vec<RawCondition>, Box<Flow>, Box<Flow>),
}

impl Flow {
    fn has_return(&self) -> bool {
        match self {
            Flow::Keep => false,
            Flow::Leaf(e) => matches!(e, Effect::Return(_)),
            Flow::Branch(_, a, b) => a.has_return() || b.has_return(),
        }
    }

    fn map_leaves(self, f: &mut dyn FnMut(Flow) -> Flow) -> Flow {
        match self {
            Flow::Branch(c, a, b) => Flow::Branch(c, Box::new(a.map_leaves(f)), Box::new(b.map_leaves(f))),
            leaf => f(leaf),
        }
    }

    /// Sequential composition `first; second`.
    fn then(self, second: Flow) -> Flow {
        if second == Flow::Keep {
            return self;
        }
        if !self.has_return() {
            // Later assignments override earlier ones.
            let first = self;
            return second.map_leaves(&mut |leaf| if leaf == Flow::Keep { first.clone() } else { leaf });
        }
        self.map_leaves(&mut |leaf| match leaf {
            Flow::Keep => second.clone(),
            Flow::Leaf(Effect::Assign(v)) => second.clone().map_leaves(&mut |inner| {
                if inner == Flow::Keep {
                    Flow::Leaf(Effect::Assign(v.clone()))
                } else {
                    inner
                }
            }),
            ret => ret,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
struct RawCondition {
    variable: String,
    operator: Operator,
    value: Literal,
    span: Range<usize>,
}

struct Lowering<'a> {
    constants: HashMap<String, Literal>,
    outcome_var: Option<&'a str>,
    warnings: Vec<ParseDiagnostic>,
}

fn literal_of(e: &SExpr, constants: &HashMap<String, Literal>) -> Option<Literal> {
    match &e.expr {
        Expr::Num(n) => Some(Literal::Number(*n)),
        Expr::Str(s) => Some(Literal::Level(s.clone())),
        Expr::Bool(b) => Some(Literal::Bool(*b)),
        Expr::Name(n) => constants.get(n).cloned(),
        _ => None,
    }
}

fn unsupported_in(e: &SExpr) -> Option<CodeError> {
    match &e.expr {
        Expr::Unsupported(what) => Some(CodeError::unsupported(e.span.clone(), what)),
        _ => None,
    }
}

/// Targets assigned anywhere inside `if` bodies (outcome candidates), in order.
fn conditional_targets(stmts: &[Stmt], inside_if: bool, out: &mut Vec<(String, Range<usize>)>) {
    for s in stmts {
        match s {
            Stmt::Assign { target, span, .. } if inside_if => out.push((target.clone(), span.clone())),
            Stmt::Expr { value: SExpr { expr: Expr::Compare(lhs, rest), .. }, span } if inside_if && rest.len() == 1 => {
                if let (Expr::Name(n), CmpOp::Plain(Operator::Eq)) = (&lhs.expr, rest[0].0) {
                    out.push((n.clone(), span.clone()));
                }
            }
            Stmt::If { arms, otherwise, .. } => {
                for (_, body) in arms {
                    conditional_targets(body, true, out);
                }
                if let Some(body) = otherwise {
                    conditional_targets(body, true, out);
                }
            }
            _ => {}
        }
    }
}

fn contains_return(stmts: &[Stmt]) -> bool {
    stmts.iter().any(|s| match s {
        Stmt::Return { .. } => true,
        Stmt::If { arms, otherwise, .. } => {
            arms.iter().any(|(_, b)| contains_return(b)) || otherwise.as_deref().is_some_and(contains_return)
        }
        _ => false,
    })
}

impl Lowering<'_> {
    fn level_of(&mut self, e: &SExpr) -> Result<String, CodeError> {
        if let Some(err) = unsupported_in(e) {
            return Err(err);
        }
        match &e.expr {
            Expr::Name(n) if !self.constants.contains_key(n) => {
                self.warnings.push(ParseDiagnostic::warning(
                    ParseCode::BareNameLevel,
                    e.span.clone(),
                    format!("undefined name `{n}` taken as an outcome level"),
                ));
                Ok(n.clone())
            }
            _ => match literal_of(e, &self.constants) {
                Some(Literal::Level(s)) => Ok(s),
                Some(Literal::Number(x)) => Ok(format_number(x)),
                Some(Literal::Bool(b)) => Ok(if b { "True" } else { "False" }.to_string()),
                None => Err(CodeError::unsupported(e.span.clone(), "non-literal outcome value")),
            },
        }
    }

    fn condition(&self, e: &SExpr, negate: bool, out: &mut Vec<RawCondition>) -> Result<(), CodeError> {
        if let Some(err) = unsupported_in(e) {
            return Err(err);
        }
        match &e.expr {
            Expr::And(items) if !negate => {
                for item in items {
                    self.condition(item, false, out)?;
                }
                Ok(())
            }
            Expr::And(_) => Err(CodeError::unsupported(e.span.clone(), "negated conjunction (a disjunction)")),
            Expr::Or(_) => Err(CodeError::unsupported(e.span.clone(), "disjunction (`or`)")),
            Expr::Not(inner) => self.condition(inner, !negate, out),
            Expr::Name(n) if !self.constants.contains_key(n) => {
                out.push(RawCondition {
                    variable: n.clone(),
                    operator: Operator::Eq,
                    value: Literal::Bool(!negate),
                    span: e.span.clone(),
                });
                Ok(())
            }
            Expr::Compare(first, rest) => {
                if negate && rest.len() > 1 {
                    return Err(CodeError::unsupported(e.span.clone(), "negated chained comparison (a disjunction)"));
                }
                let mut lhs: &SExpr = first;
                for (op, rhs) in rest {
                    let link_span = lhs.span.start..rhs.span.end;
                    let op = match op {
                        CmpOp::Plain(op) => *op,
                        CmpOp::Is | CmpOp::IsNot => {
                            let bool_side = [lhs, rhs].iter().any(|s| matches!(s.expr, Expr::Bool(_)));
                            if !bool_side {
                                return Err(CodeError::unsupported(link_span, "identity test"));
                            }
                            if *op == CmpOp::Is { Operator::Eq } else { Operator::Ne }
                        }
                        CmpOp::In | CmpOp::NotIn => return Err(CodeError::unsupported(link_span, "membership test")),
                    };
                    let op = if negate { op.complement() } else { op };
                    for side in [lhs, rhs] {
                        if let Some(err) = unsupported_in(side) {
                            return Err(err);
                        }
                        if matches!(side.expr, Expr::NoneLit) {
                            return Err(CodeError::unsupported(side.span.clone(), "comparison with None"));
                        }
                    }
                    let left = literal_of(lhs, &self.constants);
                    let right = literal_of(rhs, &self.constants);
                    let cond = match (&lhs.expr, left, &rhs.expr, right) {
                        (Expr::Name(v), None, _, Some(value)) => RawCondition { variable: v.clone(), operator: op, value, span: link_span },
                        (_, Some(value), Expr::Name(v), None) => {
                            RawCondition { variable: v.clone(), operator: op.mirrored(), value, span: link_span }
                        }
                        (_, None, _, None) => return Err(CodeError::unsupported(link_span, "comparison between two variables")),
                        _ => return Err(CodeError::unsupported(link_span, "comparison between two constants")),
                    };
                    if let Some(outcome) = self.outcome_var {
                        if cond.variable == outcome {
                            return Err(CodeError::unsupported(cond.span, "condition on the outcome variable"));
                        }
                    }
                    out.push(cond);
                    lhs = rhs;
                }
                Ok(())
            }
            _ => Err(CodeError::unsupported(e.span.clone(), "condition that is not a comparison")),
        }
    }

    fn block(&mut self, stmts: &[Stmt], top_level: bool) -> Result<Flow, CodeError> {
        let mut flow = Flow::Keep;
        for (i, stmt) in stmts.iter().enumerate() {
            let step = match stmt {
                Stmt::Pass => Flow::Keep,
                Stmt::Unsupported { what, span } => return Err(CodeError::unsupported(span.clone(), what)),
                Stmt::Def { span, .. } => return Err(CodeError::unsupported(span.clone(), "nested function definition")),
                Stmt::Expr { value: SExpr { expr: Expr::Str(_), .. }, .. } => Flow::Keep, // docstring
                Stmt::Expr { value, span } => match &value.expr {
                    Expr::Compare(lhs, rest)
                        if rest.len() == 1
                            && rest[0].0 == CmpOp::Plain(Operator::Eq)
                            && matches!(&lhs.expr, Expr::Name(n) if Some(n.as_str()) == self.outcome_var) =>
                    {
                        Flow::Leaf(Effect::Assign(self.level_of(&rest[0].1)?))
                    }
                    Expr::Unsupported(what) => return Err(CodeError::unsupported(value.span.clone(), what)),
                    _ => return Err(CodeError::unsupported(span.clone(), "expression statement")),
                },
                Stmt::Assign { target, value, span } => {
                    if Some(target.as_str()) == self.outcome_var {
                        if value.expr == Expr::NoneLit {
                            if top_level && flow == Flow::Keep {
                                Flow::Keep
                            } else {
                                return Err(CodeError::unsupported(span.clone(), "resetting the outcome to None"));
                            }
                        } else {
                            Flow::Leaf(Effect::Assign(self.level_of(value)?))
                        }
                    } else if top_level {
                        match literal_of(value, &self.constants) {
                            Some(lit) => {
                                self.constants.insert(target.clone(), lit);
                                Flow::Keep
                            }
                            None => {
                                if let Some(err) = unsupported_in(value) {
                                    return Err(err);
                                }
                                return Err(CodeError::unsupported(span.clone(), "assignment of a non-literal value"));
                            }
                        }
                    } else {
                        return Err(CodeError::unsupported(span.clone(), "conditional assignment to a non-outcome name"));
                    }
                }
                Stmt::Return { value, span } => match value {
                    Some(v) if matches!(&v.expr, Expr::Name(n) if Some(n.as_str()) == self.outcome_var) => {
                        if top_level && i == stmts.len() - 1 {
                            Flow::Keep
                        } else {
                            return Err(CodeError::unsupported(span.clone(), "early return of the outcome variable"));
                        }
                    }
                    Some(v) => Flow::Leaf(Effect::Return(self.level_of(v)?)),
                    None => return Err(CodeError::unsupported(span.clone(), "bare return")),
                },
                Stmt::If { arms, otherwise, .. } => {
                    let mut tail = match otherwise {
                        Some(body) => self.block(body, false)?,
                        None => Flow::Keep,
                    };
                    for (cond, body) in arms.iter().rev() {
                        let mut conds = Vec::new();
                        self.condition(cond, false, &mut conds)?;
                        let then = self.block(body, false)?;
                        tail = Flow::Branch(conds, Box::new(then), Box::new(tail));
                    }
                    tail
                }
            };
            flow = flow.then(step);
        }
        Ok(flow)
    }
}

/// Outcome of lowering one function (or one function-free code body).
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedCode {
    pub function_name: Option<String>,
    pub tree: DecisionTree,
    /// Variables absent from the registry, with kinds inferred from their literals.
    pub new_variables: Vec<VariableSpec>,
    pub warnings: Vec<ParseDiagnostic>,
}

fn to_node(flow: Flow, span: &Range<usize>) -> Result<Option<Node>, CodeError> {
    Ok(match flow {
        Flow::Keep => None,
        Flow::Leaf(Effect::Assign(v)) | Flow::Leaf(Effect::Return(v)) => Some(Node::Leaf { outcome: v }),
        Flow::Branch(conds, then, otherwise) => {
            let conditions = conds
                .into_iter()
                .map(|c| Condition { variable: c.variable, operator: c.operator, value: c.value })
                .collect();
            let then = to_node(*then, span)?.ok_or_else(|| {
                CodeError::new(ParseCode::NoOutcome, span.clone(), "a branch leaves the outcome unassigned")
            })?;
            Some(Node::Branch { conditions, then: Box::new(then), otherwise: to_node(*otherwise, span)?.map(Box::new) })
        }
    })
}

fn coerce_bool(value: &Literal) -> Option<bool> {
    match value {
        Literal::Bool(b) => Some(*b),
        Literal::Number(x) if *x == 1.0 => Some(true),
        Literal::Number(x) if *x == 0.0 => Some(false),
        Literal::Level(s) => match s.to_ascii_lowercase().as_str() {
            "yes" | "y" | "true" | "present" | "positive" => Some(true),
            "no" | "n" | "false" | "absent" | "negative" => Some(false),
            _ => None,
        },
        _ => None,
    }
}

/// Resolves raw variable names against the registry, registering unknown ones,
/// and coerces literals to each variable's kind.
fn resolve_conditions(
    flow: &mut Flow,
    registry: &VariableRegistry,
    new_variables: &mut Vec<VariableSpec>,
    warnings: &mut Vec<ParseDiagnostic>,
) -> Result<(), CodeError> {
    fn collect<'f>(flow: &'f Flow, out: &mut Vec<&'f RawCondition>) {
        if let Flow::Branch(conds, a, b) = flow {
            out.extend(conds.iter());
            collect(a, out);
            collect(b, out);
        }
    }
    let mut all = Vec::new();
    collect(flow, &mut all);

    let mut order: Vec<String> = Vec::new();
    let mut seen: HashMap<String, (Vec<Literal>, Range<usize>)> = HashMap::new();
    for c in &all {
        let entry = seen.entry(c.variable.clone()).or_insert_with(|| {
            order.push(c.variable.clone());
            (Vec::new(), c.span.clone())
        });
        entry.0.push(c.value.clone());
    }

    let mut local = registry.clone();
    let mut specs: HashMap<String, VariableSpec> = HashMap::new();
    for raw in &order {
        let spec = match local.resolve(raw) {
            Ok(spec) => spec.clone(),
            Err(_) => {
                let (literals, span) = &seen[raw];
                let spec = VariableSpec::inferred(raw, literals);
                local.register(spec.clone()).map_err(|e| {
                    CodeError::new(ParseCode::Syntax, span.clone(), format!("cannot register `{raw}`: {e}"))
                })?;
                warnings.push(ParseDiagnostic::warning(
                    ParseCode::AutoRegisteredVariable,
                    span.clone(),
                    format!("`{raw}` is not in the registry; registered as {} variable `{}`", spec.kind.label(), spec.canonical_name),
                ));
                new_variables.push(spec.clone());
                spec
            }
        };
        specs.insert(raw.clone(), spec);
    }

    fn rewrite(flow: &mut Flow, specs: &HashMap<String, VariableSpec>) -> Result<(), CodeError> {
        if let Flow::Branch(conds, a, b) = flow {
            for c in conds.iter_mut() {
                let spec = &specs[&c.variable];
                let kind_err = |msg: String| CodeError::new(ParseCode::KindMismatch, c.span.clone(), msg);
                let value = match &spec.kind {
                    VariableKind::Numeric { .. } => match &c.value {
                        Literal::Number(x) => Literal::Number(*x),
                        other => return Err(kind_err(format!("`{}` is numeric but compared with {}", spec.canonical_name, other.type_name()))),
                    },
                    VariableKind::Boolean => {
                        if c.operator.is_ordering() {
                            return Err(kind_err(format!("`{}` is boolean and cannot use `{}`", spec.canonical_name, c.operator)));
                        }
                        match coerce_bool(&c.value) {
                            Some(b) => Literal::Bool(b),
                            None => return Err(kind_err(format!("`{}` is boolean but compared with `{}`", spec.canonical_name, c.value))),
                        }
                    }
                    VariableKind::Categorical { levels } => {
                        if c.operator.is_ordering() {
                            return Err(kind_err(format!("`{}` is categorical and cannot use `{}`", spec.canonical_name, c.operator)));
                        }
                        let Literal::Level(raw) = &c.value else {
                            return Err(kind_err(format!("`{}` is categorical but compared with {}", spec.canonical_name, c.value.type_name())));
                        };
                        let level = levels
                            .iter()
                            .find(|l| *l == raw)
                            .or_else(|| levels.iter().find(|l| l.eq_ignore_ascii_case(raw)))
                            .ok_or_else(|| {
                                CodeError::new(
                                    ParseCode::UnknownLevel,
                                    c.span.clone(),
                                    format!("`{raw}` is not a level of `{}` ({levels:?})", spec.canonical_name),
                                )
                            })?;
                        Literal::Level(level.clone())
                    }
                };
                c.variable = spec.canonical_name.clone();
                c.value = value;
            }
            rewrite(a, specs)?;
            rewrite(b, specs)?;
        }
        Ok(())
    }
    rewrite(flow, &specs)
}

fn lower_unit(
    name: Option<&str>,
    body: &[Stmt],
    span: Range<usize>,
    constants: &HashMap<String, Literal>,
    registry: &VariableRegistry,
) -> Result<ParsedCode, CodeError> {
    let mut targets = Vec::new();
    conditional_targets(body, false, &mut targets);
    let mut outcome: Option<String> = None;
    for (target, tspan) in &targets {
        match &outcome {
            None => outcome = Some(target.clone()),
            Some(o) if o != target => {
                return Err(CodeError::new(
                    ParseCode::MultipleOutcomeVariables,
                    tspan.clone(),
                    format!("branches assign both `{o}` and `{target}`"),
                ));
            }
            _ => {}
        }
    }
    if outcome.is_none() && !contains_return(body) {
        // Surface unsupported constructs before reporting the missing outcome.
        let mut probe = Lowering { constants: constants.clone(), outcome_var: None, warnings: Vec::new() };
        probe.block(body, true)?;
        return Err(CodeError::new(ParseCode::NoOutcome, span, "no outcome is assigned or returned"));
    }
    let outcome_variable = outcome.clone().unwrap_or_else(|| name.unwrap_or("result").to_string());

    let mut lowering = Lowering { constants: constants.clone(), outcome_var: outcome.as_deref(), warnings: Vec::new() };
    let mut flow = lowering.block(body, true)?;
    let mut warnings = lowering.warnings;
    let mut new_variables = Vec::new();
    resolve_conditions(&mut flow, registry, &mut new_variables, &mut warnings)?;
    let root = to_node(flow, &span)?
        .ok_or_else(|| CodeError::new(ParseCode::NoOutcome, span.clone(), "no outcome is assigned or returned"))?;
    Ok(ParsedCode {
        function_name: name.map(str::to_string),
        tree: DecisionTree { root, outcome_variable },
        new_variables,
        warnings,
    })
}

/// Parses a code block into one lowering result per top-level function, or a
/// single result for a block without functions.
///
/// Module-level literal assignments are constants visible to every function.
/// When functions are present, other module-level statements (typically
/// example invocations) are skipped with an `IGNORED_STATEMENT` warning that
/// is attached to every unit.
pub fn parse_code_units(code: &str, registry: &VariableRegistry) -> Result<Vec<Result<ParsedCode, CodeError>>, CodeError> {
    let mut prelude = Vec::new();
    let masked = mask_prose(code, &mut prelude);
    let toks = tokenize(&masked)?;
    let module = StmtParser { toks, pos: 0 }.module()?;

    let has_defs = module.iter().any(|s| matches!(s, Stmt::Def { .. }));
    if !has_defs {
        let span = 0..code.len();
        return Ok(vec![lower_unit(None, &module, span, &HashMap::new(), registry).map(|mut p| {
            prelude.append(&mut p.warnings);
            p.warnings = prelude;
            p
        })]);
    }

    let mut constants = HashMap::new();
    for stmt in &module {
        if let Stmt::Assign { target, value, .. } = stmt {
            if let Some(lit) = literal_of(value, &constants) {
                constants.insert(target.clone(), lit);
            }
        }
    }
    for stmt in &module {
        match stmt {
            Stmt::Def { .. } | Stmt::Pass => {}
            Stmt::Assign { value, .. } if literal_of(value, &constants).is_some() => {}
            Stmt::Expr { value: SExpr { expr: Expr::Str(_), .. }, .. } => {}
            other => prelude.push(ParseDiagnostic::warning(
                ParseCode::IgnoredStatement,
                other.span(),
                "top-level statement outside any function was not treated as rule logic",
            )),
        }
    }
    let mut out = Vec::new();
    for stmt in &module {
        if let Stmt::Def { name, body, span } = stmt {
            out.push(lower_unit(Some(name), body, span.clone(), &constants, registry).map(|mut p| {
                let mut w = prelude.clone();
                w.append(&mut p.warnings);
                p.warnings = w;
                p
            }));
        }
    }
    Ok(out)
}

/// Parses code holding exactly one function (or one function-free body).
pub fn parse_conditional_code(code: &str, registry: &VariableRegistry) -> Result<ParsedCode, CodeError> {
    let mut units = parse_code_units(code, registry)?;
    match units.len() {
        1 => units.remove(0),
        n => Err(CodeError::new(
            ParseCode::Syntax,
            0..code.len(),
            format!("expected one function, found {n}; parse each unit separately"),
        )),
    }
}

/// Rule sets recovered from one model response.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ResponseParse {
    pub rulesets: Vec<RuleSet>,
    pub diagnostics: Vec<ParseDiagnostic>,
    pub new_variables: Vec<VariableSpec>,
}

/// Extracts code blocks, lowers every function, and flattens each into a rule
/// set. Units that fail to lower contribute an error diagnostic and no rule set.
///
/// With `outcome` given, leaf outcomes must match its levels; otherwise the
/// spec is inferred from each tree.
pub fn parse_response(
    response_text: &str,
    registry: &VariableRegistry,
    outcome: Option<&OutcomeSpec>,
    domain: &str,
    objective: &str,
    provenance: &Provenance,
) -> ResponseParse {
    let mut result = ResponseParse::default();
    let blocks = extract_code_blocks(response_text);
    if blocks.is_empty() {
        result.diagnostics.push(ParseDiagnostic::error(ParseCode::NoCode, 0..response_text.len(), "response contains no code"));
        return result;
    }
    let mut working = registry.clone();
    for (bi, block) in blocks.iter().enumerate() {
        let tag = |mut d: ParseDiagnostic| {
            d.block = Some(bi);
            d
        };
        let units = match parse_code_units(block, &working) {
            Ok(units) => units,
            Err(CodeError(d)) => {
                result.diagnostics.push(tag(d));
                continue;
            }
        };
        for (ui, unit) in units.into_iter().enumerate() {
            let parsed = match unit {
                Ok(p) => p,
                Err(CodeError(d)) => {
                    result.diagnostics.push(tag(d));
                    continue;
                }
            };
            result.diagnostics.extend(parsed.warnings.into_iter().map(tag));
            let spec = match outcome {
                Some(spec) => spec.clone(),
                None => parsed.tree.inferred_outcome_spec(),
            };
            let name = parsed.function_name.clone().unwrap_or_else(|| format!("block_{bi}_{ui}"));
            match flatten_to_ruleset(&parsed.tree, spec, &name, domain, objective, provenance.clone()) {
                Ok(rs) => {
                    for v in &parsed.new_variables {
                        if working.get(&v.canonical_name).is_none() {
                            working.register(v.clone()).expect("inferred variables are registrable");
                            result.new_variables.push(v.clone());
                        }
                    }
                    result.rulesets.push(rs);
                }
                Err(e) => result.diagnostics.push(tag(ParseDiagnostic::error(
                    ParseCode::UnknownOutcome,
                    0..block.len(),
                    format!("function `{name}`: {e}"),
                ))),
            }
        }
    }
    result
}

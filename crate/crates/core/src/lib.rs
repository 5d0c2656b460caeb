//! Rule model, parsers, analysis and persistence for LLM-assisted rule engineering.

pub mod analyzer;
pub mod apigen;
pub mod canonical;
pub mod code;
pub mod dsl;
pub mod eval;
pub mod model;
pub mod prompt;
pub mod registry;
pub mod review;
pub mod tree;
pub mod workspace;

pub use code::{extract_code_blocks, parse_conditional_code, parse_response, CodeError, ParseDiagnostic, ParsedCode};
pub use dsl::{parse_dsl, serialize_dsl, SyntaxError};
pub use eval::{boundary_records, evaluate, EvalError, EvalTrace, Record};
pub use model::{
    validate_ruleset, Condition, Diagnostic, DiagnosticCode, Literal, Operator, OutcomeSpec, Provenance, Rule, RuleSet,
};
pub use registry::{canonicalize_name, VariableKind, VariableRegistry, VariableSpec};
pub use tree::{flatten, flatten_to_ruleset, DecisionTree, Node};

//! The rule language: a small, sandboxed, deterministic language in which
//! every rule body is written.
//!
//! A body reads the predefined list `triples` (already sorted to the rule's
//! predicate order) and must leave a text value in `output`. There is no
//! I/O, no clock and no randomness; every evaluation is bounded by
//! [`Limits`].

mod ast;
mod interp;
mod lexer;
mod parser;
mod printer;
mod value;

pub use ast::{BinOp, Builtin, Expr, ExprKind, Pos, Program, Span, Stmt, StmtKind, TextPart, TripleField};
pub use printer::canonical_print;
pub use value::{render_fixed, render_number, Value};

use std::fmt;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::Triple;

/// Grammar and semantics reference, embedded verbatim in rule-writing prompts.
pub const GRAMMAR_REFERENCE: &str = include_str!("grammar.txt");

#[derive(Debug, Clone, PartialEq, Error)]
#[error("parse error at {span}: {message}")]
pub struct ParseError {
    pub span: Span,
    pub message: String,
}

pub fn parse(source: &str) -> Result<Program, ParseError> {
    parser::parse(source)
}

/// Resource bounds for one execution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Limits {
    pub max_steps: u64,
    pub max_output_chars: usize,
    #[serde(with = "millis", rename = "wall_clock_ms")]
    pub wall_clock: Duration,
}

impl Default for Limits {
    fn default() -> Self {
        Self { max_steps: 100_000, max_output_chars: 10_000, wall_clock: Duration::from_secs(5) }
    }
}

mod millis {
    use std::time::Duration;

    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(d.as_millis() as u64)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        Ok(Duration::from_millis(u64::deserialize(d)?))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LimitKind {
    Steps,
    OutputChars,
    WallClock,
}

impl fmt::Display for LimitKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LimitKind::Steps => "max_steps",
            LimitKind::OutputChars => "max_output_chars",
            LimitKind::WallClock => "wall_clock",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuntimeErrorKind {
    UndefinedVariable,
    Redeclared,
    TypeMismatch,
    IndexOutOfRange,
    MissingKey,
    FindMiss,
    NumberParse,
    Arithmetic,
    OutputUnset,
    OutputNotText,
}

impl fmt::Display for RuntimeErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RuntimeErrorKind::UndefinedVariable => "undefined variable",
            RuntimeErrorKind::Redeclared => "variable already defined",
            RuntimeErrorKind::TypeMismatch => "type mismatch",
            RuntimeErrorKind::IndexOutOfRange => "index out of range",
            RuntimeErrorKind::MissingKey => "missing map key",
            RuntimeErrorKind::FindMiss => "find miss",
            RuntimeErrorKind::NumberParse => "number parse failure",
            RuntimeErrorKind::Arithmetic => "arithmetic error",
            RuntimeErrorKind::OutputUnset => "output unset",
            RuntimeErrorKind::OutputNotText => "output is not text",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ExecOutcome {
    Ok(String),
    ParseError { span: Span, message: String },
    RuntimeError { span: Span, kind: RuntimeErrorKind, message: String },
    LimitExceeded(LimitKind),
}

impl ExecOutcome {
    pub fn is_ok(&self) -> bool {
        matches!(self, ExecOutcome::Ok(_))
    }

    pub fn text(&self) -> Option<&str> {
        match self {
            ExecOutcome::Ok(s) => Some(s),
            _ => None,
        }
    }
}

impl fmt::Display for ExecOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExecOutcome::Ok(s) => write!(f, "ok: {s:?}"),
            ExecOutcome::ParseError { span, message } => write!(f, "parse error at {span}: {message}"),
            ExecOutcome::RuntimeError { span, kind, message } if span.start.line == 0 => {
                write!(f, "runtime error ({kind}): {message}")
            }
            ExecOutcome::RuntimeError { span, kind, message } => {
                write!(f, "runtime error ({kind}) at {span}: {message}")
            }
            ExecOutcome::LimitExceeded(which) => write!(f, "limit exceeded: {which}"),
        }
    }
}

impl From<ParseError> for ExecOutcome {
    fn from(e: ParseError) -> Self {
        ExecOutcome::ParseError { span: e.span, message: e.message }
    }
}

/// Runs a compiled program on triples already in the rule's spec order.
pub fn execute(program: &Program, triples: &[Triple], limits: &Limits) -> ExecOutcome {
    interp::execute(program, triples, limits)
}

/// Parses and runs `source`; parse failures become [`ExecOutcome::ParseError`].
pub fn run_source(source: &str, triples: &[Triple], limits: &Limits) -> ExecOutcome {
    match parse(source) {
        Ok(p) => execute(&p, triples, limits),
        Err(e) => e.into(),
    }
}

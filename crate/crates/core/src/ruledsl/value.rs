use std::collections::BTreeMap;
use std::rc::Rc;

use crate::model::Triple;

/// A runtime value. There is no null: every variable holds one of these.
#[derive(Debug, Clone)]
pub enum Value {
    Text(Rc<str>),
    Number(f64),
    Bool(bool),
    List(Rc<Vec<Value>>),
    Map(Rc<BTreeMap<String, Value>>),
    /// Position in the input triple list of the current execution.
    TripleRef(usize),
}

impl Value {
    pub fn text(s: impl Into<Rc<str>>) -> Value {
        Value::Text(s.into())
    }

    pub fn type_name(&self) -> &'static str {
        match self {
            Value::Text(_) => "text",
            Value::Number(_) => "number",
            Value::Bool(_) => "bool",
            Value::List(_) => "list",
            Value::Map(_) => "map",
            Value::TripleRef(_) => "triple",
        }
    }

    /// Structural equality; values of different types are unequal.
    pub fn equals(&self, other: &Value, triples: &[Triple]) -> bool {
        match (self, other) {
            (Value::Text(a), Value::Text(b)) => a == b,
            (Value::Number(a), Value::Number(b)) => a == b,
            (Value::Bool(a), Value::Bool(b)) => a == b,
            (Value::List(a), Value::List(b)) => {
                a.len() == b.len() && a.iter().zip(b.iter()).all(|(x, y)| x.equals(y, triples))
            }
            (Value::Map(a), Value::Map(b)) => {
                a.len() == b.len()
                    && a.iter().zip(b.iter()).all(|((ka, va), (kb, vb))| ka == kb && va.equals(vb, triples))
            }
            (Value::TripleRef(a), Value::TripleRef(b)) => triples[*a] == triples[*b],
            _ => false,
        }
    }

    /// Text form used by `str`, `+` with text, `join` and interpolation.
    pub fn render(&self, triples: &[Triple]) -> String {
        let mut out = String::new();
        self.render_into(&mut out, triples);
        out
    }

    fn render_into(&self, out: &mut String, triples: &[Triple]) {
        match self {
            Value::Text(s) => out.push_str(s),
            Value::Number(n) => out.push_str(&render_number(*n)),
            Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
            Value::List(items) => {
                out.push('[');
                for (i, v) in items.iter().enumerate() {
                    if i > 0 {
                        out.push_str(", ");
                    }
                    v.render_into(out, triples);
                }
                out.push(']');
            }
            Value::Map(m) => {
                out.push('{');
                for (i, (k, v)) in m.iter().enumerate() {
                    if i > 0 {
                        out.push_str(", ");
                    }
                    out.push_str(k);
                    out.push_str(": ");
                    v.render_into(out, triples);
                }
                out.push('}');
            }
            Value::TripleRef(i) => out.push_str(&triples[*i].to_string()),
        }
    }
}

/// Integral values print without a fractional part; anything else prints
/// as the shortest decimal that reads back to the same binary64.
pub fn render_number(n: f64) -> String {
    if n.fract() == 0.0 && n.abs() < 1e15 {
        format!("{}", n as i64)
    } else {
        format!("{n}")
    }
}

/// Fixed-point rendering with round-half-to-even on the exact binary value.
pub fn render_fixed(n: f64, decimals: u32) -> String {
    format!("{:.*}", decimals as usize, n)
}

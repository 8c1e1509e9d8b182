use std::collections::{BTreeMap, HashMap};
use std::rc::Rc;
use std::time::Instant;

use super::ast::*;
use super::value::{render_fixed, Value};
use super::{ExecOutcome, LimitKind, Limits, RuntimeErrorKind};
use crate::model::{normalize_predicate, Triple};

const OUTPUT: &str = "output";

/// Wall-clock checks happen once per this many steps.
const CLOCK_STRIDE: u64 = 256;

pub fn execute(program: &Program, triples: &[Triple], limits: &Limits) -> ExecOutcome {
    let mut vars = HashMap::new();
    vars.insert(
        "triples".to_string(),
        Value::List(Rc::new((0..triples.len()).map(Value::TripleRef).collect())),
    );
    let mut it = Interp { triples, limits, vars, steps: 0, next_clock_check: CLOCK_STRIDE, started: Instant::now() };
    if let Err(flow) = it.block(&program.stmts) {
        return flow.into_outcome();
    }
    match it.vars.get(OUTPUT) {
        None => ExecOutcome::RuntimeError {
            span: Span::default(),
            kind: RuntimeErrorKind::OutputUnset,
            message: "`output` was never assigned".into(),
        },
        Some(Value::Text(s)) => {
            if exceeds(s, limits.max_output_chars) {
                ExecOutcome::LimitExceeded(LimitKind::OutputChars)
            } else {
                ExecOutcome::Ok(s.to_string())
            }
        }
        Some(other) => ExecOutcome::RuntimeError {
            span: Span::default(),
            kind: RuntimeErrorKind::OutputNotText,
            message: format!("`output` holds a {}, expected text", other.type_name()),
        },
    }
}

fn exceeds(s: &str, max_chars: usize) -> bool {
    s.len() > max_chars && s.chars().count() > max_chars
}

enum Flow {
    Error { span: Span, kind: RuntimeErrorKind, message: String },
    Limit(LimitKind),
}

impl Flow {
    fn into_outcome(self) -> ExecOutcome {
        match self {
            Flow::Error { span, kind, message } => ExecOutcome::RuntimeError { span, kind, message },
            Flow::Limit(which) => ExecOutcome::LimitExceeded(which),
        }
    }
}

type Res<T> = Result<T, Flow>;

fn err<T>(span: Span, kind: RuntimeErrorKind, message: impl Into<String>) -> Res<T> {
    Err(Flow::Error { span, kind, message: message.into() })
}

fn mismatch<T>(span: Span, message: impl Into<String>) -> Res<T> {
    err(span, RuntimeErrorKind::TypeMismatch, message)
}

struct Interp<'a> {
    triples: &'a [Triple],
    limits: &'a Limits,
    vars: HashMap<String, Value>,
    steps: u64,
    next_clock_check: u64,
    started: Instant,
}

impl<'a> Interp<'a> {
    fn tick(&mut self, cost: u64) -> Res<()> {
        self.steps += cost;
        if self.steps > self.limits.max_steps {
            return Err(Flow::Limit(LimitKind::Steps));
        }
        if self.steps >= self.next_clock_check {
            self.next_clock_check = self.steps + CLOCK_STRIDE;
            if self.started.elapsed() > self.limits.wall_clock {
                return Err(Flow::Limit(LimitKind::WallClock));
            }
        }
        Ok(())
    }

    /// Charges for building a text value and enforces the size bound.
    fn make_text(&mut self, s: String) -> Res<Value> {
        self.tick(1 + s.len() as u64 / 64)?;
        if exceeds(&s, self.limits.max_output_chars) {
            return Err(Flow::Limit(LimitKind::OutputChars));
        }
        Ok(Value::text(s))
    }

    fn block(&mut self, stmts: &[Stmt]) -> Res<()> {
        for s in stmts {
            self.stmt(s)?;
        }
        Ok(())
    }

    fn stmt(&mut self, stmt: &Stmt) -> Res<()> {
        self.tick(1)?;
        match &stmt.kind {
            StmtKind::Let { name, value } => {
                if self.vars.contains_key(name) {
                    return err(
                        stmt.span,
                        RuntimeErrorKind::Redeclared,
                        format!("`{name}` is already defined; use `{name} = ...` to reassign"),
                    );
                }
                let v = self.eval(value)?;
                self.vars.insert(name.clone(), v);
            }
            StmtKind::Assign { name, value } => {
                if name != OUTPUT && !self.vars.contains_key(name) {
                    return err(
                        stmt.span,
                        RuntimeErrorKind::UndefinedVariable,
                        format!("`{name}` is not defined; introduce it with `let {name} = ...`"),
                    );
                }
                let v = self.eval(value)?;
                self.vars.insert(name.clone(), v);
            }
            StmtKind::AddAssign { name, value } => {
                let Some(current) = self.vars.get(name).cloned() else {
                    return err(stmt.span, RuntimeErrorKind::UndefinedVariable, format!("`{name}` is not defined"));
                };
                let rhs = self.eval(value)?;
                let v = self.add(current, rhs, stmt.span)?;
                self.vars.insert(name.clone(), v);
            }
            StmtKind::If { branches, otherwise } => {
                for (cond, body) in branches {
                    if self.condition(cond)? {
                        return self.block(body);
                    }
                }
                if let Some(body) = otherwise {
                    self.block(body)?;
                }
            }
            StmtKind::For { var, iter, body } => {
                let items = match self.eval(iter)? {
                    Value::List(items) => items,
                    other => return mismatch(iter.span, format!("`for` iterates lists, got {}", other.type_name())),
                };
                for item in items.iter() {
                    self.tick(1)?;
                    self.vars.insert(var.clone(), item.clone());
                    self.block(body)?;
                }
            }
        }
        Ok(())
    }

    fn condition(&mut self, e: &Expr) -> Res<bool> {
        match self.eval(e)? {
            Value::Bool(b) => Ok(b),
            other => mismatch(e.span, format!("condition must be bool, got {}", other.type_name())),
        }
    }

    fn eval(&mut self, e: &Expr) -> Res<Value> {
        self.tick(1)?;
        match &e.kind {
            ExprKind::Number(n) => Ok(Value::Number(*n)),
            ExprKind::Bool(b) => Ok(Value::Bool(*b)),
            ExprKind::Text(parts) => {
                let mut s = String::new();
                for part in parts {
                    match part {
                        TextPart::Lit(l) => s.push_str(l),
                        TextPart::Interp { expr, precision } => {
                            let v = self.eval(expr)?;
                            match (precision, v) {
                                (None, v) => s.push_str(&v.render(self.triples)),
                                (Some(d), Value::Number(n)) => s.push_str(&render_fixed(n, *d)),
                                (Some(_), v) => {
                                    return mismatch(
                                        expr.span,
                                        format!("`:.Nf` formats numbers, got {}; wrap it in num(...)", v.type_name()),
                                    )
                                }
                            }
                        }
                    }
                }
                self.make_text(s)
            }
            ExprKind::List(items) => {
                let mut out = Vec::with_capacity(items.len());
                for i in items {
                    out.push(self.eval(i)?);
                }
                Ok(Value::List(Rc::new(out)))
            }
            ExprKind::Map(entries) => {
                let mut out = BTreeMap::new();
                for (k, v) in entries {
                    let v = self.eval(v)?;
                    out.insert(k.clone(), v);
                }
                Ok(Value::Map(Rc::new(out)))
            }
            ExprKind::Var(name) => match self.vars.get(name) {
                Some(v) => Ok(v.clone()),
                None => err(e.span, RuntimeErrorKind::UndefinedVariable, format!("`{name}` is not defined")),
            },
            ExprKind::Field(target, field) => match self.eval(target)? {
                Value::TripleRef(i) => {
                    let t = &self.triples[i];
                    Ok(Value::text(match field {
                        TripleField::Subj => t.subj.as_str(),
                        TripleField::Pred => t.pred.as_str(),
                        TripleField::Obj => t.obj.as_str(),
                    }))
                }
                other => mismatch(e.span, format!("`.{}` needs a triple, got {}", field.name(), other.type_name())),
            },
            ExprKind::Index(target, idx) => {
                let target = self.eval(target)?;
                let idx = self.eval(idx)?;
                self.index(target, idx, e.span)
            }
            ExprKind::Binary(op, lhs, rhs) => self.binary(*op, lhs, rhs, e.span),
            ExprKind::Not(inner) => match self.eval(inner)? {
                Value::Bool(b) => Ok(Value::Bool(!b)),
                other => mismatch(e.span, format!("`not` needs a bool, got {}", other.type_name())),
            },
            ExprKind::Call(builtin, args) => {
                let mut vals = Vec::with_capacity(args.len());
                for a in args {
                    vals.push(self.eval(a)?);
                }
                self.call(*builtin, vals, e.span)
            }
        }
    }

    fn index(&mut self, target: Value, idx: Value, span: Span) -> Res<Value> {
        match (target, idx) {
            (Value::List(items), Value::Number(n)) => {
                let i = self.position(n, items.len(), span)?;
                Ok(items[i].clone())
            }
            (Value::Text(s), Value::Number(n)) => {
                let len = s.chars().count();
                let i = self.position(n, len, span)?;
                Ok(Value::text(s.chars().nth(i).expect("bounds checked").to_string()))
            }
            (Value::Map(m), Value::Text(k)) => match m.get(&*k) {
                Some(v) => Ok(v.clone()),
                None => err(span, RuntimeErrorKind::MissingKey, format!("map has no key {:?}", &*k)),
            },
            (t, i) => mismatch(span, format!("cannot index {} with {}", t.type_name(), i.type_name())),
        }
    }

    /// Resolves a possibly negative index against `len`.
    fn position(&self, n: f64, len: usize, span: Span) -> Res<usize> {
        if n.fract() != 0.0 {
            return mismatch(span, format!("index {n} is not a whole number"));
        }
        let i = if n < 0.0 { len as f64 + n } else { n };
        if i < 0.0 || i >= len as f64 {
            return err(span, RuntimeErrorKind::IndexOutOfRange, format!("index {n} out of range for length {len}"));
        }
        Ok(i as usize)
    }

    fn binary(&mut self, op: BinOp, lhs: &Expr, rhs: &Expr, span: Span) -> Res<Value> {
        if matches!(op, BinOp::And | BinOp::Or) {
            let l = match self.eval(lhs)? {
                Value::Bool(b) => b,
                other => return mismatch(lhs.span, format!("`{}` needs bools, got {}", op.symbol(), other.type_name())),
            };
            if (op == BinOp::And && !l) || (op == BinOp::Or && l) {
                return Ok(Value::Bool(l));
            }
            return match self.eval(rhs)? {
                Value::Bool(b) => Ok(Value::Bool(b)),
                other => mismatch(rhs.span, format!("`{}` needs bools, got {}", op.symbol(), other.type_name())),
            };
        }
        let l = self.eval(lhs)?;
        let r = self.eval(rhs)?;
        match op {
            BinOp::Add => self.add(l, r, span),
            BinOp::Sub | BinOp::Mul | BinOp::Div => {
                let (Value::Number(a), Value::Number(b)) = (&l, &r) else {
                    return mismatch(
                        span,
                        format!("`{}` needs numbers, got {} and {}", op.symbol(), l.type_name(), r.type_name()),
                    );
                };
                let v = match op {
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    _ => a / b,
                };
                if !v.is_finite() {
                    return err(span, RuntimeErrorKind::Arithmetic, format!("{a} {} {b} is not a finite number", op.symbol()));
                }
                Ok(Value::Number(v))
            }
            BinOp::Eq => Ok(Value::Bool(l.equals(&r, self.triples))),
            BinOp::Ne => Ok(Value::Bool(!l.equals(&r, self.triples))),
            BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge => {
                let ord = match (&l, &r) {
                    (Value::Number(a), Value::Number(b)) => a.partial_cmp(b).expect("finite numbers"),
                    (Value::Text(a), Value::Text(b)) => a.as_bytes().cmp(b.as_bytes()),
                    _ => {
                        return mismatch(
                            span,
                            format!("cannot compare {} with {}", l.type_name(), r.type_name()),
                        )
                    }
                };
                Ok(Value::Bool(match op {
                    BinOp::Lt => ord.is_lt(),
                    BinOp::Le => ord.is_le(),
                    BinOp::Gt => ord.is_gt(),
                    _ => ord.is_ge(),
                }))
            }
            BinOp::And | BinOp::Or => unreachable!("handled above"),
        }
    }

    fn add(&mut self, l: Value, r: Value, span: Span) -> Res<Value> {
        match (l, r) {
            (Value::Number(a), Value::Number(b)) => {
                let v = a + b;
                if !v.is_finite() {
                    return err(span, RuntimeErrorKind::Arithmetic, format!("{a} + {b} is not a finite number"));
                }
                Ok(Value::Number(v))
            }
            (Value::List(a), Value::List(b)) => {
                self.tick((a.len() + b.len()) as u64)?;
                let mut out = Vec::with_capacity(a.len() + b.len());
                out.extend(a.iter().cloned());
                out.extend(b.iter().cloned());
                Ok(Value::List(Rc::new(out)))
            }
            (l @ Value::Text(_), r) | (l, r @ Value::Text(_)) => {
                if matches!(l, Value::List(_) | Value::Map(_)) || matches!(r, Value::List(_) | Value::Map(_)) {
                    return mismatch(
                        span,
                        format!("cannot add {} and {}; use join(...) or str(...)", l.type_name(), r.type_name()),
                    );
                }
                let mut s = l.render(self.triples);
                s.push_str(&r.render(self.triples));
                self.make_text(s)
            }
            (l, r) => mismatch(span, format!("cannot add {} and {}", l.type_name(), r.type_name())),
        }
    }

    fn call(&mut self, builtin: Builtin, args: Vec<Value>, span: Span) -> Res<Value> {
        let mut args = args.into_iter();
        let mut next = || args.next().expect("arity checked at parse time");
        let name = builtin.name();
        let text_arg = |v: Value, what: &str| -> Res<Rc<str>> {
            match v {
                Value::Text(s) => Ok(s),
                other => mismatch(span, format!("{name}: {what} must be text, got {}", other.type_name())),
            }
        };
        match builtin {
            Builtin::Lower => {
                let s = text_arg(next(), "argument")?;
                self.make_text(s.to_lowercase())
            }
            Builtin::Upper => {
                let s = text_arg(next(), "argument")?;
                self.make_text(s.to_uppercase())
            }
            Builtin::Capitalize => {
                let s = text_arg(next(), "argument")?;
                let mut chars = s.chars();
                let out = match chars.next() {
                    Some(first) => first.to_uppercase().chain(chars.as_str().to_lowercase().chars()).collect(),
                    None => String::new(),
                };
                self.make_text(out)
            }
            Builtin::Title => {
                let s = text_arg(next(), "argument")?;
                let mut out = String::with_capacity(s.len());
                let mut prev_alpha = false;
                for c in s.chars() {
                    if c.is_alphabetic() {
                        if prev_alpha {
                            out.extend(c.to_lowercase());
                        } else {
                            out.extend(c.to_uppercase());
                        }
                    } else {
                        out.push(c);
                    }
                    prev_alpha = c.is_alphabetic();
                }
                self.make_text(out)
            }
            Builtin::Trim => {
                let s = text_arg(next(), "argument")?;
                self.make_text(s.trim().to_string())
            }
            Builtin::Replace => {
                let s = text_arg(next(), "text")?;
                let from = text_arg(next(), "pattern")?;
                let to = text_arg(next(), "replacement")?;
                self.tick(s.len() as u64 / 16)?;
                if from.is_empty() {
                    return mismatch(span, "replace: pattern must not be empty");
                }
                self.make_text(s.replace(&*from, &to))
            }
            Builtin::Split => {
                let s = text_arg(next(), "text")?;
                let sep = text_arg(next(), "separator")?;
                if sep.is_empty() {
                    return mismatch(span, "split: separator must not be empty");
                }
                let parts: Vec<Value> = s.split(&*sep).map(Value::text).collect();
                self.tick(parts.len() as u64)?;
                Ok(Value::List(Rc::new(parts)))
            }
            Builtin::Join => {
                let list = match next() {
                    Value::List(l) => l,
                    other => return mismatch(span, format!("join: first argument must be a list, got {}", other.type_name())),
                };
                let sep = text_arg(next(), "separator")?;
                self.tick(list.len() as u64)?;
                let joined = list.iter().map(|v| v.render(self.triples)).collect::<Vec<_>>().join(&sep);
                self.make_text(joined)
            }
            Builtin::Len => Ok(Value::Number(match next() {
                Value::Text(s) => s.chars().count() as f64,
                Value::List(l) => l.len() as f64,
                Value::Map(m) => m.len() as f64,
                other => return mismatch(span, format!("len: unsupported {}", other.type_name())),
            })),
            Builtin::Str => {
                let v = next();
                let s = v.render(self.triples);
                self.make_text(s)
            }
            Builtin::Num => match next() {
                Value::Number(n) => Ok(Value::Number(n)),
                Value::Text(s) => match s.trim().parse::<f64>() {
                    Ok(n) if n.is_finite() => Ok(Value::Number(n)),
                    _ => err(span, RuntimeErrorKind::NumberParse, format!("num: {:?} is not a number", &*s)),
                },
                other => mismatch(span, format!("num: unsupported {}", other.type_name())),
            },
            Builtin::Contains => {
                let hay = next();
                let needle = next();
                Ok(Value::Bool(match (&hay, &needle) {
                    (Value::Text(h), Value::Text(n)) => h.contains(&**n),
                    (Value::List(items), n) => {
                        self.tick(items.len() as u64)?;
                        items.iter().any(|v| v.equals(n, self.triples))
                    }
                    (Value::Map(m), Value::Text(k)) => m.contains_key(&**k),
                    _ => {
                        return mismatch(
                            span,
                            format!("contains: unsupported {} and {}", hay.type_name(), needle.type_name()),
                        )
                    }
                }))
            }
            Builtin::StartsWith => {
                let s = text_arg(next(), "text")?;
                let p = text_arg(next(), "prefix")?;
                Ok(Value::Bool(s.starts_with(&*p)))
            }
            Builtin::EndsWith => {
                let s = text_arg(next(), "text")?;
                let p = text_arg(next(), "suffix")?;
                Ok(Value::Bool(s.ends_with(&*p)))
            }
            Builtin::Find | Builtin::FilterPred | Builtin::Has => {
                let list = match next() {
                    Value::List(l) => l,
                    other => {
                        return mismatch(span, format!("{name}: first argument must be a triple list, got {}", other.type_name()))
                    }
                };
                let pred = text_arg(next(), "predicate")?;
                self.tick(list.len() as u64)?;
                let wanted = normalize_predicate(&pred).ok();
                let mut matches = Vec::new();
                for v in list.iter() {
                    let Value::TripleRef(i) = v else {
                        return mismatch(span, format!("{name}: list holds a {}, expected triples", v.type_name()));
                    };
                    if wanted.as_deref() == Some(self.triples[*i].normalized_pred()) {
                        matches.push(v.clone());
                        if builtin != Builtin::FilterPred {
                            break;
                        }
                    }
                }
                match builtin {
                    Builtin::Has => Ok(Value::Bool(!matches.is_empty())),
                    Builtin::FilterPred => Ok(Value::List(Rc::new(matches))),
                    _ => matches.into_iter().next().map_or_else(
                        || err(span, RuntimeErrorKind::FindMiss, format!("find: no triple with predicate {:?}", &*pred)),
                        Ok,
                    ),
                }
            }
        }
    }
}

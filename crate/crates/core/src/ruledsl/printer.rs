use std::fmt::Write;

use super::ast::*;
use super::value::render_number;

/// Canonical source for `program`: one statement per line, two-space block
/// indent, minimal parentheses. Re-parsing the result yields an equal AST.
pub fn canonical_print(program: &Program) -> String {
    let mut out = String::new();
    for stmt in &program.stmts {
        print_stmt(&mut out, stmt, 0);
    }
    out
}

fn indent(out: &mut String, depth: usize) {
    for _ in 0..depth {
        out.push_str("  ");
    }
}

fn print_block(out: &mut String, stmts: &[Stmt], depth: usize) {
    out.push_str(" {\n");
    for s in stmts {
        print_stmt(out, s, depth + 1);
    }
    indent(out, depth);
    out.push('}');
}

fn print_stmt(out: &mut String, stmt: &Stmt, depth: usize) {
    indent(out, depth);
    match &stmt.kind {
        StmtKind::Let { name, value } => {
            let _ = write!(out, "let {name} = {};", expr_to_string(value));
        }
        StmtKind::Assign { name, value } => {
            let _ = write!(out, "{name} = {};", expr_to_string(value));
        }
        StmtKind::AddAssign { name, value } => {
            let _ = write!(out, "{name} += {};", expr_to_string(value));
        }
        StmtKind::If { branches, otherwise } => {
            for (i, (cond, body)) in branches.iter().enumerate() {
                if i > 0 {
                    out.push_str(" else ");
                }
                let _ = write!(out, "if {}", expr_to_string(cond));
                print_block(out, body, depth);
            }
            if let Some(body) = otherwise {
                out.push_str(" else");
                print_block(out, body, depth);
            }
        }
        StmtKind::For { var, iter, body } => {
            let _ = write!(out, "for {var} in {}", expr_to_string(iter));
            print_block(out, body, depth);
        }
    }
    out.push('\n');
}

pub(crate) fn expr_to_string(e: &Expr) -> String {
    let mut s = String::new();
    print_expr(&mut s, e);
    s
}

fn print_at_least(out: &mut String, e: &Expr, min_prec: u8) {
    if e.precedence() < min_prec {
        out.push('(');
        print_expr(out, e);
        out.push(')');
    } else {
        print_expr(out, e);
    }
}

fn print_expr(out: &mut String, e: &Expr) {
    match &e.kind {
        ExprKind::Number(n) if n.is_sign_negative() => {
            out.push('-');
            out.push_str(&render_number(-n));
        }
        ExprKind::Number(n) => out.push_str(&render_number(*n)),
        ExprKind::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        ExprKind::Text(parts) => print_text(out, parts),
        ExprKind::Var(name) => out.push_str(name),
        ExprKind::List(items) => {
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                print_expr(out, item);
            }
            out.push(']');
        }
        ExprKind::Map(entries) => {
            out.push('{');
            for (i, (k, v)) in entries.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                print_text(out, &[TextPart::Lit(k.clone())]);
                out.push_str(": ");
                print_expr(out, v);
            }
            out.push('}');
        }
        ExprKind::Field(target, field) => {
            print_at_least(out, target, prec::POSTFIX);
            out.push('.');
            out.push_str(field.name());
        }
        ExprKind::Index(target, idx) => {
            print_at_least(out, target, prec::POSTFIX);
            out.push('[');
            print_expr(out, idx);
            out.push(']');
        }
        ExprKind::Binary(op, lhs, rhs) => {
            let p = op.precedence();
            print_at_least(out, lhs, p);
            let _ = write!(out, " {} ", op.symbol());
            print_at_least(out, rhs, p + 1);
        }
        ExprKind::Not(inner) => {
            out.push_str("not ");
            print_at_least(out, inner, prec::NOT);
        }
        ExprKind::Call(builtin, args) => {
            out.push_str(builtin.name());
            out.push('(');
            for (i, a) in args.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                print_expr(out, a);
            }
            out.push(')');
        }
    }
}

fn print_text(out: &mut String, parts: &[TextPart]) {
    out.push('"');
    for part in parts {
        match part {
            TextPart::Lit(s) => {
                for c in s.chars() {
                    match c {
                        '"' => out.push_str("\\\""),
                        '\\' => out.push_str("\\\\"),
                        '\n' => out.push_str("\\n"),
                        '\t' => out.push_str("\\t"),
                        '\r' => out.push_str("\\r"),
                        '{' => out.push_str("{{"),
                        '}' => out.push_str("}}"),
                        c => out.push(c),
                    }
                }
            }
            TextPart::Interp { expr, precision } => {
                let inner = expr_to_string(expr);
                out.push('{');
                // `{{` would read back as an escaped brace.
                if inner.starts_with('{') {
                    out.push(' ');
                }
                out.push_str(&inner);
                if let Some(n) = precision {
                    let _ = write!(out, ":.{n}f");
                }
                out.push('}');
            }
        }
    }
    out.push('"');
}

#[cfg(test)]
mod tests {
    use super::super::parse;
    use super::*;

    #[test]
    fn normalizes_whitespace() {
        assert_eq!(canonical_print(&parse(r#"output="x";"#).unwrap()), "output = \"x\";\n");
    }

    #[test]
    fn blocks_and_else_chains() {
        let src = "if a==1{x=1;}else if b{x=2;}else{for t in l{x+=t.obj;}}";
        let printed = canonical_print(&parse(src).unwrap());
        assert_eq!(
            printed,
            "if a == 1 {\n  x = 1;\n} else if b {\n  x = 2;\n} else {\n  for t in l {\n    x += t.obj;\n  }\n}\n"
        );
    }

    #[test]
    fn keeps_needed_parens_only() {
        let src = "x = ((1 + 2)) * 3 - (4 - 5) + (not (a and b));";
        let printed = canonical_print(&parse(src).unwrap());
        assert_eq!(printed, "x = (1 + 2) * 3 - (4 - 5) + (not (a and b));\n");
        assert_eq!(parse(&printed).unwrap(), parse(src).unwrap());
    }

    #[test]
    fn text_escapes_round_trip() {
        let src = r#"x = "a \"q\" {{b}} \\ {m["k"]:.1f} { {"a": 1}["a"]}";"#;
        let ast = parse(src).unwrap();
        let printed = canonical_print(&ast);
        assert_eq!(parse(&printed).unwrap(), ast);
        assert_eq!(canonical_print(&parse(&printed).unwrap()), printed);
    }
}

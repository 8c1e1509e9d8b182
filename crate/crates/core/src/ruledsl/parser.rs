use super::ast::*;
use super::lexer::{Lexer, RawPart, Tok, Token};
use super::ParseError;

pub fn parse(source: &str) -> Result<Program, ParseError> {
    let tokens = Lexer::new(source).tokenize()?;
    let mut p = Parser { src: source, tokens, at: 0 };
    let mut stmts = Vec::new();
    while !p.check(&Tok::Eof) {
        stmts.push(p.statement()?);
    }
    Ok(Program { stmts })
}

struct Parser<'a> {
    src: &'a str,
    tokens: Vec<Token>,
    at: usize,
}

impl<'a> Parser<'a> {
    fn peek(&self) -> &Token {
        &self.tokens[self.at]
    }

    fn check(&self, tok: &Tok) -> bool {
        &self.peek().tok == tok
    }

    fn advance(&mut self) -> Token {
        let t = self.tokens[self.at].clone();
        if self.at + 1 < self.tokens.len() {
            self.at += 1;
        }
        t
    }

    fn prev_span(&self) -> Span {
        self.tokens[self.at.saturating_sub(1)].span
    }

    fn error_here(&self, message: impl Into<String>) -> ParseError {
        ParseError { span: self.peek().span, message: message.into() }
    }

    fn expect(&mut self, tok: Tok, what: &str) -> Result<Token, ParseError> {
        if self.check(&tok) {
            Ok(self.advance())
        } else {
            Err(self.error_here(format!("expected {what}, found {}", self.peek().tok.describe())))
        }
    }

    fn ident(&mut self, what: &str) -> Result<(String, Span), ParseError> {
        match &self.peek().tok {
            Tok::Ident(name) => {
                let name = name.clone();
                let span = self.advance().span;
                Ok((name, span))
            }
            other => Err(self.error_here(format!("expected {what}, found {}", other.describe()))),
        }
    }

    fn statement(&mut self) -> Result<Stmt, ParseError> {
        let start = self.peek().span;
        let kind = match self.peek().tok.clone() {
            Tok::Let => {
                self.advance();
                let (name, _) = self.ident("variable name after `let`")?;
                self.expect(Tok::Assign, "`=`")?;
                let value = self.expr()?;
                self.expect(Tok::Semi, "`;`")?;
                StmtKind::Let { name, value }
            }
            Tok::If => {
                self.advance();
                let mut branches = vec![(self.expr()?, self.block()?)];
                let mut otherwise = None;
                while self.check(&Tok::Else) {
                    self.advance();
                    if self.check(&Tok::If) {
                        self.advance();
                        branches.push((self.expr()?, self.block()?));
                    } else {
                        otherwise = Some(self.block()?);
                        break;
                    }
                }
                StmtKind::If { branches, otherwise }
            }
            Tok::For => {
                self.advance();
                let (var, _) = self.ident("loop variable")?;
                self.expect(Tok::In, "`in`")?;
                let iter = self.expr()?;
                let body = self.block()?;
                StmtKind::For { var, iter, body }
            }
            Tok::Ident(name) => {
                self.advance();
                let compound = match self.peek().tok {
                    Tok::Assign => false,
                    Tok::PlusAssign => true,
                    _ => {
                        return Err(self.error_here(format!(
                            "expected `=` or `+=` after `{name}`, found {}",
                            self.peek().tok.describe()
                        )))
                    }
                };
                self.advance();
                let value = self.expr()?;
                self.expect(Tok::Semi, "`;`")?;
                if compound {
                    StmtKind::AddAssign { name, value }
                } else {
                    StmtKind::Assign { name, value }
                }
            }
            other => return Err(self.error_here(format!("expected statement, found {}", other.describe()))),
        };
        Ok(Stmt { kind, span: start.to(self.prev_span()) })
    }

    fn block(&mut self) -> Result<Vec<Stmt>, ParseError> {
        self.expect(Tok::LBrace, "`{` to open a block")?;
        let mut stmts = Vec::new();
        while !self.check(&Tok::RBrace) {
            if self.check(&Tok::Eof) {
                return Err(self.error_here("expected `}` to close the block"));
            }
            stmts.push(self.statement()?);
        }
        self.advance();
        Ok(stmts)
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        self.binary(prec::OR)
    }

    /// Left-associative binary operators at `level` and above.
    fn binary(&mut self, level: u8) -> Result<Expr, ParseError> {
        if level == prec::NOT {
            return self.not_expr();
        }
        let next = if level == prec::AND { prec::NOT } else { level + 1 };
        let mut lhs = if level >= prec::POSTFIX { return self.postfix() } else { self.binary(next)? };
        while let Some(op) = binop(&self.peek().tok).filter(|op| op.precedence() == level) {
            self.advance();
            let rhs = self.binary(next)?;
            let span = lhs.span.to(rhs.span);
            lhs = Expr { kind: ExprKind::Binary(op, Box::new(lhs), Box::new(rhs)), span };
        }
        Ok(lhs)
    }

    fn not_expr(&mut self) -> Result<Expr, ParseError> {
        if self.check(&Tok::Not) {
            let start = self.advance().span;
            let inner = self.not_expr()?;
            let span = start.to(inner.span);
            return Ok(Expr { kind: ExprKind::Not(Box::new(inner)), span });
        }
        self.binary(prec::CMP)
    }

    fn postfix(&mut self) -> Result<Expr, ParseError> {
        let mut e = self.primary()?;
        loop {
            match self.peek().tok {
                Tok::Dot => {
                    self.advance();
                    let (name, span) = self.ident("field name")?;
                    let field = match name.as_str() {
                        "subj" => TripleField::Subj,
                        "pred" => TripleField::Pred,
                        "obj" => TripleField::Obj,
                        _ => {
                            return Err(ParseError {
                                span,
                                message: format!("unknown field `.{name}`; triples have .subj, .pred and .obj"),
                            })
                        }
                    };
                    let span = e.span.to(span);
                    e = Expr { kind: ExprKind::Field(Box::new(e), field), span };
                }
                Tok::LBracket => {
                    self.advance();
                    let idx = self.expr()?;
                    let close = self.expect(Tok::RBracket, "`]`")?;
                    let span = e.span.to(close.span);
                    e = Expr { kind: ExprKind::Index(Box::new(e), Box::new(idx)), span };
                }
                _ => return Ok(e),
            }
        }
    }

    fn primary(&mut self) -> Result<Expr, ParseError> {
        let tok = self.advance();
        let span = tok.span;
        let kind = match tok.tok {
            Tok::Number(n) => ExprKind::Number(n),
            // Negative literals only; there is no general unary minus.
            Tok::Minus => match self.peek().tok {
                Tok::Number(n) => {
                    self.advance();
                    ExprKind::Number(-n)
                }
                _ => return Err(ParseError { span, message: "`-` must be followed by a number literal".into() }),
            },
            Tok::True => ExprKind::Bool(true),
            Tok::False => ExprKind::Bool(false),
            Tok::Str(parts) => ExprKind::Text(self.text_parts(parts)?),
            Tok::LParen => {
                let inner = self.expr()?;
                self.expect(Tok::RParen, "`)`")?;
                return Ok(inner);
            }
            Tok::LBracket => {
                let items = self.comma_list(Tok::RBracket, "`]`", |p| p.expr())?;
                ExprKind::List(items)
            }
            Tok::LBrace => {
                let entries = self.comma_list(Tok::RBrace, "`}`", |p| {
                    let key_tok = p.advance();
                    let key = match key_tok.tok {
                        Tok::Str(parts) => match parts.as_slice() {
                            [] => String::new(),
                            [RawPart::Lit(s)] => s.clone(),
                            _ => {
                                return Err(ParseError {
                                    span: key_tok.span,
                                    message: "map keys must be plain text without interpolation".into(),
                                })
                            }
                        },
                        other => {
                            return Err(ParseError {
                                span: key_tok.span,
                                message: format!("expected text map key, found {}", other.describe()),
                            })
                        }
                    };
                    p.expect(Tok::Colon, "`:` after map key")?;
                    Ok((key, key_tok.span, p.expr()?))
                })?;
                let mut seen = std::collections::HashSet::new();
                let mut out = Vec::with_capacity(entries.len());
                for (key, key_span, value) in entries {
                    if !seen.insert(key.clone()) {
                        return Err(ParseError { span: key_span, message: format!("duplicate map key {key:?}") });
                    }
                    out.push((key, value));
                }
                ExprKind::Map(out)
            }
            Tok::Ident(name) => {
                if self.check(&Tok::LParen) {
                    let Some(builtin) = Builtin::from_name(&name) else {
                        return Err(ParseError { span, message: format!("unknown function `{name}`") });
                    };
                    self.advance();
                    let args = self.comma_list(Tok::RParen, "`)`", |p| p.expr())?;
                    if args.len() != builtin.arity() {
                        return Err(ParseError {
                            span: span.to(self.prev_span()),
                            message: format!(
                                "`{name}` takes {} argument(s), got {}",
                                builtin.arity(),
                                args.len()
                            ),
                        });
                    }
                    ExprKind::Call(builtin, args)
                } else {
                    ExprKind::Var(name)
                }
            }
            other => {
                return Err(ParseError { span, message: format!("expected expression, found {}", other.describe()) })
            }
        };
        Ok(Expr { kind, span: span.to(self.prev_span()) })
    }

    fn comma_list<T>(
        &mut self,
        close: Tok,
        close_desc: &str,
        mut item: impl FnMut(&mut Self) -> Result<T, ParseError>,
    ) -> Result<Vec<T>, ParseError> {
        let mut items = Vec::new();
        loop {
            if self.check(&close) {
                self.advance();
                return Ok(items);
            }
            items.push(item(self)?);
            if self.check(&Tok::Comma) {
                self.advance();
            } else {
                self.expect(close.clone(), close_desc)?;
                return Ok(items);
            }
        }
    }

    fn text_parts(&self, raw: Vec<RawPart>) -> Result<Vec<TextPart>, ParseError> {
        raw.into_iter()
            .map(|part| match part {
                RawPart::Lit(s) => Ok(TextPart::Lit(s)),
                RawPart::Interp { start, end, precision } => {
                    let tokens = Lexer::over(self.src, start, end.offset).tokenize()?;
                    let mut sub = Parser { src: self.src, tokens, at: 0 };
                    let expr = sub.expr()?;
                    if !sub.check(&Tok::Eof) {
                        return Err(sub.error_here(format!(
                            "unexpected {} in interpolation",
                            sub.peek().tok.describe()
                        )));
                    }
                    Ok(TextPart::Interp { expr, precision })
                }
            })
            .collect()
    }
}

fn binop(tok: &Tok) -> Option<BinOp> {
    Some(match tok {
        Tok::Plus => BinOp::Add,
        Tok::Minus => BinOp::Sub,
        Tok::Star => BinOp::Mul,
        Tok::Slash => BinOp::Div,
        Tok::EqEq => BinOp::Eq,
        Tok::NotEq => BinOp::Ne,
        Tok::Lt => BinOp::Lt,
        Tok::Le => BinOp::Le,
        Tok::Gt => BinOp::Gt,
        Tok::Ge => BinOp::Ge,
        Tok::And => BinOp::And,
        Tok::Or => BinOp::Or,
        _ => return None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_assignment() {
        let p = parse(r#"output = "hi";"#).unwrap();
        assert_eq!(p.stmts.len(), 1);
        assert!(matches!(&p.stmts[0].kind, StmtKind::Assign { name, .. } if name == "output"));
    }

    #[test]
    fn missing_expression_points_at_semicolon() {
        let err = parse("let x = ;").unwrap_err();
        assert_eq!((err.span.start.line, err.span.start.col), (1, 9));
        assert!(err.message.contains("expected expression"), "{}", err.message);
    }

    #[test]
    fn precedence() {
        let p = parse("x = 1 + 2 * 3 == 7 and not a or b;").unwrap();
        let StmtKind::Assign { value, .. } = &p.stmts[0].kind else { panic!() };
        let ExprKind::Binary(BinOp::Or, lhs, _) = &value.kind else { panic!("{value:?}") };
        let ExprKind::Binary(BinOp::And, cmp, not) = &lhs.kind else { panic!() };
        assert!(matches!(not.kind, ExprKind::Not(_)));
        let ExprKind::Binary(BinOp::Eq, sum, _) = &cmp.kind else { panic!() };
        let ExprKind::Binary(BinOp::Add, _, prod) = &sum.kind else { panic!() };
        assert!(matches!(prod.kind, ExprKind::Binary(BinOp::Mul, _, _)));
    }

    #[test]
    fn subtraction_is_left_associative() {
        let p = parse("x = 8 - 2 - 1;").unwrap();
        let StmtKind::Assign { value, .. } = &p.stmts[0].kind else { panic!() };
        let ExprKind::Binary(BinOp::Sub, lhs, rhs) = &value.kind else { panic!() };
        assert!(matches!(lhs.kind, ExprKind::Binary(BinOp::Sub, _, _)));
        assert_eq!(rhs.kind, ExprKind::Number(1.0));
    }

    #[test]
    fn control_flow() {
        let src = r#"
            if a { x = 1; } else if b { x = 2; } else { x = 3; }
            for t in triples { output += t.obj; }
        "#;
        let p = parse(src).unwrap();
        let StmtKind::If { branches, otherwise } = &p.stmts[0].kind else { panic!() };
        assert_eq!(branches.len(), 2);
        assert!(otherwise.is_some());
        assert!(matches!(p.stmts[1].kind, StmtKind::For { .. }));
    }

    #[test]
    fn literals() {
        let p = parse(r#"m = {"01": "January", "02": "February",}; l = [1, "a", true];"#).unwrap();
        let StmtKind::Assign { value, .. } = &p.stmts[0].kind else { panic!() };
        assert!(matches!(&value.kind, ExprKind::Map(e) if e.len() == 2));
    }

    #[test]
    fn rejects() {
        for bad in [
            "x = foo(1);",
            "x = len(1, 2);",
            "x = t.name;",
            "print(output);",
            r#"m = {"a": 1, "a": 2};"#,
            "if x { y = 1;",
            "x = 1",
            "let = 3;",
            r#"x = "{1 2}";"#,
            "x = 'single';",
        ] {
            assert!(parse(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn interpolation_spans_are_absolute() {
        let err = parse("x = \"ok {triples[}\";").unwrap_err();
        assert!(err.span.start.offset > 8, "{:?}", err.span);
    }
}

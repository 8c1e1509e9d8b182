use super::ast::{Pos, Span};
use super::ParseError;

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Tok {
    Ident(String),
    Number(f64),
    Str(Vec<RawPart>),
    Let,
    If,
    Else,
    For,
    In,
    True,
    False,
    And,
    Or,
    Not,
    Assign,
    PlusAssign,
    EqEq,
    NotEq,
    Lt,
    Le,
    Gt,
    Ge,
    Plus,
    Minus,
    Star,
    Slash,
    LParen,
    RParen,
    LBracket,
    RBracket,
    LBrace,
    RBrace,
    Comma,
    Semi,
    Colon,
    Dot,
    Eof,
}

impl Tok {
    pub(crate) fn describe(&self) -> String {
        match self {
            Tok::Ident(name) => format!("identifier `{name}`"),
            Tok::Number(_) => "number".into(),
            Tok::Str(_) => "string".into(),
            Tok::Eof => "end of input".into(),
            other => format!("`{}`", other.text()),
        }
    }

    fn text(&self) -> &'static str {
        match self {
            Tok::Let => "let",
            Tok::If => "if",
            Tok::Else => "else",
            Tok::For => "for",
            Tok::In => "in",
            Tok::True => "true",
            Tok::False => "false",
            Tok::And => "and",
            Tok::Or => "or",
            Tok::Not => "not",
            Tok::Assign => "=",
            Tok::PlusAssign => "+=",
            Tok::EqEq => "==",
            Tok::NotEq => "!=",
            Tok::Lt => "<",
            Tok::Le => "<=",
            Tok::Gt => ">",
            Tok::Ge => ">=",
            Tok::Plus => "+",
            Tok::Minus => "-",
            Tok::Star => "*",
            Tok::Slash => "/",
            Tok::LParen => "(",
            Tok::RParen => ")",
            Tok::LBracket => "[",
            Tok::RBracket => "]",
            Tok::LBrace => "{",
            Tok::RBrace => "}",
            Tok::Comma => ",",
            Tok::Semi => ";",
            Tok::Colon => ":",
            Tok::Dot => ".",
            Tok::Ident(_) | Tok::Number(_) | Tok::Str(_) | Tok::Eof => "",
        }
    }
}

/// A piece of a string literal before its interpolations are parsed.
#[derive(Debug, Clone, PartialEq)]
pub(crate) enum RawPart {
    Lit(String),
    /// Source range of the embedded expression, excluding braces and format spec.
    Interp { start: Pos, end: Pos, precision: Option<u32> },
}

#[derive(Debug, Clone)]
pub(crate) struct Token {
    pub tok: Tok,
    pub span: Span,
}

pub(crate) struct Lexer<'a> {
    src: &'a str,
    end: usize,
    pos: Pos,
}

impl<'a> Lexer<'a> {
    pub fn new(src: &'a str) -> Self {
        Self::over(src, Pos { offset: 0, line: 1, col: 1 }, src.len())
    }

    /// Lexes only `src[start.offset..end]`, reporting absolute positions.
    pub fn over(src: &'a str, start: Pos, end: usize) -> Self {
        Self { src, end, pos: start }
    }

    pub fn tokenize(mut self) -> Result<Vec<Token>, ParseError> {
        let mut out = Vec::new();
        loop {
            self.skip_trivia();
            let start = self.pos;
            let Some(c) = self.peek() else {
                out.push(Token { tok: Tok::Eof, span: Span { start, end: start } });
                return Ok(out);
            };
            let tok = match c {
                '"' => {
                    self.bump();
                    Tok::Str(self.string_body(start)?)
                }
                c if c.is_ascii_digit() => self.number(),
                c if c.is_alphabetic() || c == '_' => self.word(),
                _ => self.punct(start)?,
            };
            out.push(Token { tok, span: Span { start, end: self.pos } });
        }
    }

    fn peek(&self) -> Option<char> {
        self.src[self.pos.offset..self.end].chars().next()
    }

    fn peek2(&self) -> Option<char> {
        let mut it = self.src[self.pos.offset..self.end].chars();
        it.next();
        it.next()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek()?;
        self.pos.offset += c.len_utf8();
        if c == '\n' {
            self.pos.line += 1;
            self.pos.col = 1;
        } else {
            self.pos.col += 1;
        }
        Some(c)
    }

    fn error(&self, start: Pos, message: impl Into<String>) -> ParseError {
        ParseError { span: Span { start, end: self.pos }, message: message.into() }
    }

    fn skip_trivia(&mut self) {
        loop {
            match self.peek() {
                Some(c) if c.is_whitespace() => {
                    self.bump();
                }
                Some('#') => self.skip_line(),
                Some('/') if self.peek2() == Some('/') => self.skip_line(),
                _ => return,
            }
        }
    }

    fn skip_line(&mut self) {
        while let Some(c) = self.peek() {
            if c == '\n' {
                break;
            }
            self.bump();
        }
    }

    fn number(&mut self) -> Tok {
        let start = self.pos.offset;
        while self.peek().is_some_and(|c| c.is_ascii_digit()) {
            self.bump();
        }
        if self.peek() == Some('.') && self.peek2().is_some_and(|c| c.is_ascii_digit()) {
            self.bump();
            while self.peek().is_some_and(|c| c.is_ascii_digit()) {
                self.bump();
            }
        }
        Tok::Number(self.src[start..self.pos.offset].parse().expect("digits parse as f64"))
    }

    fn word(&mut self) -> Tok {
        let start = self.pos.offset;
        while self.peek().is_some_and(|c| c.is_alphanumeric() || c == '_') {
            self.bump();
        }
        match &self.src[start..self.pos.offset] {
            "let" => Tok::Let,
            "if" => Tok::If,
            "else" => Tok::Else,
            "for" => Tok::For,
            "in" => Tok::In,
            "true" => Tok::True,
            "false" => Tok::False,
            "and" => Tok::And,
            "or" => Tok::Or,
            "not" => Tok::Not,
            w => Tok::Ident(w.to_string()),
        }
    }

    fn punct(&mut self, start: Pos) -> Result<Tok, ParseError> {
        let c = self.bump().expect("caller peeked");
        let next_is_eq = self.peek() == Some('=');
        let tok = match c {
            '=' if next_is_eq => Tok::EqEq,
            '=' => Tok::Assign,
            '+' if next_is_eq => Tok::PlusAssign,
            '+' => Tok::Plus,
            '!' if next_is_eq => Tok::NotEq,
            '<' if next_is_eq => Tok::Le,
            '<' => Tok::Lt,
            '>' if next_is_eq => Tok::Ge,
            '>' => Tok::Gt,
            '-' => Tok::Minus,
            '*' => Tok::Star,
            '/' => Tok::Slash,
            '(' => Tok::LParen,
            ')' => Tok::RParen,
            '[' => Tok::LBracket,
            ']' => Tok::RBracket,
            '{' => Tok::LBrace,
            '}' => Tok::RBrace,
            ',' => Tok::Comma,
            ';' => Tok::Semi,
            ':' => Tok::Colon,
            '.' => Tok::Dot,
            '\'' => return Err(self.error(start, "text literals use double quotes")),
            other => return Err(self.error(start, format!("unexpected character {other:?}"))),
        };
        if matches!(tok, Tok::EqEq | Tok::PlusAssign | Tok::NotEq | Tok::Le | Tok::Ge) {
            self.bump();
        }
        Ok(tok)
    }

    /// Scans a string literal after its opening quote.
    fn string_body(&mut self, open: Pos) -> Result<Vec<RawPart>, ParseError> {
        let mut parts = Vec::new();
        let mut lit = String::new();
        loop {
            let here = self.pos;
            let Some(c) = self.bump() else {
                return Err(self.error(open, "unterminated text literal"));
            };
            match c {
                '"' => break,
                '\\' => {
                    let esc = match self.bump() {
                        Some('n') => '\n',
                        Some('t') => '\t',
                        Some('r') => '\r',
                        Some('"') => '"',
                        Some('\\') => '\\',
                        Some('{') => '{',
                        Some('}') => '}',
                        Some(other) => {
                            return Err(self.error(here, format!("unknown escape `\\{other}`")))
                        }
                        None => return Err(self.error(open, "unterminated text literal")),
                    };
                    lit.push(esc);
                }
                '{' if self.peek() == Some('{') => {
                    self.bump();
                    lit.push('{');
                }
                '}' if self.peek() == Some('}') => {
                    self.bump();
                    lit.push('}');
                }
                '{' => {
                    if !lit.is_empty() {
                        parts.push(RawPart::Lit(std::mem::take(&mut lit)));
                    }
                    parts.push(self.interpolation(here)?);
                }
                '}' => return Err(self.error(here, "single `}` in text literal; write `}}`")),
                c => lit.push(c),
            }
        }
        if !lit.is_empty() {
            parts.push(RawPart::Lit(lit));
        }
        Ok(parts)
    }

    /// Scans `expr}` or `expr:.Nf}` after an opening interpolation brace.
    fn interpolation(&mut self, open: Pos) -> Result<RawPart, ParseError> {
        let start = self.pos;
        let mut depth = 0usize;
        loop {
            let here = self.pos;
            match self.peek() {
                None => return Err(self.error(open, "unterminated interpolation")),
                Some('"') => {
                    self.bump();
                    self.string_body(here)?;
                }
                Some('(' | '[' | '{') => {
                    depth += 1;
                    self.bump();
                }
                Some(')' | ']') => {
                    depth = depth.saturating_sub(1);
                    self.bump();
                }
                Some('}') if depth > 0 => {
                    depth -= 1;
                    self.bump();
                }
                Some('}') | Some(':') if depth == 0 => {
                    let end = self.pos;
                    if self.src[start.offset..end.offset].trim().is_empty() {
                        return Err(self.error(open, "empty interpolation"));
                    }
                    let precision =
                        if self.bump() == Some(':') { Some(self.format_spec(here)?) } else { None };
                    return Ok(RawPart::Interp { start, end, precision });
                }
                Some(_) => {
                    self.bump();
                }
            }
        }
    }

    /// Parses `.Nf}` after the colon.
    fn format_spec(&mut self, colon: Pos) -> Result<u32, ParseError> {
        let bad = |lx: &Self| lx.error(colon, "unsupported format spec; only `:.Nf` is allowed");
        if self.bump() != Some('.') {
            return Err(bad(self));
        }
        let digits_start = self.pos.offset;
        while self.peek().is_some_and(|c| c.is_ascii_digit()) {
            self.bump();
        }
        let digits = &self.src[digits_start..self.pos.offset];
        if digits.is_empty() || self.bump() != Some('f') || self.bump() != Some('}') {
            return Err(bad(self));
        }
        digits.parse::<u32>().ok().filter(|n| *n <= 20).ok_or_else(|| bad(self))
    }
}

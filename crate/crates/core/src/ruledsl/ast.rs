use std::fmt;

/// A source position. `line` and `col` are 1-based, `col` counts chars.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Pos {
    pub offset: usize,
    pub line: u32,
    pub col: u32,
}

/// Source range of a node.
///
/// Spans never take part in structural equality, so an AST re-parsed from
/// its canonical print compares equal to the original.
#[derive(Debug, Clone, Copy, Default)]
pub struct Span {
    pub start: Pos,
    pub end: Pos,
}

impl PartialEq for Span {
    fn eq(&self, _: &Self) -> bool {
        true
    }
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.start.line, self.start.col)
    }
}

impl Span {
    pub(crate) fn to(self, other: Span) -> Span {
        Span { start: self.start, end: other.end }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Program {
    pub stmts: Vec<Stmt>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stmt {
    pub kind: StmtKind,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq)]
pub enum StmtKind {
    Let { name: String, value: Expr },
    Assign { name: String, value: Expr },
    AddAssign { name: String, value: Expr },
    If { branches: Vec<(Expr, Vec<Stmt>)>, otherwise: Option<Vec<Stmt>> },
    For { var: String, iter: Expr, body: Vec<Stmt> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Expr {
    pub kind: ExprKind,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ExprKind {
    Text(Vec<TextPart>),
    Number(f64),
    Bool(bool),
    List(Vec<Expr>),
    Map(Vec<(String, Expr)>),
    Var(String),
    Field(Box<Expr>, TripleField),
    Index(Box<Expr>, Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Not(Box<Expr>),
    Call(Builtin, Vec<Expr>),
}

#[derive(Debug, Clone, PartialEq)]
pub enum TextPart {
    Lit(String),
    /// `{expr}` or `{expr:.Nf}`.
    Interp { expr: Expr, precision: Option<u32> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TripleField {
    Subj,
    Pred,
    Obj,
}

impl TripleField {
    pub fn name(self) -> &'static str {
        match self {
            TripleField::Subj => "subj",
            TripleField::Pred => "pred",
            TripleField::Obj => "obj",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    And,
    Or,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Eq => "==",
            BinOp::Ne => "!=",
            BinOp::Lt => "<",
            BinOp::Le => "<=",
            BinOp::Gt => ">",
            BinOp::Ge => ">=",
            BinOp::And => "and",
            BinOp::Or => "or",
        }
    }

    /// Binding strength; higher binds tighter.
    pub(crate) fn precedence(self) -> u8 {
        match self {
            BinOp::Or => prec::OR,
            BinOp::And => prec::AND,
            BinOp::Eq | BinOp::Ne | BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge => prec::CMP,
            BinOp::Add | BinOp::Sub => prec::ADD,
            BinOp::Mul | BinOp::Div => prec::MUL,
        }
    }
}

pub(crate) mod prec {
    pub const OR: u8 = 1;
    pub const AND: u8 = 2;
    pub const NOT: u8 = 3;
    pub const CMP: u8 = 4;
    pub const ADD: u8 = 5;
    pub const MUL: u8 = 6;
    pub const POSTFIX: u8 = 7;
}

impl Expr {
    pub(crate) fn precedence(&self) -> u8 {
        match &self.kind {
            ExprKind::Binary(op, _, _) => op.precedence(),
            ExprKind::Not(_) => prec::NOT,
            _ => prec::POSTFIX,
        }
    }
}

macro_rules! builtins {
    ($($variant:ident => $name:literal / $arity:literal),* $(,)?) => {
        #[derive(Debug, Clone, Copy, PartialEq, Eq)]
        pub enum Builtin {
            $($variant),*
        }

        impl Builtin {
            pub const ALL: &'static [Builtin] = &[$(Builtin::$variant),*];

            pub fn name(self) -> &'static str {
                match self {
                    $(Builtin::$variant => $name),*
                }
            }

            pub fn arity(self) -> usize {
                match self {
                    $(Builtin::$variant => $arity),*
                }
            }

            pub fn from_name(name: &str) -> Option<Builtin> {
                match name {
                    $($name => Some(Builtin::$variant),)*
                    _ => None,
                }
            }
        }
    };
}

builtins! {
    Lower => "lower" / 1,
    Upper => "upper" / 1,
    Capitalize => "capitalize" / 1,
    Title => "title" / 1,
    Trim => "trim" / 1,
    Replace => "replace" / 3,
    Split => "split" / 2,
    Join => "join" / 2,
    Len => "len" / 1,
    Str => "str" / 1,
    Num => "num" / 1,
    Contains => "contains" / 2,
    StartsWith => "startswith" / 2,
    EndsWith => "endswith" / 2,
    Find => "find" / 2,
    FilterPred => "filter_pred" / 2,
    Has => "has" / 2,
}

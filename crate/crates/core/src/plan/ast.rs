use std::fmt;

use serde::Serialize;

/// Source position (1-based). Spans never take part in equality, so
/// re-parsed plans compare equal to the originals.
#[derive(Clone, Copy, Debug, Default, Serialize)]
pub struct Span {
    pub line: usize,
    pub column: usize,
}

impl PartialEq for Span {
    fn eq(&self, _: &Self) -> bool {
        true
    }
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.column)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Plan {
    pub params: Vec<Param>,
    pub statements: Vec<Statement>,
    pub return_var: String,
    pub return_span: Span,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Param {
    pub name: String,
    pub value: f64,
    pub span: Span,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Statement {
    pub kind: StatementKind,
    pub span: Span,
}

#[derive(Clone, Debug, PartialEq)]
pub enum StatementKind {
    Let { bind: String, action: Action },
    Debug { label: String, var: String },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CombineOp {
    WeightedSum,
    Max,
    Min,
    Product,
}

impl CombineOp {
    pub fn keyword(self) -> &'static str {
        match self {
            CombineOp::WeightedSum => "weighted_sum",
            CombineOp::Max => "max",
            CombineOp::Min => "min",
            CombineOp::Product => "product",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Comparator {
    Gt,
    Ge,
}

impl Comparator {
    pub fn symbol(self) -> &'static str {
        match self {
            Comparator::Gt => ">",
            Comparator::Ge => ">=",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Action {
    ToolCall { tool: String, args: Vec<Arg> },
    /// `weights` is empty for every op except `weighted_sum`.
    Combine { op: CombineOp, inputs: Vec<String>, weights: Vec<Expr> },
    Normalize { input: String },
    Filter { input: String, cmp: Comparator, threshold: Expr },
    Scale { input: String, factor: Expr },
}

impl Action {
    /// Variables read by this action, in source order.
    pub fn inputs(&self) -> Vec<&str> {
        match self {
            Action::ToolCall { args, .. } => {
                let mut out = Vec::new();
                for a in args {
                    a.collect_vars(&mut out);
                }
                out
            }
            Action::Combine { inputs, weights, .. } => {
                let mut out: Vec<&str> = inputs.iter().map(String::as_str).collect();
                for w in weights {
                    w.collect_vars(&mut out);
                }
                out
            }
            Action::Normalize { input } => vec![input.as_str()],
            Action::Filter { input, threshold: e, .. } | Action::Scale { input, factor: e } => {
                let mut out = vec![input.as_str()];
                e.collect_vars(&mut out);
                out
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Arg {
    Str(String),
    Number(f64),
    Query,
    Candidates,
    Var(String),
    List(Vec<Arg>),
}

impl Arg {
    fn collect_vars<'a>(&'a self, out: &mut Vec<&'a str>) {
        match self {
            Arg::Var(v) => out.push(v),
            Arg::List(items) => items.iter().for_each(|a| a.collect_vars(out)),
            _ => {}
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
        }
    }

    pub fn precedence(self) -> u8 {
        match self {
            BinOp::Add | BinOp::Sub => 1,
            BinOp::Mul | BinOp::Div => 2,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(String),
    Bin(BinOp, Box<Expr>, Box<Expr>),
}

impl Expr {
    fn collect_vars<'a>(&'a self, out: &mut Vec<&'a str>) {
        match self {
            Expr::Num(_) => {}
            Expr::Var(v) => out.push(v),
            Expr::Bin(_, l, r) => {
                l.collect_vars(out);
                r.collect_vars(out);
            }
        }
    }
}

impl Plan {
    /// Names bound by `let`, in order.
    pub fn bindings(&self) -> impl Iterator<Item = &str> {
        self.statements.iter().filter_map(|s| match &s.kind {
            StatementKind::Let { bind, .. } => Some(bind.as_str()),
            StatementKind::Debug { .. } => None,
        })
    }

    /// Tool names called, in statement order.
    pub fn tools(&self) -> impl Iterator<Item = &str> {
        self.statements.iter().filter_map(|s| match &s.kind {
            StatementKind::Let { action: Action::ToolCall { tool, .. }, .. } => Some(tool.as_str()),
            _ => None,
        })
    }
}

use std::collections::BTreeMap;
use std::fmt;

use serde::Serialize;

use super::ast::*;
use crate::kb::KbSchema;
use crate::tools::{ToolRegistry, ValueType};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum ViolationKind {
    UnknownTool,
    ArityMismatch,
    TypeMismatch,
    UndefinedVar,
    BadReturn,
    EmptyPlan,
    DuplicateBinding,
}

impl fmt::Display for ViolationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub kind: ViolationKind,
    /// Statement index; `statements.len()` for the return line.
    pub location: usize,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} at statement {}: {}", self.kind, self.location, self.message)
    }
}

/// Static type of an argument; `None` inside means "unknown, accept anything".
#[derive(Clone, Copy, Debug, PartialEq)]
enum Ty {
    Known(ValueType),
    Unknown,
    NumberLit { non_negative_int: bool },
}

fn accepts(want: ValueType, got: Ty) -> bool {
    match got {
        Ty::Unknown => true,
        Ty::Known(t) => t == want || (want == ValueType::Number && t == ValueType::Number),
        Ty::NumberLit { non_negative_int } => want == ValueType::Number || (want == ValueType::Id && non_negative_int),
    }
}

fn is_id_literal(n: f64) -> bool {
    n >= 0.0 && n.fract() == 0.0 && n <= u64::MAX as f64
}

struct Checker<'a> {
    registry: &'a ToolRegistry,
    schema: &'a KbSchema,
    params: BTreeMap<&'a str, ()>,
    vars: BTreeMap<&'a str, Option<ValueType>>,
    out: Vec<Violation>,
}

impl<'a> Checker<'a> {
    fn push(&mut self, kind: ViolationKind, location: usize, message: String) {
        self.out.push(Violation { kind, location, message });
    }

    fn var_type(&mut self, name: &str, at: usize) -> Ty {
        if let Some(t) = self.vars.get(name) {
            return t.map_or(Ty::Unknown, Ty::Known);
        }
        if self.params.contains_key(name) {
            return Ty::Known(ValueType::Number);
        }
        self.push(ViolationKind::UndefinedVar, at, format!("variable {name} is not defined before use"));
        Ty::Unknown
    }

    fn score_map_input(&mut self, name: &str, at: usize, op: &str) {
        match self.var_type(name, at) {
            Ty::Known(ValueType::ScoreMap) | Ty::Unknown => {}
            Ty::Known(t) => {
                self.push(ViolationKind::TypeMismatch, at, format!("{op} needs a score_map, but {name} is {t}"))
            }
            Ty::NumberLit { .. } => unreachable!(),
        }
    }

    fn expr(&mut self, e: &Expr, at: usize) {
        match e {
            Expr::Num(_) => {}
            Expr::Var(v) => match self.var_type(v, at) {
                Ty::Known(ValueType::Number) | Ty::Unknown => {}
                Ty::Known(t) => {
                    self.push(ViolationKind::TypeMismatch, at, format!("{v} is {t}, but expressions need a number"))
                }
                Ty::NumberLit { .. } => {}
            },
            Expr::Bin(_, l, r) => {
                self.expr(l, at);
                self.expr(r, at);
            }
        }
    }

    fn arg_type(&mut self, a: &Arg, at: usize) -> Ty {
        match a {
            Arg::Str(_) | Arg::Query => Ty::Known(ValueType::Text),
            Arg::Number(n) => Ty::NumberLit { non_negative_int: is_id_literal(*n) },
            Arg::Candidates => Ty::Known(ValueType::IdList),
            Arg::Var(v) => self.var_type(v, at),
            Arg::List(items) => {
                let tys: Vec<Ty> = items.iter().map(|i| self.arg_type(i, at)).collect();
                list_type(&tys)
            }
        }
    }

    fn tool_call(&mut self, tool: &str, args: &[Arg], at: usize) -> Option<ValueType> {
        let Some(spec) = self.registry.lookup(tool) else {
            for a in args {
                self.arg_type(a, at);
            }
            self.push(ViolationKind::UnknownTool, at, format!("tool {tool} is not in the registry"));
            return None;
        };
        let tys: Vec<Ty> = args.iter().map(|a| self.arg_type(a, at)).collect();
        if args.len() != spec.params.len() {
            self.push(
                ViolationKind::ArityMismatch,
                at,
                format!("{tool} takes {} arguments, got {}", spec.params.len(), args.len()),
            );
            return Some(spec.returns);
        }
        for ((p, ty), a) in spec.params.iter().zip(tys).zip(args) {
            let ok = match (p.ty, a, ty) {
                (ValueType::TextList | ValueType::IdList | ValueType::Vector, Arg::List(items), _) if items.is_empty() => true,
                (want, _, Ty::Known(ValueType::Vector)) if matches!(a, Arg::List(_)) => {
                    // numeric list literal: vector, or id list when every entry is an id literal
                    want == ValueType::Vector
                        || (want == ValueType::IdList
                            && matches!(a, Arg::List(items) if items.iter().all(|i| matches!(i, Arg::Number(n) if is_id_literal(*n)))))
                }
                (want, _, got) => accepts(want, got),
            };
            if !ok {
                self.push(
                    ViolationKind::TypeMismatch,
                    at,
                    format!("{tool} parameter {} expects {}, got {}", p.name, p.ty, describe(ty)),
                );
            }
            if p.name == "type" {
                if let Arg::Str(s) = a {
                    if !self.schema.entity_types.iter().any(|t| t == s) {
                        self.push(ViolationKind::TypeMismatch, at, format!("{tool}: {s:?} is not an entity type of this knowledge base"));
                    }
                }
            }
        }
        Some(spec.returns)
    }
}

fn list_type(tys: &[Ty]) -> Ty {
    if tys.is_empty() {
        return Ty::Unknown;
    }
    if tys.iter().all(|t| matches!(t, Ty::Known(ValueType::Text) | Ty::Unknown)) {
        return Ty::Known(ValueType::TextList);
    }
    if tys.iter().all(|t| matches!(t, Ty::Known(ValueType::Id) | Ty::Unknown)) {
        return Ty::Known(ValueType::IdList);
    }
    if tys.iter().all(|t| matches!(t, Ty::NumberLit { .. } | Ty::Known(ValueType::Number) | Ty::Unknown)) {
        return Ty::Known(ValueType::Vector);
    }
    Ty::Known(ValueType::Map)
}

fn describe(t: Ty) -> String {
    match t {
        Ty::Known(t) => t.to_string(),
        Ty::Unknown => "unknown".into(),
        Ty::NumberLit { .. } => "number".into(),
    }
}

/// Static check; an empty result means execution yields a score map over the candidates.
pub fn validate_plan(plan: &Plan, registry: &ToolRegistry, schema: &KbSchema) -> Vec<Violation> {
    let mut c = Checker { registry, schema, params: BTreeMap::new(), vars: BTreeMap::new(), out: Vec::new() };
    let n = plan.statements.len();
    for p in &plan.params {
        if c.params.insert(p.name.as_str(), ()).is_some() {
            c.push(ViolationKind::DuplicateBinding, 0, format!("parameter {} is declared twice", p.name));
        }
    }
    if plan.bindings().next().is_none() {
        c.push(ViolationKind::EmptyPlan, n, "the plan has no let statements".into());
    }
    for (i, s) in plan.statements.iter().enumerate() {
        match &s.kind {
            StatementKind::Debug { var, .. } => {
                c.var_type(var, i);
            }
            StatementKind::Let { bind, action } => {
                let ty = match action {
                    Action::ToolCall { tool, args } => c.tool_call(tool, args, i),
                    Action::Combine { op, inputs, weights } => {
                        for v in inputs {
                            c.score_map_input(v, i, op.keyword());
                        }
                        for w in weights {
                            c.expr(w, i);
                        }
                        if inputs.is_empty() {
                            c.push(ViolationKind::ArityMismatch, i, format!("{} needs at least one map", op.keyword()));
                        } else if *op == CombineOp::WeightedSum && inputs.len() != weights.len() {
                            c.push(
                                ViolationKind::ArityMismatch,
                                i,
                                format!("weighted_sum has {} maps but {} weights", inputs.len(), weights.len()),
                            );
                        }
                        Some(ValueType::ScoreMap)
                    }
                    Action::Normalize { input } => {
                        c.score_map_input(input, i, "normalize");
                        Some(ValueType::ScoreMap)
                    }
                    Action::Filter { input, threshold: e, .. } | Action::Scale { input, factor: e } => {
                        let op = if matches!(action, Action::Filter { .. }) { "filter" } else { "scale" };
                        c.score_map_input(input, i, op);
                        c.expr(e, i);
                        Some(ValueType::ScoreMap)
                    }
                };
                if c.vars.contains_key(bind.as_str()) || c.params.contains_key(bind.as_str()) {
                    c.push(ViolationKind::DuplicateBinding, i, format!("{bind} is already bound"));
                }
                c.vars.insert(bind.as_str(), ty);
            }
        }
    }
    match c.vars.get(plan.return_var.as_str()) {
        None => {
            let kind =
                if c.params.contains_key(plan.return_var.as_str()) { ViolationKind::BadReturn } else { ViolationKind::UndefinedVar };
            c.push(kind, n, format!("return variable {} is not a defined score map", plan.return_var));
        }
        Some(Some(t)) if *t != ValueType::ScoreMap => {
            c.push(ViolationKind::BadReturn, n, format!("return variable {} is {t}, not a score_map", plan.return_var));
        }
        _ => {}
    }
    c.out
}

#[cfg(test)]
mod tests {
    use super::super::parse_plan;
    use super::*;

    fn schema() -> KbSchema {
        KbSchema {
            entity_types: vec!["product".into(), "brand".into()],
            relation_types: vec![],
            candidate_types: vec!["product".into()],
            description: String::new(),
        }
    }

    fn check(src: &str) -> Vec<Violation> {
        validate_plan(&parse_plan(src).unwrap(), &ToolRegistry::stark(), &schema())
    }

    fn kinds(src: &str) -> Vec<ViolationKind> {
        check(src).into_iter().map(|v| v.kind).collect()
    }

    #[test]
    fn clean_plan() {
        assert_eq!(
            check("param w = 0.7\nlet a = ComputeExactMatchScore(query, candidates)\nlet b = TokenMatchScore(\"red\", candidates)\nlet c = weighted_sum([a, b], [w, 1 - w])\ndebug(\"c\", c)\nreturn c"),
            vec![]
        );
    }

    #[test]
    fn unknown_tool_is_reported_once() {
        let v = check("let a = Foo(query, candidates)\nlet b = normalize(a)\nreturn b");
        assert_eq!(v.len(), 1);
        assert_eq!((v[0].kind, v[0].location), (ViolationKind::UnknownTool, 0));
        assert!(v[0].message.contains("Foo"));
    }

    #[test]
    fn arity_and_types() {
        assert_eq!(
            kinds("let a = ComputeExactMatchScore(query, candidates)\nlet b = weighted_sum([a, a], [1, 2, 3])\nreturn b"),
            vec![ViolationKind::ArityMismatch]
        );
        assert_eq!(kinds("let a = ComputeExactMatchScore(query)\nreturn a"), vec![ViolationKind::ArityMismatch]);
        assert_eq!(kinds("let a = ComputeExactMatchScore(candidates, query)\nreturn a"), vec![ViolationKind::TypeMismatch; 2]);
        assert_eq!(kinds("let a = GetFullInfo(3)\nreturn a"), vec![ViolationKind::BadReturn]);
        assert_eq!(kinds("let a = GetEntityIdsByType(\"planet\")\nlet b = ComputeExactMatchScore(query, a)\nreturn b"), vec![ViolationKind::TypeMismatch]);
        assert_eq!(kinds("let a = GetEntityIdsByType(\"product\")\nlet b = ComputeExactMatchScore(query, a)\nreturn b"), vec![]);
        assert_eq!(kinds("let a = GetEntityDocuments([1, 2])\nlet b = ComputeExactMatchScore(query, [3])\nreturn b"), vec![]);
    }

    #[test]
    fn undefined_and_duplicates() {
        assert_eq!(kinds("return a"), vec![ViolationKind::EmptyPlan, ViolationKind::UndefinedVar]);
        assert_eq!(
            kinds("let a = ComputeExactMatchScore(query, candidates)\nlet b = scale(a, w)\nreturn b"),
            vec![ViolationKind::UndefinedVar]
        );
        assert_eq!(
            kinds("let a = ComputeExactMatchScore(query, candidates)\nlet a = normalize(a)\nreturn a"),
            vec![ViolationKind::DuplicateBinding]
        );
        let v = check("let a = ComputeExactMatchScore(query, candidates)\nreturn z");
        assert_eq!((v[0].kind, v[0].location), (ViolationKind::UndefinedVar, 1));
    }
}

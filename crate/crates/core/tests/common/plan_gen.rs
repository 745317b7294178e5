#![allow(dead_code)]

use planopt::plan::{is_keyword, Action, Arg, BinOp, CombineOp, Comparator, Expr, Param, Plan, Span, Statement, StatementKind};
use rand::seq::SliceRandom;
use rand::Rng;

const SP: Span = Span { line: 0, column: 0 };

fn ident(rng: &mut impl Rng, prefix: &str) -> String {
    loop {
        let len = rng.gen_range(1..6);
        let mut s = String::from(prefix);
        for _ in 0..len {
            s.push(*b"abcdefghijklmnopqrstuvwxyz_0123456789".choose(rng).unwrap() as char);
        }
        if s.chars().next().is_some_and(|c| c.is_ascii_alphabetic() || c == '_') && !is_keyword(&s) {
            return s;
        }
    }
}

fn number(rng: &mut impl Rng) -> f64 {
    match rng.gen_range(0..4) {
        0 => rng.gen_range(0..100) as f64,
        1 => -(rng.gen_range(1..100) as f64) / 8.0,
        2 => rng.gen::<f64>(),
        _ => rng.gen_range(-1e6..1e6),
    }
}

fn string(rng: &mut impl Rng) -> String {
    let pieces = ["red", " ", "\"", "\\", "\n", "\t", "é", "colour", "#", "[x]", "=", ","];
    (0..rng.gen_range(0..6)).map(|_| *pieces.choose(rng).unwrap()).collect()
}

fn expr(rng: &mut impl Rng, vars: &[String], depth: u32) -> Expr {
    if depth == 0 || rng.gen_bool(0.4) {
        return match (rng.gen_bool(0.5), vars.choose(rng)) {
            (true, Some(v)) => Expr::Var(v.clone()),
            _ => Expr::Num(number(rng)),
        };
    }
    let op = *[BinOp::Add, BinOp::Sub, BinOp::Mul, BinOp::Div].choose(rng).unwrap();
    Expr::Bin(op, Box::new(expr(rng, vars, depth - 1)), Box::new(expr(rng, vars, depth - 1)))
}

fn arg(rng: &mut impl Rng, vars: &[String], nested: bool) -> Arg {
    match rng.gen_range(0..if nested { 5 } else { 6 }) {
        0 => Arg::Str(string(rng)),
        1 => Arg::Number(number(rng)),
        2 => Arg::Query,
        3 => Arg::Candidates,
        4 => vars.choose(rng).map_or(Arg::Query, |v| Arg::Var(v.clone())),
        _ => Arg::List((0..rng.gen_range(0..4)).map(|_| arg(rng, vars, true)).collect()),
    }
}

/// A syntactically valid plan; it need not pass validation.
pub fn random_plan(rng: &mut impl Rng) -> Plan {
    let params: Vec<Param> =
        (0..rng.gen_range(0..3)).map(|i| Param { name: ident(rng, &format!("p{i}_")), value: number(rng), span: SP }).collect();
    let mut scope: Vec<String> = params.iter().map(|p| p.name.clone()).collect();
    let mut statements = Vec::new();
    for i in 0..rng.gen_range(1..7) {
        let pick = |rng: &mut dyn rand::RngCore, scope: &[String]| scope.choose(rng).cloned().unwrap_or_else(|| "x".into());
        if !scope.is_empty() && rng.gen_bool(0.1) {
            statements.push(Statement { kind: StatementKind::Debug { label: string(rng), var: pick(rng, &scope) }, span: SP });
            continue;
        }
        let action = match rng.gen_range(0..5) {
            0 => Action::ToolCall {
                tool: ident(rng, "Tool"),
                args: (0..rng.gen_range(0..4)).map(|_| arg(rng, &scope, false)).collect(),
            },
            1 => {
                let op = *[CombineOp::WeightedSum, CombineOp::Max, CombineOp::Min, CombineOp::Product].choose(rng).unwrap();
                let n = rng.gen_range(1..4);
                let inputs: Vec<String> = (0..n).map(|_| pick(rng, &scope)).collect();
                let weights = if op == CombineOp::WeightedSum { (0..n).map(|_| expr(rng, &scope, 2)).collect() } else { Vec::new() };
                Action::Combine { op, inputs, weights }
            }
            2 => Action::Normalize { input: pick(rng, &scope) },
            3 => Action::Filter {
                input: pick(rng, &scope),
                cmp: if rng.gen_bool(0.5) { Comparator::Gt } else { Comparator::Ge },
                threshold: expr(rng, &scope, 3),
            },
            _ => Action::Scale { input: pick(rng, &scope), factor: expr(rng, &scope, 3) },
        };
        let bind = ident(rng, &format!("v{i}_"));
        scope.push(bind.clone());
        statements.push(Statement { kind: StatementKind::Let { bind, action }, span: SP });
    }
    let return_var = scope.last().cloned().unwrap_or_else(|| "x".into());
    Plan { params, statements, return_var, return_span: SP }
}

use super::ast::*;

fn number(n: f64) -> String {
    format!("{n}")
}

fn string(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

fn arg(a: &Arg) -> String {
    match a {
        Arg::Str(s) => string(s),
        Arg::Number(n) => number(*n),
        Arg::Query => "query".into(),
        Arg::Candidates => "candidates".into(),
        Arg::Var(v) => v.clone(),
        Arg::List(items) => format!("[{}]", items.iter().map(arg).collect::<Vec<_>>().join(", ")),
    }
}

/// Infix form with only the parentheses the grammar needs.
pub fn render_expr(e: &Expr) -> String {
    match e {
        Expr::Num(n) => number(*n),
        Expr::Var(v) => v.clone(),
        Expr::Bin(op, l, r) => {
            let wrap = |e: &Expr, right: bool| {
                let s = render_expr(e);
                match e {
                    Expr::Bin(inner, ..)
                        if inner.precedence() < op.precedence() || (right && inner.precedence() == op.precedence()) =>
                    {
                        format!("({s})")
                    }
                    _ => s,
                }
            };
            format!("{} {} {}", wrap(l, false), op.symbol(), wrap(r, true))
        }
    }
}

fn action(a: &Action) -> String {
    match a {
        Action::ToolCall { tool, args } => {
            format!("{tool}({})", args.iter().map(arg).collect::<Vec<_>>().join(", "))
        }
        Action::Combine { op: CombineOp::WeightedSum, inputs, weights } => format!(
            "weighted_sum([{}], [{}])",
            inputs.join(", "),
            weights.iter().map(render_expr).collect::<Vec<_>>().join(", ")
        ),
        Action::Combine { op, inputs, .. } => format!("{}([{}])", op.keyword(), inputs.join(", ")),
        Action::Normalize { input } => format!("normalize({input})"),
        Action::Filter { input, cmp, threshold } => {
            format!("filter({input}, {} {})", cmp.symbol(), render_expr(threshold))
        }
        Action::Scale { input, factor } => format!("scale({input}, {})", render_expr(factor)),
    }
}

pub fn render_statement(s: &Statement) -> String {
    match &s.kind {
        StatementKind::Let { bind, action: a } => format!("let {bind} = {}", action(a)),
        StatementKind::Debug { label, var } => format!("debug({}, {var})", string(label)),
    }
}

/// Canonical text: params, statements, then `return`, one per line, newline-terminated.
pub fn render_plan(plan: &Plan) -> String {
    let mut out = String::new();
    for p in &plan.params {
        out.push_str(&format!("param {} = {}\n", p.name, number(p.value)));
    }
    for s in &plan.statements {
        out.push_str(&render_statement(s));
        out.push('\n');
    }
    out.push_str(&format!("return {}\n", plan.return_var));
    out
}

#[cfg(test)]
mod tests {
    use super::super::parse_plan;
    use super::*;

    #[test]
    fn canonical_text() {
        let p = parse_plan("param w=0.50; let a = ExactMatch(query, candidates); return a").unwrap();
        assert_eq!(render_plan(&p), "param w = 0.5\nlet a = ExactMatch(query, candidates)\nreturn a\n");
    }

    #[test]
    fn minimal_parentheses() {
        for (src, want) in [
            ("(1 + 2) * w", "(1 + 2) * w"),
            ("1 + (2 * w)", "1 + 2 * w"),
            ("1 - (2 - w)", "1 - (2 - w)"),
            ("(1 - 2) - w", "1 - 2 - w"),
            ("w / (2 / 3)", "w / (2 / 3)"),
        ] {
            let p = parse_plan(&format!("let a = X(query)\nlet b = scale(a, {src})\nreturn b")).unwrap();
            match &p.statements[1].kind {
                StatementKind::Let { action: Action::Scale { factor, .. }, .. } => assert_eq!(render_expr(factor), want),
                _ => unreachable!(),
            }
        }
    }

    #[test]
    fn strings_escape_round_trip() {
        let src = "let a = X(\"say \\\"hi\\\"\\n\")\ndebug(\"a\\\\b\", a)\nreturn a\n";
        let p = parse_plan(src).unwrap();
        assert_eq!(render_plan(&p), src);
    }
}

use super::ast::*;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("syntax error at line {line}, column {column}: expected {}, found {found}", expected.join(" or "))]
pub struct SyntaxError {
    pub line: usize,
    pub column: usize,
    pub expected: Vec<String>,
    pub found: String,
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Ident(String),
    Number(f64),
    Str(String),
    LParen,
    RParen,
    LBracket,
    RBracket,
    Comma,
    Assign,
    Gt,
    Ge,
    Plus,
    Minus,
    Star,
    Slash,
    Sep,
    Eof,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("identifier `{s}`"),
            Tok::Number(n) => format!("number {n}"),
            Tok::Str(_) => "string literal".into(),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::LBracket => "`[`".into(),
            Tok::RBracket => "`]`".into(),
            Tok::Comma => "`,`".into(),
            Tok::Assign => "`=`".into(),
            Tok::Gt => "`>`".into(),
            Tok::Ge => "`>=`".into(),
            Tok::Plus => "`+`".into(),
            Tok::Minus => "`-`".into(),
            Tok::Star => "`*`".into(),
            Tok::Slash => "`/`".into(),
            Tok::Sep => "end of statement".into(),
            Tok::Eof => "end of plan".into(),
        }
    }
}

fn lex(src: &str) -> Result<Vec<(Tok, Span)>, SyntaxError> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0, 1, 1);
    let mut depth = 0usize;
    let err = |line, column, expected: &str, found: String| SyntaxError {
        line,
        column,
        expected: vec![expected.to_string()],
        found,
    };
    while i < chars.len() {
        let c = chars[i];
        let span = Span { line, column: col };
        let advance = |n: usize, i: &mut usize, col: &mut usize| {
            *i += n;
            *col += n;
        };
        match c {
            '\n' => {
                if depth == 0 {
                    out.push((Tok::Sep, span));
                }
                i += 1;
                line += 1;
                col = 1;
            }
            ';' => {
                out.push((Tok::Sep, span));
                advance(1, &mut i, &mut col);
            }
            c if c.is_whitespace() => advance(1, &mut i, &mut col),
            '#' => {
                while i < chars.len() && chars[i] != '\n' {
                    advance(1, &mut i, &mut col);
                }
            }
            '(' | '[' => {
                depth += 1;
                out.push((if c == '(' { Tok::LParen } else { Tok::LBracket }, span));
                advance(1, &mut i, &mut col);
            }
            ')' | ']' => {
                depth = depth.saturating_sub(1);
                out.push((if c == ')' { Tok::RParen } else { Tok::RBracket }, span));
                advance(1, &mut i, &mut col);
            }
            ',' => {
                out.push((Tok::Comma, span));
                advance(1, &mut i, &mut col);
            }
            '=' => {
                out.push((Tok::Assign, span));
                advance(1, &mut i, &mut col);
            }
            '>' => {
                if chars.get(i + 1) == Some(&'=') {
                    out.push((Tok::Ge, span));
                    advance(2, &mut i, &mut col);
                } else {
                    out.push((Tok::Gt, span));
                    advance(1, &mut i, &mut col);
                }
            }
            '+' | '-' | '*' | '/' => {
                let t = match c {
                    '+' => Tok::Plus,
                    '-' => Tok::Minus,
                    '*' => Tok::Star,
                    _ => Tok::Slash,
                };
                out.push((t, span));
                advance(1, &mut i, &mut col);
            }
            '"' => {
                let mut s = String::new();
                advance(1, &mut i, &mut col);
                loop {
                    match chars.get(i) {
                        None | Some('\n') => return Err(err(line, col, "closing `\"`", "end of line".into())),
                        Some('"') => {
                            advance(1, &mut i, &mut col);
                            break;
                        }
                        Some('\\') => {
                            let e = match chars.get(i + 1) {
                                Some('n') => '\n',
                                Some('t') => '\t',
                                Some('"') => '"',
                                Some('\\') => '\\',
                                other => {
                                    return Err(err(line, col, "escape sequence", format!("{other:?}")));
                                }
                            };
                            s.push(e);
                            advance(2, &mut i, &mut col);
                        }
                        Some(&ch) => {
                            s.push(ch);
                            advance(1, &mut i, &mut col);
                        }
                    }
                }
                out.push((Tok::Str(s), span));
            }
            c if c.is_ascii_digit() || (c == '.' && chars.get(i + 1).is_some_and(char::is_ascii_digit)) => {
                let start = i;
                while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                    advance(1, &mut i, &mut col);
                }
                if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                    let mut j = i + 1;
                    if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                        j += 1;
                    }
                    if j < chars.len() && chars[j].is_ascii_digit() {
                        while j < chars.len() && chars[j].is_ascii_digit() {
                            j += 1;
                        }
                        let n = j - i;
                        advance(n, &mut i, &mut col);
                    }
                }
                let text: String = chars[start..i].iter().collect();
                let n: f64 = text.parse().map_err(|_| err(span.line, span.column, "number", text.clone()))?;
                out.push((Tok::Number(n), span));
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let start = i;
                while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                    advance(1, &mut i, &mut col);
                }
                out.push((Tok::Ident(chars[start..i].iter().collect()), span));
            }
            other => return Err(err(line, col, "a token", format!("character {other:?}"))),
        }
    }
    out.push((Tok::Eof, Span { line, column: col }));
    Ok(out)
}

const KEYWORDS: &[&str] = &[
    "param",
    "let",
    "return",
    "debug",
    "query",
    "candidates",
    "weighted_sum",
    "max",
    "min",
    "product",
    "normalize",
    "filter",
    "scale",
    // reserved, no combinator yet
    "idf_weight",
];

pub fn is_keyword(s: &str) -> bool {
    KEYWORDS.contains(&s)
}

struct Parser {
    toks: Vec<(Tok, Span)>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }

    fn span(&self) -> Span {
        self.toks[self.pos].1
    }

    fn bump(&mut self) -> (Tok, Span) {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn error<T>(&self, expected: &[&str]) -> Result<T, SyntaxError> {
        let span = self.span();
        Err(SyntaxError {
            line: span.line,
            column: span.column,
            expected: expected.iter().map(|s| s.to_string()).collect(),
            found: self.peek().describe(),
        })
    }

    fn expect(&mut self, tok: Tok, what: &str) -> Result<Span, SyntaxError> {
        if *self.peek() == tok {
            Ok(self.bump().1)
        } else {
            self.error(&[what])
        }
    }

    fn ident(&mut self, what: &str) -> Result<(String, Span), SyntaxError> {
        match self.peek().clone() {
            Tok::Ident(s) if !is_keyword(&s) => {
                let span = self.bump().1;
                Ok((s, span))
            }
            _ => self.error(&[what]),
        }
    }

    fn keyword(&self) -> Option<&str> {
        match self.peek() {
            Tok::Ident(s) => Some(s.as_str()),
            _ => None,
        }
    }

    fn skip_seps(&mut self) {
        while *self.peek() == Tok::Sep {
            self.bump();
        }
    }

    fn end_of_statement(&mut self) -> Result<(), SyntaxError> {
        match self.peek() {
            Tok::Sep => {
                self.skip_seps();
                Ok(())
            }
            Tok::Eof => Ok(()),
            _ => self.error(&["end of statement"]),
        }
    }

    fn number(&mut self) -> Result<f64, SyntaxError> {
        let negative = if *self.peek() == Tok::Minus {
            self.bump();
            true
        } else {
            false
        };
        match *self.peek() {
            Tok::Number(n) => {
                self.bump();
                Ok(if negative { -n } else { n })
            }
            _ => self.error(&["number"]),
        }
    }

    fn plan(&mut self) -> Result<Plan, SyntaxError> {
        let mut params = Vec::new();
        let mut statements = Vec::new();
        self.skip_seps();
        loop {
            let span = self.span();
            match self.keyword() {
                Some("param") => {
                    self.bump();
                    let (name, _) = self.ident("parameter name")?;
                    self.expect(Tok::Assign, "`=`")?;
                    let value = self.number()?;
                    params.push(Param { name, value, span });
                }
                Some("let") => {
                    self.bump();
                    let (bind, _) = self.ident("variable name")?;
                    self.expect(Tok::Assign, "`=`")?;
                    let action = self.action()?;
                    statements.push(Statement { kind: StatementKind::Let { bind, action }, span });
                }
                Some("debug") => {
                    self.bump();
                    self.expect(Tok::LParen, "`(`")?;
                    let label = match self.bump() {
                        (Tok::Str(s), _) => s,
                        _ => {
                            self.pos -= 1;
                            return self.error(&["string literal"]);
                        }
                    };
                    self.expect(Tok::Comma, "`,`")?;
                    let (var, _) = self.ident("variable name")?;
                    self.expect(Tok::RParen, "`)`")?;
                    statements.push(Statement { kind: StatementKind::Debug { label, var }, span });
                }
                Some("return") => {
                    self.bump();
                    let (return_var, return_span) = self.ident("variable name")?;
                    self.end_of_statement()?;
                    if *self.peek() != Tok::Eof {
                        return self.error(&["end of plan"]);
                    }
                    return Ok(Plan { params, statements, return_var, return_span });
                }
                _ => return self.error(&["`param`", "`let`", "`debug`", "`return`"]),
            }
            self.end_of_statement()?;
        }
    }

    fn action(&mut self) -> Result<Action, SyntaxError> {
        let (name, _) = match self.peek().clone() {
            Tok::Ident(s) => (s, self.bump().1),
            _ => return self.error(&["tool name", "combinator"]),
        };
        self.expect(Tok::LParen, "`(`")?;
        let action = match name.as_str() {
            "weighted_sum" => {
                let inputs = self.var_list()?;
                self.expect(Tok::Comma, "`,`")?;
                self.expect(Tok::LBracket, "`[`")?;
                let mut weights = Vec::new();
                if *self.peek() != Tok::RBracket {
                    loop {
                        weights.push(self.expr()?);
                        if *self.peek() != Tok::Comma {
                            break;
                        }
                        self.bump();
                    }
                }
                self.expect(Tok::RBracket, "`]`")?;
                Action::Combine { op: CombineOp::WeightedSum, inputs, weights }
            }
            "max" | "min" | "product" => {
                let op = match name.as_str() {
                    "max" => CombineOp::Max,
                    "min" => CombineOp::Min,
                    _ => CombineOp::Product,
                };
                Action::Combine { op, inputs: self.var_list()?, weights: Vec::new() }
            }
            "normalize" => Action::Normalize { input: self.ident("variable name")?.0 },
            "filter" => {
                let input = self.ident("variable name")?.0;
                self.expect(Tok::Comma, "`,`")?;
                let cmp = match self.peek() {
                    Tok::Ge => Comparator::Ge,
                    Tok::Gt => Comparator::Gt,
                    _ => return self.error(&["`>=`", "`>`"]),
                };
                self.bump();
                Action::Filter { input, cmp, threshold: self.expr()? }
            }
            "scale" => {
                let input = self.ident("variable name")?.0;
                self.expect(Tok::Comma, "`,`")?;
                Action::Scale { input, factor: self.expr()? }
            }
            k if is_keyword(k) => {
                self.pos -= 2;
                return self.error(&["tool name", "combinator"]);
            }
            _ => {
                let mut args = Vec::new();
                if *self.peek() != Tok::RParen {
                    loop {
                        args.push(self.arg()?);
                        if *self.peek() != Tok::Comma {
                            break;
                        }
                        self.bump();
                    }
                }
                Action::ToolCall { tool: name, args }
            }
        };
        self.expect(Tok::RParen, "`)`")?;
        Ok(action)
    }

    fn var_list(&mut self) -> Result<Vec<String>, SyntaxError> {
        self.expect(Tok::LBracket, "`[`")?;
        let mut vars = Vec::new();
        if *self.peek() != Tok::RBracket {
            loop {
                vars.push(self.ident("variable name")?.0);
                if *self.peek() != Tok::Comma {
                    break;
                }
                self.bump();
            }
        }
        self.expect(Tok::RBracket, "`]`")?;
        Ok(vars)
    }

    fn arg(&mut self) -> Result<Arg, SyntaxError> {
        match self.peek().clone() {
            Tok::Str(s) => {
                self.bump();
                Ok(Arg::Str(s))
            }
            Tok::Number(_) | Tok::Minus => Ok(Arg::Number(self.number()?)),
            Tok::Ident(s) if s == "query" => {
                self.bump();
                Ok(Arg::Query)
            }
            Tok::Ident(s) if s == "candidates" => {
                self.bump();
                Ok(Arg::Candidates)
            }
            Tok::Ident(s) if !is_keyword(&s) => {
                self.bump();
                Ok(Arg::Var(s))
            }
            Tok::LBracket => {
                self.bump();
                let mut items = Vec::new();
                if *self.peek() != Tok::RBracket {
                    loop {
                        if *self.peek() == Tok::LBracket {
                            return self.error(&["list element"]);
                        }
                        items.push(self.arg()?);
                        if *self.peek() != Tok::Comma {
                            break;
                        }
                        self.bump();
                    }
                }
                self.expect(Tok::RBracket, "`]`")?;
                Ok(Arg::List(items))
            }
            _ => self.error(&["argument"]),
        }
    }

    fn expr(&mut self) -> Result<Expr, SyntaxError> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Tok::Plus => BinOp::Add,
                Tok::Minus => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.bump();
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(self.term()?));
        }
    }

    fn term(&mut self) -> Result<Expr, SyntaxError> {
        let mut lhs = self.atom()?;
        loop {
            let op = match self.peek() {
                Tok::Star => BinOp::Mul,
                Tok::Slash => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.bump();
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(self.atom()?));
        }
    }

    fn atom(&mut self) -> Result<Expr, SyntaxError> {
        match self.peek().clone() {
            Tok::Number(_) | Tok::Minus => Ok(Expr::Num(self.number()?)),
            Tok::Ident(s) if !is_keyword(&s) => {
                self.bump();
                Ok(Expr::Var(s))
            }
            Tok::LParen => {
                self.bump();
                let e = self.expr()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(e)
            }
            _ => self.error(&["number", "parameter name", "`(`"]),
        }
    }
}

/// Parses plan source. Checks syntax only; see [`super::validate_plan`].
pub fn parse_plan(source: &str) -> Result<Plan, SyntaxError> {
    let toks = lex(source)?;
    Parser { toks, pos: 0 }.plan()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_line_plan() {
        let p = parse_plan("param w=0.5; let a = ExactMatch(query, candidates); return a").unwrap();
        assert_eq!(p.params.len(), 1);
        assert_eq!(p.params[0].value, 0.5);
        assert_eq!(p.statements.len(), 1);
        assert_eq!(p.return_var, "a");
    }

    #[test]
    fn undefined_return_still_parses() {
        let p = parse_plan("return a").unwrap();
        assert!(p.statements.is_empty());
    }

    #[test]
    fn spans_and_expected_sets() {
        let e = parse_plan("let a = X(query)\nlet = Y()\nreturn a").unwrap_err();
        assert_eq!((e.line, e.column), (2, 5));
        assert_eq!(e.expected, vec!["variable name"]);
        let e = parse_plan("let a = X(query)").unwrap_err();
        assert!(e.expected.contains(&"`return`".to_string()), "{e}");
        let p = parse_plan("# c\n\nlet a = X(query)  # trailing\nreturn a\n").unwrap();
        assert_eq!(p.statements[0].span.line, 3);
    }

    #[test]
    fn expressions_and_combinators() {
        let p = parse_plan(
            "param w = 2\nlet a = X(query)\nlet b = weighted_sum([a, a], [w * 0.5, 1 - w / 4])\nlet c = filter(b, >= -0.5)\nlet d = max([b, c])\nreturn d",
        )
        .unwrap();
        match &p.statements[1].kind {
            StatementKind::Let { action: Action::Combine { weights, .. }, .. } => {
                assert_eq!(
                    weights[1],
                    Expr::Bin(
                        BinOp::Sub,
                        Box::new(Expr::Num(1.0)),
                        Box::new(Expr::Bin(BinOp::Div, Box::new(Expr::Var("w".into())), Box::new(Expr::Num(4.0))))
                    )
                );
            }
            other => panic!("{other:?}"),
        }
        match &p.statements[2].kind {
            StatementKind::Let { action: Action::Filter { threshold, cmp, .. }, .. } => {
                assert_eq!(*threshold, Expr::Num(-0.5));
                assert_eq!(*cmp, Comparator::Ge);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn multi_line_arguments() {
        let p = parse_plan("let a = X(\n  \"x\",\n  [1, 2]\n)\nreturn a").unwrap();
        assert_eq!(p.statements.len(), 1);
    }

    #[test]
    fn keywords_cannot_bind() {
        assert!(parse_plan("let query = X(query)\nreturn query").is_err());
        assert!(parse_plan("let a = normalize(query)\nreturn a").is_err());
    }
}

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::ast::*;
use crate::gateway::Gateway;
use crate::kb::{EntityId, KnowledgeBase};
use crate::tools::{ScoreMap, ToolContext, ToolError, ToolRegistry, Value, ValueType};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExecBudget {
    pub wall_deadline_ms: u64,
    /// Defaults to twice the candidate count when unset.
    pub max_llm_calls: Option<usize>,
    pub max_statements: usize,
}

impl Default for ExecBudget {
    fn default() -> Self {
        Self { wall_deadline_ms: 10_000, max_llm_calls: None, max_statements: 256 }
    }
}

impl ExecBudget {
    pub fn wall_deadline(&self) -> Duration {
        Duration::from_millis(self.wall_deadline_ms)
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.wall_deadline_ms == 0 {
            return Err("wall_deadline_ms must be positive".into());
        }
        if self.max_llm_calls == Some(0) {
            return Err("max_llm_calls must be positive".into());
        }
        if self.max_statements == 0 {
            return Err("max_statements must be positive".into());
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub enum TimeoutReason {
    WallDeadline,
    LlmCalls { limit: usize },
    Statements { limit: usize },
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ExecError {
    #[error("timeout at statement {statement}: {reason:?}")]
    Timeout { statement: usize, reason: TimeoutReason },
    #[error("statement {statement}: {source}")]
    Tool { statement: usize, source: ToolError },
    #[error("statement {statement}: {message}")]
    Runtime { statement: usize, message: String },
    #[error("candidate set is empty")]
    EmptyCandidates,
}

impl ExecError {
    pub fn is_timeout(&self) -> bool {
        matches!(self, ExecError::Timeout { .. })
    }
}

/// What an execution needs besides the plan and the query.
#[derive(Clone, Copy)]
pub struct ExecEnv<'a> {
    pub kb: &'a KnowledgeBase,
    pub registry: &'a ToolRegistry,
    pub gateway: Option<&'a Gateway>,
    pub attribute_rules: Option<&'a BTreeMap<String, Vec<String>>>,
}

impl<'a> ExecEnv<'a> {
    pub fn new(kb: &'a KnowledgeBase, registry: &'a ToolRegistry) -> Self {
        Self { kb, registry, gateway: None, attribute_rules: None }
    }

    pub fn with_gateway(mut self, gateway: Option<&'a Gateway>) -> Self {
        self.gateway = gateway;
        self
    }

    pub fn with_attribute_rules(mut self, rules: Option<&'a BTreeMap<String, Vec<String>>>) -> Self {
        self.attribute_rules = rules;
        self
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DebugRecord {
    pub statement: usize,
    pub label: String,
    pub value: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct ExecLog {
    pub debug: Vec<DebugRecord>,
    pub llm_calls: usize,
}

fn runtime(statement: usize, message: impl Into<String>) -> ExecError {
    ExecError::Runtime { statement, message: message.into() }
}

struct Frame<'p> {
    params: BTreeMap<&'p str, f64>,
    vars: BTreeMap<&'p str, Value>,
}

impl<'p> Frame<'p> {
    fn number(&self, name: &str, at: usize) -> Result<f64, ExecError> {
        match self.vars.get(name) {
            Some(Value::Number(n)) => Ok(*n),
            Some(v) => Err(runtime(at, format!("{name} is {}, not a number", v.value_type()))),
            None => self.params.get(name).copied().ok_or_else(|| runtime(at, format!("{name} is not defined"))),
        }
    }

    fn eval(&self, e: &Expr, at: usize) -> Result<f64, ExecError> {
        let v = match e {
            Expr::Num(n) => *n,
            Expr::Var(v) => self.number(v, at)?,
            Expr::Bin(op, l, r) => {
                let (l, r) = (self.eval(l, at)?, self.eval(r, at)?);
                match op {
                    BinOp::Add => l + r,
                    BinOp::Sub => l - r,
                    BinOp::Mul => l * r,
                    BinOp::Div => l / r,
                }
            }
        };
        if !v.is_finite() {
            return Err(ExecError::Tool {
                statement: at,
                source: ToolError::Failed { tool: "expression".into(), message: "non-finite result".into() },
            });
        }
        Ok(v)
    }

    fn scores(&self, name: &str, at: usize) -> Result<&ScoreMap, ExecError> {
        match self.vars.get(name) {
            Some(Value::Scores(m)) => Ok(m),
            Some(v) => Err(runtime(at, format!("{name} is {}, not a score_map", v.value_type()))),
            None => Err(runtime(at, format!("{name} is not defined"))),
        }
    }
}

fn arg_value(
    a: &Arg,
    want: ValueType,
    frame: &Frame<'_>,
    query: &str,
    candidates: &[EntityId],
    at: usize,
) -> Result<Value, ExecError> {
    let v = match (a, want) {
        (Arg::Str(s), _) => Value::Text(s.clone()),
        (Arg::Query, _) => Value::Text(query.to_string()),
        (Arg::Candidates, _) => Value::IdList(candidates.to_vec()),
        (Arg::Number(n), ValueType::Id) => Value::Id(EntityId(*n as u64)),
        (Arg::Number(n), _) => Value::Number(*n),
        (Arg::Var(v), _) => match frame.vars.get(v.as_str()) {
            Some(val) => val.clone(),
            None => Value::Number(frame.number(v, at)?),
        },
        (Arg::List(items), ValueType::TextList) => Value::TextList(
            items
                .iter()
                .map(|i| match arg_value(i, ValueType::Text, frame, query, candidates, at)? {
                    Value::Text(s) => Ok(s),
                    other => Err(runtime(at, format!("list item is {}, not text", other.value_type()))),
                })
                .collect::<Result<_, _>>()?,
        ),
        (Arg::List(items), ValueType::IdList) => Value::IdList(
            items
                .iter()
                .map(|i| match arg_value(i, ValueType::Id, frame, query, candidates, at)? {
                    Value::Id(id) => Ok(id),
                    other => Err(runtime(at, format!("list item is {}, not an id", other.value_type()))),
                })
                .collect::<Result<_, _>>()?,
        ),
        (Arg::List(items), _) => Value::Vector(
            items
                .iter()
                .map(|i| match arg_value(i, ValueType::Number, frame, query, candidates, at)? {
                    Value::Number(n) => Ok(n),
                    other => Err(runtime(at, format!("list item is {}, not a number", other.value_type()))),
                })
                .collect::<Result<_, _>>()?,
        ),
    };
    Ok(v)
}

/// Restricts a map to `candidates`; candidates the map lacks score 0.
fn project(m: &ScoreMap, candidates: &[EntityId]) -> ScoreMap {
    candidates.iter().map(|id| (*id, m.get(*id).unwrap_or(0.0))).collect()
}

fn pointwise(
    maps: &[&ScoreMap],
    candidates: &[EntityId],
    at: usize,
    f: impl Fn(&[f64]) -> f64,
) -> Result<ScoreMap, ExecError> {
    let mut out = ScoreMap::new();
    let mut row = Vec::with_capacity(maps.len());
    for id in candidates {
        row.clear();
        row.extend(maps.iter().map(|m| m.get(*id).unwrap_or(0.0)));
        out.insert(*id, f(&row)).map_err(|source| ExecError::Tool {
            statement: at,
            source: ToolError::NonFinite { tool: "combine".into(), source },
        })?;
    }
    Ok(out)
}

/// Affine map onto [0, 1]; a constant map becomes all 0.5.
pub fn normalize(m: &ScoreMap) -> ScoreMap {
    let (lo, hi) = m.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (_, s)| (lo.min(s), hi.max(s)));
    let range = hi - lo;
    if !(range > 0.0) || !range.is_finite() {
        return m.ids().map(|id| (id, 0.5)).collect();
    }
    m.iter().map(|(id, s)| (id, ((s - lo) / range).clamp(0.0, 1.0))).collect()
}

/// Runs a validated plan and returns the final score map keyed by exactly `candidates`.
pub fn execute_plan(
    plan: &Plan,
    query: &str,
    candidates: &[EntityId],
    env: &ExecEnv<'_>,
    budget: &ExecBudget,
) -> Result<ScoreMap, ExecError> {
    execute_plan_logged(plan, query, candidates, env, budget).map(|(m, _)| m)
}

pub fn execute_plan_logged(
    plan: &Plan,
    query: &str,
    candidates: &[EntityId],
    env: &ExecEnv<'_>,
    budget: &ExecBudget,
) -> Result<(ScoreMap, ExecLog), ExecError> {
    if candidates.is_empty() {
        return Err(ExecError::EmptyCandidates);
    }
    let mut candidates = candidates.to_vec();
    candidates.sort_unstable();
    candidates.dedup();
    let candidates = &candidates[..];
    let start = Instant::now();
    let deadline = start + budget.wall_deadline();
    let llm_limit = budget.max_llm_calls.unwrap_or(2 * candidates.len());
    let ctx = ToolContext::new(env.kb)
        .with_gateway(env.gateway)
        .with_attribute_rules(env.attribute_rules)
        .with_deadline(Some(deadline))
        .with_llm_limit(Some(llm_limit));
    let mut frame = Frame { params: plan.params.iter().map(|p| (p.name.as_str(), p.value)).collect(), vars: BTreeMap::new() };
    let mut log = ExecLog::default();

    for (i, stmt) in plan.statements.iter().enumerate() {
        if i >= budget.max_statements {
            return Err(ExecError::Timeout {
                statement: i,
                reason: TimeoutReason::Statements { limit: budget.max_statements },
            });
        }
        match &stmt.kind {
            StatementKind::Debug { label, var } => {
                let value = frame.vars.get(var.as_str()).ok_or_else(|| runtime(i, format!("{var} is not defined")))?;
                log.debug.push(DebugRecord { statement: i, label: label.clone(), value: value.summary() });
            }
            StatementKind::Let { bind, action } => {
                let value = run_action(action, &frame, query, candidates, env, &ctx, i)?;
                frame.vars.insert(bind.as_str(), value);
            }
        }
        if Instant::now() >= deadline {
            return Err(ExecError::Timeout { statement: i, reason: TimeoutReason::WallDeadline });
        }
    }
    log.llm_calls = ctx.llm_calls();
    let out = frame.scores(&plan.return_var, plan.statements.len())?;
    Ok((project(out, candidates), log))
}

fn run_action(
    action: &Action,
    frame: &Frame<'_>,
    query: &str,
    candidates: &[EntityId],
    env: &ExecEnv<'_>,
    ctx: &ToolContext<'_>,
    at: usize,
) -> Result<Value, ExecError> {
    let scores = |m: ScoreMap| Ok(Value::Scores(m));
    match action {
        Action::ToolCall { tool, args } => {
            let spec = env.registry.lookup(tool).ok_or_else(|| runtime(at, format!("unknown tool {tool}")))?;
            if spec.params.len() != args.len() {
                return Err(runtime(at, format!("{tool} takes {} arguments", spec.params.len())));
            }
            let values = spec
                .params
                .iter()
                .zip(args)
                .map(|(p, a)| arg_value(a, p.ty, frame, query, candidates, at))
                .collect::<Result<Vec<_>, _>>()?;
            match env.registry.invoke(tool, ctx, &values) {
                Ok(Value::Scores(m)) => scores(project(&m, candidates)),
                Ok(v) => Ok(v),
                Err(ToolError::LlmBudgetExhausted { limit }) => {
                    Err(ExecError::Timeout { statement: at, reason: TimeoutReason::LlmCalls { limit } })
                }
                Err(ToolError::DeadlineExceeded) => {
                    Err(ExecError::Timeout { statement: at, reason: TimeoutReason::WallDeadline })
                }
                Err(source) => Err(ExecError::Tool { statement: at, source }),
            }
        }
        Action::Combine { op, inputs, weights } => {
            let maps = inputs.iter().map(|v| frame.scores(v, at)).collect::<Result<Vec<_>, _>>()?;
            if maps.is_empty() {
                return Err(runtime(at, format!("{} needs at least one map", op.keyword())));
            }
            match op {
                CombineOp::WeightedSum => {
                    if weights.len() != maps.len() {
                        return Err(runtime(at, "weighted_sum arity mismatch"));
                    }
                    let w = weights.iter().map(|e| frame.eval(e, at)).collect::<Result<Vec<_>, _>>()?;
                    scores(pointwise(&maps, candidates, at, |row| row.iter().zip(&w).map(|(x, w)| x * w).sum())?)
                }
                CombineOp::Max => scores(pointwise(&maps, candidates, at, |r| r.iter().copied().fold(f64::NEG_INFINITY, f64::max))?),
                CombineOp::Min => scores(pointwise(&maps, candidates, at, |r| r.iter().copied().fold(f64::INFINITY, f64::min))?),
                CombineOp::Product => scores(pointwise(&maps, candidates, at, |r| r.iter().product())?),
            }
        }
        Action::Normalize { input } => scores(normalize(&project(frame.scores(input, at)?, candidates))),
        Action::Filter { input, cmp, threshold } => {
            let m = frame.scores(input, at)?;
            let t = frame.eval(threshold, at)?;
            let keep = |s: f64| match cmp {
                Comparator::Ge => s >= t,
                Comparator::Gt => s > t,
            };
            scores(pointwise(&[m], candidates, at, |r| if keep(r[0]) { r[0] } else { 0.0 })?)
        }
        Action::Scale { input, factor } => {
            let m = frame.scores(input, at)?;
            let c = frame.eval(factor, at)?;
            scores(pointwise(&[m], candidates, at, |r| r[0] * c)?)
        }
    }
}

use std::collections::BTreeMap;
use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::memory::{MemoryBank, MemoryEntry};
use super::pools::{partition_adaptive, sample_contrast_batch, ContrastBatch, Scored};
use super::{OptimizerConfig, OptimizerError};
use crate::gateway::{extract_plan, render_actor_prompt, render_contrastor_prompt, ContrastLine, Gateway, Role};
use crate::kb::{KbSchema, KnowledgeBase, LabeledQuery, QuerySplit};
use crate::metrics::{evaluate_plan, CandidatePolicy, EvalOptions, EvalSummary};
use crate::plan::{parse_plan, render_plan, validate_plan, ExecEnv, Plan};
use crate::tools::ToolRegistry;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FeedbackKind {
    Ok,
    Validity,
    Timeout,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum IterationStatus {
    Ok,
    Failed,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AttemptRecord {
    pub attempt: u32,
    pub violations: Vec<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct PoolSizes {
    pub positive: usize,
    pub negative: usize,
    pub excluded: usize,
}

/// One trace line.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub status: IterationStatus,
    pub feedback: FeedbackKind,
    pub error: Option<String>,
    pub train_metric: Option<f64>,
    pub pools: Option<PoolSizes>,
    pub h_used: Option<f64>,
    pub batch_positive: Vec<u64>,
    pub batch_negative: Vec<u64>,
    pub instruction: Option<String>,
    pub attempts: Vec<AttemptRecord>,
    pub plan: Option<String>,
    pub batch_metric: Option<f64>,
    pub validation_metric: Option<f64>,
    pub best_validation: Option<f64>,
}

impl IterationRecord {
    fn new(iteration: usize) -> Self {
        Self {
            iteration,
            status: IterationStatus::Failed,
            feedback: FeedbackKind::Ok,
            error: None,
            train_metric: None,
            pools: None,
            h_used: None,
            batch_positive: Vec::new(),
            batch_negative: Vec::new(),
            instruction: None,
            attempts: Vec::new(),
            plan: None,
            batch_metric: None,
            validation_metric: None,
            best_validation: None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct OptimizationOutcome {
    pub best_plan: Plan,
    pub best_iteration: usize,
    pub best_validation: f64,
    pub validation: EvalSummary,
    pub trace: Vec<IterationRecord>,
    pub memory: MemoryBank,
    pub initial_prompt: String,
}

const FOOTER: &str = "Your output:";

fn fenced(plan: &Plan) -> String {
    format!("```plan\n{}```", render_plan(plan))
}

/// Initial prompt, then memory, current plan, instruction and errors, then the output cue.
pub fn compose_actor_prompt(
    initial_prompt: &str,
    memory: &MemoryBank,
    previous_plan: Option<&Plan>,
    instruction: Option<&str>,
    errors: &[String],
    metric_name: &str,
) -> String {
    let base = initial_prompt.trim_end();
    let base = base.strip_suffix(FOOTER).unwrap_or(base).trim_end();
    let mut sections = vec![base.to_string()];
    if !memory.is_empty() {
        let mut s = format!("Previous plans with their {metric_name} on sampled training queries (best first):");
        for (i, e) in memory.entries.iter().enumerate() {
            s.push_str(&format!("\nPlan {} ({metric_name}: {:.3}):\n```plan\n{}```", i + 1, e.performance, e.plan));
        }
        sections.push(s);
    }
    if let Some(p) = previous_plan {
        sections.push(format!("Current plan:\n{}", fenced(p)));
    }
    if let Some(i) = instruction {
        sections.push(format!("Instructions for revising the current plan:\n{}", i.trim()));
    }
    if !errors.is_empty() {
        let lines: Vec<String> = errors.iter().map(|e| format!("- {e}")).collect();
        sections.push(format!("Errors from your previous output:\n{}", lines.join("\n")));
    }
    sections.push(FOOTER.to_string());
    sections.join("\n\n") + "\n"
}

fn prompt_with_errors(prompt: &str, errors: &[String]) -> String {
    if errors.is_empty() {
        return prompt.to_string();
    }
    let body = prompt.trim_end();
    let body = body.strip_suffix(FOOTER).unwrap_or(body).trim_end();
    let lines: Vec<String> = errors.iter().map(|e| format!("- {e}")).collect();
    format!("{body}\n\nErrors from your previous output:\n{}\n\n{FOOTER}\n", lines.join("\n"))
}

/// Asks the actor for a plan, re-prompting with the violations up to `retry_limit` times.
/// Attempt records are returned whether or not a plan was found.
pub fn actor_step(
    prompt: &str,
    gateway: &Gateway,
    registry: &ToolRegistry,
    schema: &KbSchema,
    retry_limit: usize,
    iteration: u32,
) -> (Result<Plan, OptimizerError>, Vec<AttemptRecord>) {
    let mut attempts = Vec::new();
    let mut errors: Vec<String> = Vec::new();
    for attempt in 0..=retry_limit as u32 {
        let request = gateway.request(Role::Actor, prompt_with_errors(prompt, &errors), iteration, attempt);
        let reply = match gateway.complete(&request) {
            Ok(r) => r,
            Err(e) => return (Err(e.into()), attempts),
        };
        errors = match extract_plan(&reply) {
            Err(e) => vec![e.to_string()],
            Ok(src) => match parse_plan(&src) {
                Err(e) => vec![e.to_string()],
                Ok(plan) => {
                    let v = validate_plan(&plan, registry, schema);
                    if v.is_empty() {
                        attempts.push(AttemptRecord { attempt, violations: Vec::new() });
                        return (Ok(plan), attempts);
                    }
                    v.iter().map(ToString::to_string).collect()
                }
            },
        };
        attempts.push(AttemptRecord { attempt, violations: errors.clone() });
    }
    (Err(OptimizerError::ActorFailed { violations: errors }), attempts)
}

/// One contrastor call; the reply is returned verbatim.
pub fn comparator_step(
    batch: &ContrastBatch,
    queries: &BTreeMap<u64, &LabeledQuery>,
    current_plan: &Plan,
    initial_prompt: &str,
    gateway: &Gateway,
    metric_name: &str,
    iteration: u32,
) -> Result<String, OptimizerError> {
    let lines = |side: &[Scored]| -> Vec<ContrastLine> {
        side.iter()
            .map(|s| ContrastLine { query: queries[&s.query_id].text.clone(), metric: s.metric })
            .collect()
    };
    let prompt =
        render_contrastor_prompt(initial_prompt, current_plan, &lines(&batch.positives), &lines(&batch.negatives), metric_name)?;
    let request = gateway.request(Role::Contrastor, prompt, iteration, 0);
    Ok(gateway.complete(&request)?)
}

fn eval_options(config: &OptimizerConfig) -> EvalOptions<'_> {
    EvalOptions {
        budget: &config.budget,
        policy: config.candidate_policy,
        primary: config.primary_metric,
        parallelism: config.parallelism,
    }
}

/// Applies a plan to unseen queries with no further optimization.
pub fn deploy(plan: &Plan, queries: &[LabeledQuery], env: &ExecEnv<'_>, config: &OptimizerConfig) -> EvalSummary {
    evaluate_plan(plan, queries, env, &eval_options(config))
}

pub fn run_optimization(
    config: &OptimizerConfig,
    kb: &KnowledgeBase,
    split: &QuerySplit,
    registry: &ToolRegistry,
    gateway: &Gateway,
) -> Result<OptimizationOutcome, OptimizerError> {
    let env = ExecEnv::new(kb, registry).with_gateway(Some(gateway));
    run_optimization_with(config, &env, split, None)
}

fn n_candidates(kb: &KnowledgeBase, policy: CandidatePolicy) -> usize {
    let all = kb.candidate_ids().len();
    match policy {
        CandidatePolicy::AllOfType => all,
        CandidatePolicy::EmbeddingTopN { n } => all.min(n),
    }
}

fn timeout_feedback(summaries: &[&EvalSummary]) -> Option<String> {
    let total: usize = summaries.iter().map(|s| s.count).sum();
    let timed_out: usize = summaries.iter().map(|s| s.records.iter().filter(|r| r.timed_out).count()).sum();
    (timed_out > 0).then(|| {
        format!(
            "The plan exceeded its execution budget on {timed_out} of {total} queries. Remove redundant or expensive steps."
        )
    })
}

/// The full loop. When `trace_out` is given, each iteration record is written as one JSON line as soon as it completes.
pub fn run_optimization_with(
    config: &OptimizerConfig,
    env: &ExecEnv<'_>,
    split: &QuerySplit,
    mut trace_out: Option<&mut dyn Write>,
) -> Result<OptimizationOutcome, OptimizerError> {
    config.validate()?;
    let gateway = env.gateway.ok_or(OptimizerError::NoGateway)?;
    if split.train.is_empty() {
        return Err(OptimizerError::EmptySplit("train"));
    }
    if split.validation.is_empty() {
        return Err(OptimizerError::EmptySplit("validation"));
    }
    let kb = env.kb;
    let schema = kb.schema();
    let metric = config.primary_metric;
    let opts = eval_options(config);
    let examples: Vec<String> = split.train.iter().take(config.n_example_queries).map(|q| q.text.clone()).collect();
    let initial_prompt = render_actor_prompt(
        schema,
        env.registry,
        &examples,
        n_candidates(kb, config.candidate_policy),
        &schema.candidate_types,
    )?;
    let train_by_id: BTreeMap<u64, &LabeledQuery> = split.train.iter().map(|q| (q.query_id, q)).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut memory = MemoryBank::new(config.memory_top_k);
    let mut current: Option<Plan> = None;
    let mut pending_errors: Vec<String> = Vec::new();
    let mut best: Option<(usize, f64, Plan, EvalSummary)> = None;
    let mut trace = Vec::new();

    for t in 0..config.iterations.max(1) {
        let mut rec = IterationRecord::new(t);
        let result = iteration(
            t,
            config,
            env,
            gateway,
            &split.train,
            &train_by_id,
            &split.validation,
            &initial_prompt,
            &memory,
            current.as_ref(),
            &pending_errors,
            &opts,
            &mut rng,
            &mut rec,
        );
        match result {
            Ok(step) => {
                rec.status = IterationStatus::Ok;
                pending_errors = step.timeout.clone().into_iter().collect();
                rec.feedback = if step.timeout.is_some() {
                    FeedbackKind::Timeout
                } else if rec.attempts.len() > 1 {
                    FeedbackKind::Validity
                } else {
                    FeedbackKind::Ok
                };
                if let (Some(perf), Some(instruction)) = (rec.batch_metric, rec.instruction.clone()) {
                    memory.insert(MemoryEntry {
                        plan: render_plan(&step.plan),
                        instruction,
                        performance: perf,
                        iteration: t,
                        seq: 0,
                    });
                }
                let val = step.validation.mean(metric);
                if best.as_ref().is_none_or(|(_, b, _, _)| val > *b) {
                    best = Some((t, val, step.plan.clone(), step.validation));
                }
                current = Some(step.plan);
            }
            Err(e) => {
                rec.status = IterationStatus::Failed;
                rec.error = Some(e.to_string());
                if let OptimizerError::ActorFailed { violations } = &e {
                    rec.feedback = FeedbackKind::Validity;
                    pending_errors = violations.clone();
                }
            }
        }
        rec.best_validation = best.as_ref().map(|b| b.1);
        if let Some(out) = trace_out.as_deref_mut() {
            let line = serde_json::to_string(&rec).map_err(|e| OptimizerError::Io(e.to_string()))?;
            writeln!(out, "{line}").and_then(|_| out.flush()).map_err(|e| OptimizerError::Io(e.to_string()))?;
        }
        trace.push(rec);
    }

    match best {
        Some((best_iteration, best_validation, best_plan, validation)) => Ok(OptimizationOutcome {
            best_plan,
            best_iteration,
            best_validation,
            validation,
            trace,
            memory,
            initial_prompt,
        }),
        None => Err(OptimizerError::AllIterationsFailed { trace }),
    }
}

struct StepResult {
    plan: Plan,
    validation: EvalSummary,
    timeout: Option<String>,
}

#[allow(clippy::too_many_arguments)]
fn iteration(
    t: usize,
    config: &OptimizerConfig,
    env: &ExecEnv<'_>,
    gateway: &Gateway,
    train: &[LabeledQuery],
    train_by_id: &BTreeMap<u64, &LabeledQuery>,
    validation: &[LabeledQuery],
    initial_prompt: &str,
    memory: &MemoryBank,
    current: Option<&Plan>,
    pending_errors: &[String],
    opts: &EvalOptions<'_>,
    rng: &mut ChaCha8Rng,
    rec: &mut IterationRecord,
) -> Result<StepResult, OptimizerError> {
    let metric = config.primary_metric;
    let schema = env.kb.schema();
    let it = t as u32;

    let Some(current) = current else {
        // cold start: the actor template alone
        let prompt = compose_actor_prompt(initial_prompt, memory, None, None, pending_errors, metric.name());
        let (plan, attempts) = actor_step(&prompt, gateway, env.registry, schema, config.actor_retry_limit, it);
        rec.attempts = attempts;
        let plan = plan?;
        rec.plan = Some(render_plan(&plan));
        let val = evaluate_plan(&plan, validation, env, opts);
        rec.validation_metric = Some(val.mean(metric));
        let timeout = timeout_feedback(&[&val]);
        return Ok(StepResult { plan, validation: val, timeout });
    };

    let train_eval = evaluate_plan(current, train, env, opts);
    rec.train_metric = Some(train_eval.mean(metric));
    let scored: Vec<Scored> = train_eval.records.iter().map(|r| Scored { query_id: r.query_id, metric: r.primary }).collect();
    let (pools, h_used) = partition_adaptive(
        &scored,
        config.upper_bound_l,
        config.lower_bound_h,
        config.strict_bounds,
        config.adaptive_negative_bound,
    );
    rec.pools = Some(PoolSizes {
        positive: pools.positive.len(),
        negative: pools.negative.len(),
        excluded: pools.excluded.len(),
    });
    rec.h_used = Some(h_used);
    let batch = sample_contrast_batch(&pools, config.batch_size_b, rng)?;
    rec.batch_positive = batch.positives.iter().map(|s| s.query_id).collect();
    rec.batch_negative = batch.negatives.iter().map(|s| s.query_id).collect();

    let instruction = comparator_step(&batch, train_by_id, current, initial_prompt, gateway, metric.name(), it)?;
    rec.instruction = Some(instruction.clone());

    let prompt =
        compose_actor_prompt(initial_prompt, memory, Some(current), Some(&instruction), pending_errors, metric.name());
    let (plan, attempts) = actor_step(&prompt, gateway, env.registry, schema, config.actor_retry_limit, it);
    rec.attempts = attempts;
    let plan = plan?;
    rec.plan = Some(render_plan(&plan));

    let batch_queries: Vec<LabeledQuery> = batch.query_ids().map(|id| train_by_id[&id].clone()).collect();
    let batch_eval = evaluate_plan(&plan, &batch_queries, env, opts);
    rec.batch_metric = Some(batch_eval.mean(metric));
    let val = evaluate_plan(&plan, validation, env, opts);
    rec.validation_metric = Some(val.mean(metric));
    let timeout = timeout_feedback(&[&batch_eval, &val]);
    Ok(StepResult { plan, validation: val, timeout })
}

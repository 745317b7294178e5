//! Command implementations behind the `planopt` binary.
//!
//! Each `cmd_*` function writes its human-facing output to the given writer and
//! returns a [`CliError`] carrying the process exit code on failure.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::gateway::{BackendConfig, BackendKind, Gateway};
use crate::kb::{
    generate_synthetic_kb, load_kb, load_queries, save_kb, save_queries, KbError, KbKind, KnowledgeBase, QuerySplit,
    SplitName, SyntheticParams,
};
use crate::metrics::{evaluate_plan, rank_from_scores, EvalOptions};
use crate::optimizer::{
    deploy, run_optimization_with, sweep_thresholds, write_sweep_csv, write_sweep_matrix, OptimizerConfig, OptimizerError,
};
use crate::plan::{execute_plan, parse_plan, render_plan, validate_plan, ExecEnv, Plan};
use crate::tools::ToolRegistry;

pub const EXIT_IO: u8 = 1;
pub const EXIT_INVALID: u8 = 2;
pub const EXIT_ALL_FAILED: u8 = 3;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{message}")]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn io(message: impl Into<String>) -> Self {
        Self { code: EXIT_IO, message: message.into() }
    }

    pub fn invalid(message: impl Into<String>) -> Self {
        Self { code: EXIT_INVALID, message: message.into() }
    }
}

impl From<KbError> for CliError {
    fn from(e: KbError) -> Self {
        match e {
            KbError::Io { .. } => Self::io(e.to_string()),
            other => Self::invalid(other.to_string()),
        }
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::io(format!("{}: {e}", path.display()))
}

fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> Result<(), CliError> {
    fs::write(path, bytes).map_err(|e| io_err(path, e))
}

fn read_file(path: &Path) -> Result<Vec<u8>, CliError> {
    fs::read(path).map_err(|e| io_err(path, e))
}

fn say(out: &mut dyn Write, text: impl std::fmt::Display) -> Result<(), CliError> {
    writeln!(out, "{text}").map_err(|e| CliError::io(format!("stdout: {e}")))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepGrid {
    pub l: Vec<f64>,
    pub h: Vec<f64>,
}

impl Default for SweepGrid {
    fn default() -> Self {
        Self { l: vec![0.5, 0.6, 0.7], h: vec![0.3, 0.4, 0.5] }
    }
}

/// Optimizer settings plus the backend, knowledge-base kind and sweep grid.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct RunConfig {
    #[serde(flatten)]
    pub optimizer: OptimizerConfig,
    pub backend: Option<BackendConfig>,
    pub kb_kind: Option<KbKind>,
    pub sweep: Option<SweepGrid>,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let bad = |e: serde_json::Error| CliError::invalid(format!("config: {e}"));
        let mut map: serde_json::Map<String, serde_json::Value> = serde_json::from_str(text).map_err(bad)?;
        let mut take = |key: &str| map.remove(key).filter(|v| !v.is_null());
        let backend = take("backend").map(serde_json::from_value).transpose().map_err(bad)?;
        let kb_kind = take("kb_kind").map(serde_json::from_value).transpose().map_err(bad)?;
        let sweep = take("sweep").map(serde_json::from_value).transpose().map_err(bad)?;
        let optimizer = serde_json::from_value(serde_json::Value::Object(map)).map_err(bad)?;
        Ok(Self { optimizer, backend, kb_kind, sweep })
    }

    pub fn kb_kind(&self) -> KbKind {
        self.kb_kind.unwrap_or(KbKind::RelationText)
    }
}

/// Flags shared by every subcommand.
#[derive(Clone, Debug, Default)]
pub struct GlobalOpts {
    pub config: Option<PathBuf>,
    pub backend: Option<BackendKind>,
    pub seed: Option<u64>,
    pub run_dir: Option<PathBuf>,
    pub parallelism: Option<usize>,
}

struct Loaded {
    config: RunConfig,
    raw: Vec<u8>,
    base_dir: Option<PathBuf>,
}

fn load_config(opts: &GlobalOpts) -> Result<Loaded, CliError> {
    let (mut config, raw, base_dir) = match &opts.config {
        Some(path) => {
            let raw = read_file(path)?;
            let text = String::from_utf8(raw.clone()).map_err(|e| CliError::invalid(format!("{}: {e}", path.display())))?;
            (RunConfig::parse(&text)?, raw, path.parent().map(Path::to_path_buf))
        }
        None => (RunConfig::default(), b"{}".to_vec(), None),
    };
    if let Some(seed) = opts.seed {
        config.optimizer.seed = seed;
    }
    if let Some(p) = opts.parallelism {
        config.optimizer.parallelism = p;
    }
    if let Some(kind) = opts.backend {
        match &mut config.backend {
            Some(b) => b.kind = kind,
            None => return Err(CliError::invalid("--backend given but the config has no backend section")),
        }
    }
    config.optimizer.validate().map_err(|e| CliError::invalid(e.to_string()))?;
    Ok(Loaded { config, raw, base_dir })
}

fn make_gateway(loaded: &Loaded) -> Result<Option<Gateway>, CliError> {
    loaded
        .config
        .backend
        .as_ref()
        .map(|b| Gateway::from_config(b, loaded.base_dir.as_deref()))
        .transpose()
        .map_err(|e| CliError::invalid(e.to_string()))
}

fn registry(config: &RunConfig) -> Result<ToolRegistry, CliError> {
    ToolRegistry::by_name(&config.optimizer.registry)
        .ok_or_else(|| CliError::invalid(format!("unknown registry {:?}", config.optimizer.registry)))
}

fn load_inputs(config: &RunConfig, kb_path: &Path, queries_path: &Path) -> Result<(KnowledgeBase, QuerySplit), CliError> {
    let kb = load_kb(kb_path, config.kb_kind())?;
    let split = load_queries(queries_path, &kb)?;
    Ok((kb, split))
}

fn load_plan(path: &Path, registry: &ToolRegistry, kb: &KnowledgeBase) -> Result<Plan, CliError> {
    let text = String::from_utf8(read_file(path)?).map_err(|e| io_err(path, e))?;
    let plan = parse_plan(&text).map_err(|e| CliError::invalid(format!("{}: {e}", path.display())))?;
    let violations = validate_plan(&plan, registry, kb.schema());
    if !violations.is_empty() {
        let lines: Vec<String> = violations.iter().map(|v| format!("  {v}")).collect();
        return Err(CliError::invalid(format!("{}: invalid plan\n{}", path.display(), lines.join("\n"))));
    }
    Ok(plan)
}

fn run_dir(opts: &GlobalOpts) -> Result<PathBuf, CliError> {
    let dir = opts.run_dir.clone().ok_or_else(|| CliError::invalid("--run-dir is required"))?;
    fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
    Ok(dir)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

/// Provenance of one run directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub artifact_version: String,
    pub config_digest: String,
    pub kb_digest: String,
    pub queries_digest: String,
    pub registry: String,
    pub backend_kind: Option<BackendKind>,
    pub started_at: u64,
    pub finished_at: u64,
}

/// Writes `kb.jsonl`, `queries.jsonl` and `generation.json` into `out_dir`.
pub fn cmd_gen_kb(seed: u64, params: &SyntheticParams, out_dir: &Path, out: &mut dyn Write) -> Result<(), CliError> {
    let generated = generate_synthetic_kb(seed, params)?;
    fs::create_dir_all(out_dir).map_err(|e| io_err(out_dir, e))?;
    save_kb(&generated.kb, out_dir.join("kb.jsonl"))?;
    save_queries(&generated.queries, out_dir.join("queries.jsonl"))?;
    let manifest = serde_json::to_string_pretty(&generated.manifest).expect("manifest serializes");
    write_file(&out_dir.join("generation.json"), manifest + "\n")?;
    let q = &generated.queries;
    say(
        out,
        format_args!(
            "{} entities, {} relations, {} train / {} validation / {} test queries",
            generated.kb.len(),
            generated.kb.relations().len(),
            q.train.len(),
            q.validation.len(),
            q.test.len()
        ),
    )
}

/// Loads generator parameters from a JSON file, or the defaults.
pub fn load_params(path: Option<&Path>) -> Result<SyntheticParams, CliError> {
    match path {
        None => Ok(SyntheticParams::default()),
        Some(p) => serde_json::from_slice(&read_file(p)?).map_err(|e| CliError::invalid(format!("{}: {e}", p.display()))),
    }
}

pub fn cmd_optimize(opts: &GlobalOpts, kb_path: &Path, queries_path: &Path, out: &mut dyn Write) -> Result<(), CliError> {
    let started_at = unix_now();
    let loaded = load_config(opts)?;
    let config = &loaded.config;
    let dir = run_dir(opts)?;
    let (kb, split) = load_inputs(config, kb_path, queries_path)?;
    let registry = registry(config)?;
    let gateway = make_gateway(&loaded)?.ok_or_else(|| CliError::invalid("optimize needs a backend section"))?;
    let env = ExecEnv::new(&kb, &registry).with_gateway(Some(&gateway));

    write_file(&dir.join("config.json"), serde_json::to_string_pretty(config).expect("config serializes") + "\n")?;
    let trace_path = dir.join("trace.jsonl");
    let mut trace = fs::File::create(&trace_path).map_err(|e| io_err(&trace_path, e))?;
    let outcome = match run_optimization_with(&config.optimizer, &env, &split, Some(&mut trace)) {
        Ok(o) => o,
        Err(OptimizerError::AllIterationsFailed { trace }) => {
            let last = trace.iter().rev().find_map(|r| r.error.clone()).unwrap_or_default();
            return Err(CliError { code: EXIT_ALL_FAILED, message: format!("every iteration failed; last error: {last}") });
        }
        Err(OptimizerError::Io(e)) => return Err(io_err(&trace_path, e)),
        Err(e) => return Err(CliError::invalid(e.to_string())),
    };

    write_file(&dir.join("memory.json"), serde_json::to_string_pretty(&outcome.memory).expect("memory serializes") + "\n")?;
    write_file(&dir.join("best_plan.plan"), render_plan(&outcome.best_plan))?;
    let val_path = dir.join("metrics_validation.csv");
    outcome.validation.save_csv(&val_path).map_err(|e| io_err(&val_path, e))?;
    let test = deploy(&outcome.best_plan, &split.test, &env, &config.optimizer);
    let test_path = dir.join("metrics_test.csv");
    test.save_csv(&test_path).map_err(|e| io_err(&test_path, e))?;

    let manifest = RunManifest {
        artifact_version: env!("CARGO_PKG_VERSION").into(),
        config_digest: sha256_hex(&loaded.raw),
        kb_digest: sha256_hex(&read_file(kb_path)?),
        queries_digest: sha256_hex(&read_file(queries_path)?),
        registry: config.optimizer.registry.clone(),
        backend_kind: config.backend.as_ref().map(|b| b.kind),
        started_at,
        finished_at: unix_now(),
    };
    write_file(&dir.join("manifest.json"), serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n")?;

    let metric = config.optimizer.primary_metric;
    let failed = outcome.trace.iter().filter(|r| r.status == crate::optimizer::IterationStatus::Failed).count();
    say(
        out,
        format_args!(
            "best iteration {}: validation {} = {:.4}; test {} = {:.4}; {failed} of {} iterations failed",
            outcome.best_iteration,
            metric.name(),
            outcome.best_validation,
            metric.name(),
            test.mean(metric),
            outcome.trace.len()
        ),
    )
}

/// Scores one split; writes per-query CSV to `csv_out` when given and prints the means as JSON.
pub fn cmd_evaluate(
    opts: &GlobalOpts,
    plan_path: &Path,
    kb_path: &Path,
    queries_path: &Path,
    split_name: SplitName,
    csv_out: Option<&Path>,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    let loaded = load_config(opts)?;
    let config = &loaded.config;
    let (kb, split) = load_inputs(config, kb_path, queries_path)?;
    let registry = registry(config)?;
    let plan = load_plan(plan_path, &registry, &kb)?;
    let gateway = make_gateway(&loaded)?;
    let env = ExecEnv::new(&kb, &registry).with_gateway(gateway.as_ref());
    let c = &config.optimizer;
    let opts = EvalOptions { budget: &c.budget, policy: c.candidate_policy, primary: c.primary_metric, parallelism: c.parallelism };
    let summary = evaluate_plan(&plan, split.get(split_name), &env, &opts);
    if let Some(path) = csv_out {
        summary.save_csv(path).map_err(|e| io_err(path, e))?;
    }
    say(out, serde_json::to_string_pretty(&summary.means).expect("means serialize"))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Answer {
    pub id: u64,
    pub score: f64,
    pub document: String,
}

/// Prints the top `top_k` candidates for one free-text query as a JSON array.
pub fn cmd_answer(
    opts: &GlobalOpts,
    plan_path: &Path,
    kb_path: &Path,
    query: &str,
    top_k: usize,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    let loaded = load_config(opts)?;
    let config = &loaded.config;
    let kb = load_kb(kb_path, config.kb_kind())?;
    let registry = registry(config)?;
    let plan = load_plan(plan_path, &registry, &kb)?;
    let gateway = make_gateway(&loaded)?;
    let env = ExecEnv::new(&kb, &registry).with_gateway(gateway.as_ref());
    let candidates = config.optimizer.candidate_policy.candidates(&kb, query);
    let scores = execute_plan(&plan, query, &candidates, &env, &config.optimizer.budget)
        .map_err(|e| CliError::invalid(format!("execution failed: {e}")))?;
    let answers: Vec<Answer> = rank_from_scores(&scores)
        .into_iter()
        .take(top_k)
        .map(|id| Answer {
            id: id.0,
            score: scores.get(id).unwrap_or(0.0),
            document: kb.entity(id).map(|e| e.document.clone()).unwrap_or_default(),
        })
        .collect();
    say(out, serde_json::to_string_pretty(&answers).expect("answers serialize"))
}

#[derive(Deserialize)]
struct TraceLine {
    iteration: usize,
    status: String,
    validation_metric: Option<f64>,
}

/// Writes `curve.csv` and `report.md` into the run directory and prints the markdown.
pub fn cmd_report(opts: &GlobalOpts, out: &mut dyn Write) -> Result<(), CliError> {
    let dir = opts.run_dir.clone().ok_or_else(|| CliError::invalid("--run-dir is required"))?;
    let config_path = dir.join("config.json");
    let config = RunConfig::parse(&String::from_utf8_lossy(&read_file(&config_path)?))?;
    let metric = config.optimizer.primary_metric.name();
    let trace_path = dir.join("trace.jsonl");
    let text = String::from_utf8(read_file(&trace_path)?).map_err(|e| io_err(&trace_path, e))?;
    let lines: Vec<TraceLine> = text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| CliError::invalid(format!("{}:{}: {e}", trace_path.display(), i + 1))))
        .collect::<Result<_, _>>()?;

    let mut csv = csv::Writer::from_writer(Vec::new());
    let vcol = format!("validation_{metric}");
    let rcol = format!("running_max_{metric}");
    csv.write_record(["iteration", vcol.as_str(), rcol.as_str()]).map_err(|e| CliError::io(e.to_string()))?;
    let mut running: Option<f64> = None;
    let mut table = format!("| iteration | status | {vcol} | {rcol} |\n|---|---|---|---|\n");
    for l in &lines {
        if let Some(v) = l.validation_metric {
            running = Some(running.map_or(v, |r| r.max(v)));
        }
        let fmt = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
        csv.write_record([l.iteration.to_string(), fmt(l.validation_metric), fmt(running)])
            .map_err(|e| CliError::io(e.to_string()))?;
        table.push_str(&format!("| {} | {} | {} | {} |\n", l.iteration, l.status, fmt(l.validation_metric), fmt(running)));
    }
    let curve = csv.into_inner().map_err(|e| CliError::io(e.to_string()))?;
    write_file(&dir.join("curve.csv"), curve)?;

    let best = lines
        .iter()
        .filter_map(|l| l.validation_metric.map(|v| (l.iteration, v)))
        .fold(None::<(usize, f64)>, |acc, (i, v)| match acc {
            Some((_, b)) if b >= v => acc,
            _ => Some((i, v)),
        });
    let mut md = format!("# Optimization report\n\n{} iterations, primary metric `{metric}`.\n\n", lines.len());
    if let Some((i, v)) = best {
        md.push_str(&format!("Best validation {metric}: {v} at iteration {i}.\n\n"));
    }
    md.push_str(&table);
    if let Ok(plan) = fs::read_to_string(dir.join("best_plan.plan")) {
        md.push_str(&format!("\n## Best plan\n\n```\n{plan}```\n"));
    }
    write_file(&dir.join("report.md"), &md)?;
    say(out, md.trim_end())
}

/// One independent run per grid cell; writes `sweep.csv` (one row per cell) and `sweep_matrix.csv`.
pub fn cmd_sweep(opts: &GlobalOpts, kb_path: &Path, queries_path: &Path, out: &mut dyn Write) -> Result<(), CliError> {
    let loaded = load_config(opts)?;
    let config = &loaded.config;
    let dir = run_dir(opts)?;
    let (kb, split) = load_inputs(config, kb_path, queries_path)?;
    let registry = registry(config)?;
    let backend = config.backend.clone().ok_or_else(|| CliError::invalid("sweep needs a backend section"))?;
    backend.validate().map_err(|e| CliError::invalid(e.to_string()))?;
    let grid = config.sweep.clone().unwrap_or_default();
    let env = ExecEnv::new(&kb, &registry);
    let base = loaded.base_dir.clone();
    let factory = move || Gateway::from_config(&backend, base.as_deref());
    let cells = sweep_thresholds(&config.optimizer, &grid.l, &grid.h, &env, &split, &factory)
        .map_err(|e| CliError::invalid(e.to_string()))?;

    let metric = config.optimizer.primary_metric.name();
    let mut long = Vec::new();
    write_sweep_csv(&cells, metric, &mut long).map_err(|e| CliError::io(e.to_string()))?;
    write_file(&dir.join("sweep.csv"), &long)?;
    let mut matrix = Vec::new();
    write_sweep_matrix(&cells, &grid.l, &grid.h, &mut matrix).map_err(|e| CliError::io(e.to_string()))?;
    write_file(&dir.join("sweep_matrix.csv"), &matrix)?;
    let failed = cells.iter().filter(|c| c.error.is_some()).count();
    say(out, String::from_utf8_lossy(&matrix).trim_end())?;
    say(out, format_args!("{} cells, {failed} failed", cells.len()))
}


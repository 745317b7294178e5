//! The contrastive optimization loop.
//!
//! Each iteration evaluates the current plan on the training queries,
//! splits them into well- and poorly-performing pools, shows a sampled
//! batch of both to the contrastor, and asks the actor for a revised plan.
//! Revised plans are scored on the batch (for the memory bank) and on the
//! validation split (for selecting the final plan).

mod memory;
mod pools;
mod run;
mod sweep;

use serde::{Deserialize, Serialize};

use crate::gateway::{GatewayError, PromptError};
use crate::metrics::{CandidatePolicy, PrimaryMetric};
use crate::plan::ExecBudget;
use crate::tools::ToolRegistry;

pub use memory::{memory_update, MemoryBank, MemoryEntry};
pub use pools::{partition_adaptive, partition_queries, sample_contrast_batch, ContrastBatch, QueryPools, Scored};
pub use run::{
    actor_step, comparator_step, compose_actor_prompt, deploy, run_optimization, run_optimization_with, AttemptRecord,
    FeedbackKind, IterationRecord, IterationStatus, OptimizationOutcome, PoolSizes,
};
pub use sweep::{sweep_thresholds, write_sweep_csv, write_sweep_matrix, SweepCell, SweepStatus};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    #[serde(alias = "l")]
    pub upper_bound_l: f64,
    #[serde(alias = "h")]
    pub lower_bound_h: f64,
    #[serde(alias = "b")]
    pub batch_size_b: usize,
    /// Total rounds, counting the initial plan. Zero still produces the initial plan.
    pub iterations: usize,
    pub memory_top_k: usize,
    /// Extra actor attempts after an invalid plan.
    pub actor_retry_limit: usize,
    pub primary_metric: PrimaryMetric,
    pub seed: u64,
    pub budget: ExecBudget,
    pub adaptive_negative_bound: bool,
    /// Strict `> l` / `< h` pool bounds; false makes both inclusive.
    pub strict_bounds: bool,
    pub n_example_queries: usize,
    pub candidate_policy: CandidatePolicy,
    pub parallelism: usize,
    /// Tool manifest: `stark`, `vision` or `qa`.
    pub registry: String,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            upper_bound_l: 0.5,
            lower_bound_h: 0.5,
            batch_size_b: 20,
            iterations: 25,
            memory_top_k: 5,
            actor_retry_limit: 3,
            primary_metric: PrimaryMetric::Recall20,
            seed: 0,
            budget: ExecBudget::default(),
            adaptive_negative_bound: false,
            strict_bounds: true,
            n_example_queries: 5,
            candidate_policy: CandidatePolicy::AllOfType,
            parallelism: 1,
            registry: "stark".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid configuration: {0}")]
pub struct ConfigError(pub String);

impl OptimizerConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let (l, h) = (self.upper_bound_l, self.lower_bound_h);
        if !(0.0 < h && h <= l && l < 1.0) {
            return Err(ConfigError(format!("bounds must satisfy 0 < h ≤ l < 1 (got h = {h}, l = {l})")));
        }
        if self.batch_size_b < 2 || !self.batch_size_b.is_multiple_of(2) {
            return Err(ConfigError(format!("batch_size_b must be even and at least 2 (got {})", self.batch_size_b)));
        }
        if self.memory_top_k == 0 {
            return Err(ConfigError("memory_top_k must be at least 1".into()));
        }
        if self.n_example_queries == 0 {
            return Err(ConfigError("n_example_queries must be at least 1".into()));
        }
        if self.parallelism == 0 {
            return Err(ConfigError("parallelism must be at least 1".into()));
        }
        if let CandidatePolicy::EmbeddingTopN { n: 0 } = self.candidate_policy {
            return Err(ConfigError("candidate_policy n must be at least 1".into()));
        }
        self.budget.validate().map_err(ConfigError)?;
        if ToolRegistry::manifest_text(&self.registry).is_none() {
            return Err(ConfigError(format!("unknown registry {:?}; expected stark, vision or qa", self.registry)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum OptimizerError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("insufficient contrast: {positives} positive and {negatives} negative queries")]
    InsufficientContrast { positives: usize, negatives: usize },
    #[error("actor produced no valid plan: {}", violations.join("; "))]
    ActorFailed { violations: Vec<String> },
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error("the {0} split is empty")]
    EmptySplit(&'static str),
    #[error("the optimizer needs a gateway")]
    NoGateway,
    #[error("every iteration failed")]
    AllIterationsFailed { trace: Vec<IterationRecord> },
    #[error("trace output: {0}")]
    Io(String),
}

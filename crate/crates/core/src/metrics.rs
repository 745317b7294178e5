//! Ranking metrics and plan evaluation over query sets.
//!
//! ```
//! use planopt::kb::EntityId;
//! use planopt::metrics::{hit_at_k, mrr, rank_from_scores};
//! use planopt::tools::ScoreMap;
//!
//! let scores: ScoreMap = [(EntityId(1), 0.5), (EntityId(2), 0.9), (EntityId(3), 0.5)].into_iter().collect();
//! let ranked = rank_from_scores(&scores);
//! assert_eq!(ranked, vec![EntityId(2), EntityId(1), EntityId(3)]);
//! let truth = [EntityId(1)].into_iter().collect();
//! assert_eq!(hit_at_k(&ranked, &truth, 1).unwrap(), 0.0);
//! assert_eq!(mrr(&ranked, &truth).unwrap(), 0.5);
//! ```

use std::collections::BTreeSet;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::kb::{EntityId, KnowledgeBase, LabeledQuery};
use crate::plan::{execute_plan, ExecBudget, ExecEnv, Plan};
use crate::tools::{query_entity_similarity, ScoreMap};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MetricError {
    #[error("truth set is empty")]
    EmptyTruth,
    #[error("k must be at least 1")]
    ZeroK,
}

/// Descending score, ties by ascending id.
pub fn rank_from_scores(scores: &ScoreMap) -> Vec<EntityId> {
    let mut pairs: Vec<(EntityId, f64)> = scores.iter().collect();
    pairs.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    pairs.into_iter().map(|(id, _)| id).collect()
}

fn check(truth: &BTreeSet<EntityId>, k: usize) -> Result<(), MetricError> {
    if truth.is_empty() {
        return Err(MetricError::EmptyTruth);
    }
    if k == 0 {
        return Err(MetricError::ZeroK);
    }
    Ok(())
}

pub fn hit_at_k(ranked: &[EntityId], truth: &BTreeSet<EntityId>, k: usize) -> Result<f64, MetricError> {
    check(truth, k)?;
    Ok(if ranked.iter().take(k).any(|id| truth.contains(id)) { 1.0 } else { 0.0 })
}

/// `|truth ∩ top k| / |truth|`.
pub fn recall_at_k(ranked: &[EntityId], truth: &BTreeSet<EntityId>, k: usize) -> Result<f64, MetricError> {
    check(truth, k)?;
    let found = ranked.iter().take(k).filter(|id| truth.contains(id)).count();
    Ok(found as f64 / truth.len() as f64)
}

pub fn mrr(ranked: &[EntityId], truth: &BTreeSet<EntityId>) -> Result<f64, MetricError> {
    check(truth, 1)?;
    Ok(ranked.iter().position(|id| truth.contains(id)).map_or(0.0, |p| 1.0 / (p + 1) as f64))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrimaryMetric {
    Recall20,
    #[default]
    Hit1,
    Mrr,
}

impl PrimaryMetric {
    pub fn name(self) -> &'static str {
        match self {
            PrimaryMetric::Recall20 => "recall20",
            PrimaryMetric::Hit1 => "hit1",
            PrimaryMetric::Mrr => "mrr",
        }
    }
}

impl std::str::FromStr for PrimaryMetric {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "recall20" => Ok(Self::Recall20),
            "hit1" => Ok(Self::Hit1),
            "mrr" => Ok(Self::Mrr),
            other => Err(format!("unknown metric {other:?}; expected recall20, hit1 or mrr")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub query_id: u64,
    pub hit1: f64,
    pub hit5: f64,
    pub recall20: f64,
    pub mrr: f64,
    pub primary: f64,
    pub failed: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub timed_out: bool,
}

impl MetricRecord {
    pub fn from_ranking(
        query_id: u64,
        ranked: &[EntityId],
        truth: &BTreeSet<EntityId>,
        primary: PrimaryMetric,
    ) -> Result<Self, MetricError> {
        let mut r = Self {
            query_id,
            hit1: hit_at_k(ranked, truth, 1)?,
            hit5: hit_at_k(ranked, truth, 5)?,
            recall20: recall_at_k(ranked, truth, 20)?,
            mrr: mrr(ranked, truth)?,
            primary: 0.0,
            failed: false,
            error: None,
            timed_out: false,
        };
        r.primary = r.get(primary);
        Ok(r)
    }

    pub fn failed(query_id: u64, error: String) -> Self {
        Self {
            query_id,
            hit1: 0.0,
            hit5: 0.0,
            recall20: 0.0,
            mrr: 0.0,
            primary: 0.0,
            failed: true,
            error: Some(error),
            timed_out: false,
        }
    }

    pub fn get(&self, metric: PrimaryMetric) -> f64 {
        match metric {
            PrimaryMetric::Recall20 => self.recall20,
            PrimaryMetric::Hit1 => self.hit1,
            PrimaryMetric::Mrr => self.mrr,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricMeans {
    pub hit1: f64,
    pub hit5: f64,
    pub recall20: f64,
    pub mrr: f64,
    pub primary: f64,
    pub failed: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub records: Vec<MetricRecord>,
    pub means: MetricMeans,
    pub count: usize,
    /// True when there were no queries; the means are then reported as 0.
    pub empty: bool,
}

impl EvalSummary {
    pub fn from_records(records: Vec<MetricRecord>) -> Self {
        let n = records.len();
        if n == 0 {
            return Self { records, means: MetricMeans::default(), count: 0, empty: true };
        }
        let mean = |f: fn(&MetricRecord) -> f64| records.iter().map(f).sum::<f64>() / n as f64;
        let means = MetricMeans {
            hit1: mean(|r| r.hit1),
            hit5: mean(|r| r.hit5),
            recall20: mean(|r| r.recall20),
            mrr: mean(|r| r.mrr),
            primary: mean(|r| r.primary),
            failed: mean(|r| if r.failed { 1.0 } else { 0.0 }),
        };
        Self { records, means, count: n, empty: false }
    }

    pub fn mean(&self, metric: PrimaryMetric) -> f64 {
        match metric {
            PrimaryMetric::Recall20 => self.means.recall20,
            PrimaryMetric::Hit1 => self.means.hit1,
            PrimaryMetric::Mrr => self.means.mrr,
        }
    }

    /// One row per query plus a final `mean` row.
    pub fn write_csv(&self, out: impl Write) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["query_id", "hit1", "hit5", "recall20", "mrr", "failed"])?;
        for r in &self.records {
            w.write_record([
                r.query_id.to_string(),
                r.hit1.to_string(),
                r.hit5.to_string(),
                r.recall20.to_string(),
                r.mrr.to_string(),
                u8::from(r.failed).to_string(),
            ])?;
        }
        let m = &self.means;
        w.write_record([
            "mean".to_string(),
            m.hit1.to_string(),
            m.hit5.to_string(),
            m.recall20.to_string(),
            m.mrr.to_string(),
            m.failed.to_string(),
        ])?;
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> std::io::Result<()> {
        let f = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(f)).map_err(std::io::Error::other)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("summary serializes")
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CandidatePolicy {
    /// Every entity of the schema's candidate types.
    #[default]
    AllOfType,
    /// The `n` candidates most similar to the query by embedding.
    EmbeddingTopN { n: usize },
}

impl CandidatePolicy {
    pub fn candidates(&self, kb: &KnowledgeBase, query: &str) -> Vec<EntityId> {
        let all = kb.candidate_ids();
        match *self {
            CandidatePolicy::AllOfType => all,
            CandidatePolicy::EmbeddingTopN { n } => {
                if all.len() <= n {
                    return all;
                }
                let sims = query_entity_similarity(kb, query, &all).expect("candidate ids come from the kb");
                let mut top: Vec<EntityId> = rank_from_scores(&sims).into_iter().take(n).collect();
                top.sort_unstable();
                top
            }
        }
    }
}

/// Per-query evaluation settings.
#[derive(Clone, Copy, Debug)]
pub struct EvalOptions<'a> {
    pub budget: &'a ExecBudget,
    pub policy: CandidatePolicy,
    pub primary: PrimaryMetric,
    /// Worker threads; 1 evaluates sequentially.
    pub parallelism: usize,
}

pub fn evaluate_query(plan: &Plan, q: &LabeledQuery, env: &ExecEnv<'_>, opts: &EvalOptions<'_>) -> MetricRecord {
    let candidates = opts.policy.candidates(env.kb, &q.text);
    match execute_plan(plan, &q.text, &candidates, env, opts.budget) {
        Ok(scores) => MetricRecord::from_ranking(q.query_id, &rank_from_scores(&scores), &q.answers, opts.primary)
            .unwrap_or_else(|e| MetricRecord::failed(q.query_id, e.to_string())),
        Err(e) => MetricRecord { timed_out: e.is_timeout(), ..MetricRecord::failed(q.query_id, e.to_string()) },
    }
}

/// Runs `plan` on every query. Failed queries become all-zero records; order follows `queries`.
pub fn evaluate_plan(plan: &Plan, queries: &[LabeledQuery], env: &ExecEnv<'_>, opts: &EvalOptions<'_>) -> EvalSummary {
    let records: Vec<MetricRecord> = if opts.parallelism <= 1 || queries.len() <= 1 {
        queries.iter().map(|q| evaluate_query(plan, q, env, opts)).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(opts.parallelism).build();
        match pool {
            Ok(pool) => pool.install(|| queries.par_iter().map(|q| evaluate_query(plan, q, env, opts)).collect()),
            Err(_) => queries.iter().map(|q| evaluate_query(plan, q, env, opts)).collect(),
        }
    };
    EvalSummary::from_records(records)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(v: &[u64]) -> Vec<EntityId> {
        v.iter().map(|i| EntityId(*i)).collect()
    }

    fn set(v: &[u64]) -> BTreeSet<EntityId> {
        v.iter().map(|i| EntityId(*i)).collect()
    }

    #[test]
    fn ranking_and_ties() {
        let m: ScoreMap = [(EntityId(1), 0.5), (EntityId(2), 0.9)].into_iter().collect();
        assert_eq!(rank_from_scores(&m), ids(&[2, 1]));
        let m: ScoreMap = [(EntityId(2), 0.5), (EntityId(1), 0.5)].into_iter().collect();
        assert_eq!(rank_from_scores(&m), ids(&[1, 2]));
    }

    #[test]
    fn spec_examples() {
        let r = ids(&[2, 1, 3]);
        assert_eq!(hit_at_k(&r, &set(&[1]), 1).unwrap(), 0.0);
        assert_eq!(hit_at_k(&r, &set(&[1]), 5).unwrap(), 1.0);
        assert_eq!(mrr(&r, &set(&[1])).unwrap(), 0.5);
        assert_eq!(mrr(&r, &set(&[2])).unwrap(), 1.0);
        assert_eq!(mrr(&r, &set(&[9])).unwrap(), 0.0);
        assert_eq!(recall_at_k(&r, &set(&[1, 3, 9, 10]), 2).unwrap(), 0.25);
        assert_eq!(hit_at_k(&r, &set(&[]), 1), Err(MetricError::EmptyTruth));
    }

    #[test]
    fn empty_summary_is_flagged() {
        let s = EvalSummary::from_records(vec![]);
        assert!(s.empty);
        assert_eq!((s.count, s.means.hit1), (0, 0.0));
    }

    #[test]
    fn csv_layout() {
        let s = EvalSummary::from_records(vec![
            MetricRecord::from_ranking(7, &ids(&[1, 2]), &set(&[1]), PrimaryMetric::Hit1).unwrap(),
            MetricRecord::failed(8, "boom".into()),
        ]);
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "query_id,hit1,hit5,recall20,mrr,failed\n7,1,1,1,1,0\n8,0,0,0,0,1\nmean,0.5,0.5,0.5,0.5,0.5\n"
        );
    }
}

#![allow(dead_code)]

pub mod mock_http;
pub mod plan_gen;

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use serde_json::Value;

pub fn fixture_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/synthetic")
}

pub fn fixture(name: &str) -> PathBuf {
    fixture_dir().join(name)
}

pub fn read(name: &str) -> String {
    std::fs::read_to_string(fixture(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

pub fn manifest() -> Value {
    serde_json::from_str(&read("manifest.json")).expect("fixture manifest")
}

/// Scoring oracle built straight from the JSONL files, sharing no code with the library.
pub struct Oracle {
    pub candidates: Vec<u64>,
    pub documents: BTreeMap<u64, String>,
    pub full_info: BTreeMap<u64, String>,
    pub queries: Vec<OracleQuery>,
}

pub struct OracleQuery {
    pub id: u64,
    pub split: String,
    pub text: String,
    pub answers: BTreeSet<u64>,
}

impl Oracle {
    pub fn load(kb_jsonl: &str, queries_jsonl: &str) -> Self {
        let rows: Vec<Value> = kb_jsonl.lines().filter(|l| !l.trim().is_empty()).map(|l| serde_json::from_str(l).unwrap()).collect();
        let schema = rows.iter().find(|r| r["kind"] == "schema").expect("schema row");
        let cand_types: BTreeSet<&str> = schema["candidate_types"].as_array().unwrap().iter().map(|v| v.as_str().unwrap()).collect();
        let mut documents = BTreeMap::new();
        let mut candidates = Vec::new();
        for r in rows.iter().filter(|r| r["kind"] == "entity") {
            let id = r["id"].as_u64().unwrap();
            documents.insert(id, r["document"].as_str().unwrap().to_string());
            if cand_types.contains(r["type"].as_str().unwrap()) {
                candidates.push(id);
            }
        }
        candidates.sort_unstable();
        let mut rel: BTreeMap<u64, BTreeMap<String, BTreeSet<u64>>> = BTreeMap::new();
        for r in rows.iter().filter(|r| r["kind"] == "relation") {
            let (s, d) = (r["src"].as_u64().unwrap(), r["dst"].as_u64().unwrap());
            let t = r["rel"].as_str().unwrap();
            rel.entry(s).or_default().entry(t.to_string()).or_default().insert(d);
            rel.entry(d).or_default().entry(format!("inv_{t}")).or_default().insert(s);
        }
        let full_info = documents
            .iter()
            .map(|(id, doc)| {
                let mut s = doc.clone();
                for (t, ids) in rel.get(id).into_iter().flatten() {
                    let ids: Vec<String> = ids.iter().map(u64::to_string).collect();
                    s += &format!("\n{t}: {}", ids.join(", "));
                }
                (*id, s)
            })
            .collect();
        let queries = queries_jsonl
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| {
                let v: Value = serde_json::from_str(l).unwrap();
                OracleQuery {
                    id: v["query_id"].as_u64().unwrap(),
                    split: v["split"].as_str().unwrap().to_string(),
                    text: v["text"].as_str().unwrap().to_string(),
                    answers: v["answers"].as_array().unwrap().iter().map(|a| a.as_u64().unwrap()).collect(),
                }
            })
            .collect();
        Self { candidates, documents, full_info, queries }
    }

    pub fn fixture() -> Self {
        Self::load(&read("kb.jsonl"), &read("queries.jsonl"))
    }

    pub fn exact(&self, query: &str, id: u64) -> f64 {
        let hay = self.full_info[&id].to_lowercase();
        if hay.contains(&query.to_lowercase()) { 1.0 } else { 0.0 }
    }

    pub fn cosine(&self, query: &str, id: u64) -> f64 {
        let a = hashed(query);
        let b = hashed(&self.documents[&id]);
        let dot: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
        let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
        if na == 0.0 || nb == 0.0 { 0.0 } else { dot / (na * nb) }
    }

    /// Mean Hit@1 of `score` over one split; ties broken by ascending id.
    pub fn hit1(&self, split: &str, score: impl Fn(&str, u64) -> f64) -> f64 {
        let qs: Vec<&OracleQuery> = self.queries.iter().filter(|q| q.split == split).collect();
        let hits: usize = qs
            .iter()
            .filter(|q| {
                let mut best: Option<(u64, f64)> = None;
                for &id in &self.candidates {
                    let s = score(&q.text, id);
                    if best.is_none_or(|(_, b)| s > b) {
                        best = Some((id, s));
                    }
                }
                best.is_some_and(|(id, _)| q.answers.contains(&id))
            })
            .count();
        hits as f64 / qs.len() as f64
    }

    pub fn v1(&self, q: &str, id: u64) -> f64 {
        self.exact(q, id)
    }

    pub fn v2(&self, q: &str, id: u64) -> f64 {
        let e = self.cosine(q, id);
        if e >= 0.5 { e } else { 0.0 }
    }

    pub fn v3(&self, q: &str, id: u64) -> f64 {
        0.7 * self.exact(q, id) + 0.3 * self.cosine(q, id)
    }

    pub fn v4(&self, q: &str, id: u64) -> f64 {
        let e = self.cosine(q, id);
        0.7 * self.exact(q, id) + 0.3 * if e > 0.6 { e } else { 0.0 }
    }
}

/// 256 buckets of lower-cased alphanumeric tokens, FNV-1a with a fixed seed.
fn hashed(text: &str) -> Vec<f64> {
    let mut v = vec![0.0; 256];
    let lower = text.to_lowercase();
    let mut token = String::new();
    for c in lower.chars().chain(std::iter::once(' ')) {
        if c.is_alphanumeric() {
            token.push(c);
        } else if !token.is_empty() {
            let mut h: u64 = 0xcbf29ce484222325 ^ 0x5eed0f7a11;
            for b in token.bytes() {
                h = (h ^ b as u64).wrapping_mul(0x100000001b3);
            }
            v[(h % 256) as usize] += 1.0;
            token.clear();
        }
    }
    v
}

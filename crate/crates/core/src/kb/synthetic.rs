//! Deterministic synthetic knowledge bases with planted ground truth.
//!
//! Every candidate entity's document states a fixed set of attribute
//! markers such as `"red color"` or `"wool material"`. Each query names one
//! to `max_clauses` markers taken from a seed entity, optionally plus one
//! relation clause, and its answer set is every candidate entity satisfying
//! all of them. A single-marker query with no relation clause is the marker
//! itself; longer queries are rendered as a sentence.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    Entity, EntityId, KbError, KbKind, KbSchema, KnowledgeBase, LabeledQuery, Phrase, QuerySplit, Relation,
};

const TYPE_POOL: &[&str] = &["product", "brand", "category", "store", "supplier", "region"];

/// Attribute slots and their value vocabularies. Markers read `"<value> <slot>"`.
pub const ATTRIBUTE_SLOTS: &[(&str, &[&str])] = &[
    ("size", &["tiny", "small", "medium", "large", "huge", "compact", "oversized", "slim"]),
    ("color", &["red", "blue", "green", "black", "white", "amber", "violet", "silver"]),
    ("material", &["wool", "cotton", "leather", "steel", "bamboo", "linen", "denim", "ceramic"]),
    ("style", &["vintage", "modern", "rustic", "sporty", "classic", "minimalist", "elegant", "rugged"]),
    ("pattern", &["striped", "dotted", "plain", "checkered", "floral", "woven", "glossy", "matte"]),
];

const SYLLABLES: &[&str] = &[
    "ka", "lo", "mer", "tin", "va", "ros", "del", "qui", "zan", "bel", "tor", "ni", "sel", "dra", "mo", "fen",
    "lu", "gar", "pix", "ven",
];

const IMAGE_ADJECTIVES: &[&str] = &["small", "tall", "young", "old", "smiling", "wet", "bright", "striped", "wooden", "red"];
const IMAGE_NOUNS: &[&str] = &["dog", "child", "woman", "man", "bicycle", "ball", "bench", "horse", "boat", "guitar", "kite", "tree"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticParams {
    pub kind: KbKind,
    pub entities: usize,
    pub entity_types: usize,
    pub edges: usize,
    pub train: usize,
    pub validation: usize,
    pub test: usize,
    pub max_clauses: usize,
    pub relation_clause_prob: f64,
}

impl Default for SyntheticParams {
    fn default() -> Self {
        Self {
            kind: KbKind::RelationText,
            entities: 60,
            entity_types: 3,
            edges: 60,
            train: 40,
            validation: 20,
            test: 20,
            max_clauses: 3,
            relation_clause_prob: 0.3,
        }
    }
}

/// Ground truth recorded while generating.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GenerationManifest {
    /// Attribute name to the values that can appear in a marker for it.
    /// Relation attributes (`brand`, ...) list neighbor entity names.
    pub marker_table: BTreeMap<String, Vec<String>>,
    pub queries: Vec<PlantedQuery>,
    /// Image-text only: the phrases attached to each image.
    pub phrases: BTreeMap<EntityId, Vec<String>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlantedQuery {
    pub query_id: u64,
    pub seed_entity: EntityId,
    /// Substrings present verbatim (case-folded) in every answer's document.
    pub markers: Vec<String>,
    /// Attribute name to value, including the relation attribute if any.
    pub attributes: BTreeMap<String, String>,
    pub relation: Option<(String, EntityId)>,
}

#[derive(Clone, Debug)]
pub struct SyntheticKb {
    pub kb: KnowledgeBase,
    pub queries: QuerySplit,
    pub manifest: GenerationManifest,
}

pub fn generate_synthetic_kb(seed: u64, params: &SyntheticParams) -> Result<SyntheticKb, KbError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match params.kind {
        KbKind::RelationText => generate_relation_text(&mut rng, params),
        KbKind::ImageText => generate_image_text(&mut rng, params),
    }
}

fn infeasible(msg: impl Into<String>) -> KbError {
    KbError::InfeasibleParams(msg.into())
}

fn check_common(params: &SyntheticParams) -> Result<(), KbError> {
    if params.entities == 0 {
        return Err(infeasible("entities must be positive"));
    }
    if params.max_clauses == 0 {
        return Err(infeasible("max_clauses must be positive"));
    }
    if !(0.0..=1.0).contains(&params.relation_clause_prob) {
        return Err(infeasible("relation_clause_prob must lie in [0, 1]"));
    }
    Ok(())
}

struct NameGen {
    used: BTreeSet<String>,
}

impl NameGen {
    fn word(rng: &mut ChaCha8Rng) -> String {
        let a = SYLLABLES[rng.gen_range(0..SYLLABLES.len())];
        let b = SYLLABLES[rng.gen_range(0..SYLLABLES.len())];
        let w = format!("{a}{b}");
        let mut chars = w.chars();
        match chars.next() {
            Some(f) => f.to_ascii_uppercase().to_string() + chars.as_str(),
            None => String::new(),
        }
    }

    fn next(&mut self, rng: &mut ChaCha8Rng) -> String {
        loop {
            let name = format!("{} {}", Self::word(rng), Self::word(rng));
            if self.used.insert(name.to_lowercase()) {
                return name;
            }
        }
    }
}

fn join_clauses(clauses: &[String]) -> String {
    match clauses {
        [] => String::new(),
        [one] => one.clone(),
        [init @ .., last] => format!("{} and {}", init.join(", "), last),
    }
}

fn generate_relation_text(rng: &mut ChaCha8Rng, params: &SyntheticParams) -> Result<SyntheticKb, KbError> {
    check_common(params)?;
    let n_types = params.entity_types;
    if n_types == 0 || n_types > TYPE_POOL.len() {
        return Err(infeasible(format!("entity_types must be in 1..={}", TYPE_POOL.len())));
    }
    if params.entities < n_types {
        return Err(infeasible("fewer entities than entity types"));
    }
    if params.max_clauses > ATTRIBUTE_SLOTS.len() {
        return Err(infeasible(format!("max_clauses exceeds the {} attribute slots", ATTRIBUTE_SLOTS.len())));
    }
    let types: Vec<&str> = TYPE_POOL[..n_types].to_vec();
    let candidate = types[0];
    let per_type = params.entities / n_types;
    let n_candidates = per_type + params.entities % n_types;
    let mandatory = n_candidates * (n_types - 1);
    if params.edges < mandatory {
        return Err(infeasible(format!(
            "at least {mandatory} edges are needed to link every {candidate} to each other type"
        )));
    }
    let extra_edges = params.edges - mandatory;
    let max_also = n_candidates * n_candidates.saturating_sub(1);
    if extra_edges > max_also {
        return Err(infeasible(format!("at most {} edges fit this entity count", mandatory + max_also)));
    }

    let mut names = NameGen { used: BTreeSet::new() };
    let mut entities = Vec::with_capacity(params.entities);
    let mut by_type: BTreeMap<&str, Vec<EntityId>> = BTreeMap::new();
    let mut display_name: BTreeMap<EntityId, String> = BTreeMap::new();
    let mut attributes: BTreeMap<EntityId, Vec<(&str, &str)>> = BTreeMap::new();

    let mut next_id = 0u64;
    for (ti, ty) in types.iter().enumerate() {
        let count = if ti == 0 { n_candidates } else { per_type };
        for _ in 0..count {
            let id = EntityId(next_id);
            next_id += 1;
            let name = names.next(rng);
            let document = if ti == 0 {
                let attrs: Vec<(&str, &str)> = ATTRIBUTE_SLOTS
                    .iter()
                    .map(|(slot, vocab)| (*slot, vocab[rng.gen_range(0..vocab.len())]))
                    .collect();
                let v = |slot: &str| attrs.iter().find(|(s, _)| *s == slot).map(|(_, v)| *v).unwrap_or("");
                let doc = format!(
                    "{name} is a {} size {ty} in {} color, made of {} material, with a {} style and a {} pattern.",
                    v("size"),
                    v("color"),
                    v("material"),
                    v("style"),
                    v("pattern"),
                );
                attributes.insert(id, attrs);
                doc
            } else {
                format!("{name} is a {ty}.")
            };
            display_name.insert(id, name);
            by_type.entry(ty).or_default().push(id);
            entities.push(Entity { id, entity_type: ty.to_string(), document, component_id: 0, phrases: None });
        }
    }

    let mut relation_types: Vec<String> = types[1..].iter().map(|t| format!("has_{t}")).collect();
    if n_candidates > 1 {
        relation_types.push("also_buy".into());
    }
    let candidates = by_type[candidate].clone();
    let mut relations = Vec::with_capacity(params.edges);
    for &p in &candidates {
        for ty in &types[1..] {
            let pool = &by_type[ty];
            let dst = pool[rng.gen_range(0..pool.len())];
            relations.push(Relation { src: p, dst, relation_type: format!("has_{ty}") });
        }
    }
    let mut also: BTreeSet<(EntityId, EntityId)> = BTreeSet::new();
    while also.len() < extra_edges {
        let a = candidates[rng.gen_range(0..candidates.len())];
        let b = candidates[rng.gen_range(0..candidates.len())];
        if a != b && also.insert((a, b)) {
            relations.push(Relation { src: a, dst: b, relation_type: "also_buy".into() });
        }
    }

    let mut description = format!(
        "A synthetic catalogue of {candidate} entities. Each {candidate} document states its size, color, material, style and pattern, each written as the value followed by the attribute name (for example 'red color')."
    );
    if n_types > 1 {
        let links: Vec<String> = types[1..].iter().map(|t| format!("{candidate} -has_{t}-> {t}")).collect();
        description.push_str(&format!(" Relations: {}", links.join(", ")));
        if relation_types.iter().any(|r| r == "also_buy") {
            description.push_str(&format!(", {candidate} -also_buy-> {candidate}"));
        }
        description.push('.');
    }
    let schema = KbSchema {
        entity_types: types.iter().map(|t| t.to_string()).collect(),
        relation_types,
        candidate_types: vec![candidate.to_string()],
        description,
    };
    let kb = KnowledgeBase::new(KbKind::RelationText, entities, relations, schema)?;

    let mut marker_table: BTreeMap<String, Vec<String>> = ATTRIBUTE_SLOTS
        .iter()
        .map(|(slot, vocab)| (slot.to_string(), vocab.iter().map(|v| v.to_string()).collect()))
        .collect();
    for ty in &types[1..] {
        marker_table.insert(ty.to_string(), by_type[ty].iter().map(|id| display_name[id].clone()).collect());
    }

    let total = params.train + params.validation + params.test;
    let mut queries = Vec::with_capacity(total);
    let mut planted = Vec::with_capacity(total);
    for qid in 0..total as u64 {
        let seed_entity = candidates[rng.gen_range(0..candidates.len())];
        let n_clauses = rng.gen_range(1..=params.max_clauses);
        let mut slots: Vec<usize> = (0..ATTRIBUTE_SLOTS.len()).collect();
        slots.shuffle(rng);
        slots.truncate(n_clauses);
        slots.sort_unstable();
        let attrs = &attributes[&seed_entity];
        let mut q_attrs = BTreeMap::new();
        let markers: Vec<String> = slots
            .iter()
            .map(|&s| {
                let (slot, value) = attrs[s];
                q_attrs.insert(slot.to_string(), value.to_string());
                format!("{value} {slot}")
            })
            .collect();

        let relation = if n_types > 1 && rng.gen_bool(params.relation_clause_prob) {
            let links: Vec<&Relation> =
                kb.outgoing(seed_entity).filter(|r| r.relation_type.starts_with("has_")).collect();
            let r = links[rng.gen_range(0..links.len())];
            Some((r.relation_type.clone(), r.dst))
        } else {
            None
        };

        let text = match &relation {
            None if markers.len() == 1 => markers[0].clone(),
            None => format!("Looking for a {candidate} with {}", join_clauses(&markers)),
            Some((rel, dst)) => {
                let ty = rel.trim_start_matches("has_");
                q_attrs.insert(ty.to_string(), display_name[dst].clone());
                format!(
                    "Looking for a {candidate} with {} whose {ty} is {}",
                    join_clauses(&markers),
                    display_name[dst]
                )
            }
        };

        let answers: BTreeSet<EntityId> = candidates
            .iter()
            .copied()
            .filter(|&c| {
                let doc = kb.entity(c).map(|e| e.document.to_lowercase()).unwrap_or_default();
                markers.iter().all(|m| doc.contains(m.as_str()))
                    && relation
                        .as_ref()
                        .is_none_or(|(rel, dst)| kb.outgoing(c).any(|r| &r.relation_type == rel && r.dst == *dst))
            })
            .collect();
        debug_assert!(answers.contains(&seed_entity));

        planted.push(PlantedQuery { query_id: qid, seed_entity, markers, attributes: q_attrs, relation });
        queries.push(LabeledQuery { query_id: qid, text, answers });
    }

    let split = split_queries(queries, params);
    split.validate(&kb)?;
    Ok(SyntheticKb {
        kb,
        queries: split,
        manifest: GenerationManifest { marker_table, queries: planted, phrases: BTreeMap::new() },
    })
}

fn split_queries(mut queries: Vec<LabeledQuery>, params: &SyntheticParams) -> QuerySplit {
    let test = queries.split_off(params.train + params.validation);
    let validation = queries.split_off(params.train);
    QuerySplit { train: queries, validation, test }
}

fn generate_image_text(rng: &mut ChaCha8Rng, params: &SyntheticParams) -> Result<SyntheticKb, KbError> {
    check_common(params)?;
    if params.edges > 0 {
        return Err(infeasible("image-text knowledge bases carry no edges"));
    }
    let mut entities = Vec::with_capacity(params.entities);
    let mut phrase_manifest = BTreeMap::new();
    for i in 0..params.entities as u64 {
        let id = EntityId(i);
        let count = rng.gen_range(2..=4usize);
        let mut phrases: Vec<String> = Vec::with_capacity(count);
        while phrases.len() < count {
            let p = format!(
                "a {} {}",
                IMAGE_ADJECTIVES[rng.gen_range(0..IMAGE_ADJECTIVES.len())],
                IMAGE_NOUNS[rng.gen_range(0..IMAGE_NOUNS.len())]
            );
            if !phrases.contains(&p) {
                phrases.push(p);
            }
        }
        let document = format!("A photo showing {}.", join_clauses(&phrases));
        let annotated = phrases
            .iter()
            .enumerate()
            .map(|(patch, p)| Phrase { patch_id: patch as u32, phrase: p.clone() })
            .collect();
        phrase_manifest.insert(id, phrases);
        entities.push(Entity { id, entity_type: "image".into(), document, component_id: 0, phrases: Some(annotated) });
    }
    let schema = KbSchema {
        entity_types: vec!["image".into()],
        relation_types: vec![],
        candidate_types: vec!["image".into()],
        description: "A synthetic image collection. Each image has a caption and phrase annotations on numbered patches.".into(),
    };
    let kb = KnowledgeBase::new(KbKind::ImageText, entities, vec![], schema)?;

    let total = params.train + params.validation + params.test;
    let mut queries = Vec::with_capacity(total);
    let mut planted = Vec::with_capacity(total);
    let ids: Vec<EntityId> = phrase_manifest.keys().copied().collect();
    for qid in 0..total as u64 {
        let seed_entity = ids[rng.gen_range(0..ids.len())];
        let own = &phrase_manifest[&seed_entity];
        let k = rng.gen_range(1..=params.max_clauses.min(own.len()));
        let mut chosen: Vec<String> = own.choose_multiple(rng, k).cloned().collect();
        chosen.sort();
        let text = if chosen.len() == 1 {
            chosen[0].clone()
        } else {
            format!("An image with {}", join_clauses(&chosen))
        };
        let answers: BTreeSet<EntityId> = phrase_manifest
            .iter()
            .filter(|(_, ps)| chosen.iter().all(|c| ps.contains(c)))
            .map(|(id, _)| *id)
            .collect();
        planted.push(PlantedQuery {
            query_id: qid,
            seed_entity,
            markers: chosen,
            attributes: BTreeMap::new(),
            relation: None,
        });
        queries.push(LabeledQuery { query_id: qid, text, answers });
    }
    let split = split_queries(queries, params);
    split.validate(&kb)?;
    Ok(SyntheticKb {
        kb,
        queries: split,
        manifest: GenerationManifest { marker_table: BTreeMap::new(), queries: planted, phrases: phrase_manifest },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kb::{validate_components, write_kb, write_queries};

    fn bytes(s: &SyntheticKb) -> (Vec<u8>, Vec<u8>) {
        let mut kb = Vec::new();
        let mut q = Vec::new();
        write_kb(&s.kb, &mut kb).unwrap();
        write_queries(&s.queries, &mut q).unwrap();
        (kb, q)
    }

    #[test]
    fn same_seed_same_bytes() {
        let p = SyntheticParams::default();
        let a = generate_synthetic_kb(1, &p).unwrap();
        let b = generate_synthetic_kb(1, &p).unwrap();
        assert_eq!(bytes(&a), bytes(&b));
        assert_eq!(a.kb.len(), 60);
        assert_eq!((a.queries.train.len(), a.queries.validation.len(), a.queries.test.len()), (40, 20, 20));
    }

    #[test]
    fn answers_are_candidate_typed() {
        let s = generate_synthetic_kb(7, &SyntheticParams::default()).unwrap();
        for (_, q) in s.queries.iter() {
            for a in &q.answers {
                assert_eq!(s.kb.entity(*a).unwrap().entity_type, "product");
            }
        }
    }

    #[test]
    fn substring_scan_recovers_answer_superset() {
        for seed in 0..5 {
            let s = generate_synthetic_kb(seed, &SyntheticParams::default()).unwrap();
            let by_id: BTreeMap<u64, &LabeledQuery> = s.queries.iter().map(|(_, q)| (q.query_id, q)).collect();
            for pq in &s.manifest.queries {
                let scan: BTreeSet<EntityId> = s
                    .kb
                    .entities()
                    .filter(|e| {
                        let doc = e.document.to_lowercase();
                        pq.markers.iter().all(|m| doc.contains(m.as_str()))
                    })
                    .map(|e| e.id)
                    .collect();
                assert!(scan.is_superset(&by_id[&pq.query_id].answers));
                if pq.relation.is_none() {
                    assert_eq!(scan, by_id[&pq.query_id].answers);
                }
            }
        }
    }

    #[test]
    fn generated_components_validate() {
        let s = generate_synthetic_kb(3, &SyntheticParams::default()).unwrap();
        assert!(validate_components(&s.kb).is_empty());
    }

    #[test]
    fn too_few_edges_is_infeasible() {
        let p = SyntheticParams { edges: 5, ..SyntheticParams::default() };
        assert!(matches!(generate_synthetic_kb(1, &p), Err(KbError::InfeasibleParams(_))));
    }

    #[test]
    fn image_kb_phrases_match_manifest() {
        let p = SyntheticParams { kind: KbKind::ImageText, entities: 30, entity_types: 1, edges: 0, ..Default::default() };
        let s = generate_synthetic_kb(2, &p).unwrap();
        for e in s.kb.entities() {
            let got: Vec<String> = e.phrases.as_ref().unwrap().iter().map(|p| p.phrase.clone()).collect();
            assert_eq!(&got, &s.manifest.phrases[&e.id]);
        }
    }
}

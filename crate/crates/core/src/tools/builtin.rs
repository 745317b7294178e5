//! Local tools and the binding table shared by every manifest.

use std::collections::BTreeMap;
use std::sync::Arc;

use super::llm::{self, JudgeKind};
use super::text::{self, cosine};
use super::{ScoreMap, ToolContext, ToolError, ToolFn, Value};
use crate::kb::{EntityId, KnowledgeBase};

pub fn text_embedding(strings: &[String]) -> Vec<Vec<f64>> {
    strings.iter().map(|s| text::embed(s)).collect()
}

pub fn embedding_similarity(a: &[f64], b: &[f64]) -> Result<f64, ToolError> {
    Ok(cosine(a, b)?)
}

fn score_each(
    tool: &str,
    kb: &KnowledgeBase,
    candidates: &[EntityId],
    mut f: impl FnMut(EntityId) -> Result<f64, ToolError>,
) -> Result<ScoreMap, ToolError> {
    let mut out = ScoreMap::new();
    for &id in candidates {
        kb.entity(id)?;
        out.insert(id, f(id)?).map_err(|source| ToolError::NonFinite { tool: tool.into(), source })?;
    }
    Ok(out)
}

/// 1.0 where the case-folded needle occurs in the entity's full information.
pub fn exact_match_score(kb: &KnowledgeBase, needle: &str, candidates: &[EntityId]) -> Result<ScoreMap, ToolError> {
    let needle = needle.to_lowercase();
    score_each("ComputeExactMatchScore", kb, candidates, |id| {
        Ok(if full_info(kb, id)?.to_lowercase().contains(&needle) { 1.0 } else { 0.0 })
    })
}

/// Share of the needle's tokens present in the entity's full information.
pub fn token_match_score(kb: &KnowledgeBase, needle: &str, candidates: &[EntityId]) -> Result<ScoreMap, ToolError> {
    score_each("TokenMatchScore", kb, candidates, |id| Ok(text::token_recall(needle, &full_info(kb, id)?)))
}

/// Cosine similarity between the query embedding and each entity document's embedding.
pub fn query_entity_similarity(
    kb: &KnowledgeBase,
    query: &str,
    candidates: &[EntityId],
) -> Result<ScoreMap, ToolError> {
    let q = text::embed(query);
    score_each("ComputeQueryEntitySimilarity", kb, candidates, |id| {
        Ok(cosine(&q, &text::embed(&kb.entity(id)?.document))?)
    })
}

/// Best token F1 between the needle and any of the entity's phrases (or its document when it has none).
pub fn token_f1_score(kb: &KnowledgeBase, needle: &str, candidates: &[EntityId]) -> Result<ScoreMap, ToolError> {
    score_each("ComputeF1", kb, candidates, |id| {
        let e = kb.entity(id)?;
        Ok(match &e.phrases {
            Some(ps) if !ps.is_empty() => ps.iter().map(|p| text::token_f1(needle, &p.phrase)).fold(0.0, f64::max),
            _ => text::token_f1(needle, &e.document),
        })
    })
}

/// Out-edges by relation type plus in-edges under `inv_<type>`, neighbors ascending.
pub fn relation_dict(kb: &KnowledgeBase, id: EntityId) -> Result<BTreeMap<String, Vec<EntityId>>, ToolError> {
    kb.entity(id)?;
    let mut out: BTreeMap<String, Vec<EntityId>> = BTreeMap::new();
    for r in kb.outgoing(id) {
        out.entry(r.relation_type.clone()).or_default().push(r.dst);
    }
    for r in kb.incoming(id) {
        out.entry(format!("inv_{}", r.relation_type)).or_default().push(r.src);
    }
    for ids in out.values_mut() {
        ids.sort_unstable();
        ids.dedup();
    }
    Ok(out)
}

pub fn entity_ids_by_type(kb: &KnowledgeBase, ty: &str) -> Result<Vec<EntityId>, ToolError> {
    if !kb.schema().entity_types.iter().any(|t| t == ty) {
        return Err(ToolError::UnknownType(ty.to_string()));
    }
    Ok(kb.entities().filter(|e| e.entity_type == ty).map(|e| e.id).collect())
}

pub fn entity_type(kb: &KnowledgeBase, id: EntityId) -> Result<String, ToolError> {
    Ok(kb.entity(id)?.entity_type.clone())
}

pub fn entity_documents(kb: &KnowledgeBase, ids: &[EntityId]) -> Result<Vec<String>, ToolError> {
    ids.iter().map(|id| Ok(kb.entity(*id)?.document.clone())).collect()
}

/// Document, then one `relation: ids` line per relation type, then phrases if any.
pub fn full_info(kb: &KnowledgeBase, id: EntityId) -> Result<String, ToolError> {
    let e = kb.entity(id)?;
    let mut out = e.document.clone();
    for (rel, ids) in relation_dict(kb, id)? {
        let ids: Vec<String> = ids.iter().map(ToString::to_string).collect();
        out.push_str(&format!("\n{rel}: {}", ids.join(", ")));
    }
    if let Some(ps) = &e.phrases {
        let ps: Vec<&str> = ps.iter().map(|p| p.phrase.as_str()).collect();
        out.push_str(&format!("\nphrases: {}", ps.join("; ")));
    }
    Ok(out)
}

pub fn bag_of_phrases(kb: &KnowledgeBase, ids: &[EntityId]) -> Result<Vec<Vec<String>>, ToolError> {
    ids.iter()
        .map(|id| {
            let e = kb.entity(*id)?;
            Ok(e.phrases.iter().flatten().map(|p| p.phrase.clone()).collect())
        })
        .collect()
}

pub fn patch_phrase_dict(kb: &KnowledgeBase, ids: &[EntityId]) -> Result<Vec<BTreeMap<String, Vec<String>>>, ToolError> {
    ids.iter()
        .map(|id| {
            let mut m: BTreeMap<String, Vec<String>> = BTreeMap::new();
            for p in kb.entity(*id)?.phrases.iter().flatten() {
                m.entry(p.patch_id.to_string()).or_default().push(p.phrase.clone());
            }
            Ok(m)
        })
        .collect()
}

/// Positional argument accessors that report type errors against the tool name.
pub(crate) struct Args<'a> {
    pub tool: &'a str,
    pub values: &'a [Value],
}

impl<'a> Args<'a> {
    fn bad(&self, i: usize, want: &str) -> ToolError {
        ToolError::BadArguments { tool: self.tool.to_string(), message: format!("argument {i} must be {want}") }
    }

    pub fn text(&self, i: usize) -> Result<&'a str, ToolError> {
        match self.values.get(i) {
            Some(Value::Text(s)) => Ok(s),
            _ => Err(self.bad(i, "text")),
        }
    }

    pub fn text_list(&self, i: usize) -> Result<&'a [String], ToolError> {
        match self.values.get(i) {
            Some(Value::TextList(s)) => Ok(s),
            _ => Err(self.bad(i, "text_list")),
        }
    }

    pub fn id(&self, i: usize) -> Result<EntityId, ToolError> {
        match self.values.get(i) {
            Some(Value::Id(id)) => Ok(*id),
            _ => Err(self.bad(i, "id")),
        }
    }

    pub fn id_list(&self, i: usize) -> Result<&'a [EntityId], ToolError> {
        match self.values.get(i) {
            Some(Value::IdList(ids)) => Ok(ids),
            _ => Err(self.bad(i, "id_list")),
        }
    }

    pub fn vector(&self, i: usize) -> Result<&'a [f64], ToolError> {
        match self.values.get(i) {
            Some(Value::Vector(v)) => Ok(v),
            _ => Err(self.bad(i, "vector")),
        }
    }
}

fn tool(name: &str, f: impl Fn(&ToolContext<'_>, &Args<'_>) -> Result<Value, ToolError> + Send + Sync + 'static) -> ToolFn {
    let name = name.to_string();
    Arc::new(move |ctx, values| f(ctx, &Args { tool: &name, values }))
}

fn id_map(m: BTreeMap<String, Vec<EntityId>>) -> BTreeMap<String, Value> {
    m.into_iter().map(|(k, v)| (k, Value::IdList(v))).collect()
}

/// Implementation for a manifest `binding`, named `name` in error messages.
pub(crate) fn binding(binding: &str, name: &str) -> Option<ToolFn> {
    let f = match binding {
        "text_embedding" => tool(name, |_, a| Ok(Value::VectorList(text_embedding(a.text_list(0)?)))),
        "embedding_similarity" => {
            tool(name, |_, a| Ok(Value::Number(embedding_similarity(a.vector(0)?, a.vector(1)?)?)))
        }
        "query_entity_similarity" => {
            tool(name, |c, a| Ok(Value::Scores(query_entity_similarity(c.kb, a.text(0)?, a.id_list(1)?)?)))
        }
        "exact_match" => tool(name, |c, a| Ok(Value::Scores(exact_match_score(c.kb, a.text(0)?, a.id_list(1)?)?))),
        "token_match" => tool(name, |c, a| Ok(Value::Scores(token_match_score(c.kb, a.text(0)?, a.id_list(1)?)?))),
        "token_f1" => tool(name, |c, a| Ok(Value::Scores(token_f1_score(c.kb, a.text(0)?, a.id_list(1)?)?))),
        "relation_dict" => tool(name, |c, a| Ok(Value::Map(id_map(relation_dict(c.kb, a.id(0)?)?)))),
        "entity_ids_by_type" => tool(name, |c, a| Ok(Value::IdList(entity_ids_by_type(c.kb, a.text(0)?)?))),
        "entity_type" => tool(name, |c, a| Ok(Value::Text(entity_type(c.kb, a.id(0)?)?))),
        "entity_documents" => tool(name, |c, a| Ok(Value::TextList(entity_documents(c.kb, a.id_list(0)?)?))),
        "full_info" => tool(name, |c, a| Ok(Value::Text(full_info(c.kb, a.id(0)?)?))),
        "bag_of_phrases" => tool(name, |c, a| Ok(Value::TextLists(bag_of_phrases(c.kb, a.id_list(0)?)?))),
        "patch_phrase_dict" => tool(name, |c, a| {
            let dicts = patch_phrase_dict(c.kb, a.id_list(0)?)?;
            Ok(Value::MapList(
                dicts
                    .into_iter()
                    .map(|m| m.into_iter().map(|(k, v)| (k, Value::TextList(v))).collect())
                    .collect(),
            ))
        }),
        "parse_attributes" => tool(name, |c, a| {
            let m = llm::parse_attribute_from_query(c, a.tool, a.text(0)?, a.text_list(1)?)?;
            Ok(Value::Map(m.into_iter().map(|(k, v)| (k, Value::Text(v))).collect()))
        }),
        "classify_texts" => tool(name, |c, a| {
            llm::llm_judge(c, a.tool, JudgeKind::Classify { texts: a.text_list(0)?.to_vec(), classes: a.text_list(1)?.to_vec() })
        }),
        "classify_entities" => tool(name, |c, a| {
            let texts = entity_documents(c.kb, a.id_list(0)?)?;
            llm::llm_judge(c, a.tool, JudgeKind::Classify { texts, classes: a.text_list(1)?.to_vec() })
        }),
        "check_requirements" => tool(name, |c, a| {
            llm::llm_judge(c, a.tool, JudgeKind::CheckRequirement { ids: a.id_list(0)?.to_vec(), requirement: a.text(1)?.into() })
        }),
        "satisfaction_score" => tool(name, |c, a| {
            llm::llm_judge(c, a.tool, JudgeKind::SatisfactionScore { ids: a.id_list(0)?.to_vec(), query: a.text(1)?.into() })
        }),
        "extract_relevant" => tool(name, |c, a| {
            llm::llm_judge(c, a.tool, JudgeKind::ExtractRelevant { texts: a.text_list(0)?.to_vec(), term: a.text(1)?.into() })
        }),
        "summarize" => tool(name, |c, a| llm::llm_judge(c, a.tool, JudgeKind::Summarize { texts: a.text_list(0)?.to_vec() })),
        "vqa" => tool(name, |c, a| {
            llm::llm_judge(c, a.tool, JudgeKind::Vqa { question: a.text(0)?.into(), ids: a.id_list(1)?.to_vec() })
        }),
        "visual_attributes" => tool(name, |c, a| {
            llm::llm_judge(c, a.tool, JudgeKind::VisualAttributes { attributes: a.text_list(0)?.to_vec(), ids: a.id_list(1)?.to_vec() })
        }),
        "external_search" => tool(name, |c, a| {
            let reply = c.complete(a.tool, format!("{}: {}", a.tool, a.text(0)?))?;
            Ok(Value::Text(reply.trim().to_string()))
        }),
        _ => return None,
    };
    Some(f)
}

//! JSONL persistence for knowledge bases and query sets.

use std::collections::BTreeSet;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{
    Entity, EntityId, KbError, KbKind, KbSchema, KnowledgeBase, LabeledQuery, Phrase, QuerySplit, Relation,
    SplitName,
};

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum KbRecord {
    Entity {
        id: EntityId,
        #[serde(rename = "type")]
        entity_type: String,
        document: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        phrases: Option<Vec<Phrase>>,
        // advisory only; recomputed on load
        #[serde(default, skip_serializing_if = "Option::is_none")]
        component: Option<usize>,
    },
    Relation {
        src: EntityId,
        dst: EntityId,
        rel: String,
    },
    Schema {
        entity_types: Vec<String>,
        relation_types: Vec<String>,
        candidate_types: Vec<String>,
        description: String,
    },
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct QueryRecord {
    query_id: u64,
    split: SplitName,
    text: String,
    answers: Vec<EntityId>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> KbError + '_ {
    move |source| KbError::Io { path: path.display().to_string(), source }
}

pub fn load_kb(path: impl AsRef<Path>, kind: KbKind) -> Result<KnowledgeBase, KbError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    parse_kb(&text, kind)
}

pub fn parse_kb(text: &str, kind: KbKind) -> Result<KnowledgeBase, KbError> {
    let mut entities = Vec::new();
    let mut relations = Vec::new();
    let mut schema = None;
    let mut ids = BTreeSet::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let record: KbRecord = serde_json::from_str(line)
            .map_err(|e| KbError::Parse { line: line_no, message: e.to_string() })?;
        match record {
            KbRecord::Entity { id, entity_type, document, phrases, component: _ } => {
                if !ids.insert(id) {
                    return Err(KbError::DuplicateEntity(id));
                }
                entities.push(Entity { id, entity_type, document, component_id: 0, phrases });
            }
            KbRecord::Relation { src, dst, rel } => {
                relations.push(Relation { src, dst, relation_type: rel });
            }
            KbRecord::Schema { entity_types, relation_types, candidate_types, description } => {
                if schema.is_some() {
                    return Err(KbError::Parse { line: line_no, message: "second schema record".into() });
                }
                schema = Some(KbSchema { entity_types, relation_types, candidate_types, description });
            }
        }
    }
    let schema = schema.ok_or_else(|| KbError::Invalid("file has no schema record".into()))?;
    KnowledgeBase::new(kind, entities, relations, schema)
}

/// Canonical serialization: schema, then entities by ascending id, then relations in order.
pub fn write_kb(kb: &KnowledgeBase, mut out: impl Write) -> std::io::Result<()> {
    let s = kb.schema();
    let mut emit = |rec: &KbRecord| -> std::io::Result<()> {
        serde_json::to_writer(&mut out, rec)?;
        out.write_all(b"\n")
    };
    emit(&KbRecord::Schema {
        entity_types: s.entity_types.clone(),
        relation_types: s.relation_types.clone(),
        candidate_types: s.candidate_types.clone(),
        description: s.description.clone(),
    })?;
    for e in kb.entities() {
        emit(&KbRecord::Entity {
            id: e.id,
            entity_type: e.entity_type.clone(),
            document: e.document.clone(),
            phrases: e.phrases.clone(),
            component: Some(e.component_id),
        })?;
    }
    for r in kb.relations() {
        emit(&KbRecord::Relation { src: r.src, dst: r.dst, rel: r.relation_type.clone() })?;
    }
    Ok(())
}

pub fn save_kb(kb: &KnowledgeBase, path: impl AsRef<Path>) -> Result<(), KbError> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    write_kb(kb, &mut buf).map_err(io_err(path))?;
    fs::write(path, buf).map_err(io_err(path))
}

pub fn load_queries(path: impl AsRef<Path>, kb: &KnowledgeBase) -> Result<QuerySplit, KbError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    parse_queries(&text, kb)
}

pub fn parse_queries(text: &str, kb: &KnowledgeBase) -> Result<QuerySplit, KbError> {
    let mut split = QuerySplit::default();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: QueryRecord = serde_json::from_str(line)
            .map_err(|e| KbError::Parse { line: i + 1, message: e.to_string() })?;
        let q = LabeledQuery { query_id: rec.query_id, text: rec.text, answers: rec.answers.into_iter().collect() };
        match rec.split {
            SplitName::Train => split.train.push(q),
            SplitName::Validation => split.validation.push(q),
            SplitName::Test => split.test.push(q),
        }
    }
    split.validate(kb)?;
    Ok(split)
}

pub fn write_queries(split: &QuerySplit, mut out: impl Write) -> std::io::Result<()> {
    for (name, q) in split.iter() {
        let rec = QueryRecord {
            query_id: q.query_id,
            split: name,
            text: q.text.clone(),
            answers: q.answers.iter().copied().collect(),
        };
        serde_json::to_writer(&mut out, &rec)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn save_queries(split: &QuerySplit, path: impl AsRef<Path>) -> Result<(), KbError> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    write_queries(split, &mut buf).map_err(io_err(path))?;
    fs::write(path, buf).map_err(io_err(path))
}

#[cfg(test)]
mod tests {
    use super::*;

    const SCHEMA: &str = r#"{"kind":"schema","entity_types":["product","brand"],"relation_types":["has_brand"],"candidate_types":["product"],"description":"products and brands"}"#;

    #[test]
    fn two_entities_one_edge() {
        let text = format!(
            "{SCHEMA}\n{}\n{}\n{}\n",
            r#"{"kind":"entity","id":0,"type":"product","document":"product A"}"#,
            r#"{"kind":"entity","id":1,"type":"brand","document":"brand B"}"#,
            r#"{"kind":"relation","src":0,"dst":1,"rel":"has_brand"}"#,
        );
        let kb = parse_kb(&text, KbKind::RelationText).unwrap();
        assert_eq!(kb.len(), 2);
        assert_eq!(kb.relations().len(), 1);
        assert!(kb.entities().all(|e| e.component_id == 0));
    }

    #[test]
    fn dangling_edge_names_missing_id() {
        let text = format!(
            "{SCHEMA}\n{}\n{}\n",
            r#"{"kind":"entity","id":0,"type":"product","document":"a"}"#,
            r#"{"kind":"relation","src":0,"dst":7,"rel":"has_brand"}"#,
        );
        match parse_kb(&text, KbKind::RelationText) {
            Err(KbError::DanglingEdge(EntityId(7))) => {}
            other => panic!("expected DanglingEdge(7), got {other:?}"),
        }
    }

    #[test]
    fn duplicate_entity_rejected() {
        let e = r#"{"kind":"entity","id":3,"type":"product","document":"a"}"#;
        let text = format!("{SCHEMA}\n{e}\n{e}\n");
        assert!(matches!(parse_kb(&text, KbKind::RelationText), Err(KbError::DuplicateEntity(EntityId(3)))));
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let text = format!("{SCHEMA}\n{{not json\n");
        match parse_kb(&text, KbKind::RelationText) {
            Err(KbError::Parse { line: 2, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn stored_component_labels_are_ignored() {
        let text = format!(
            "{SCHEMA}\n{}\n{}\n",
            r#"{"kind":"entity","id":5,"type":"product","document":"a","component":9}"#,
            r#"{"kind":"entity","id":9,"type":"brand","document":"b","component":9}"#,
        );
        let kb = parse_kb(&text, KbKind::RelationText).unwrap();
        let labels: Vec<_> = kb.entities().map(|e| e.component_id).collect();
        assert_eq!(labels, vec![0, 1]);
    }

    #[test]
    fn phrases_require_image_kind() {
        let text = format!(
            "{SCHEMA}\n{}\n",
            r#"{"kind":"entity","id":0,"type":"product","document":"a","phrases":[{"patch_id":1,"phrase":"x"}]}"#,
        );
        assert!(matches!(parse_kb(&text, KbKind::RelationText), Err(KbError::Invalid(_))));
    }
}

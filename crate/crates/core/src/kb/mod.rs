//! Knowledge-base data model.
//!
//! A [`KnowledgeBase`] holds typed entities, each with a free-text document,
//! plus a directed relation list. Image-text knowledge bases additionally
//! attach `(patch_id, phrase)` annotations to every entity. Connected
//! component labels are always derived from the edge set; whatever labels a
//! file carries are ignored on load.

mod components;
mod io;
pub mod synthetic;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

pub use components::{component_labels, validate_components, ComponentViolation};
pub use io::{load_kb, load_queries, parse_kb, parse_queries, save_kb, save_queries, write_kb, write_queries};
pub use synthetic::{generate_synthetic_kb, GenerationManifest, PlantedQuery, SyntheticKb, SyntheticParams};

/// Identifier of an entity. Unique within one knowledge base; not required to be dense.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EntityId(pub u64);

impl fmt::Display for EntityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KbKind {
    RelationText,
    ImageText,
}

/// A phrase annotation on an image patch. Patch ids stand in for box coordinates.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Phrase {
    pub patch_id: u32,
    pub phrase: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Entity {
    pub id: EntityId,
    pub entity_type: String,
    pub document: String,
    pub component_id: usize,
    pub phrases: Option<Vec<Phrase>>,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct Relation {
    pub src: EntityId,
    pub dst: EntityId,
    pub relation_type: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct KbSchema {
    pub entity_types: Vec<String>,
    pub relation_types: Vec<String>,
    pub candidate_types: Vec<String>,
    pub description: String,
}

impl KbSchema {
    fn check(&self) -> Result<(), KbError> {
        if self.description.trim().is_empty() {
            return Err(KbError::Invalid("schema description is empty".into()));
        }
        if self.candidate_types.is_empty() {
            return Err(KbError::Invalid("schema declares no candidate types".into()));
        }
        for t in &self.candidate_types {
            if !self.entity_types.contains(t) {
                return Err(KbError::Invalid(format!(
                    "candidate type {t:?} is not an entity type"
                )));
            }
        }
        Ok(())
    }

    /// Text used for the `<knowledge_base_schema>` prompt slot.
    pub fn render(&self) -> String {
        format!(
            "{}\nEntity types: {}\nRelation types: {}\nCandidate types: {}",
            self.description.trim_end(),
            self.entity_types.join(", "),
            if self.relation_types.is_empty() { "(none)".to_string() } else { self.relation_types.join(", ") },
            self.candidate_types.join(", "),
        )
    }
}

#[derive(Debug, thiserror::Error)]
pub enum KbError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("relation references missing entity {0}")]
    DanglingEdge(EntityId),
    #[error("duplicate entity id {0}")]
    DuplicateEntity(EntityId),
    #[error("duplicate relation ({0}, {1}, {2:?})")]
    DuplicateRelation(EntityId, EntityId, String),
    #[error("invalid knowledge base: {0}")]
    Invalid(String),
    #[error("infeasible generator parameters: {0}")]
    InfeasibleParams(String),
    #[error("unknown entity {0}")]
    UnknownEntity(EntityId),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Validated, immutable knowledge base.
#[derive(Clone, Debug, PartialEq)]
pub struct KnowledgeBase {
    kind: KbKind,
    entities: BTreeMap<EntityId, Entity>,
    relations: Vec<Relation>,
    schema: KbSchema,
    // relation indices into `relations`, keyed by endpoint
    outgoing: BTreeMap<EntityId, Vec<usize>>,
    incoming: BTreeMap<EntityId, Vec<usize>>,
}

impl KnowledgeBase {
    /// Validates the parts and recomputes every `component_id` from the edge set.
    pub fn new(
        kind: KbKind,
        entities: Vec<Entity>,
        relations: Vec<Relation>,
        schema: KbSchema,
    ) -> Result<Self, KbError> {
        schema.check()?;
        let mut by_id = BTreeMap::new();
        for entity in entities {
            if entity.entity_type.is_empty() {
                return Err(KbError::Invalid(format!("entity {} has an empty type", entity.id)));
            }
            if !schema.entity_types.contains(&entity.entity_type) {
                return Err(KbError::Invalid(format!(
                    "entity {} has type {:?} which the schema does not declare",
                    entity.id, entity.entity_type
                )));
            }
            match (kind, &entity.phrases) {
                (KbKind::ImageText, None) => {
                    return Err(KbError::Invalid(format!("image entity {} has no phrases", entity.id)))
                }
                (KbKind::RelationText, Some(_)) => {
                    return Err(KbError::Invalid(format!(
                        "entity {} carries phrases in a relation-text knowledge base",
                        entity.id
                    )))
                }
                _ => {}
            }
            let id = entity.id;
            if by_id.insert(id, entity).is_some() {
                return Err(KbError::DuplicateEntity(id));
            }
        }

        let mut seen = BTreeSet::new();
        for rel in &relations {
            for end in [rel.src, rel.dst] {
                if !by_id.contains_key(&end) {
                    return Err(KbError::DanglingEdge(end));
                }
            }
            if !schema.relation_types.contains(&rel.relation_type) {
                return Err(KbError::Invalid(format!(
                    "relation type {:?} is not declared in the schema",
                    rel.relation_type
                )));
            }
            if !seen.insert((rel.src, rel.dst, rel.relation_type.as_str())) {
                return Err(KbError::DuplicateRelation(rel.src, rel.dst, rel.relation_type.clone()));
            }
        }

        let mut outgoing: BTreeMap<EntityId, Vec<usize>> = BTreeMap::new();
        let mut incoming: BTreeMap<EntityId, Vec<usize>> = BTreeMap::new();
        for (i, rel) in relations.iter().enumerate() {
            outgoing.entry(rel.src).or_default().push(i);
            incoming.entry(rel.dst).or_default().push(i);
        }

        let labels = component_labels(by_id.keys().copied(), &relations);
        for (id, entity) in by_id.iter_mut() {
            entity.component_id = labels[id];
        }

        Ok(Self { kind, entities: by_id, relations, schema, outgoing, incoming })
    }

    /// Replaces component labels without recomputing them. Used to inspect
    /// externally supplied labelings with [`validate_components`].
    pub fn with_component_ids(mut self, labels: &BTreeMap<EntityId, usize>) -> Self {
        for (id, label) in labels {
            if let Some(e) = self.entities.get_mut(id) {
                e.component_id = *label;
            }
        }
        self
    }

    pub fn kind(&self) -> KbKind {
        self.kind
    }

    pub fn schema(&self) -> &KbSchema {
        &self.schema
    }

    pub fn len(&self) -> usize {
        self.entities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entities.is_empty()
    }

    pub fn entity(&self, id: EntityId) -> Result<&Entity, KbError> {
        self.entities.get(&id).ok_or(KbError::UnknownEntity(id))
    }

    pub fn contains(&self, id: EntityId) -> bool {
        self.entities.contains_key(&id)
    }

    /// Entities in ascending id order.
    pub fn entities(&self) -> impl Iterator<Item = &Entity> {
        self.entities.values()
    }

    pub fn relations(&self) -> &[Relation] {
        &self.relations
    }

    pub fn outgoing(&self, id: EntityId) -> impl Iterator<Item = &Relation> {
        self.outgoing.get(&id).into_iter().flatten().map(|&i| &self.relations[i])
    }

    pub fn incoming(&self, id: EntityId) -> impl Iterator<Item = &Relation> {
        self.incoming.get(&id).into_iter().flatten().map(|&i| &self.relations[i])
    }

    /// Ids of every entity whose type is one of the schema's candidate types, ascending.
    pub fn candidate_ids(&self) -> Vec<EntityId> {
        self.entities
            .values()
            .filter(|e| self.schema.candidate_types.contains(&e.entity_type))
            .map(|e| e.id)
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledQuery {
    pub query_id: u64,
    pub text: String,
    pub answers: BTreeSet<EntityId>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitName {
    Train,
    Validation,
    Test,
}

impl std::str::FromStr for SplitName {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Self::Train),
            "validation" | "valid" | "val" => Ok(Self::Validation),
            "test" => Ok(Self::Test),
            other => Err(format!("unknown split {other:?}")),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct QuerySplit {
    pub train: Vec<LabeledQuery>,
    pub validation: Vec<LabeledQuery>,
    pub test: Vec<LabeledQuery>,
}

impl QuerySplit {
    pub fn get(&self, split: SplitName) -> &[LabeledQuery] {
        match split {
            SplitName::Train => &self.train,
            SplitName::Validation => &self.validation,
            SplitName::Test => &self.test,
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (SplitName, &LabeledQuery)> {
        let tag = |s| move |q| (s, q);
        self.train
            .iter()
            .map(tag(SplitName::Train))
            .chain(self.validation.iter().map(tag(SplitName::Validation)))
            .chain(self.test.iter().map(tag(SplitName::Test)))
    }

    /// Checks id uniqueness across splits, non-empty answers, and answer-type closure.
    pub fn validate(&self, kb: &KnowledgeBase) -> Result<(), KbError> {
        let mut ids = BTreeSet::new();
        for (_, q) in self.iter() {
            if !ids.insert(q.query_id) {
                return Err(KbError::Invalid(format!("duplicate query id {}", q.query_id)));
            }
            if q.answers.is_empty() {
                return Err(KbError::Invalid(format!("query {} has no answers", q.query_id)));
            }
            for a in &q.answers {
                let e = kb.entity(*a)?;
                if !kb.schema().candidate_types.contains(&e.entity_type) {
                    return Err(KbError::Invalid(format!(
                        "query {} answer {} has non-candidate type {:?}",
                        q.query_id, a, e.entity_type
                    )));
                }
            }
        }
        Ok(())
    }
}

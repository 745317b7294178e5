//! Typed tool registry and the built-in function libraries.
//!
//! A [`ToolRegistry`] pairs every [`ToolSpec`] with an executable binding.
//! Three registries ship as JSON manifests: [`ToolRegistry::stark`] for
//! relation-text knowledge bases, [`ToolRegistry::vision`] for image-text
//! ones and [`ToolRegistry::qa`] with external search slots.
//!
//! ```
//! use planopt::tools::ToolRegistry;
//!
//! let registry = ToolRegistry::stark();
//! let spec = registry.lookup("ComputeExactMatchScore").unwrap();
//! assert_eq!(spec.params.len(), 2);
//! assert!(registry.render_descriptions().contains("TokenMatchScore"));
//! ```

mod builtin;
mod llm;
pub mod text;

use std::cell::Cell;
use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::gateway::{Gateway, GatewayError, Role};
use crate::kb::{EntityId, KbError, KnowledgeBase};

pub use builtin::{
    bag_of_phrases, embedding_similarity, entity_documents, entity_ids_by_type, entity_type, exact_match_score,
    full_info, patch_phrase_dict, query_entity_similarity, relation_dict, text_embedding, token_f1_score,
    token_match_score,
};
pub use llm::{llm_judge, parse_attribute_from_query, rule_based_attributes, JudgeKind};
pub use text::{DimensionMismatch, EMBEDDING_DIM};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValueType {
    Text,
    TextList,
    Id,
    IdList,
    Number,
    Map,
    ScoreMap,
    Vector,
    VectorList,
    TextLists,
    MapList,
}

impl fmt::Display for ValueType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ValueType::Text => "text",
            ValueType::TextList => "text_list",
            ValueType::Id => "id",
            ValueType::IdList => "id_list",
            ValueType::Number => "number",
            ValueType::Map => "map",
            ValueType::ScoreMap => "score_map",
            ValueType::Vector => "vector",
            ValueType::VectorList => "vector_list",
            ValueType::TextLists => "text_lists",
            ValueType::MapList => "map_list",
        })
    }
}

/// Entity id to finite score.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ScoreMap(BTreeMap<EntityId, f64>);

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("non-finite score {score} for entity {id}")]
pub struct NonFiniteScore {
    pub id: EntityId,
    pub score: f64,
}

impl ScoreMap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, id: EntityId, score: f64) -> Result<(), NonFiniteScore> {
        if !score.is_finite() {
            return Err(NonFiniteScore { id, score });
        }
        self.0.insert(id, score);
        Ok(())
    }

    pub fn get(&self, id: EntityId) -> Option<f64> {
        self.0.get(&id).copied()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (EntityId, f64)> + '_ {
        self.0.iter().map(|(k, v)| (*k, *v))
    }

    pub fn ids(&self) -> impl Iterator<Item = EntityId> + '_ {
        self.0.keys().copied()
    }

    pub fn as_map(&self) -> &BTreeMap<EntityId, f64> {
        &self.0
    }
}

impl TryFrom<BTreeMap<EntityId, f64>> for ScoreMap {
    type Error = NonFiniteScore;

    fn try_from(map: BTreeMap<EntityId, f64>) -> Result<Self, Self::Error> {
        if let Some((id, score)) = map.iter().find(|(_, s)| !s.is_finite()) {
            return Err(NonFiniteScore { id: *id, score: *score });
        }
        Ok(Self(map))
    }
}

impl FromIterator<(EntityId, f64)> for ScoreMap {
    /// Panics on a non-finite score; use [`ScoreMap::try_from`] for untrusted input.
    fn from_iter<I: IntoIterator<Item = (EntityId, f64)>>(iter: I) -> Self {
        let map: BTreeMap<EntityId, f64> = iter.into_iter().collect();
        Self::try_from(map).expect("finite scores")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Value {
    Text(String),
    TextList(Vec<String>),
    Id(EntityId),
    IdList(Vec<EntityId>),
    Number(f64),
    Map(BTreeMap<String, Value>),
    Scores(ScoreMap),
    Vector(Vec<f64>),
    VectorList(Vec<Vec<f64>>),
    TextLists(Vec<Vec<String>>),
    MapList(Vec<BTreeMap<String, Value>>),
}

impl Value {
    pub fn value_type(&self) -> ValueType {
        match self {
            Value::Text(_) => ValueType::Text,
            Value::TextList(_) => ValueType::TextList,
            Value::Id(_) => ValueType::Id,
            Value::IdList(_) => ValueType::IdList,
            Value::Number(_) => ValueType::Number,
            Value::Map(_) => ValueType::Map,
            Value::Scores(_) => ValueType::ScoreMap,
            Value::Vector(_) => ValueType::Vector,
            Value::VectorList(_) => ValueType::VectorList,
            Value::TextLists(_) => ValueType::TextLists,
            Value::MapList(_) => ValueType::MapList,
        }
    }

    /// Compact JSON rendering used by execution logs.
    pub fn summary(&self) -> String {
        serde_json::to_string(self).unwrap_or_default()
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ToolError {
    #[error("unknown entity {0}")]
    UnknownEntity(EntityId),
    #[error("unknown entity type {0:?}")]
    UnknownType(String),
    #[error(transparent)]
    DimensionMismatch(#[from] DimensionMismatch),
    #[error("{tool}: gateway error: {source}")]
    Gateway { tool: String, source: GatewayError },
    #[error("{tool}: reply violates the output schema: {message}")]
    SchemaViolation { tool: String, message: String },
    #[error("{0}: no gateway is configured for llm-class tools")]
    NoGateway(String),
    #[error("{tool}: bad arguments: {message}")]
    BadArguments { tool: String, message: String },
    #[error("{tool}: {source}")]
    NonFinite { tool: String, source: NonFiniteScore },
    #[error("llm call budget of {limit} exhausted")]
    LlmBudgetExhausted { limit: usize },
    #[error("wall-clock deadline passed")]
    DeadlineExceeded,
    #[error("{tool}: {message}")]
    Failed { tool: String, message: String },
}

impl From<KbError> for ToolError {
    fn from(e: KbError) -> Self {
        match e {
            KbError::UnknownEntity(id) => ToolError::UnknownEntity(id),
            other => ToolError::Failed { tool: "kb".into(), message: other.to_string() },
        }
    }
}

/// Everything a tool may read while it runs.
pub struct ToolContext<'a> {
    pub kb: &'a KnowledgeBase,
    pub gateway: Option<&'a Gateway>,
    /// Attribute name to known values; enables the rule-based attribute parser.
    pub attribute_rules: Option<&'a BTreeMap<String, Vec<String>>>,
    pub deadline: Option<Instant>,
    pub max_llm_calls: Option<usize>,
    llm_calls: Cell<usize>,
}

impl<'a> ToolContext<'a> {
    pub fn new(kb: &'a KnowledgeBase) -> Self {
        Self { kb, gateway: None, attribute_rules: None, deadline: None, max_llm_calls: None, llm_calls: Cell::new(0) }
    }

    pub fn with_gateway(mut self, gateway: Option<&'a Gateway>) -> Self {
        self.gateway = gateway;
        self
    }

    pub fn with_attribute_rules(mut self, rules: Option<&'a BTreeMap<String, Vec<String>>>) -> Self {
        self.attribute_rules = rules;
        self
    }

    pub fn with_deadline(mut self, deadline: Option<Instant>) -> Self {
        self.deadline = deadline;
        self
    }

    pub fn with_llm_limit(mut self, limit: Option<usize>) -> Self {
        self.max_llm_calls = limit;
        self
    }

    pub fn llm_calls(&self) -> usize {
        self.llm_calls.get()
    }

    pub fn deadline_passed(&self) -> bool {
        self.deadline.is_some_and(|d| Instant::now() >= d)
    }

    /// One gateway call on behalf of `tool`, charged against the llm budget.
    pub fn complete(&self, tool: &str, prompt: String) -> Result<String, ToolError> {
        let gateway = self.gateway.ok_or_else(|| ToolError::NoGateway(tool.to_string()))?;
        if let Some(limit) = self.max_llm_calls {
            if self.llm_calls.get() >= limit {
                return Err(ToolError::LlmBudgetExhausted { limit });
            }
        }
        if self.deadline_passed() {
            return Err(ToolError::DeadlineExceeded);
        }
        self.llm_calls.set(self.llm_calls.get() + 1);
        let request = gateway.request(Role::Tool, prompt, 0, 0);
        gateway.complete(&request).map_err(|source| ToolError::Gateway { tool: tool.to_string(), source })
    }
}

pub type ToolFn = Arc<dyn Fn(&ToolContext<'_>, &[Value]) -> Result<Value, ToolError> + Send + Sync>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CostClass {
    Local,
    Llm,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub name: String,
    #[serde(rename = "type")]
    pub ty: ValueType,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToolSpec {
    pub name: String,
    pub params: Vec<ParamSpec>,
    pub returns: ValueType,
    pub description: String,
    pub cost_class: CostClass,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gateway_role: Option<Role>,
    /// Name of the built-in implementation this entry binds to.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub binding: Option<String>,
}

impl ToolSpec {
    pub fn signature(&self) -> String {
        let params: Vec<String> = self.params.iter().map(|p| format!("{}: {}", p.name, p.ty)).collect();
        format!("{}({}) -> {}", self.name, params.join(", "), self.returns)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RegistryError {
    #[error("tool {0} is already registered")]
    DuplicateTool(String),
    #[error("tool {name}: {message}")]
    InvalidSpec { name: String, message: String },
    #[error("tool {name}: unknown binding {binding:?}")]
    UnknownBinding { name: String, binding: String },
    #[error("manifest: {0}")]
    Manifest(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToolManifest {
    pub name: String,
    pub tools: Vec<ToolSpec>,
}

const STARK_MANIFEST: &str = include_str!("../../manifests/stark.json");
const VISION_MANIFEST: &str = include_str!("../../manifests/vision.json");
const QA_MANIFEST: &str = include_str!("../../manifests/qa.json");

#[derive(Clone, Default)]
pub struct ToolRegistry {
    name: String,
    specs: BTreeMap<String, ToolSpec>,
    impls: BTreeMap<String, ToolFn>,
}

impl fmt::Debug for ToolRegistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ToolRegistry").field("name", &self.name).field("tools", &self.specs.keys()).finish()
    }
}

impl ToolRegistry {
    pub fn new(name: impl Into<String>) -> Self {
        Self { name: name.into(), ..Self::default() }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn register_tool(&mut self, spec: ToolSpec, implementation: ToolFn) -> Result<(), RegistryError> {
        if self.specs.contains_key(&spec.name) {
            return Err(RegistryError::DuplicateTool(spec.name));
        }
        let invalid = |message: &str| RegistryError::InvalidSpec { name: spec.name.clone(), message: message.into() };
        if spec.name.is_empty() || !spec.name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
            return Err(invalid("name must be a non-empty identifier"));
        }
        if spec.description.trim().is_empty() {
            return Err(invalid("description is empty"));
        }
        if spec.cost_class == CostClass::Llm && spec.gateway_role.is_none() {
            return Err(invalid("llm-class tools must declare a gateway role"));
        }
        self.impls.insert(spec.name.clone(), implementation);
        self.specs.insert(spec.name.clone(), spec);
        Ok(())
    }

    pub fn lookup(&self, name: &str) -> Option<&ToolSpec> {
        self.specs.get(name)
    }

    pub fn len(&self) -> usize {
        self.specs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.specs.is_empty()
    }

    pub fn specs(&self) -> impl Iterator<Item = &ToolSpec> {
        self.specs.values()
    }

    /// One line per tool, sorted by name.
    pub fn render_descriptions(&self) -> String {
        self.specs
            .values()
            .map(|s| {
                let tag = match s.cost_class {
                    CostClass::Local => "",
                    CostClass::Llm => " [LLM]",
                };
                format!("- {}{tag}: {}", s.signature(), s.description)
            })
            .collect::<Vec<_>>()
            .join("\n")
    }

    /// Runs `name` after checking argument and return types against its spec.
    pub fn invoke(&self, name: &str, ctx: &ToolContext<'_>, args: &[Value]) -> Result<Value, ToolError> {
        let bad = |message: String| ToolError::BadArguments { tool: name.to_string(), message };
        let spec = self.specs.get(name).ok_or_else(|| bad("no such tool".into()))?;
        let f = self.impls.get(name).ok_or_else(|| bad("no implementation".into()))?;
        if args.len() != spec.params.len() {
            return Err(bad(format!("expected {} arguments, got {}", spec.params.len(), args.len())));
        }
        for (p, a) in spec.params.iter().zip(args) {
            if a.value_type() != p.ty {
                return Err(bad(format!("{} must be {}, got {}", p.name, p.ty, a.value_type())));
            }
        }
        let out = f(ctx, args)?;
        if out.value_type() != spec.returns {
            return Err(ToolError::Failed {
                tool: name.to_string(),
                message: format!("returned {} instead of {}", out.value_type(), spec.returns),
            });
        }
        Ok(out)
    }

    pub fn from_manifest(manifest: ToolManifest) -> Result<Self, RegistryError> {
        let mut registry = Self::new(manifest.name);
        for spec in manifest.tools {
            let binding = spec.binding.clone().ok_or_else(|| RegistryError::InvalidSpec {
                name: spec.name.clone(),
                message: "manifest entries need a binding".into(),
            })?;
            let f = builtin::binding(&binding, &spec.name)
                .ok_or_else(|| RegistryError::UnknownBinding { name: spec.name.clone(), binding })?;
            registry.register_tool(spec, f)?;
        }
        Ok(registry)
    }

    pub fn from_manifest_json(text: &str) -> Result<Self, RegistryError> {
        let manifest: ToolManifest = serde_json::from_str(text).map_err(|e| RegistryError::Manifest(e.to_string()))?;
        Self::from_manifest(manifest)
    }

    /// Relation-text library.
    pub fn stark() -> Self {
        Self::from_manifest_json(STARK_MANIFEST).expect("shipped stark manifest is valid")
    }

    /// Image-text library.
    pub fn vision() -> Self {
        Self::from_manifest_json(VISION_MANIFEST).expect("shipped vision manifest is valid")
    }

    /// External search slots, each executed through the gateway.
    pub fn qa() -> Self {
        Self::from_manifest_json(QA_MANIFEST).expect("shipped qa manifest is valid")
    }

    pub fn by_name(name: &str) -> Option<Self> {
        match name {
            "stark" => Some(Self::stark()),
            "vision" => Some(Self::vision()),
            "qa" => Some(Self::qa()),
            _ => None,
        }
    }

    pub fn manifest_text(name: &str) -> Option<&'static str> {
        match name {
            "stark" => Some(STARK_MANIFEST),
            "vision" => Some(VISION_MANIFEST),
            "qa" => Some(QA_MANIFEST),
            _ => None,
        }
    }
}

//! The two prompt templates and their renderers.
//!
//! Placeholders are `<name>` with `name` in `[a-z_]+`. Substitution is a
//! single pass, so substituted text is never rescanned.

use std::collections::BTreeMap;

use crate::kb::KbSchema;
use crate::plan::{render_plan, Plan, PLAN_LANGUAGE_SUMMARY};
use crate::tools::ToolRegistry;

pub const ACTOR_TEMPLATE: &str = r#"You are an expert user of a knowledge base, and your task is to answer a set of queries. I will provide you with the schema of this knowledge base:
<knowledge_base_schema>

You have access to several APIs that are pre-implemented for interaction with the knowledge base:
<func_call_description>

Information of queries: Below are several query examples that you need to carefully read through:
"
<example_queries>
"

Task: Given an input query, you should write the actions as a plan to calculate a `node_score_dict` for <n_init_candidates> node IDs, which are input as a list. These node IDs, referred to as `candidates`, are a subset of node IDs from the knowledge base, and the nodes belong to the type(s) <candidate_types>. The plan returns a score map in which each key is a node ID and each value is the corresponding node score. This score should indicate the likelihood of the node being the correct answer to the query.

Output format: Firstly, you should establish a connection between the given queries and the query patterns to the schema of the knowledge base. Secondly, generate an outline of the actions that will compute the scores for all the candidate nodes provided in the query examples. Finally, write the plan in the plan language described below. Declare any parameters or weights used during computing the node scores with `param` statements and their default values. If no parameters are needed, declare none.

<plan_language>

Hints:
- Observe the example queries carefully and consider the key attributes to extract.
- Use ```plan and ``` to wrap the complete plan, and do not use any other delimiters.
- You can use any of the pre-implemented APIs but should avoid modifying them.
- The plan should be complete without placeholders.
- Minimize computational expenses by early elimination of candidate nodes that don't meet relational requirement (if any).
- Avoid conducting unnecessary and redundant computations.
- Make use of `param` declarations to avoid hard-coding parameters and weights.
- Use the functions that end with `ByLLM` wisely for more accurate searches.
- Use `debug` smartly to record any informative intermediate results for debugging.

Your output:
"#;

pub const CONTRASTOR_TEMPLATE: &str = "<initial_prompt>

<previous_actions>

After executing the above actions on user queries, some queries have yielded good results, while others have not. Below are the queries along with their corresponding evaluation metrics:
Well-performing queries:
<positive_queries_and_metric>
Poorly-performing queries:
<negative_queries_and_metric>

Task:
(1) Firstly, identify and contrast the patterns of queries that have achieved good results with those that have not.
(2) Then, review the computational logic for any inconsistencies in the previous actions.
(3) Lastly, specify the modification that can lead to improved performance on the negative queries. You should focus on capturing the high-level pattern of the queries relevant to the knowledge base schema.
";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TemplateRole {
    ActorInitial,
    Contrastor,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PromptError {
    #[error("no data for placeholder <{0}>")]
    MissingPlaceholderData(String),
}

#[derive(Clone, Debug)]
pub struct PromptTemplate {
    pub role: TemplateRole,
    pub body: &'static str,
}

impl PromptTemplate {
    pub const ACTOR: Self = Self { role: TemplateRole::ActorInitial, body: ACTOR_TEMPLATE };
    pub const CONTRASTOR: Self = Self { role: TemplateRole::Contrastor, body: CONTRASTOR_TEMPLATE };

    /// Placeholder names in order of first appearance.
    pub fn placeholders(&self) -> Vec<&'static str> {
        let mut names = Vec::new();
        for (_, name, _) in scan(self.body) {
            if !names.contains(&name) {
                names.push(name);
            }
        }
        names
    }

    pub fn fill(&self, values: &BTreeMap<&str, String>) -> Result<String, PromptError> {
        let mut out = String::with_capacity(self.body.len() * 2);
        let mut last = 0;
        for (start, name, end) in scan(self.body) {
            let v = values.get(name).ok_or_else(|| PromptError::MissingPlaceholderData(name.to_string()))?;
            out.push_str(&self.body[last..start]);
            out.push_str(v);
            last = end;
        }
        out.push_str(&self.body[last..]);
        Ok(out)
    }
}

/// `(start, name, end)` for every `<name>` occurrence.
fn scan(body: &str) -> Vec<(usize, &str, usize)> {
    let bytes = body.as_bytes();
    let mut found = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'<' {
            let mut j = i + 1;
            while j < bytes.len() && (bytes[j].is_ascii_lowercase() || bytes[j] == b'_') {
                j += 1;
            }
            if j > i + 1 && j < bytes.len() && bytes[j] == b'>' {
                found.push((i, &body[i + 1..j], j + 1));
                i = j + 1;
                continue;
            }
        }
        i += 1;
    }
    found
}

pub fn render_actor_prompt(
    schema: &KbSchema,
    registry: &ToolRegistry,
    example_queries: &[String],
    n_init_candidates: usize,
    candidate_types: &[String],
) -> Result<String, PromptError> {
    if example_queries.is_empty() {
        return Err(PromptError::MissingPlaceholderData("example_queries".into()));
    }
    if candidate_types.is_empty() {
        return Err(PromptError::MissingPlaceholderData("candidate_types".into()));
    }
    let values = BTreeMap::from([
        ("knowledge_base_schema", schema.render()),
        ("func_call_description", registry.render_descriptions()),
        ("example_queries", example_queries.join("\n")),
        ("n_init_candidates", n_init_candidates.to_string()),
        ("candidate_types", candidate_types.join(", ")),
        ("plan_language", PLAN_LANGUAGE_SUMMARY.trim_end().to_string()),
    ]);
    PromptTemplate::ACTOR.fill(&values)
}

/// One query line in the contrastor prompt.
#[derive(Clone, Debug, PartialEq)]
pub struct ContrastLine {
    pub query: String,
    pub metric: f64,
}

fn render_lines(lines: &[ContrastLine], metric_name: &str) -> String {
    lines
        .iter()
        .map(|l| format!("- \"{}\" ({metric_name}: {:.3})", l.query, l.metric))
        .collect::<Vec<_>>()
        .join("\n")
}

pub fn render_contrastor_prompt(
    initial_prompt: &str,
    previous_plan: &Plan,
    positives: &[ContrastLine],
    negatives: &[ContrastLine],
    metric_name: &str,
) -> Result<String, PromptError> {
    if positives.is_empty() {
        return Err(PromptError::MissingPlaceholderData("positive_queries_and_metric".into()));
    }
    if negatives.is_empty() {
        return Err(PromptError::MissingPlaceholderData("negative_queries_and_metric".into()));
    }
    let values = BTreeMap::from([
        ("initial_prompt", initial_prompt.trim_end().to_string()),
        ("previous_actions", format!("```plan\n{}```", render_plan(previous_plan))),
        ("positive_queries_and_metric", render_lines(positives, metric_name)),
        ("negative_queries_and_metric", render_lines(negatives, metric_name)),
    ]);
    PromptTemplate::CONTRASTOR.fill(&values)
}

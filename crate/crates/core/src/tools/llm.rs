//! LLM-class tools: one gateway call each, replies checked against a per-kind schema.

use std::collections::BTreeMap;

use serde_json::Value as Json;

use super::{ScoreMap, ToolContext, ToolError, Value};
use crate::gateway::GatewayError;
use crate::kb::EntityId;

#[derive(Clone, Debug, PartialEq)]
pub enum JudgeKind {
    Classify { texts: Vec<String>, classes: Vec<String> },
    CheckRequirement { ids: Vec<EntityId>, requirement: String },
    SatisfactionScore { ids: Vec<EntityId>, query: String },
    ExtractRelevant { texts: Vec<String>, term: String },
    Summarize { texts: Vec<String> },
    Vqa { question: String, ids: Vec<EntityId> },
    VisualAttributes { attributes: Vec<String>, ids: Vec<EntityId> },
}

fn numbered(items: &[String]) -> String {
    items.iter().enumerate().map(|(i, t)| format!("{}. {t}", i + 1)).collect::<Vec<_>>().join("\n")
}

fn quoted(items: &[String]) -> String {
    items.iter().map(|c| format!("\"{c}\"")).collect::<Vec<_>>().join(", ")
}

fn entity_lines(ctx: &ToolContext<'_>, ids: &[EntityId]) -> Result<String, ToolError> {
    let mut lines = Vec::with_capacity(ids.len());
    for (i, id) in ids.iter().enumerate() {
        lines.push(format!("{}. [{id}] {}", i + 1, ctx.kb.entity(*id)?.document));
    }
    Ok(lines.join("\n"))
}

/// Captions stand in for pixels: each image is shown as its document plus phrases.
fn image_lines(ctx: &ToolContext<'_>, ids: &[EntityId]) -> Result<String, ToolError> {
    let mut lines = Vec::with_capacity(ids.len());
    for (i, id) in ids.iter().enumerate() {
        let e = ctx.kb.entity(*id)?;
        let phrases: Vec<&str> = e.phrases.iter().flatten().map(|p| p.phrase.as_str()).collect();
        lines.push(format!("{}. [{id}] {} (phrases: {})", i + 1, e.document, phrases.join("; ")));
    }
    Ok(lines.join("\n"))
}

fn schema(tool: &str, message: impl Into<String>) -> ToolError {
    ToolError::SchemaViolation { tool: tool.to_string(), message: message.into() }
}

fn malformed(tool: &str, message: impl Into<String>) -> ToolError {
    ToolError::Gateway { tool: tool.to_string(), source: GatewayError::MalformedReply(message.into()) }
}

/// Reply text with surrounding whitespace and an optional ```json fence removed.
fn unfence(reply: &str) -> &str {
    let t = reply.trim();
    let Some(rest) = t.strip_prefix("```") else { return t };
    let rest = rest.trim_start_matches(|c: char| c.is_ascii_alphanumeric());
    rest.strip_suffix("```").unwrap_or(rest).trim()
}

/// `n` items from a reply: a JSON array of length `n`, or a scalar broadcast to all items.
/// With `plain_text`, non-JSON replies are read one item per line (one line broadcasts).
fn list_reply(tool: &str, reply: &str, n: usize, plain_text: bool) -> Result<Vec<Json>, ToolError> {
    let body = unfence(reply);
    match serde_json::from_str::<Json>(body) {
        Ok(Json::Array(items)) if items.len() == n => Ok(items),
        Ok(Json::Array(items)) => Err(schema(tool, format!("expected {n} items, got {}", items.len()))),
        Ok(Json::Object(_)) => Err(schema(tool, "expected a list, got an object")),
        Ok(scalar) => Ok(vec![scalar; n]),
        Err(_) if plain_text => {
            let lines: Vec<&str> = body.lines().map(str::trim).filter(|l| !l.is_empty()).collect();
            match lines.len() {
                1 => Ok(vec![Json::String(lines[0].to_string()); n]),
                k if k == n => Ok(lines.into_iter().map(|l| Json::String(l.to_string())).collect()),
                k => Err(schema(tool, format!("expected {n} lines, got {k}"))),
            }
        }
        Err(e) => Err(malformed(tool, e.to_string())),
    }
}

fn strings(tool: &str, items: Vec<Json>) -> Result<Vec<String>, ToolError> {
    items
        .into_iter()
        .map(|v| match v {
            Json::String(s) => Ok(s.trim().to_string()),
            other => Err(schema(tool, format!("expected a string, got {other}"))),
        })
        .collect()
}

fn ids_to_scores(ids: &[EntityId], scores: Vec<f64>) -> ScoreMap {
    ids.iter().copied().zip(scores).collect()
}

pub fn llm_judge(ctx: &ToolContext<'_>, tool: &str, kind: JudgeKind) -> Result<Value, ToolError> {
    match kind {
        JudgeKind::Classify { texts, classes } => {
            if texts.is_empty() {
                return Ok(Value::TextList(Vec::new()));
            }
            let prompt = format!(
                "Classify each of the following texts into exactly one of these classes: {}. Use \"NA\" if no class applies.\nReply with a JSON array of labels in the same order as the texts.\n\nTexts:\n{}",
                quoted(&classes),
                numbered(&texts)
            );
            let reply = ctx.complete(tool, prompt)?;
            let labels = strings(tool, list_reply(tool, &reply, texts.len(), true)?)?;
            let labels = labels
                .into_iter()
                .map(|l| {
                    if l == "NA" {
                        return Ok(l);
                    }
                    classes
                        .iter()
                        .find(|c| c.eq_ignore_ascii_case(&l))
                        .cloned()
                        .ok_or_else(|| schema(tool, format!("label {l:?} is not one of the classes or NA")))
                })
                .collect::<Result<Vec<_>, _>>()?;
            Ok(Value::TextList(labels))
        }
        JudgeKind::CheckRequirement { ids, requirement } => {
            if ids.is_empty() {
                return Ok(Value::Scores(ScoreMap::new()));
            }
            let prompt = format!(
                "Decide for each entity below whether it satisfies the requirement: {requirement}\nReply with a JSON array of true/false values in the same order as the entities.\n\nEntities:\n{}",
                entity_lines(ctx, &ids)?
            );
            let reply = ctx.complete(tool, prompt)?;
            let flags = list_reply(tool, &reply, ids.len(), false)?
                .into_iter()
                .map(|v| match v {
                    Json::Bool(b) => Ok(if b { 1.0 } else { 0.0 }),
                    other => Err(schema(tool, format!("expected a boolean, got {other}"))),
                })
                .collect::<Result<Vec<_>, _>>()?;
            Ok(Value::Scores(ids_to_scores(&ids, flags)))
        }
        JudgeKind::SatisfactionScore { ids, query } => {
            if ids.is_empty() {
                return Ok(Value::Scores(ScoreMap::new()));
            }
            let prompt = format!(
                "Score how well each entity below satisfies the query, from 0 (not at all) to 1 (fully).\nQuery: {query}\nReply with a JSON array of numbers in the same order as the entities.\n\nEntities:\n{}",
                entity_lines(ctx, &ids)?
            );
            let reply = ctx.complete(tool, prompt)?;
            let scores = list_reply(tool, &reply, ids.len(), false)?
                .into_iter()
                .map(|v| match v.as_f64() {
                    Some(x) if (0.0..=1.0).contains(&x) => Ok(x),
                    Some(x) => Err(schema(tool, format!("score {x} is outside [0, 1]"))),
                    None => Err(schema(tool, format!("expected a number, got {v}"))),
                })
                .collect::<Result<Vec<_>, _>>()?;
            Ok(Value::Scores(ids_to_scores(&ids, scores)))
        }
        JudgeKind::ExtractRelevant { texts, term } => {
            if texts.is_empty() {
                return Ok(Value::TextList(Vec::new()));
            }
            let prompt = format!(
                "From each text below, extract the sentences relevant to \"{term}\".\nReply with a JSON array of strings, one per text in order, using \"NA\" when nothing is relevant.\n\nTexts:\n{}",
                numbered(&texts)
            );
            let reply = ctx.complete(tool, prompt)?;
            Ok(Value::TextList(non_empty(tool, strings(tool, list_reply(tool, &reply, texts.len(), true)?)?)?))
        }
        JudgeKind::Summarize { texts } => {
            let prompt = format!("Summarize the following texts in a few sentences.\n\nTexts:\n{}", numbered(&texts));
            let reply = ctx.complete(tool, prompt)?;
            let summary = unfence(&reply).to_string();
            if summary.is_empty() {
                return Err(schema(tool, "empty summary"));
            }
            Ok(Value::Text(summary))
        }
        JudgeKind::Vqa { question, ids } => {
            if ids.is_empty() {
                return Ok(Value::TextList(Vec::new()));
            }
            let prompt = format!(
                "Answer the question for each image below. Each image is given by its caption and annotated phrases.\nQuestion: {question}\nReply with a JSON array of short answers, one per image in order.\n\nImages:\n{}",
                image_lines(ctx, &ids)?
            );
            let reply = ctx.complete(tool, prompt)?;
            Ok(Value::TextList(non_empty(tool, strings(tool, list_reply(tool, &reply, ids.len(), true)?)?)?))
        }
        JudgeKind::VisualAttributes { attributes, ids } => {
            if ids.is_empty() {
                return Ok(Value::TextList(Vec::new()));
            }
            let prompt = format!(
                "For each image below, describe these visual attributes: {}.\nReply with a JSON array of strings, one per image in order, using \"NA\" when an image shows none of them.\n\nImages:\n{}",
                quoted(&attributes),
                image_lines(ctx, &ids)?
            );
            let reply = ctx.complete(tool, prompt)?;
            Ok(Value::TextList(non_empty(tool, strings(tool, list_reply(tool, &reply, ids.len(), true)?)?)?))
        }
    }
}

fn non_empty(tool: &str, items: Vec<String>) -> Result<Vec<String>, ToolError> {
    if items.iter().any(String::is_empty) {
        return Err(schema(tool, "empty item; use \"NA\" instead"));
    }
    Ok(items)
}

/// Matches `"<value> <attribute>"` or `"<attribute> is <value>"` in the query, longest value first.
pub fn rule_based_attributes(
    rules: &BTreeMap<String, Vec<String>>,
    query: &str,
    attributes: &[String],
) -> BTreeMap<String, String> {
    let q = query.to_lowercase();
    attributes
        .iter()
        .map(|attr| {
            let mut values: Vec<&String> = rules.get(attr).map(|v| v.iter().collect()).unwrap_or_default();
            values.sort_by(|a, b| b.len().cmp(&a.len()).then_with(|| a.cmp(b)));
            let a = attr.to_lowercase();
            let found = values.into_iter().find(|v| {
                let v = v.to_lowercase();
                q.contains(&format!("{v} {a}")) || q.contains(&format!("{a} is {v}"))
            });
            (attr.clone(), found.cloned().unwrap_or_else(|| "NA".to_string()))
        })
        .collect()
}

/// Attribute name to value (`"NA"` when absent), one entry per requested attribute.
pub fn parse_attribute_from_query(
    ctx: &ToolContext<'_>,
    tool: &str,
    query: &str,
    attributes: &[String],
) -> Result<BTreeMap<String, String>, ToolError> {
    if attributes.is_empty() {
        return Err(ToolError::BadArguments { tool: tool.to_string(), message: "attributes is empty".into() });
    }
    if let Some(rules) = ctx.attribute_rules {
        return Ok(rule_based_attributes(rules, query, attributes));
    }
    let prompt = format!(
        "Parse the query into a JSON object with exactly these keys: {}. Use \"NA\" as the value of any attribute the query does not mention.\n\nQuery: {query}",
        quoted(attributes)
    );
    let reply = ctx.complete(tool, prompt)?;
    let parsed: Json = serde_json::from_str(unfence(&reply)).map_err(|e| malformed(tool, e.to_string()))?;
    let Json::Object(obj) = parsed else {
        return Err(malformed(tool, "expected a JSON object"));
    };
    attributes
        .iter()
        .map(|a| match obj.get(a) {
            None => Ok((a.clone(), "NA".to_string())),
            Some(Json::String(s)) => Ok((a.clone(), s.clone())),
            Some(other) => Err(schema(tool, format!("value for {a} is not a string: {other}"))),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn list_reply_shapes() {
        assert_eq!(list_reply("t", "\"NA\"", 2, true).unwrap(), vec![Json::from("NA"), Json::from("NA")]);
        assert_eq!(list_reply("t", "NA", 2, true).unwrap(), vec![Json::from("NA"), Json::from("NA")]);
        assert_eq!(list_reply("t", "```json\n[1, 2]\n```", 2, false).unwrap(), vec![Json::from(1), Json::from(2)]);
        assert!(matches!(list_reply("t", "[1]", 2, false), Err(ToolError::SchemaViolation { .. })));
        assert!(matches!(list_reply("t", "nope", 2, false), Err(ToolError::Gateway { .. })));
    }

    #[test]
    fn rule_parser_reads_marker_phrases() {
        let rules = BTreeMap::from([
            ("brand".to_string(), vec!["Acme".to_string(), "Velo".to_string()]),
            ("color".to_string(), vec!["red".to_string()]),
        ]);
        let out = rule_based_attributes(&rules, "Acme brand red hat", &["brand".into(), "color".into()]);
        assert_eq!(out["brand"], "Acme");
        assert_eq!(out["color"], "NA");
        let out = rule_based_attributes(&rules, "a hat whose brand is Velo", &["brand".into()]);
        assert_eq!(out["brand"], "Velo");
    }
}

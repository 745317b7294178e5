mod common;

use std::collections::BTreeSet;

use common::Oracle;
use planopt::gateway::{Gateway, Role, ScriptEntry, ScriptedBackend};
use planopt::kb::{generate_synthetic_kb, EntityId, SyntheticParams};
use planopt::tools::{
    exact_match_score, query_entity_similarity, token_match_score, ToolContext, ToolError, ToolRegistry, Value,
};

#[test]
fn registries_match_their_manifests() {
    for name in ["stark", "vision", "qa"] {
        let manifest: serde_json::Value = serde_json::from_str(ToolRegistry::manifest_text(name).unwrap()).unwrap();
        let declared: BTreeSet<&str> =
            manifest["tools"].as_array().unwrap().iter().map(|t| t["name"].as_str().unwrap()).collect();
        let registry = ToolRegistry::by_name(name).unwrap();
        assert_eq!(registry.len(), declared.len(), "{name}");
        for tool in &declared {
            assert!(registry.lookup(tool).is_some(), "{name}: {tool}");
        }
        assert_eq!(registry.render_descriptions().lines().count(), declared.len());
    }
}

#[test]
fn scoring_tools_agree_with_oracle() {
    let g = generate_synthetic_kb(1, &SyntheticParams::default()).unwrap();
    let oracle = Oracle::fixture();
    let cands: Vec<EntityId> = oracle.candidates.iter().map(|i| EntityId(*i)).collect();
    assert_eq!(cands, g.kb.candidate_ids());
    for q in &oracle.queries {
        let exact = exact_match_score(&g.kb, &q.text, &cands).unwrap();
        let emb = query_entity_similarity(&g.kb, &q.text, &cands).unwrap();
        let tokens = token_match_score(&g.kb, &q.text, &cands).unwrap();
        let needle: BTreeSet<String> = words(&q.text);
        for id in &cands {
            assert_eq!(exact.get(*id), Some(oracle.exact(&q.text, id.0)), "query {} id {id}", q.id);
            let e = emb.get(*id).unwrap();
            assert!((e - oracle.cosine(&q.text, id.0)).abs() < 1e-12, "query {} id {id}", q.id);
            let hay = words(&oracle.full_info[&id.0]);
            let recall = needle.iter().filter(|w| hay.contains(*w)).count() as f64 / needle.len() as f64;
            assert!((tokens.get(*id).unwrap() - recall).abs() < 1e-12);
        }
    }
}

fn words(s: &str) -> BTreeSet<String> {
    s.to_lowercase().split(|c: char| !c.is_alphanumeric()).filter(|w| !w.is_empty()).map(String::from).collect()
}

#[test]
fn invoke_checks_argument_types() {
    let g = generate_synthetic_kb(1, &SyntheticParams::default()).unwrap();
    let registry = ToolRegistry::stark();
    let ctx = ToolContext::new(&g.kb);
    let err = registry.invoke("ComputeExactMatchScore", &ctx, &[Value::Number(1.0), Value::IdList(vec![])]).unwrap_err();
    assert!(matches!(err, ToolError::BadArguments { .. }), "{err:?}");
    let err = registry.invoke("GetFullInfo", &ctx, &[Value::Id(EntityId(9999))]).unwrap_err();
    assert!(matches!(err, ToolError::UnknownEntity(_)), "{err:?}");
    let err = registry.invoke("GetEntityIdsByType", &ctx, &[Value::Text("spaceship".into())]).unwrap_err();
    assert!(matches!(err, ToolError::UnknownType(_)), "{err:?}");
}

#[test]
fn llm_tools_go_through_the_gateway() {
    let g = generate_synthetic_kb(1, &SyntheticParams::default()).unwrap();
    let registry = ToolRegistry::stark();
    let script = |text: &str| ScriptEntry { role: Role::Tool, iteration: 0, attempt: 0, text: text.into() };
    let gateway = Gateway::new(ScriptedBackend::new(vec![script("[true, false, true]"), script("[0.2, 1.5, 0.1]")]));
    let ctx = ToolContext::new(&g.kb).with_gateway(Some(&gateway));
    let ids = vec![EntityId(0), EntityId(1), EntityId(2)];
    let out = registry
        .invoke("CheckRequirementsByLLM", &ctx, &[Value::IdList(ids.clone()), Value::Text("is red".into())])
        .unwrap();
    let Value::Scores(s) = out else { panic!("{out:?}") };
    assert_eq!(s.iter().map(|(_, v)| v).collect::<Vec<_>>(), vec![1.0, 0.0, 1.0]);
    let err = registry
        .invoke("GetSatisfictionScoreByLLM", &ctx, &[Value::IdList(ids), Value::Text("red".into())])
        .unwrap_err();
    assert!(matches!(err, ToolError::SchemaViolation { .. }), "{err:?}");
    assert_eq!(ctx.llm_calls(), 2);

    let no_gateway = ToolContext::new(&g.kb);
    let err = registry.invoke("SummarizeTextsByLLM", &no_gateway, &[Value::TextList(vec!["a".into()])]).unwrap_err();
    assert!(matches!(err, ToolError::NoGateway(_)), "{err:?}");
}

#[test]
fn llm_budget_is_enforced() {
    let g = generate_synthetic_kb(1, &SyntheticParams::default()).unwrap();
    let registry = ToolRegistry::stark();
    let gateway = Gateway::new(ScriptedBackend::new(vec![ScriptEntry {
        role: Role::Tool,
        iteration: 0,
        attempt: 0,
        text: "summary".into(),
    }]));
    let ctx = ToolContext::new(&g.kb).with_gateway(Some(&gateway)).with_llm_limit(Some(1));
    let args = [Value::TextList(vec!["a".into()])];
    assert!(registry.invoke("SummarizeTextsByLLM", &ctx, &args).is_ok());
    let err = registry.invoke("SummarizeTextsByLLM", &ctx, &args).unwrap_err();
    assert!(matches!(err, ToolError::LlmBudgetExhausted { limit: 1 }), "{err:?}");
}

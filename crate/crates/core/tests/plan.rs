mod common;

use planopt::gateway::{Gateway, Role, ScriptEntry, ScriptedBackend};
use planopt::kb::{generate_synthetic_kb, EntityId, SyntheticParams};
use planopt::plan::{
    execute_plan, execute_plan_logged, parse_plan, render_plan, validate_plan, ExecBudget, ExecEnv, ExecError,
    TimeoutReason, ViolationKind,
};
use planopt::tools::{exact_match_score, query_entity_similarity, ToolRegistry};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

proptest! {
    #[test]
    fn random_plans_round_trip(seed in any::<u64>()) {
        let plan = common::plan_gen::random_plan(&mut ChaCha8Rng::seed_from_u64(seed));
        let text = render_plan(&plan);
        let back = parse_plan(&text).map_err(|e| TestCaseError::fail(format!("{e}\n{text}")))?;
        prop_assert_eq!(&back, &plan);
        prop_assert_eq!(render_plan(&back), text);
    }

    #[test]
    fn parser_never_panics(src in "[a-z_ =(),\\[\\]\"0-9.+*/#\n-]{0,80}") {
        let _ = parse_plan(&src);
    }
}

#[test]
fn syntax_errors_point_at_the_token() {
    let err = parse_plan("let a = Tool(query)\nlet b = = 3\nreturn b\n").unwrap_err();
    assert_eq!((err.line, err.column), (2, 9));
    let err = parse_plan("let a = Tool(query)\nreturn a\nlet c = Tool(query)\n").unwrap_err();
    assert_eq!(err.line, 3);
}

#[test]
fn validator_reports_each_violation_kind() {
    let g = generate_synthetic_kb(1, &SyntheticParams::default()).unwrap();
    let reg = ToolRegistry::stark();
    let kinds = |src: &str| -> Vec<ViolationKind> {
        validate_plan(&parse_plan(src).unwrap(), &reg, g.kb.schema()).into_iter().map(|v| v.kind).collect()
    };
    assert_eq!(kinds("let s = Nope(query, candidates)\nreturn s"), vec![ViolationKind::UnknownTool]);
    assert_eq!(kinds("let s = ComputeExactMatchScore(query)\nreturn s"), vec![ViolationKind::ArityMismatch]);
    assert_eq!(kinds("let s = ComputeExactMatchScore(candidates, query)\nreturn s"), vec![ViolationKind::TypeMismatch; 2]);
    assert_eq!(kinds("let s = normalize(t)\nreturn s"), vec![ViolationKind::UndefinedVar]);
    assert_eq!(kinds("let s = GetFullInfo(3)\nreturn s"), vec![ViolationKind::BadReturn]);
    assert_eq!(kinds("param w = 1\nreturn w"), vec![ViolationKind::EmptyPlan, ViolationKind::BadReturn]);
    assert!(kinds(&common::read("plans/v3.plan")).is_empty());
}

#[test]
fn weighted_sum_matches_manual_combination() {
    let g = generate_synthetic_kb(1, &SyntheticParams::default()).unwrap();
    let reg = ToolRegistry::stark();
    let env = ExecEnv::new(&g.kb, &reg);
    let plan = parse_plan(&common::read("plans/v3.plan")).unwrap();
    let cands = g.kb.candidate_ids();
    let q = &g.queries.validation[0].text;
    let got = execute_plan(&plan, q, &cands, &env, &ExecBudget::default()).unwrap();
    let exact = exact_match_score(&g.kb, q, &cands).unwrap();
    let emb = query_entity_similarity(&g.kb, q, &cands).unwrap();
    for id in &cands {
        let want = exact.get(*id).unwrap() * 0.7 + emb.get(*id).unwrap() * 0.3;
        assert_eq!(got.get(*id), Some(want));
    }
}

#[test]
fn combinators_and_debug_log() {
    let g = generate_synthetic_kb(1, &SyntheticParams::default()).unwrap();
    let reg = ToolRegistry::stark();
    let env = ExecEnv::new(&g.kb, &reg);
    let src = "param k = 2\nlet e = ComputeExactMatchScore(query, candidates)\nlet n = normalize(e)\ndebug(\"norm\", n)\nlet s = scale(n, k * 3)\nreturn s\n";
    let plan = parse_plan(src).unwrap();
    let cands = vec![EntityId(0), EntityId(1), EntityId(0)];
    let (scores, log) = execute_plan_logged(&plan, "no such text anywhere", &cands, &env, &ExecBudget::default()).unwrap();
    assert_eq!(scores.len(), 2);
    assert!(scores.iter().all(|(_, v)| v == 3.0), "constant maps normalize to 0.5, times 6");
    assert_eq!(log.debug.len(), 1);
    assert_eq!(log.debug[0].label, "norm");
    assert!(matches!(
        execute_plan(&plan, "q", &[], &env, &ExecBudget::default()),
        Err(ExecError::EmptyCandidates)
    ));
}

#[test]
fn llm_call_budget_times_out() {
    let g = generate_synthetic_kb(1, &SyntheticParams::default()).unwrap();
    let reg = ToolRegistry::stark();
    let entry = |t: &str| ScriptEntry { role: Role::Tool, iteration: 0, attempt: 0, text: t.into() };
    let gateway = Gateway::new(ScriptedBackend::new(vec![entry("[0.5, 0.5]"), entry("[0.5, 0.5]")]));
    let env = ExecEnv::new(&g.kb, &reg).with_gateway(Some(&gateway));
    let plan = parse_plan(
        "let a = GetSatisfictionScoreByLLM(candidates, query)\nlet b = GetSatisfictionScoreByLLM(candidates, query)\nreturn b\n",
    )
    .unwrap();
    let budget = ExecBudget { max_llm_calls: Some(1), ..ExecBudget::default() };
    let err = execute_plan(&plan, "q", &[EntityId(0), EntityId(1)], &env, &budget).unwrap_err();
    assert!(
        matches!(err, ExecError::Timeout { statement: 1, reason: TimeoutReason::LlmCalls { limit: 1 } }),
        "{err:?}"
    );
}

#[test]
fn reserved_combinator_name_is_rejected() {
    assert!(parse_plan("let idf_weight = ComputeExactMatchScore(query, candidates)\nreturn idf_weight").is_err());
    assert!(parse_plan("let s = idf_weight(query, candidates)\nreturn s").is_err());
}

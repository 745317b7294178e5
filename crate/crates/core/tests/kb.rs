mod common;

use planopt::kb::{
    generate_synthetic_kb, parse_kb, parse_queries, write_kb, write_queries, EntityId, KbError, KbKind, SyntheticParams,
};
use proptest::prelude::*;

fn bytes_of(f: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>) -> Vec<u8> {
    let mut v = Vec::new();
    f(&mut v).unwrap();
    v
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn generated_kb_round_trips(seed in any::<u64>(), entities in 12usize..90, image in any::<bool>()) {
        let params = SyntheticParams {
            kind: if image { KbKind::ImageText } else { KbKind::RelationText },
            entities,
            edges: entities * 2,
            train: 6,
            validation: 3,
            test: 3,
            ..SyntheticParams::default()
        };
        let g = match generate_synthetic_kb(seed, &params) {
            Ok(g) => g,
            Err(KbError::InfeasibleParams(_)) => return Err(TestCaseError::reject("infeasible")),
            Err(e) => return Err(TestCaseError::fail(e.to_string())),
        };
        let text = String::from_utf8(bytes_of(|o| write_kb(&g.kb, o))).unwrap();
        let kb = parse_kb(&text, params.kind).unwrap();
        prop_assert_eq!(&kb, &g.kb);
        let qtext = String::from_utf8(bytes_of(|o| write_queries(&g.queries, o))).unwrap();
        prop_assert_eq!(parse_queries(&qtext, &kb).unwrap(), g.queries.clone());

        // every planted marker is a substring of every answer's document
        let all: Vec<_> = g.queries.train.iter().chain(&g.queries.validation).chain(&g.queries.test).collect();
        for planted in &g.manifest.queries {
            let q = all.iter().find(|q| q.query_id == planted.query_id).unwrap();
            prop_assert!(q.answers.contains(&planted.seed_entity));
            for a in &q.answers {
                let doc = kb.entity(*a).unwrap().document.to_lowercase();
                for m in planted.markers.iter().filter(|_| planted.relation.is_none()) {
                    prop_assert!(doc.contains(&m.to_lowercase()), "{} not in {}", m, doc);
                }
            }
        }
    }
}

#[test]
fn generation_is_deterministic() {
    let p = SyntheticParams::default();
    let a = generate_synthetic_kb(1, &p).unwrap();
    let b = generate_synthetic_kb(1, &p).unwrap();
    let c = generate_synthetic_kb(2, &p).unwrap();
    assert_eq!(bytes_of(|o| write_kb(&a.kb, o)), bytes_of(|o| write_kb(&b.kb, o)));
    assert_ne!(bytes_of(|o| write_kb(&a.kb, o)), bytes_of(|o| write_kb(&c.kb, o)));
    assert_eq!(a.kb.len(), 60);
    assert_eq!(a.kb.schema().entity_types.len(), 3);
}

#[test]
fn committed_fixture_matches_generator() {
    let g = generate_synthetic_kb(1, &SyntheticParams::default()).unwrap();
    assert_eq!(String::from_utf8(bytes_of(|o| write_kb(&g.kb, o))).unwrap(), common::read("kb.jsonl"));
    assert_eq!(String::from_utf8(bytes_of(|o| write_queries(&g.queries, o))).unwrap(), common::read("queries.jsonl"));
}

#[test]
fn malformed_inputs_are_rejected() {
    let schema = r#"{"kind":"schema","entity_types":["product"],"relation_types":["r"],"candidate_types":["product"],"description":"d"}"#;
    let ent = |id: u64| format!(r#"{{"kind":"entity","id":{id},"type":"product","document":"doc {id}"}}"#);
    let dangling = format!("{schema}\n{}\n{}\n", ent(1), r#"{"kind":"relation","src":1,"dst":9,"rel":"r"}"#);
    assert!(matches!(parse_kb(&dangling, KbKind::RelationText), Err(KbError::DanglingEdge(EntityId(9)))));
    let dup = format!("{schema}\n{}\n{}\n", ent(1), ent(1));
    assert!(matches!(parse_kb(&dup, KbKind::RelationText), Err(KbError::DuplicateEntity(EntityId(1)))));
    assert!(matches!(parse_kb("{not json", KbKind::RelationText), Err(KbError::Parse { line: 1, .. })));

    let kb = parse_kb(&format!("{schema}\n{}\n", ent(1)), KbKind::RelationText).unwrap();
    let bad_answer = r#"{"query_id":0,"split":"train","text":"q","answers":[5]}"#;
    assert!(parse_queries(bad_answer, &kb).is_err());
}

#[test]
fn infeasible_parameters() {
    let p = SyntheticParams { entities: 2, entity_types: 3, ..SyntheticParams::default() };
    assert!(matches!(generate_synthetic_kb(1, &p), Err(KbError::InfeasibleParams(_))));
    let p = SyntheticParams { entities: 10, train: 40, ..SyntheticParams::default() };
    assert!(generate_synthetic_kb(1, &p).is_err());
}

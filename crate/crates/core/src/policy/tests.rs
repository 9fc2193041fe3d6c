use std::collections::BTreeSet;
use std::sync::Arc;

use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::fixture;
use crate::store::Predicate;
use crate::Schema;

fn attr(s: &str) -> Attribute {
    s.parse().unwrap()
}

/// `a` has 8 rows; `a.x` takes 4 values twice each (2 bits) and every row
/// points at a distinct `b` row whose `y` values are all different (3 bits).
fn two_level() -> Store {
    let schema = Schema::from_json_str(
        r#"{"tables": [
            {"name": "a", "primary_key": "id", "columns": [
                {"name": "id", "semantic_type": "integer", "annotation": {"request_preference": "never"}},
                {"name": "x", "semantic_type": "text"},
                {"name": "b_id", "semantic_type": "integer", "annotation": {"request_preference": "never"}}]},
            {"name": "b", "primary_key": "id", "columns": [
                {"name": "id", "semantic_type": "integer", "annotation": {"request_preference": "never"}},
                {"name": "y", "semantic_type": "text"}]}],
          "foreign_keys": [{"child": "a.b_id", "parent": "b.id"}]}"#,
        "two",
    )
    .unwrap();
    let mut store = Store::new(Arc::new(schema));
    let b = (0..8)
        .map(|i| vec![Some(Value::Integer(i)), Some(Value::Text(format!("y{i}")))])
        .collect();
    store.insert_rows_into("b", b).unwrap();
    let a = (0..8)
        .map(|i| {
            vec![
                Some(Value::Integer(i)),
                Some(Value::Text(format!("x{}", i % 4))),
                Some(Value::Integer(i)),
            ]
        })
        .collect();
    store.insert_rows_into("a", a).unwrap();
    store
}

#[test]
fn deeper_attribute_can_outrank_shallow_one() {
    let store = two_level();
    let m = AwarenessModel::from_schema(store.schema());
    let policy = SlotPolicy::<f64>::default();
    let c = store.open_candidates("a").unwrap();
    let ranked = policy.score_attributes(&store, &c, &m).unwrap();
    let got: Vec<(String, f64, usize)> = ranked
        .iter()
        .map(|s| (s.attribute.to_string(), s.score, s.depth))
        .collect();
    assert_eq!(got.len(), 2);
    assert_eq!((got[0].0.as_str(), got[0].2), ("b.y", 1));
    assert!((got[0].1 - 1.2).abs() < 1e-12);
    assert_eq!(got[1].0, "a.x");
    assert!((got[1].1 - 1.0).abs() < 1e-12);
}

#[test]
fn never_columns_are_not_scored() {
    let store = fixture::cinema_store(1000, 1);
    let m = AwarenessModel::from_schema(store.schema());
    let policy = SlotPolicy::<f64>::default();
    let c = store.open_candidates("customer").unwrap();
    let ranked = policy.score_attributes(&store, &c, &m).unwrap();
    assert!(ranked.iter().all(|s| s.attribute != attr("customer.customer_id")));
    let id_stats = store.column_stats::<f64>(&c, &attr("customer.customer_id")).unwrap();
    assert!(ranked.iter().all(|s| s.entropy_bits <= id_stats.entropy_bits));
    let names: BTreeSet<_> = ranked.iter().map(|s| s.attribute.to_string()).collect();
    assert_eq!(names.len(), ranked.len());
}

#[test]
fn zero_entropy_attribute_ranks_last() {
    let store = fixture::cinema_store(1000, 1);
    let m = AwarenessModel::from_schema(store.schema());
    let policy = SlotPolicy::<f64>::default();
    let all = store.open_candidates("screening").unwrap();
    let c = store
        .refine(&all, Predicate::eq(attr("movie.genre"), Value::Text("Drama".into())))
        .unwrap();
    assert!(c.len() > 5);
    let ranked = policy.score_attributes(&store, &c, &m).unwrap();
    let genre = ranked.iter().position(|s| s.attribute == attr("movie.genre")).unwrap();
    assert_eq!(ranked[genre].score, 0.0);
    assert!(ranked[..genre].iter().all(|s| s.score >= 0.0));
    assert!(ranked
        .iter()
        .filter(|s| s.entropy_bits > 0.0)
        .all(|s| { ranked.iter().position(|r| r.attribute == s.attribute).unwrap() < genre || s.score == 0.0 }));
}

#[test]
fn decisions_by_candidate_count() {
    let store = fixture::cinema_store(1000, 1);
    let m = AwarenessModel::from_schema(store.schema());
    let policy = SlotPolicy::<f64>::default();
    let all = store.open_candidates("screening").unwrap();
    let keys: Vec<Value> = all.row_ids().iter().take(3).cloned().collect();
    let pick = |n: usize| {
        let mut c = all.clone();
        c.row_ids = keys[..n].iter().cloned().collect();
        c
    };
    assert_eq!(
        policy.next_request(&store, &pick(1), &m).unwrap(),
        PolicyDecision::Resolved { key: keys[0].clone() }
    );
    match policy.next_request(&store, &pick(3), &m).unwrap() {
        PolicyDecision::OfferList { rows } => {
            assert_eq!(rows.iter().map(|r| r.key.clone()).collect::<Vec<_>>(), keys);
            assert!(rows.iter().all(|r| !r.label.is_empty()));
        }
        other => panic!("expected a list, got {other:?}"),
    }
    assert_eq!(
        policy.next_request(&store, &pick(0), &m).unwrap(),
        PolicyDecision::Exhausted { remaining: 0 }
    );
}

#[test]
fn customers_ask_matches_brute_force_argmax() {
    let store = fixture::cinema_store(1000, 1);
    let m = AwarenessModel::from_schema(store.schema());
    let policy = SlotPolicy::<f64>::default();
    let c = store.open_candidates("customer").unwrap();
    let schema = store.schema();
    let mut best: Option<(f64, String)> = None;
    for column in &schema.table("customer").unwrap().columns {
        let a = Attribute::new("customer", column.name.clone());
        let penalty = match column.annotation.request_preference {
            RequestPreference::Never => continue,
            RequestPreference::Avoid => 0.1,
            RequestPreference::Normal => 1.0,
        };
        let prior = column.annotation.awareness_prior;
        let p = f64::from(prior.pseudo_known + 1) / f64::from(prior.pseudo_asked + 2);
        let mut counts = std::collections::HashMap::new();
        for row in store.scan("customer").unwrap() {
            if let Some(v) = &row[schema.column_index_of(&a).unwrap()] {
                *counts.entry(v.clone()).or_insert(0u64) += 1;
            }
        }
        let total = counts.values().sum::<u64>() as f64;
        let h: f64 = counts.values().map(|&n| n as f64 / total).map(|q| -q * q.log2()).sum();
        let score = p * h * penalty;
        if best.as_ref().is_none_or(|(s, _)| score > *s) {
            best = Some((score, a.to_string()));
        }
    }
    let (score, name) = best.unwrap();
    match policy.next_request(&store, &c, &m).unwrap() {
        PolicyDecision::Ask { attribute, score: got } => {
            assert_eq!(attribute.to_string(), name);
            assert!((got - score).abs() < 1e-9);
        }
        other => panic!("expected ask, got {other:?}"),
    }
}

#[test]
fn cache_hits_and_invalidation() {
    let mut store = fixture::cinema_store(1000, 1);
    let policy = SlotPolicy::<f64>::default();
    let c = store.open_candidates("reservation").unwrap();
    let a = attr("reservation.ticket_amount");
    let first = policy.stats_cached(&store, &c, &a).unwrap();
    let hits = policy.cache().hits();
    let second = policy.stats_cached(&store, &c, &a).unwrap();
    assert_eq!(policy.cache().hits(), hits + 1);
    assert_eq!(first, second);
    assert_eq!(*first, store.column_stats::<f64>(&c, &a).unwrap());

    let tasks = fixture::cinema_tasks(store.schema());
    let params = [
        ("customer_id", Value::Identifier("C2".into())),
        ("screening_id", Value::Identifier("S2".into())),
        ("ticket_amount", Value::Integer(17)),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect();
    store.execute_transaction(&tasks[0], &params).unwrap();
    let c = store.open_candidates("reservation").unwrap();
    let third = policy.stats_cached(&store, &c, &a).unwrap();
    assert_eq!(third.histogram.get(&Value::Integer(17)), Some(&1));
    assert_eq!(*third, store.column_stats::<f64>(&c, &a).unwrap());
}

/// Truthful user who knows every attribute of `goal`; returns the number of
/// questions until the policy resolves or offers a list.
fn identify(
    store: &Store,
    policy: &SlotPolicy<f64>,
    m: &AwarenessModel,
    table: &str,
    goal: &Value,
) -> (usize, Vec<String>) {
    let mut c = store.open_candidates(table).unwrap();
    let mut asked = BTreeSet::new();
    let mut log = Vec::new();
    loop {
        let d = policy.next_request_excluding(store, &c, m, &asked).unwrap();
        log.push(format!("{d:?}"));
        match d {
            PolicyDecision::Ask { attribute, .. } => {
                let mut probe = store.open_candidates(table).unwrap();
                probe.row_ids = BTreeSet::from([goal.clone()]);
                let stats = store.column_stats::<f64>(&probe, &attribute).unwrap();
                asked.insert(attribute.clone());
                if let Some(v) = stats.histogram.keys().next() {
                    c = store.refine(&c, Predicate::eq(attribute, v.clone())).unwrap();
                }
            }
            PolicyDecision::OfferList { rows } => {
                assert!(rows.iter().any(|r| &r.key == goal));
                return (asked.len(), log);
            }
            PolicyDecision::Resolved { key } => {
                assert_eq!(&key, goal);
                return (asked.len(), log);
            }
            PolicyDecision::Exhausted { .. } => panic!("truthful user cannot exhaust"),
        }
    }
}

#[test]
fn progress_and_cache_transparency() {
    let store = fixture::cinema_store(1000, 3);
    let m = AwarenessModel::from_schema(store.schema());
    let cached = SlotPolicy::<f64>::default();
    let uncached = SlotPolicy::<f64>::default();
    uncached.cache().set_enabled(false);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for table in ["customer", "screening", "movie"] {
        let c = store.open_candidates(table).unwrap();
        let limit = requestable_attributes(&store, &c, 2).len();
        let keys: Vec<Value> = c.row_ids().iter().cloned().collect();
        for goal in keys.choose_multiple(&mut rng, 15) {
            let (turns, log_a) = identify(&store, &cached, &m, table, goal);
            let (_, log_b) = identify(&store, &uncached, &m, table, goal);
            assert!(turns <= limit, "{table}: {turns} > {limit}");
            assert_eq!(log_a, log_b);
        }
    }
    assert!(cached.cache().hits() > 0);
    assert_eq!(uncached.cache().hits(), 0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn argmax_is_scale_invariant(lambda in 0.01f64..=1.0, seed in 0u64..1000) {
        let store = fixture::cinema_store(200, seed);
        let m = AwarenessModel::from_schema(store.schema());
        let policy = SlotPolicy::<f64>::default();
        let c = store.open_candidates("screening").unwrap();
        let ranked = policy.score_attributes(&store, &c, &m).unwrap();
        prop_assume!(ranked.len() >= 2 && ranked[0].score > ranked[1].score);
        let mut scaled: Vec<_> = ranked.iter().cloned().map(|mut s| {
            s.p_known *= lambda;
            s.score = s.p_known * s.entropy_bits * 0.8f64.powi(s.depth as i32)
                * if preference(store.schema(), &s.attribute) == RequestPreference::Avoid { 0.1 } else { 1.0 };
            s
        }).collect();
        scaled.sort_by(rank_order);
        prop_assert_eq!(&scaled[0].attribute, &ranked[0].attribute);
    }

    #[test]
    fn never_is_never_asked(
        never in prop::collection::vec(0usize..6, 0..6),
        steps in prop::collection::vec(0usize..40, 0..4),
    ) {
        let mut schema = fixture::cinema_schema();
        let cols = ["first_name", "last_name", "city", "birth_year", "email", "customer_id"];
        for i in &never {
            let mut ann = schema.table("customer").unwrap().column(cols[*i]).unwrap().annotation.clone();
            ann.request_preference = RequestPreference::Never;
            schema = schema.annotate("customer", cols[*i], ann).unwrap();
        }
        let mut store = fixture::cinema_store(200, 9);
        store.set_schema(Arc::new(schema)).unwrap();
        let m = AwarenessModel::from_schema(store.schema());
        let policy = SlotPolicy::<f64>::default();
        let mut c = store.open_candidates("customer").unwrap();
        for s in steps {
            match policy.next_request(&store, &c, &m).unwrap() {
                PolicyDecision::Ask { attribute, .. } => {
                    let col = store.schema().column(&attribute).unwrap();
                    prop_assert_ne!(col.annotation.request_preference, RequestPreference::Never);
                    let values = store.column_stats::<f64>(&c, &attribute).unwrap();
                    let v = values.histogram.keys().nth(s % values.histogram.len()).unwrap().clone();
                    c = store.refine(&c, Predicate::eq(attribute, v)).unwrap();
                }
                _ => break,
            }
        }
    }
}

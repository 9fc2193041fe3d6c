use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use proptest::prelude::*;

use super::*;
use crate::fixture;

fn attr(s: &str) -> Attribute {
    s.parse().unwrap()
}

fn ident(s: &str) -> Value {
    Value::Identifier(s.into())
}

fn text(s: &str) -> Value {
    Value::Text(s.into())
}

fn cinema() -> Store {
    fixture::cinema_store(1000, 1)
}

fn col_of(schema: &Schema, table: &str, column: &str) -> usize {
    schema.table(table).unwrap().column_index(column).unwrap()
}

/// Screening keys whose movie has the given title, by nested loops over scans.
fn screenings_with_title(store: &Store, title: &str) -> BTreeSet<Value> {
    let s = store.schema().clone();
    let movies = store.scan("movie").unwrap();
    let ids: Vec<&Value> = movies
        .iter()
        .filter(|m| m[col_of(&s, "movie", "title")].as_ref() == Some(&text(title)))
        .map(|m| m[0].as_ref().unwrap())
        .collect();
    store
        .scan("screening")
        .unwrap()
        .into_iter()
        .filter(|r| ids.contains(&r[col_of(&s, "screening", "movie_id")].as_ref().unwrap()))
        .map(|r| r[0].clone().unwrap())
        .collect()
}

#[test]
fn ingest_counts_and_errors() {
    let schema = Arc::new(fixture::cinema_schema());
    let data = fixture::cinema_dataset(1000, 2);
    let dir = tempfile::tempdir().unwrap();
    data.write_csv(&schema, dir.path()).unwrap();
    let mut store = Store::new(schema.clone());
    let path = dir.path().join("customer.csv");
    assert_eq!(store.ingest_csv("customer", &path).unwrap(), 1000);
    assert!(matches!(
        store.ingest_csv("customer", &path),
        Err(Error::DuplicateKey(_))
    ));
    assert_eq!(store.row_count("customer").unwrap(), 1000);

    let bad = "customer_id,first_name,last_name,city,birth_year,email\n\
               X1,Ada,Meyer,Bonn,1980,a@x\n\
               X2,Bob,Meyer,Bonn,nineteen,b@x\n";
    let err = store.ingest_reader("customer", bad.as_bytes(), "bad.csv").unwrap_err();
    assert!(
        matches!(&err, Error::TypeMismatch { row: 2, column, .. } if column == "birth_year"),
        "{err}"
    );
    assert_eq!(store.row_count("customer").unwrap(), 1000, "no partial ingest");

    let wrong_header = "id,first_name\nX1,Ada\n";
    assert!(matches!(
        store.ingest_reader("customer", wrong_header.as_bytes(), "h.csv"),
        Err(Error::HeaderMismatch { .. })
    ));
    assert!(matches!(
        store.ingest_reader("ghost", wrong_header.as_bytes(), "h.csv"),
        Err(Error::UnknownTable(_))
    ));
}

#[test]
fn open_candidates_identity() {
    let store = cinema();
    let c = store.open_candidates("screening").unwrap();
    assert_eq!(c.len(), store.row_count("screening").unwrap());
    assert!(c.predicates().is_empty());
    assert_eq!(c.joined_tables().iter().collect::<Vec<_>>(), vec!["screening"]);
    let customers = store.open_candidates("customer").unwrap();
    let stats: ColumnStats<f64> = store.column_stats(&customers, &attr("customer.city")).unwrap();
    assert_eq!(stats.total(), 1000);
    assert!(matches!(store.open_candidates("ghost"), Err(Error::UnknownTable(_))));
}

#[test]
fn refine_across_foreign_key() {
    let store = cinema();
    let c = store.open_candidates("screening").unwrap();
    let r = store
        .refine(&c, Predicate::eq(attr("movie.title"), text("Forrest Gump")))
        .unwrap();
    assert!(!r.is_empty());
    assert_eq!(r.row_ids(), &screenings_with_title(&store, "Forrest Gump"));
    assert!(r.joined_tables().contains("movie"));
    assert_eq!(r.predicates().len(), 1);

    let none = store
        .refine(&c, Predicate::eq(attr("movie.title"), text("No Such Film")))
        .unwrap();
    assert!(none.is_empty());
}

#[test]
fn fuzzy_title_matches_exact() {
    let store = cinema();
    let titles = store.distinct_values(&attr("movie.title")).unwrap();
    let near: Vec<_> = titles
        .iter()
        .filter(|t| crate::text::edit_distance("forest gump", &t.to_string().to_lowercase()) <= 2)
        .collect();
    assert_eq!(near, vec![&text("Forrest Gump")]);

    let c = store.open_candidates("screening").unwrap();
    let exact = store
        .refine(&c, Predicate::eq(attr("movie.title"), text("Forrest Gump")))
        .unwrap();
    let fuzzy = store
        .refine(&c, Predicate::fuzzy(attr("movie.title"), "Forest Gump", 2))
        .unwrap();
    assert_eq!(exact.row_ids(), fuzzy.row_ids());
}

#[test]
fn fuzzy_ties_match_all_nearest_values() {
    let store = cinema();
    let c = store.open_candidates("customer").unwrap();
    // "Bonm" is one edit from "Bonn" only; "Kiem" one edit from "Kiel".
    let r = store
        .refine(&c, Predicate::fuzzy(attr("customer.city"), "bonm", 1))
        .unwrap();
    let exact = store
        .refine(&c, Predicate::eq(attr("customer.city"), text("Bonn")))
        .unwrap();
    assert_eq!(r.row_ids(), exact.row_ids());
    // Exactly between "Weber" and "Weiss"? No: use a synthetic store.
    let schema = Arc::new(
        Schema::from_json_str(
            r#"{"tables": [{"name": "p", "primary_key": "id", "columns": [
                {"name": "id", "semantic_type": "identifier"},
                {"name": "name", "semantic_type": "text"}]}]}"#,
            "p",
        )
        .unwrap(),
    );
    let mut s = Store::new(schema);
    s.insert_rows_into(
        "p",
        vec![
            vec![Some(ident("1")), Some(text("Mayer"))],
            vec![Some(ident("2")), Some(text("Meyer"))],
            vec![Some(ident("3")), Some(text("Maier"))],
        ],
    )
    .unwrap();
    let all = s.open_candidates("p").unwrap();
    let tie = s.refine(&all, Predicate::fuzzy(attr("p.name"), "Myer", 1)).unwrap();
    assert_eq!(tie.row_ids(), &BTreeSet::from([ident("1"), ident("2")]));
    let err = s.refine(&all, Predicate::fuzzy(attr("p.id"), "1", 1)).unwrap_err();
    assert!(matches!(err, Error::InvalidPredicate { .. }));
}

fn city_store(cities: &[&str]) -> Store {
    let schema = Arc::new(
        Schema::from_json_str(
            r#"{"tables": [{"name": "c", "primary_key": "id", "columns": [
                {"name": "id", "semantic_type": "integer"},
                {"name": "city", "semantic_type": "text"}]}]}"#,
            "c",
        )
        .unwrap(),
    );
    let mut s = Store::new(schema);
    let rows = cities
        .iter()
        .enumerate()
        .map(|(i, c)| vec![Some(Value::Integer(i as i64)), Some(text(c))])
        .collect();
    s.insert_rows_into("c", rows).unwrap();
    s
}

#[test]
fn stats_hand_computed() {
    let s = city_store(&["a", "a", "b", "c"]);
    let c = s.open_candidates("c").unwrap();
    let stats: ColumnStats<f64> = s.column_stats(&c, &attr("c.city")).unwrap();
    assert_eq!(stats.distinct, 3);
    assert!((stats.entropy_bits - 1.5).abs() < 1e-12);

    let same = city_store(&["a", "a", "a"]);
    let c = same.open_candidates("c").unwrap();
    let stats: ColumnStats<f64> = same.column_stats(&c, &attr("c.city")).unwrap();
    assert_eq!(stats.entropy_bits, 0.0);

    let one = city_store(&["z"]);
    let c = one.open_candidates("c").unwrap();
    let stats: ColumnStats<f32> = one.column_stats(&c, &attr("c.city")).unwrap();
    assert_eq!((stats.distinct, stats.entropy_bits), (1, 0.0));
}

#[test]
fn multi_valued_join_counts_each_value_once_per_entity() {
    let store = cinema();
    let movies = store.open_candidates("movie").unwrap();
    let stats: ColumnStats<f64> = store.column_stats(&movies, &attr("actor.name")).unwrap();
    let cast_links = store.row_count("movie_actor").unwrap() as u64;
    assert_eq!(stats.total(), cast_links);
    assert!(stats.total() > movies.len() as u64);
    assert!(stats.entropy_bits <= (stats.distinct as f64).log2());
}

#[test]
fn unjoinable_attribute() {
    let store = cinema();
    let c = store.open_candidates_with_depth("screening", 1).unwrap();
    assert!(matches!(
        store.column_stats::<f64>(&c, &attr("actor.name")),
        Err(Error::UnjoinableAttribute(_))
    ));
    assert!(matches!(
        store.refine(&c, Predicate::eq(attr("actor.name"), text("x"))),
        Err(Error::UnjoinableAttribute(_))
    ));
    // reservation is one-to-many from screening and never traversed
    let c = store.open_candidates("screening").unwrap();
    assert!(store
        .column_stats::<f64>(&c, &attr("reservation.ticket_amount"))
        .is_err());
}

#[test]
fn distinct_counts() {
    let store = cinema();
    assert_eq!(store.distinct_count("customer", "customer_id").unwrap(), 1000);
    let data = fixture::cinema_dataset(1000, 1);
    let cities: BTreeSet<_> = data.rows("customer").iter().map(|r| r[3].clone()).collect();
    assert_eq!(store.distinct_count("customer", "city").unwrap(), cities.len());
    assert!(matches!(
        store.distinct_count("customer", "zip"),
        Err(Error::UnknownColumn(_))
    ));
}

fn params(pairs: &[(&str, Value)]) -> BTreeMap<String, Value> {
    pairs.iter().map(|(k, v)| (k.to_string(), v.clone())).collect()
}

#[test]
fn reservation_and_cancellation() {
    let mut store = cinema();
    let tasks = fixture::cinema_tasks(store.schema());
    let reserve = &tasks[0];
    let cancel = &tasks[1];
    let before = store.distinct_count("reservation", "reservation_id").unwrap();
    let result = store
        .execute_transaction(
            reserve,
            &params(&[
                ("customer_id", ident("C17")),
                ("screening_id", ident("S3")),
                ("ticket_amount", Value::Integer(4)),
            ]),
        )
        .unwrap();
    assert_eq!(result.outcome, Outcome::Committed { rows_affected: 1 });
    let key = result.echo["reservation_id"].clone();
    let row = store.row_by_key("reservation", &key).unwrap().unwrap();
    assert_eq!(row[1], Some(ident("C17")));
    assert_eq!(row[3], Some(Value::Integer(4)));
    assert_eq!(
        store.distinct_count("reservation", "reservation_id").unwrap(),
        before + 1
    );

    let p = params(&[("reservation_id", key.clone())]);
    assert!(store.execute_transaction(cancel, &p).unwrap().is_committed());
    assert!(matches!(store.execute_transaction(cancel, &p), Err(Error::NotFound(_))));
    assert_eq!(store.distinct_count("reservation", "reservation_id").unwrap(), before);

    let r1 = params(&[("reservation_id", ident("R1"))]);
    assert!(store.execute_transaction(cancel, &r1).unwrap().is_committed());
    assert!(matches!(
        store.execute_transaction(cancel, &r1),
        Err(Error::NotFound(_))
    ));
}

#[test]
fn failed_transactions_leave_store_unchanged() {
    let mut store = cinema();
    let tasks = fixture::cinema_tasks(store.schema());
    let before = store.scan("reservation").unwrap();
    let version = store.version();
    let bad_fk = params(&[
        ("customer_id", ident("C17")),
        ("screening_id", ident("S999999")),
        ("ticket_amount", Value::Integer(2)),
    ]);
    assert!(matches!(
        store.execute_transaction(&tasks[0], &bad_fk),
        Err(Error::ForeignKeyViolation(_))
    ));
    let missing = params(&[("customer_id", ident("C17"))]);
    assert!(matches!(
        store.execute_transaction(&tasks[0], &missing),
        Err(Error::MissingSlot(_))
    ));
    assert_eq!(store.scan("reservation").unwrap(), before);
    assert_eq!(store.version(), version);
}

#[test]
fn query_task_returns_rows_without_mutation() {
    let mut store = cinema();
    let tasks = fixture::cinema_tasks(store.schema());
    let list = tasks.iter().find(|t| t.name == "list_screenings").unwrap();
    let version = store.version();
    let day = Value::Date(fixture::cinema_start_date());
    let result = store
        .execute_transaction(list, &params(&[("screening_date", day.clone())]))
        .unwrap();
    let listing = result.listing.unwrap();
    assert_eq!(listing.columns, vec!["screening_id", "date", "time", "hall"]);
    assert!(!listing.rows.is_empty());
    assert!(listing.rows.iter().all(|r| r[1] == Some(day.clone())));
    assert_eq!(store.version(), version);
}

#[test]
fn stats_follow_commits() {
    let mut store = cinema();
    let tasks = fixture::cinema_tasks(store.schema());
    let c = store.open_candidates("reservation").unwrap();
    let before: ColumnStats<f64> = store.column_stats(&c, &attr("reservation.ticket_amount")).unwrap();
    store
        .execute_transaction(
            &tasks[0],
            &params(&[
                ("customer_id", ident("C1")),
                ("screening_id", ident("S1")),
                ("ticket_amount", Value::Integer(9)),
            ]),
        )
        .unwrap();
    let c = store.open_candidates("reservation").unwrap();
    let after: ColumnStats<f64> = store.column_stats(&c, &attr("reservation.ticket_amount")).unwrap();
    assert_eq!(after.total(), before.total() + 1);
    assert_eq!(after.histogram.get(&Value::Integer(9)), Some(&1));
}

fn predicate_strategy() -> impl Strategy<Value = Predicate> {
    let titles = prop::sample::select(vec!["Forrest Gump", "Jaws", "Alien", "Titanic", "Vertigo"]);
    let genres = prop::sample::select(vec!["Drama", "Comedy", "Thriller", "Horror"]);
    let halls = prop::sample::select(vec!["Hall 1", "Hall 2", "Hall 3"]);
    prop_oneof![
        titles.prop_map(|t| Predicate::eq(attr("movie.title"), text(t))),
        genres.prop_map(|g| Predicate::eq(attr("movie.genre"), text(g))),
        halls.prop_map(|h| Predicate::eq(attr("screening.hall"), text(h))),
        (0i64..14).prop_map(|d| Predicate {
            attribute: attr("screening.date"),
            op: PredicateOp::Le,
            value: Value::Date(fixture::cinema_start_date() + chrono::Duration::days(d)),
        }),
        (1927i64..2024).prop_map(|y| Predicate {
            attribute: attr("movie.release_year"),
            op: PredicateOp::Gt,
            value: Value::Integer(y),
        }),
        (0usize..20).prop_map(|a| Predicate::eq(
            attr("actor.name"),
            text(["Marlon Vance", "Greta Holm", "Cary Okafor", "Ingrid Sterling"][a % 4])
        )),
        Just(Predicate::fuzzy(attr("movie.title"), "Forest Gump", 2)),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn refine_is_monotone_and_matches_reevaluation(preds in prop::collection::vec(predicate_strategy(), 0..5)) {
        let store = fixture::cinema_store(300, 5);
        let mut c = store.open_candidates("screening").unwrap();
        for p in &preds {
            let next = store.refine(&c, p.clone()).unwrap();
            prop_assert!(next.len() <= c.len());
            prop_assert!(next.row_ids().is_subset(c.row_ids()));
            c = next;
        }
        let fresh = store.evaluate("screening", &preds, 2).unwrap();
        prop_assert_eq!(c.row_ids(), &fresh);
        let again = store.recompute(&c).unwrap();
        prop_assert_eq!(again.row_ids(), &fresh);
    }
}

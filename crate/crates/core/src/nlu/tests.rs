use std::sync::OnceLock;

use proptest::prelude::*;

use super::*;
use crate::datagen::{generate_corpus, templates_from_json_str, CorpusConfig, Lexicon, SlotSpan};
use crate::fixture;

struct World {
    store: Store,
    corpus: Vec<AnnotatedUtterance>,
    model: NaiveBayes,
    nlu: Nlu,
}

fn world() -> &'static World {
    static CELL: OnceLock<World> = OnceLock::new();
    CELL.get_or_init(|| {
        let store = fixture::cinema_store(1000, 1);
        let tasks = fixture::cinema_tasks(store.schema());
        let templates = templates_from_json_str(fixture::CINEMA_TEMPLATES, "t", store.schema(), &tasks).unwrap();
        let lexicon = Lexicon::parse(fixture::CINEMA_LEXICON).unwrap();
        let corpus = generate_corpus(&templates, &lexicon, &store, &CorpusConfig::default()).unwrap();
        let model = train_intent_classifier(&corpus, store.schema(), &tasks, &NluConfig::default()).unwrap();
        let nlu = Nlu::new(model.clone(), tasks, &store, 2).unwrap();
        World {
            store,
            corpus,
            model,
            nlu,
        }
    })
}

fn may1() -> NaiveDate {
    NaiveDate::from_ymd_opt(2024, 5, 1).unwrap()
}

fn parse(text: &str) -> NluResult {
    world().nlu.parse(text, &ParseContext::new(may1()))
}

#[test]
fn informs_movie_title() {
    let r = parse("The movie title is Forrest Gump.");
    assert_eq!(r.intent, "inform(movie_title)");
    assert_eq!(r.slots.len(), 1);
    assert_eq!(r.slots[0].slot, "movie_title");
    assert_eq!(r.slots[0].value, Value::Text("Forrest Gump".into()));
    assert_eq!((r.slots[0].start, r.slots[0].end, r.slots[0].distance), (19, 31, 0));
}

#[test]
fn reservation_request_with_number_word_and_relative_date() {
    let r = parse("I want to reserve four seats tonight");
    assert_eq!(r.intent, "request_reservation");
    let got: Vec<(String, String)> = r.slots.iter().map(|s| (s.slot.clone(), s.value.to_string())).collect();
    assert_eq!(
        got,
        vec![
            ("ticket_amount".to_string(), "4".to_string()),
            ("screening_date".to_string(), "2024-05-01".to_string())
        ]
    );
}

#[test]
fn misspelling_corrected_in_context() {
    let r = parse("I want to watch Forest Gump");
    assert_eq!(r.intent, "request_reservation");
    assert_eq!(r.slots[0].value, Value::Text("Forrest Gump".into()));
    assert_eq!(r.slots[0].distance, 1);
    assert_eq!(r.slots[0].raw, "Forest Gump");
}

#[test]
fn out_of_vocabulary_is_fallback() {
    let r = parse("qwzx vbnm");
    assert_eq!(r.intent, "fallback");
    assert!(r.confidence < 0.3);
    assert!(r.slots.is_empty());
}

#[test]
fn training_sentences_are_memorized() {
    let w = world();
    for u in w.corpus.iter().step_by(97) {
        assert_eq!(parse(&u.text).intent, u.intent, "{}", u.text);
    }
}

#[test]
fn expected_slot_names_bare_numbers() {
    let w = world();
    let mut ctx = ParseContext::new(may1());
    ctx.active_task = Some("ticket_reservation".into());
    ctx.expected_slot = Some("customer_birth_year".into());
    let r = w.nlu.parse("1985", &ctx);
    assert_eq!(r.slots[0].slot, "customer_birth_year");
    assert_eq!(r.slots[0].value, Value::Integer(1985));
    ctx.expected_slot = None;
    let r = w.nlu.parse("3", &ctx);
    assert_eq!(r.slots[0].slot, "ticket_amount");
}

#[test]
fn single_intent_corpus_is_insufficient() {
    let w = world();
    let one: Vec<_> = w.corpus.iter().filter(|u| u.intent == "affirm").cloned().collect();
    let tasks = fixture::cinema_tasks(w.store.schema());
    assert!(matches!(
        train_intent_classifier(&one, w.store.schema(), &tasks, &NluConfig::default()),
        Err(Error::InsufficientCorpus(_))
    ));
    assert!(matches!(
        train_intent_classifier(&[], w.store.schema(), &tasks, &NluConfig::default()),
        Err(Error::InsufficientCorpus(_))
    ));
}

#[test]
fn training_is_deterministic_and_round_trips() {
    let w = world();
    let tasks = fixture::cinema_tasks(w.store.schema());
    let again = train_intent_classifier(&w.corpus, w.store.schema(), &tasks, &NluConfig::default()).unwrap();
    assert_eq!(again, w.model);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("nlu_model.json");
    w.model.save(&path).unwrap();
    assert_eq!(NaiveBayes::load(&path).unwrap(), w.model);
    let mut broken: serde_json::Value = serde_json::from_str(&w.model.to_json()).unwrap();
    broken["doc_counts"] = serde_json::json!([1]);
    assert!(NaiveBayes::from_json_str(&broken.to_string(), "m")
        .unwrap_err()
        .is_validation());
}

#[test]
fn training_tokens_use_placeholders() {
    let u = AnnotatedUtterance {
        text: "Book 4 tickets for Forrest Gump".into(),
        intent: "request_reservation".into(),
        slots: vec![
            SlotSpan {
                slot: "ticket_amount".into(),
                value: "4".into(),
                start: 5,
                end: 6,
            },
            SlotSpan {
                slot: "movie_title".into(),
                value: "Forrest Gump".into(),
                start: 19,
                end: 31,
            },
        ],
    };
    let types = slot_types(world().store.schema(), &fixture::cinema_tasks(world().store.schema()));
    assert_eq!(
        training_tokens(&u, &types),
        vec!["book", "<integer>", "tickets", "for", "<movie_title>"]
    );
}

#[test]
fn gazetteers_follow_store_changes() {
    let mut store = fixture::cinema_store(200, 3);
    let tasks = fixture::cinema_tasks(store.schema());
    let nlu = Nlu::new(world().model.clone(), tasks, &store, 2).unwrap();
    let ctx = ParseContext::new(may1());
    assert!(nlu.parse("I live in Quedlinburg", &ctx).slots.is_empty());
    let mut row = store.scan("customer").unwrap()[0].clone();
    row[0] = Some(Value::Identifier("C-new".into()));
    row[3] = Some(Value::Text("Quedlinburg".into()));
    store.insert_rows_into("customer", vec![row]).unwrap();
    let before = nlu.gazetteers().version();
    nlu.refresh(&store).unwrap();
    assert_ne!(nlu.gazetteers().version(), before);
    let r = nlu.parse("I live in Quedlinburg", &ctx);
    assert_eq!(r.intent, "inform(customer_city)");
    assert_eq!(r.slots[0].value, Value::Text("Quedlinburg".into()));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn posterior_sums_to_one(words in proptest::collection::vec("[a-z]{1,8}|<integer>|<movie_title>", 0..12)) {
        let w = world();
        let dist = w.model.distribution(&words);
        prop_assert_eq!(dist.len(), w.model.intents.len());
        let sum: f64 = dist.iter().sum();
        prop_assert!((sum - 1.0).abs() < 1e-9);
        prop_assert!(dist.iter().all(|p| (0.0..=1.0).contains(p)));
    }

    #[test]
    fn slot_values_match_slot_types(idx in 0usize..5000, tail in "[a-z ]{0,12}") {
        let w = world();
        let u = &w.corpus[idx % w.corpus.len()];
        let text = format!("{} {tail}", u.text);
        for s in parse(&text).slots {
            let ty = w.nlu.slot_types()[&s.slot];
            prop_assert_eq!(s.value.semantic_type(), ty, "{:?}", s);
            if let Some(a) = &s.attribute {
                prop_assert!(w.store.distinct_values(a).unwrap().contains(&s.value));
            }
        }
    }
}

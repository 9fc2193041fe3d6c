//! Deterministic fixture databases.
//!
//! `cinema` is the demo domain (customers, movies, actors, screenings,
//! reservations). `customers` is the benchmark domain: one customer table
//! with city/region and occupation/sector side tables two joins deep. Both
//! draw skewed (Zipf-like) values so informative attributes stand out.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use chrono::{Duration, NaiveDate, NaiveTime};
use ordered_float::OrderedFloat;
use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::schema::Schema;
use crate::store::{key_prefix, Row, Store};
use crate::tasks::{tasks_from_json_str, TaskDefinition};
use crate::value::Value;

pub const CINEMA_SCHEMA: &str = include_str!("../assets/cinema/schema.json");
pub const CINEMA_TASKS: &str = include_str!("../assets/cinema/tasks.json");
pub const CINEMA_TEMPLATES: &str = include_str!("../assets/cinema/templates.json");
pub const CINEMA_RESPONSES: &str = include_str!("../assets/cinema/responses.json");
pub const CINEMA_LEXICON: &str = include_str!("../assets/cinema/lexicon.txt");
pub const CUSTOMERS_SCHEMA: &str = include_str!("../assets/customers/schema.json");

/// First day of the cinema programme.
pub fn cinema_start_date() -> NaiveDate {
    NaiveDate::from_ymd_opt(2024, 5, 1).expect("valid date")
}

pub const CINEMA_DAYS: i64 = 14;

pub fn cinema_schema() -> Schema {
    Schema::from_json_str(CINEMA_SCHEMA, "cinema/schema.json").expect("bundled schema is valid")
}

pub fn cinema_tasks(schema: &Schema) -> Vec<TaskDefinition> {
    tasks_from_json_str(CINEMA_TASKS, "cinema/tasks.json", schema).expect("bundled tasks are valid")
}

pub fn customers_schema() -> Schema {
    Schema::from_json_str(CUSTOMERS_SCHEMA, "customers/schema.json").expect("bundled schema is valid")
}

/// Generated table contents, in an order that satisfies foreign keys.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub tables: Vec<(String, Vec<Row>)>,
}

impl Dataset {
    pub fn rows(&self, table: &str) -> &[Row] {
        self.tables
            .iter()
            .find(|(t, _)| t == table)
            .map(|(_, r)| r.as_slice())
            .unwrap_or_default()
    }

    pub fn load(&self, schema: Arc<Schema>) -> Result<Store> {
        let mut store = Store::new(schema);
        for (table, rows) in &self.tables {
            store.insert_rows_into(table, rows.clone())?;
        }
        Ok(store)
    }

    /// Writes one `<table>.csv` per table into `dir`.
    pub fn write_csv(&self, schema: &Schema, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut written = Vec::new();
        for (table, rows) in &self.tables {
            let path = dir.join(format!("{table}.csv"));
            write_table_csv(schema, table, rows, &path)?;
            written.push(path);
        }
        Ok(written)
    }
}

pub fn write_table_csv(schema: &Schema, table: &str, rows: &[Row], path: &Path) -> Result<()> {
    let spec = schema.require_table(table)?;
    let csv_err = |source| Error::Csv {
        path: path.display().to_string(),
        source,
    };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(spec.columns.iter().map(|c| c.name.as_str()))
        .map_err(csv_err)?;
    for row in rows {
        w.write_record(row.iter().map(|v| v.as_ref().map(Value::to_string).unwrap_or_default()))
            .map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn id(table: &str, n: usize) -> Value {
    Value::Identifier(format!("{}{}", key_prefix(table), n))
}

fn text(s: impl Into<String>) -> Option<Value> {
    Some(Value::Text(s.into()))
}

/// Zipf-like sampler over `n` ranks with exponent `s`.
pub fn zipf(n: usize, s: f64) -> WeightedIndex<f64> {
    WeightedIndex::new((1..=n).map(|k| 1.0 / (k as f64).powf(s))).expect("n > 0")
}

const FIRST_NAMES: &[&str] = &[
    "Ada",
    "Alan",
    "Alice",
    "Amelia",
    "Arthur",
    "Beatrice",
    "Benjamin",
    "Clara",
    "Daniel",
    "Dorothy",
    "Edgar",
    "Eleanor",
    "Felix",
    "Florence",
    "George",
    "Grace",
    "Harold",
    "Helena",
    "Isaac",
    "Irene",
    "Jacob",
    "Julia",
    "Kevin",
    "Laura",
    "Leonard",
    "Lucy",
    "Marcus",
    "Margaret",
    "Nathan",
    "Nora",
    "Oliver",
    "Olivia",
    "Patrick",
    "Pauline",
    "Quentin",
    "Rachel",
    "Robert",
    "Rosalind",
    "Samuel",
    "Sophia",
    "Theodore",
    "Tabitha",
    "Victor",
    "Vivian",
    "Walter",
    "Wilhelmina",
    "Xavier",
    "Yvonne",
    "Zachary",
    "Zelda",
];

const LAST_NAMES: &[&str] = &[
    "Schneider",
    "Fischer",
    "Weber",
    "Meyer",
    "Wagner",
    "Becker",
    "Schulz",
    "Hoffmann",
    "Koch",
    "Richter",
    "Klein",
    "Wolf",
    "Schroeder",
    "Neumann",
    "Schwarz",
    "Zimmermann",
    "Braun",
    "Krueger",
    "Hofmann",
    "Hartmann",
    "Lange",
    "Schmitt",
    "Werner",
    "Krause",
    "Meier",
    "Lehmann",
    "Schmid",
    "Schulze",
    "Maier",
    "Koehler",
    "Herrmann",
    "Koenig",
    "Walter",
    "Mayer",
    "Huber",
    "Kaiser",
    "Fuchs",
    "Peters",
    "Lang",
    "Scholz",
    "Moeller",
    "Weiss",
    "Jung",
    "Hahn",
    "Schubert",
    "Vogel",
    "Friedrich",
    "Keller",
    "Guenther",
    "Frank",
    "Berger",
    "Winkler",
    "Roth",
    "Beck",
    "Lorenz",
    "Baumann",
    "Franke",
    "Albrecht",
    "Schuster",
    "Simon",
    "Ludwig",
    "Boehm",
    "Winter",
    "Kraus",
    "Martin",
    "Schumacher",
    "Kraemer",
    "Vogt",
    "Stein",
    "Jaeger",
    "Otto",
    "Sommer",
    "Gross",
    "Seidel",
    "Heinrich",
    "Brandt",
    "Haas",
    "Schreiber",
    "Graf",
    "Schulte",
    "Dietrich",
    "Ziegler",
    "Kuhn",
    "Kuehn",
    "Pohl",
    "Engel",
    "Horn",
    "Busch",
    "Bergmann",
    "Thomas",
    "Voigt",
    "Sauer",
    "Arnold",
    "Wolff",
    "Pfeiffer",
];

const CITIES: &[&str] = &[
    "Berlin",
    "Hamburg",
    "Munich",
    "Cologne",
    "Frankfurt",
    "Stuttgart",
    "Dresden",
    "Leipzig",
    "Hanover",
    "Nuremberg",
    "Bremen",
    "Dortmund",
    "Bonn",
    "Mannheim",
    "Kassel",
    "Freiburg",
    "Augsburg",
    "Potsdam",
    "Heidelberg",
    "Darmstadt",
    "Mainz",
    "Wiesbaden",
    "Rostock",
    "Kiel",
    "Erfurt",
];

const TITLES: &[&str] = &[
    "Forrest Gump",
    "The Godfather",
    "Casablanca",
    "Vertigo",
    "Jaws",
    "Alien",
    "Titanic",
    "Gladiator",
    "Inception",
    "Amelie",
    "Metropolis",
    "Rocky",
    "Psycho",
    "Goodfellas",
    "Fargo",
    "The Matrix",
    "Toy Story",
    "Star Wars",
    "Back to the Future",
    "Pulp Fiction",
    "The Lion King",
    "Jurassic Park",
    "Braveheart",
    "Memento",
    "Chinatown",
    "Rear Window",
    "Notting Hill",
    "Groundhog Day",
    "Amadeus",
    "Ghostbusters",
    "Interstellar",
    "Parasite",
    "Whiplash",
    "Arrival",
    "Spirited Away",
    "Amarcord",
    "Rashomon",
    "Nosferatu",
    "Ratatouille",
    "Moonlight",
    "Paddington",
    "Labyrinth",
    "Solaris",
    "Stalker",
    "Fitzcarraldo",
    "Persepolis",
    "Chocolat",
    "Philadelphia",
    "Magnolia",
    "Zodiac",
];

const GENRES: &[&str] = &[
    "Drama",
    "Comedy",
    "Thriller",
    "Science Fiction",
    "Romance",
    "Animation",
    "Horror",
    "Western",
];

const ACTOR_FIRST: &[&str] = &[
    "Marlon",
    "Greta",
    "Humphrey",
    "Ingrid",
    "Cary",
    "Audrey",
    "Gregory",
    "Vivien",
    "Montgomery",
    "Lauren",
    "Spencer",
    "Bette",
    "Orson",
    "Katharine",
    "Laurence",
    "Marlene",
];

const ACTOR_LAST: &[&str] = &[
    "Vance",
    "Holm",
    "Sterling",
    "Lindqvist",
    "Ashcombe",
    "Delacroix",
    "Pemberton",
    "Okafor",
    "Castellano",
    "Brightwater",
];

const HALLS: &[&str] = &["Hall 1", "Hall 2", "Hall 3", "Hall 4", "Hall 5", "Hall 6"];
const TIMES: &[(u32, u32)] = &[(14, 0), (16, 30), (18, 0), (19, 30), (20, 15), (21, 45), (22, 30)];
const PRICES: &[f64] = &[8.5, 10.0, 12.5];

/// Cinema database with `scale` customers. Derived sizes: `clamp(scale/25)`
/// movies, twice as many actors, `scale/2` screenings, `scale/4` reservations
/// (each at least one). "Forrest Gump" is always movie `M1` and has a
/// screening on the first day.
pub fn cinema_dataset(scale: usize, seed: u64) -> Dataset {
    let scale = scale.max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let last_zipf = zipf(LAST_NAMES.len(), 1.1);
    let first_zipf = zipf(FIRST_NAMES.len(), 0.9);
    let city_zipf = zipf(CITIES.len(), 1.2);
    let customers: Vec<Row> = (1..=scale)
        .map(|n| {
            let first = FIRST_NAMES[first_zipf.sample(&mut rng)];
            let last = LAST_NAMES[last_zipf.sample(&mut rng)];
            vec![
                Some(id("customer", n)),
                text(first),
                text(last),
                text(CITIES[city_zipf.sample(&mut rng)]),
                Some(Value::Integer(rng.gen_range(1950..=2006))),
                text(format!(
                    "{}.{}{}@example.com",
                    first.to_lowercase(),
                    last.to_lowercase(),
                    n
                )),
            ]
        })
        .collect();

    let n_movies = (scale / 25).clamp(1, TITLES.len());
    let movies: Vec<Row> = (1..=n_movies)
        .map(|n| {
            vec![
                Some(id("movie", n)),
                text(TITLES[n - 1]),
                text(GENRES[rng.gen_range(0..GENRES.len())]),
                Some(Value::Integer(rng.gen_range(1927..=2023))),
            ]
        })
        .collect();

    let n_actors = (n_movies * 2).min(ACTOR_FIRST.len() * ACTOR_LAST.len());
    let mut actor_names: Vec<String> = ACTOR_FIRST
        .iter()
        .flat_map(|f| ACTOR_LAST.iter().map(move |l| format!("{f} {l}")))
        .collect();
    actor_names.shuffle(&mut rng);
    let actors: Vec<Row> = (1..=n_actors)
        .map(|n| vec![Some(id("actor", n)), text(actor_names[n - 1].clone())])
        .collect();

    let mut movie_actor = Vec::new();
    for m in 1..=n_movies {
        let cast = rng.gen_range(2..=3).min(n_actors);
        let picks = rand::seq::index::sample(&mut rng, n_actors, cast);
        let mut picks: Vec<usize> = picks.into_iter().collect();
        picks.sort_unstable();
        for a in picks {
            let n = movie_actor.len() + 1;
            movie_actor.push(vec![
                Some(id("movie_actor", n)),
                Some(id("movie", m)),
                Some(id("actor", a + 1)),
            ]);
        }
    }

    let n_screenings = (scale / 2).max(1);
    let movie_zipf = zipf(n_movies, 0.8);
    let screenings: Vec<Row> = (1..=n_screenings)
        .map(|n| {
            let (movie, day, time) = if n == 1 {
                (1, 0, TIMES[3])
            } else {
                (
                    movie_zipf.sample(&mut rng) + 1,
                    rng.gen_range(0..CINEMA_DAYS),
                    TIMES[rng.gen_range(0..TIMES.len())],
                )
            };
            vec![
                Some(id("screening", n)),
                Some(id("movie", movie)),
                Some(Value::Date(cinema_start_date() + Duration::days(day))),
                Some(Value::Time(
                    NaiveTime::from_hms_opt(time.0, time.1, 0).expect("valid time"),
                )),
                text(HALLS[rng.gen_range(0..HALLS.len())]),
                Some(Value::Decimal(OrderedFloat(PRICES[rng.gen_range(0..PRICES.len())]))),
            ]
        })
        .collect();

    let n_reservations = (scale / 4).max(1);
    let reservations: Vec<Row> = (1..=n_reservations)
        .map(|n| {
            vec![
                Some(id("reservation", n)),
                Some(id("customer", rng.gen_range(1..=scale))),
                Some(id("screening", rng.gen_range(1..=n_screenings))),
                Some(Value::Integer(rng.gen_range(1..=6))),
            ]
        })
        .collect();

    Dataset {
        tables: vec![
            ("customer".into(), customers),
            ("movie".into(), movies),
            ("actor".into(), actors),
            ("movie_actor".into(), movie_actor),
            ("screening".into(), screenings),
            ("reservation".into(), reservations),
        ],
    }
}

pub fn cinema_store(scale: usize, seed: u64) -> Store {
    cinema_dataset(scale, seed)
        .load(Arc::new(cinema_schema()))
        .expect("generated data is consistent")
}

const SYLLABLES: &[&str] = &[
    "ka", "lo", "mi", "ra", "te", "su", "no", "vi", "el", "an", "bo", "de", "fi", "ga", "hu",
];

/// Deterministic pronounceable name for rank `k`.
fn syllable_name(k: usize, syllables: usize) -> String {
    let mut n = k;
    let mut s = String::new();
    for _ in 0..syllables {
        s.push_str(SYLLABLES[n % SYLLABLES.len()]);
        n /= SYLLABLES.len();
    }
    let mut chars = s.chars();
    let first = chars.next().map(|c| c.to_ascii_uppercase()).unwrap_or('X');
    std::iter::once(first).chain(chars).collect()
}

pub const BENCH_FIRST_NAMES: usize = 150;
pub const BENCH_LAST_NAMES: usize = 400;
const BENCH_REGIONS: usize = 8;
const BENCH_CITIES: usize = 60;
const BENCH_SECTORS: usize = 8;
const BENCH_OCCUPATIONS: usize = 40;

fn bench_last_name(rank: usize) -> String {
    syllable_name(rank + 1000, 3)
}

fn bench_customer(rng: &mut ChaCha8Rng, n: usize, last_name: String) -> Row {
    let first_zipf = zipf(BENCH_FIRST_NAMES, 1.0);
    let city_zipf = zipf(BENCH_CITIES, 1.1);
    let occ_zipf = zipf(BENCH_OCCUPATIONS, 1.0);
    let first = syllable_name(first_zipf.sample(rng) + 20, 2);
    let year_offset: f64 = (0..4).map(|_| rng.gen_range(-9.0..9.0)).sum();
    vec![
        Some(id("customer", n)),
        text(first.clone()),
        text(last_name.clone()),
        Some(Value::Integer(1980 + year_offset.round() as i64)),
        text(format!(
            "{}.{}{n}@example.org",
            first.to_lowercase(),
            last_name.to_lowercase()
        )),
        Some(id("city", city_zipf.sample(rng) + 1)),
        Some(id("occupation", occ_zipf.sample(rng) + 1)),
    ]
}

/// Benchmark customers: `scale` customers whose names, cities and
/// occupations follow Zipf-like distributions.
pub fn customers_dataset(scale: usize, seed: u64) -> Dataset {
    let scale = scale.max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let regions = (1..=BENCH_REGIONS)
        .map(|n| {
            vec![
                Some(id("region", n)),
                text(format!("{} Region", syllable_name(n + 300, 2))),
            ]
        })
        .collect();
    let region_zipf = zipf(BENCH_REGIONS, 0.7);
    let cities = (1..=BENCH_CITIES)
        .map(|n| {
            vec![
                Some(id("city", n)),
                text(format!("{}burg", syllable_name(n + 500, 2))),
                Some(id("region", region_zipf.sample(&mut rng) + 1)),
            ]
        })
        .collect();
    let sectors = (1..=BENCH_SECTORS)
        .map(|n| {
            vec![
                Some(id("sector", n)),
                text(format!("{} Industries", syllable_name(n + 700, 2))),
            ]
        })
        .collect();
    let sector_zipf = zipf(BENCH_SECTORS, 0.7);
    let occupations = (1..=BENCH_OCCUPATIONS)
        .map(|n| {
            vec![
                Some(id("occupation", n)),
                text(format!("{}ist", syllable_name(n + 900, 2))),
                Some(id("sector", sector_zipf.sample(&mut rng) + 1)),
            ]
        })
        .collect();
    let last_zipf = zipf(BENCH_LAST_NAMES, 1.05);
    let customers = (1..=scale)
        .map(|n| {
            let last = bench_last_name(last_zipf.sample(&mut rng));
            bench_customer(&mut rng, n, last)
        })
        .collect();
    Dataset {
        tables: vec![
            ("region".into(), regions),
            ("city".into(), cities),
            ("sector".into(), sectors),
            ("occupation".into(), occupations),
            ("customer".into(), customers),
        ],
    }
}

/// Additional customers whose last names invert the original skew: the
/// rarest names of the base distribution become the dominant ones, drawn
/// from a steep Zipf over the last five ranks. Keys continue after `existing`.
pub fn customers_inverted_batch(existing: usize, count: usize, seed: u64) -> Vec<Row> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_1a57);
    let tail = zipf(5, 2.0);
    (1..=count)
        .map(|i| {
            let rank = BENCH_LAST_NAMES - 1 - tail.sample(&mut rng);
            bench_customer(&mut rng, existing + i, bench_last_name(rank))
        })
        .collect()
}

pub fn customers_store(scale: usize, seed: u64) -> Store {
    customers_dataset(scale, seed)
        .load(Arc::new(customers_schema()))
        .expect("generated data is consistent")
}

/// Writes a complete cinema project: schema, tasks, templates, responses,
/// lexicon and `data/*.csv`.
pub fn write_cinema_project(dir: &Path, scale: usize, seed: u64) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    for (name, contents) in [
        ("schema.json", CINEMA_SCHEMA),
        ("tasks.json", CINEMA_TASKS),
        ("templates.json", CINEMA_TEMPLATES),
        ("responses.json", CINEMA_RESPONSES),
        ("lexicon.txt", CINEMA_LEXICON),
    ] {
        let path = dir.join(name);
        std::fs::write(&path, contents).map_err(|e| Error::io(&path, e))?;
        written.push(path);
    }
    let schema = cinema_schema();
    written.extend(cinema_dataset(scale, seed).write_csv(&schema, &dir.join("data"))?);
    Ok(written)
}

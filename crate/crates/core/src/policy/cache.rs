use std::collections::HashMap;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Arc;

use parking_lot::RwLock;

use crate::error::Result;
use crate::scalar::Scalar;
use crate::schema::Attribute;
use crate::store::{CandidateSet, ColumnStats, EntityRows, Reach, Store};

/// Total histogram entries kept before the stats map is flushed wholesale.
const STATS_BUDGET: usize = 4_000_000;
/// Total joined entity rows kept before the join map is flushed wholesale.
const JOIN_BUDGET: usize = 2_000_000;

/// Versions of the tables a cached value was computed from.
type Stamp = Vec<(usize, u64)>;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct Key {
    signature: u64,
    len: usize,
    target: Attribute,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct JoinKey {
    signature: u64,
    len: usize,
    table: usize,
}

/// Memoized column statistics and join results per candidate set.
///
/// Entries are keyed by the candidate-set signature and remember the
/// versions of every table involved (the base table, the tables joined by
/// its predicates, and the tables on the path to the attribute); a lookup
/// whose stamp no longer matches the store is recomputed.
#[derive(Debug)]
pub struct StatsCache<F> {
    stats: RwLock<Weighted<Key, ColumnStats<F>>>,
    joins: RwLock<Weighted<JoinKey, EntityRows>>,
    enabled: AtomicBool,
    hits: AtomicU64,
    misses: AtomicU64,
}

impl<F> Default for StatsCache<F> {
    fn default() -> Self {
        StatsCache {
            stats: RwLock::default(),
            joins: RwLock::default(),
            enabled: AtomicBool::new(true),
            hits: AtomicU64::new(0),
            misses: AtomicU64::new(0),
        }
    }
}

#[derive(Debug)]
struct Weighted<K, V> {
    map: HashMap<K, (Stamp, Arc<V>)>,
    weight: usize,
}

impl<K, V> Default for Weighted<K, V> {
    fn default() -> Self {
        Weighted {
            map: HashMap::new(),
            weight: 0,
        }
    }
}

impl<K: std::hash::Hash + Eq, V> Weighted<K, V> {
    fn get(&self, key: &K, stamp: &Stamp) -> Option<Arc<V>> {
        self.map.get(key).filter(|(s, _)| s == stamp).map(|(_, v)| v.clone())
    }

    fn insert(&mut self, key: K, stamp: Stamp, value: Arc<V>, weight: usize, budget: usize) {
        if self.weight + weight > budget {
            self.clear();
        }
        self.weight += weight;
        self.map.insert(key, (stamp, value));
    }

    fn clear(&mut self) {
        self.map.clear();
        self.weight = 0;
    }
}

fn stamp(store: &Store, c: &CandidateSet, reach: &Reach) -> Stamp {
    let schema = store.schema();
    let mut tables: Vec<usize> = c.joined_tables().iter().filter_map(|t| schema.table_index(t)).collect();
    for hop in &reach.path {
        tables.extend(hop.tables());
    }
    tables.sort_unstable();
    tables.dedup();
    tables.into_iter().map(|t| (t, store.table_version(t))).collect()
}

impl<F: Scalar> StatsCache<F> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set_enabled(&self, on: bool) {
        self.enabled.store(on, Ordering::Relaxed);
        if !on {
            self.clear();
        }
    }

    pub fn is_enabled(&self) -> bool {
        self.enabled.load(Ordering::Relaxed)
    }

    pub fn hits(&self) -> u64 {
        self.hits.load(Ordering::Relaxed)
    }

    pub fn misses(&self) -> u64 {
        self.misses.load(Ordering::Relaxed)
    }

    pub fn len(&self) -> usize {
        self.stats.read().map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn clear(&self) {
        self.stats.write().clear();
        self.joins.write().clear();
    }

    /// Same value as [`Store::column_stats`], served from the cache when the
    /// involved tables are unchanged.
    pub fn column_stats(&self, store: &Store, c: &CandidateSet, attr: &Attribute) -> Result<Arc<ColumnStats<F>>> {
        if !self.is_enabled() {
            return store.column_stats(c, attr).map(Arc::new);
        }
        let reach = store.reach_for(c, attr)?;
        let stamp = stamp(store, c, &reach);
        let key = Key {
            signature: c.signature(),
            len: c.len(),
            target: attr.clone(),
        };
        if let Some(v) = self.stats.read().get(&key, &stamp) {
            self.hits.fetch_add(1, Ordering::Relaxed);
            return Ok(v);
        }
        self.misses.fetch_add(1, Ordering::Relaxed);
        let joined = self.joined(store, c, &reach, &stamp)?;
        let column = store
            .schema()
            .column_index_of(attr)
            .expect("reachable attribute exists");
        let hist = store.histogram_from(&joined, column);
        let value = Arc::new(ColumnStats::from_histogram(attr.clone(), hist, c.len()));
        let weight = value.histogram.len() + 1;
        self.stats
            .write()
            .insert(key, stamp, value.clone(), weight, STATS_BUDGET);
        Ok(value)
    }

    fn joined(&self, store: &Store, c: &CandidateSet, reach: &Reach, stamp: &Stamp) -> Result<Arc<EntityRows>> {
        let key = JoinKey {
            signature: c.signature(),
            len: c.len(),
            table: reach.table,
        };
        if let Some(v) = self.joins.read().get(&key, stamp) {
            return Ok(v);
        }
        let value = Arc::new(store.entity_rows(c, reach)?);
        let weight = value.rows.len() + 1;
        self.joins
            .write()
            .insert(key, stamp.clone(), value.clone(), weight, JOIN_BUDGET);
        Ok(value)
    }
}

//! In-memory relational store.
//!
//! Tables are ingested from CSV and mutated only by task transactions. Each
//! table keeps a primary-key index, per-column value counts (for distinct
//! counts) and hash indexes on its foreign-key columns, which serve as the
//! build side of every foreign-key join.

mod candidates;
mod joins;
mod stats;

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::io::Read;
use std::path::Path;
use std::sync::Arc;

use serde::Serialize;

pub use candidates::{CandidateSet, Predicate, PredicateOp};
pub use joins::{Hop, JoinGraph, Reach};
pub use stats::{entropy_bits, ColumnStats};

use candidates::Matcher;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::schema::{Attribute, Schema};
use crate::tasks::{TaskAction, TaskDefinition};
use crate::text;
use crate::value::{SemanticType, Value};

pub const DEFAULT_MAX_JOIN_DEPTH: usize = 2;

pub type Row = Vec<Option<Value>>;

#[derive(Debug, Clone, Default)]
struct TableData {
    rows: Vec<Option<Row>>,
    live: usize,
    pk_index: HashMap<Value, usize>,
    value_counts: Vec<HashMap<Value, usize>>,
    fk_index: HashMap<usize, HashMap<Value, Vec<usize>>>,
    version: u64,
    inserted: u64,
}

impl TableData {
    fn row(&self, idx: usize) -> &Row {
        self.rows[idx].as_ref().expect("live row index")
    }

    fn live_rows(&self) -> impl Iterator<Item = (usize, &Row)> {
        self.rows
            .iter()
            .enumerate()
            .filter_map(|(i, r)| r.as_ref().map(|r| (i, r)))
    }
}

/// Rows of one table reached from each entity of a candidate set, aligned
/// with the candidate set's key order.
#[derive(Debug, Clone)]
pub struct EntityRows {
    pub table: usize,
    pub rows: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Outcome {
    Committed { rows_affected: usize },
    Rejected { reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QueryRows {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Option<Value>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransactionResult {
    pub task: String,
    pub outcome: Outcome,
    pub echo: BTreeMap<String, Value>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub listing: Option<QueryRows>,
}

impl TransactionResult {
    pub fn rejected(task: &str, reason: String, echo: BTreeMap<String, Value>) -> Self {
        TransactionResult {
            task: task.to_string(),
            outcome: Outcome::Rejected { reason },
            echo,
            listing: None,
        }
    }

    pub fn is_committed(&self) -> bool {
        matches!(self.outcome, Outcome::Committed { .. })
    }
}

/// Prefix for generated keys of identifier-typed primary keys: the initials
/// of the table name, e.g. `R` for `reservation`, `MA` for `movie_actor`.
pub fn key_prefix(table: &str) -> String {
    table
        .split('_')
        .filter_map(|w| w.chars().next())
        .flat_map(char::to_uppercase)
        .collect()
}

#[derive(Debug, Clone)]
pub struct Store {
    schema: Arc<Schema>,
    graph: JoinGraph,
    tables: Vec<TableData>,
    version: u64,
}

impl Store {
    pub fn new(schema: Arc<Schema>) -> Self {
        let graph = JoinGraph::new(&schema);
        let tables = schema
            .tables
            .iter()
            .map(|t| {
                let fk_index = schema
                    .foreign_keys
                    .iter()
                    .filter(|fk| fk.child.table == t.name)
                    .map(|fk| (t.column_index(&fk.child.column).expect("validated"), HashMap::new()))
                    .collect();
                TableData {
                    value_counts: vec![HashMap::new(); t.columns.len()],
                    fk_index,
                    ..Default::default()
                }
            })
            .collect();
        Store {
            schema,
            graph,
            tables,
            version: 0,
        }
    }

    pub fn schema(&self) -> &Arc<Schema> {
        &self.schema
    }

    /// Swaps in a schema that differs only in annotations.
    pub fn set_schema(&mut self, schema: Arc<Schema>) -> Result<()> {
        let same_shape = schema.foreign_keys == self.schema.foreign_keys
            && schema.tables.len() == self.schema.tables.len()
            && schema.tables.iter().zip(&self.schema.tables).all(|(a, b)| {
                a.name == b.name
                    && a.primary_key == b.primary_key
                    && a.columns.len() == b.columns.len()
                    && a.columns
                        .iter()
                        .zip(&b.columns)
                        .all(|(x, y)| x.name == y.name && x.semantic_type == y.semantic_type)
            });
        if !same_shape {
            return Err(Error::Validation(vec![
                "schema structure changed; only annotations may be replaced at runtime".into(),
            ]));
        }
        self.schema = schema;
        Ok(())
    }

    pub fn graph(&self) -> &JoinGraph {
        &self.graph
    }

    /// Global version, bumped by every mutation.
    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn table_version(&self, table: usize) -> u64 {
        self.tables[table].version
    }

    fn table_idx(&self, name: &str) -> Result<usize> {
        self.schema
            .table_index(name)
            .ok_or_else(|| Error::UnknownTable(name.to_string()))
    }

    fn column_idx(&self, attr: &Attribute) -> Result<(usize, usize)> {
        let t = self.table_idx(&attr.table)?;
        let c = self.schema.tables[t]
            .column_index(&attr.column)
            .ok_or_else(|| Error::UnknownColumn(attr.to_string()))?;
        Ok((t, c))
    }

    pub fn row_count(&self, table: &str) -> Result<usize> {
        Ok(self.tables[self.table_idx(table)?].live)
    }

    /// All live rows of a table in insertion order.
    pub fn scan(&self, table: &str) -> Result<Vec<Row>> {
        let t = self.table_idx(table)?;
        Ok(self.tables[t].live_rows().map(|(_, r)| r.clone()).collect())
    }

    pub fn row_by_key(&self, table: &str, key: &Value) -> Result<Option<&Row>> {
        let t = &self.tables[self.table_idx(table)?];
        Ok(t.pk_index.get(key).map(|&i| t.row(i)))
    }

    pub fn value_of(&self, table: &str, key: &Value, column: &str) -> Result<Option<&Value>> {
        let attr = Attribute::new(table, column);
        let (_, c) = self.column_idx(&attr)?;
        Ok(self.row_by_key(table, key)?.and_then(|r| r[c].as_ref()))
    }

    /// Number of distinct non-null values in a column over the whole table.
    pub fn distinct_count(&self, table: &str, column: &str) -> Result<usize> {
        let (t, c) = self.column_idx(&Attribute::new(table, column))?;
        Ok(self.tables[t].value_counts[c].len())
    }

    /// Distinct non-null values of a column, sorted.
    pub fn distinct_values(&self, attr: &Attribute) -> Result<Vec<Value>> {
        let (t, c) = self.column_idx(attr)?;
        let mut values: Vec<Value> = self.tables[t].value_counts[c].keys().cloned().collect();
        values.sort();
        Ok(values)
    }

    pub fn ingest_csv(&mut self, table: &str, path: impl AsRef<Path>) -> Result<usize> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        self.ingest_reader(table, file, &path.display().to_string())
    }

    /// Parses and appends CSV rows. Either every row is ingested or none is.
    pub fn ingest_reader(&mut self, table: &str, reader: impl Read, origin: &str) -> Result<usize> {
        let t = self.table_idx(table)?;
        let spec = &self.schema.tables[t];
        let csv_err = |source| Error::Csv {
            path: origin.to_string(),
            source,
        };
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let header: Vec<String> = rdr.headers().map_err(csv_err)?.iter().map(str::to_string).collect();
        let expected: Vec<String> = spec.columns.iter().map(|c| c.name.clone()).collect();
        if header != expected {
            return Err(Error::HeaderMismatch {
                table: table.to_string(),
                expected,
                found: header,
            });
        }
        let mut rows = Vec::new();
        for (i, record) in rdr.records().enumerate() {
            let record = record.map_err(csv_err)?;
            let row_no = i + 1;
            let row = spec
                .columns
                .iter()
                .zip(record.iter())
                .map(|(col, raw)| {
                    if raw.trim().is_empty() && col.name != spec.primary_key {
                        return Ok(None);
                    }
                    Value::parse(raw, col.semantic_type)
                        .map(Some)
                        .map_err(|_| Error::TypeMismatch {
                            row: row_no,
                            column: col.name.clone(),
                            message: format!("`{raw}` is not a valid {}", col.semantic_type),
                        })
                })
                .collect::<Result<Row>>()?;
            rows.push(row);
        }
        self.insert_rows(t, rows)
    }

    /// Appends typed rows atomically after checking primary-key uniqueness.
    pub fn insert_rows_into(&mut self, table: &str, rows: Vec<Row>) -> Result<usize> {
        let t = self.table_idx(table)?;
        let spec = &self.schema.tables[t];
        for (i, row) in rows.iter().enumerate() {
            if row.len() != spec.columns.len() {
                return Err(Error::TypeMismatch {
                    row: i + 1,
                    column: String::new(),
                    message: format!("expected {} values, found {}", spec.columns.len(), row.len()),
                });
            }
            for (col, v) in spec.columns.iter().zip(row) {
                if let Some(v) = v {
                    if v.semantic_type() != col.semantic_type {
                        return Err(Error::TypeMismatch {
                            row: i + 1,
                            column: col.name.clone(),
                            message: format!("expected {}, found {}", col.semantic_type, v.semantic_type()),
                        });
                    }
                }
            }
        }
        self.insert_rows(t, rows)
    }

    fn insert_rows(&mut self, t: usize, rows: Vec<Row>) -> Result<usize> {
        let spec = &self.schema.tables[t];
        let pk = spec.primary_key_index();
        let data = &self.tables[t];
        let mut seen = HashSet::new();
        for (i, row) in rows.iter().enumerate() {
            let key = row[pk].as_ref().ok_or_else(|| Error::TypeMismatch {
                row: i + 1,
                column: spec.primary_key.clone(),
                message: "primary key is null".into(),
            })?;
            if data.pk_index.contains_key(key) || !seen.insert(key) {
                return Err(Error::DuplicateKey(key.to_string()));
            }
        }
        let n = rows.len();
        for row in rows {
            self.push_row(t, row);
        }
        if n > 0 {
            self.bump(t);
        }
        Ok(n)
    }

    fn push_row(&mut self, t: usize, row: Row) {
        let pk = self.schema.tables[t].primary_key_index();
        let data = &mut self.tables[t];
        let idx = data.rows.len();
        data.pk_index.insert(row[pk].clone().expect("checked non-null"), idx);
        for (c, v) in row.iter().enumerate() {
            if let Some(v) = v {
                *data.value_counts[c].entry(v.clone()).or_default() += 1;
                if let Some(index) = data.fk_index.get_mut(&c) {
                    index.entry(v.clone()).or_default().push(idx);
                }
            }
        }
        data.rows.push(Some(row));
        data.live += 1;
        data.inserted += 1;
    }

    fn remove_row(&mut self, t: usize, idx: usize) -> Row {
        let pk = self.schema.tables[t].primary_key_index();
        let data = &mut self.tables[t];
        let row = data.rows[idx].take().expect("live row");
        data.pk_index.remove(row[pk].as_ref().expect("non-null key"));
        for (c, v) in row.iter().enumerate() {
            let Some(v) = v else { continue };
            let counts = &mut data.value_counts[c];
            let n = counts.get_mut(v).expect("counted value");
            *n -= 1;
            if *n == 0 {
                counts.remove(v);
            }
            if let Some(index) = data.fk_index.get_mut(&c) {
                if let Some(list) = index.get_mut(v) {
                    list.retain(|&i| i != idx);
                    if list.is_empty() {
                        index.remove(v);
                    }
                }
            }
        }
        data.live -= 1;
        row
    }

    fn bump(&mut self, t: usize) {
        self.version += 1;
        self.tables[t].version = self.version;
    }

    /// Checks that every non-null foreign-key value references an existing row.
    pub fn check_integrity(&self) -> Result<()> {
        let mut errors = Vec::new();
        for fk in &self.schema.foreign_keys {
            let (t, c) = self.column_idx(&fk.child)?;
            let parent = self.table_idx(&fk.parent.table)?;
            for (_, row) in self.tables[t].live_rows() {
                if let Some(v) = &row[c] {
                    if !self.tables[parent].pk_index.contains_key(v) {
                        errors.push(format!("{} = {v} has no parent in {}", fk.child, fk.parent.table));
                    }
                }
            }
        }
        if errors.is_empty() {
            Ok(())
        } else {
            Err(Error::ForeignKeyViolation(errors.join("; ")))
        }
    }

    // ---- candidate sets -------------------------------------------------

    pub fn open_candidates(&self, table: &str) -> Result<CandidateSet> {
        self.open_candidates_with_depth(table, DEFAULT_MAX_JOIN_DEPTH)
    }

    pub fn open_candidates_with_depth(&self, table: &str, max_join_depth: usize) -> Result<CandidateSet> {
        let t = self.table_idx(table)?;
        Ok(CandidateSet {
            base_table: table.to_string(),
            predicates: Vec::new(),
            joined_tables: BTreeSet::from([table.to_string()]),
            row_ids: self.tables[t].pk_index.keys().cloned().collect(),
            max_join_depth,
        })
    }

    /// Path from a candidate set's base table to the table of `attr`.
    pub fn reach_for(&self, c: &CandidateSet, attr: &Attribute) -> Result<Reach> {
        let base = self.table_idx(&c.base_table)?;
        let (t, _) = self.column_idx(attr)?;
        self.graph
            .reach(base, t, c.max_join_depth)
            .ok_or_else(|| Error::UnjoinableAttribute(attr.to_string()))
    }

    /// Rows of `target` reached from the base row `start` along `path`.
    fn follow(&self, start: usize, path: &[crate::store::Hop]) -> Vec<usize> {
        let mut current = vec![start];
        for hop in path {
            let mut next = Vec::new();
            for &r in &current {
                match *hop {
                    Hop::Parent { from, column, to } => {
                        if let Some(v) = &self.tables[from].row(r)[column] {
                            if let Some(&p) = self.tables[to].pk_index.get(v) {
                                next.push(p);
                            }
                        }
                    }
                    Hop::Junction {
                        from,
                        junction,
                        near,
                        far,
                        to,
                    } => {
                        let pk = self.schema.tables[from].primary_key_index();
                        let key = self.tables[from].row(r)[pk].as_ref().expect("non-null key");
                        let j = &self.tables[junction];
                        for &jr in j.fk_index[&near].get(key).into_iter().flatten() {
                            if let Some(v) = &j.row(jr)[far] {
                                if let Some(&p) = self.tables[to].pk_index.get(v) {
                                    next.push(p);
                                }
                            }
                        }
                    }
                }
            }
            next.sort_unstable();
            next.dedup();
            current = next;
        }
        current
    }

    /// Hash-joins the candidate entities with the table at the end of `reach`.
    pub fn entity_rows(&self, c: &CandidateSet, reach: &Reach) -> Result<EntityRows> {
        let base = self.table_idx(&c.base_table)?;
        let data = &self.tables[base];
        let rows = c
            .row_ids
            .iter()
            .map(|k| match data.pk_index.get(k) {
                Some(&r) => self.follow(r, &reach.path),
                None => Vec::new(),
            })
            .collect();
        Ok(EntityRows {
            table: reach.table,
            rows,
        })
    }

    /// Distinct values of `attr` for one entity, following joins from `table`.
    pub fn attribute_values(
        &self,
        table: &str,
        key: &Value,
        attr: &Attribute,
        max_join_depth: usize,
    ) -> Result<Vec<Value>> {
        let base = self.table_idx(table)?;
        let (t, col) = self.column_idx(attr)?;
        let reach = self
            .graph
            .reach(base, t, max_join_depth)
            .ok_or_else(|| Error::UnjoinableAttribute(attr.to_string()))?;
        let Some(&r) = self.tables[base].pk_index.get(key) else {
            return Err(Error::NotFound(format!("{table} `{key}`")));
        };
        let mut out: Vec<Value> = self
            .follow(r, &reach.path)
            .into_iter()
            .filter_map(|row| self.tables[t].row(row)[col].clone())
            .collect();
        out.sort();
        out.dedup();
        Ok(out)
    }

    /// Histogram of distinct base entities per value, from pre-joined rows.
    pub fn histogram_from(&self, joined: &EntityRows, column: usize) -> BTreeMap<Value, u64> {
        let data = &self.tables[joined.table];
        let mut hist: HashMap<&Value, u64> = HashMap::new();
        let mut seen: Vec<&Value> = Vec::new();
        for rows in &joined.rows {
            seen.clear();
            for &r in rows {
                if let Some(v) = &data.row(r)[column] {
                    if !seen.contains(&v) {
                        seen.push(v);
                        *hist.entry(v).or_default() += 1;
                    }
                }
            }
        }
        hist.into_iter().map(|(v, n)| (v.clone(), n)).collect()
    }

    pub fn column_stats<F: Scalar>(&self, c: &CandidateSet, attr: &Attribute) -> Result<ColumnStats<F>> {
        let reach = self.reach_for(c, attr)?;
        let (_, col) = self.column_idx(attr)?;
        let joined = self.entity_rows(c, &reach)?;
        let hist = self.histogram_from(&joined, col);
        Ok(ColumnStats::from_histogram(attr.clone(), hist, c.len()))
    }

    fn compile(&self, p: &Predicate) -> Result<Matcher> {
        let column = self.schema.require_column(&p.attribute)?;
        let invalid = |message: String| Error::InvalidPredicate {
            attribute: p.attribute.to_string(),
            message,
        };
        match p.op {
            PredicateOp::FuzzyEq { max_edits } => {
                if column.semantic_type != SemanticType::Text {
                    return Err(invalid("fuzzy matching requires a text column".into()));
                }
                let needle = p
                    .value
                    .as_str()
                    .map(text::fold)
                    .ok_or_else(|| invalid("fuzzy matching requires a text literal".into()))?;
                let mut best = usize::MAX;
                let mut matched = HashSet::new();
                for v in self.distinct_values(&p.attribute)? {
                    let d = text::edit_distance(&needle, &text::fold(v.as_str().unwrap_or_default()));
                    if d > max_edits || d > best {
                        continue;
                    }
                    if d < best {
                        best = d;
                        matched.clear();
                    }
                    matched.insert(v);
                }
                Ok(Matcher::OneOf(matched))
            }
            op => {
                let lit = p.value.clone().coerce(column.semantic_type).ok_or_else(|| {
                    invalid(format!(
                        "literal `{}` ({}) does not fit a {} column",
                        p.value,
                        p.value.semantic_type(),
                        column.semantic_type
                    ))
                })?;
                Ok(Matcher::Compare(op, lit))
            }
        }
    }

    fn entity_matches(&self, base_row: usize, reach: &Reach, column: usize, m: &Matcher) -> bool {
        let data = &self.tables[reach.table];
        self.follow(base_row, &reach.path)
            .into_iter()
            .any(|r| data.row(r)[column].as_ref().is_some_and(|v| m.matches(v)))
    }

    /// Narrows a candidate set by one predicate, joining the attribute's
    /// table (and any tables on the path to it) first.
    pub fn refine(&self, c: &CandidateSet, p: Predicate) -> Result<CandidateSet> {
        let reach = self.reach_for(c, &p.attribute)?;
        let (_, col) = self.column_idx(&p.attribute)?;
        let matcher = self.compile(&p)?;
        let base = self.table_idx(&c.base_table)?;
        let data = &self.tables[base];
        let row_ids = c
            .row_ids
            .iter()
            .filter(|k| {
                data.pk_index
                    .get(*k)
                    .is_some_and(|&r| self.entity_matches(r, &reach, col, &matcher))
            })
            .cloned()
            .collect();
        let mut joined_tables = c.joined_tables.clone();
        for hop in &reach.path {
            for t in hop.tables() {
                joined_tables.insert(self.schema.tables[t].name.clone());
            }
        }
        let mut predicates = c.predicates.clone();
        predicates.push(p);
        Ok(CandidateSet {
            base_table: c.base_table.clone(),
            predicates,
            joined_tables,
            row_ids,
            max_join_depth: c.max_join_depth,
        })
    }

    /// Recomputes the keys satisfying all predicates from a full scan.
    pub fn evaluate(
        &self,
        base_table: &str,
        predicates: &[Predicate],
        max_join_depth: usize,
    ) -> Result<BTreeSet<Value>> {
        let mut c = self.open_candidates_with_depth(base_table, max_join_depth)?;
        let compiled = predicates
            .iter()
            .map(|p| {
                let reach = self.reach_for(&c, &p.attribute)?;
                let (_, col) = self.column_idx(&p.attribute)?;
                Ok((reach, col, self.compile(p)?))
            })
            .collect::<Result<Vec<_>>>()?;
        let base = self.table_idx(base_table)?;
        let pk = self.schema.tables[base].primary_key_index();
        c.row_ids = self.tables[base]
            .live_rows()
            .filter(|(r, _)| {
                compiled
                    .iter()
                    .all(|(reach, col, m)| self.entity_matches(*r, reach, *col, m))
            })
            .map(|(_, row)| row[pk].clone().expect("non-null key"))
            .collect();
        Ok(c.row_ids)
    }

    /// Rebuilds a candidate set from its predicates against the current data.
    pub fn recompute(&self, c: &CandidateSet) -> Result<CandidateSet> {
        let mut fresh = self.open_candidates_with_depth(&c.base_table, c.max_join_depth)?;
        for p in &c.predicates {
            fresh = self.refine(&fresh, p.clone())?;
        }
        Ok(fresh)
    }

    // ---- transactions ---------------------------------------------------

    fn generate_key(&self, t: usize) -> Value {
        let spec = &self.schema.tables[t];
        let data = &self.tables[t];
        let prefix = key_prefix(&spec.name);
        let mut n = data.inserted + 1;
        loop {
            let candidate = match spec.primary_key_column().semantic_type {
                SemanticType::Integer => Value::Integer(n as i64),
                SemanticType::Text => Value::Text(format!("{prefix}{n}")),
                _ => Value::Identifier(format!("{prefix}{n}")),
            };
            if !data.pk_index.contains_key(&candidate) {
                return candidate;
            }
            n += 1;
        }
    }

    fn bound_value(
        &self,
        task: &TaskDefinition,
        params: &BTreeMap<String, Value>,
        slot: &str,
        column_type: SemanticType,
    ) -> Result<Option<Value>> {
        let Some(v) = params.get(slot) else {
            return Ok(None);
        };
        let spec = task.slot(slot).ok_or_else(|| Error::MissingSlot(slot.to_string()))?;
        if let Some(table) = spec.entity_table() {
            let t = self.table_idx(table)?;
            let key = v
                .clone()
                .coerce(self.schema.tables[t].primary_key_column().semantic_type);
            if !key.as_ref().is_some_and(|k| self.tables[t].pk_index.contains_key(k)) {
                return Err(Error::ForeignKeyViolation(format!(
                    "slot `{slot}` references missing {table} `{v}`"
                )));
            }
        }
        v.clone()
            .coerce(column_type)
            .map(Some)
            .ok_or_else(|| Error::TypeMismatch {
                row: 0,
                column: slot.to_string(),
                message: format!("`{v}` is not a valid {column_type}"),
            })
    }

    /// Runs a task's action. Mutations are applied atomically: on error the
    /// store is unchanged.
    pub fn execute_transaction(
        &mut self,
        task: &TaskDefinition,
        params: &BTreeMap<String, Value>,
    ) -> Result<TransactionResult> {
        for slot in task.slots.iter().filter(|s| s.required) {
            if !params.contains_key(&slot.name) {
                return Err(Error::MissingSlot(slot.name.clone()));
            }
        }
        let t = self.table_idx(task.action.table())?;
        let spec = self.schema.tables[t].clone();
        let echo = params.clone();
        let committed = |rows_affected, listing| TransactionResult {
            task: task.name.clone(),
            outcome: Outcome::Committed { rows_affected },
            echo: echo.clone(),
            listing,
        };
        match &task.action {
            TaskAction::Insert { columns, .. } => {
                let mut row: Row = vec![None; spec.columns.len()];
                for (column, slot) in columns {
                    let c = spec.column_index(column).expect("validated task");
                    row[c] = self.bound_value(task, params, slot, spec.columns[c].semantic_type)?;
                }
                let pk = spec.primary_key_index();
                if row[pk].is_none() {
                    row[pk] = Some(self.generate_key(t));
                }
                for fk in self.schema.foreign_keys.iter().filter(|fk| fk.child.table == spec.name) {
                    let c = spec.column_index(&fk.child.column).expect("validated");
                    if let Some(v) = &row[c] {
                        let parent = self.table_idx(&fk.parent.table)?;
                        if !self.tables[parent].pk_index.contains_key(v) {
                            return Err(Error::ForeignKeyViolation(format!(
                                "{} = {v} references no {} row",
                                fk.child, fk.parent.table
                            )));
                        }
                    }
                }
                let key = row[pk].clone().expect("set above");
                if self.tables[t].pk_index.contains_key(&key) {
                    return Err(Error::DuplicateKey(key.to_string()));
                }
                self.push_row(t, row);
                self.bump(t);
                let mut result = committed(1, None);
                result.echo.insert(spec.primary_key.clone(), key);
                Ok(result)
            }
            TaskAction::Delete { key, .. } => {
                let slot = key.get(&spec.primary_key).expect("validated task");
                let value = self
                    .bound_value(task, params, slot, spec.primary_key_column().semantic_type)
                    .map_err(|e| match e {
                        Error::ForeignKeyViolation(_) => Error::NotFound(format!("{} `{}`", spec.name, params[slot])),
                        e => e,
                    })?
                    .ok_or_else(|| Error::MissingSlot(slot.clone()))?;
                let idx = *self.tables[t]
                    .pk_index
                    .get(&value)
                    .ok_or_else(|| Error::NotFound(format!("{} `{value}`", spec.name)))?;
                for fk in self
                    .schema
                    .foreign_keys
                    .iter()
                    .filter(|fk| fk.parent.table == spec.name)
                {
                    let (ct, cc) = self.column_idx(&fk.child)?;
                    if self.tables[ct].fk_index[&cc].contains_key(&value) {
                        return Err(Error::ForeignKeyViolation(format!(
                            "{} `{value}` is still referenced by {}",
                            spec.name, fk.child
                        )));
                    }
                }
                self.remove_row(t, idx);
                self.bump(t);
                Ok(committed(1, None))
            }
            TaskAction::Query { projection, filter, .. } => {
                let mut conditions = Vec::new();
                for (column, slot) in filter {
                    let c = spec.column_index(column).expect("validated task");
                    if let Some(v) = self.bound_value(task, params, slot, spec.columns[c].semantic_type)? {
                        conditions.push((c, v));
                    }
                }
                let cols: Vec<usize> = projection
                    .iter()
                    .map(|p| spec.column_index(p).expect("validated task"))
                    .collect();
                let rows = self.tables[t]
                    .live_rows()
                    .filter(|(_, r)| conditions.iter().all(|(c, v)| r[*c].as_ref() == Some(v)))
                    .map(|(_, r)| cols.iter().map(|&c| r[c].clone()).collect())
                    .collect();
                Ok(committed(
                    0,
                    Some(QueryRows {
                        columns: projection.clone(),
                        rows,
                    }),
                ))
            }
        }
    }
}

#[cfg(test)]
mod tests;

//! Relational schema with per-column annotations.
//!
//! The schema is declared in `schema.json`. Annotations steer the slot policy:
//! `request_preference` excludes or penalizes columns, `awareness_prior`
//! seeds the learned estimate of whether users know a column's value.

use std::collections::HashSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::value::SemanticType;

/// A qualified column name, `table.column`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Attribute {
    pub table: String,
    pub column: String,
}

impl Attribute {
    pub fn new(table: impl Into<String>, column: impl Into<String>) -> Self {
        Attribute {
            table: table.into(),
            column: column.into(),
        }
    }

    /// Slot name used by templates and gazetteers, e.g. `movie_title`.
    pub fn slot_name(&self) -> String {
        format!("{}_{}", self.table, self.column)
    }
}

impl fmt::Display for Attribute {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.table, self.column)
    }
}

impl FromStr for Attribute {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.split_once('.') {
            Some((t, c)) if is_identifier(t) && is_identifier(c) => Ok(Attribute::new(t, c)),
            _ => Err(Error::Validation(vec![format!(
                "`{s}` is not a qualified column (expected table.column)"
            )])),
        }
    }
}

impl Serialize for Attribute {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Attribute {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

pub(crate) fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RequestPreference {
    #[default]
    Normal,
    /// Requestable, but the policy score is multiplied by the avoid penalty.
    Avoid,
    /// Never requested from the user.
    Never,
}

/// Pseudo-observations of how often users knew this column when asked.
///
/// The awareness estimate adds Laplace smoothing on top, so the default
/// `(0, 0)` yields an estimate of 1/2.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AwarenessPrior {
    pub pseudo_known: u32,
    pub pseudo_asked: u32,
}

impl AwarenessPrior {
    pub fn new(pseudo_known: u32, pseudo_asked: u32) -> Self {
        AwarenessPrior {
            pseudo_known,
            pseudo_asked,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ColumnAnnotation {
    #[serde(default)]
    pub request_preference: RequestPreference,
    #[serde(default)]
    pub awareness_prior: AwarenessPrior,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub display_name: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    pub semantic_type: SemanticType,
    #[serde(default)]
    pub annotation: ColumnAnnotation,
}

impl Column {
    pub fn display_name(&self) -> String {
        self.annotation
            .display_name
            .clone()
            .unwrap_or_else(|| self.name.replace('_', " "))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Table {
    pub name: String,
    pub primary_key: String,
    pub columns: Vec<Column>,
}

impl Table {
    pub fn column(&self, name: &str) -> Option<&Column> {
        self.columns.iter().find(|c| c.name == name)
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn primary_key_index(&self) -> usize {
        self.column_index(&self.primary_key)
            .expect("validated schema: primary key exists")
    }

    pub fn primary_key_column(&self) -> &Column {
        &self.columns[self.primary_key_index()]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForeignKey {
    pub child: Attribute,
    pub parent: Attribute,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schema {
    pub tables: Vec<Table>,
    #[serde(default)]
    pub foreign_keys: Vec<ForeignKey>,
}

impl Schema {
    pub fn from_json_str(source: &str, origin: &str) -> Result<Schema> {
        let schema: Schema = serde_json::from_str(source).map_err(|e| Error::json(origin, e))?;
        schema.validate()?;
        Ok(schema)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Schema> {
        let path = path.as_ref();
        let source = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Schema::from_json_str(&source, &path.display().to_string())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("schema serializes") + "\n"
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    /// Checks every invariant and reports all violations at once.
    pub fn validate(&self) -> Result<()> {
        let mut errors = Vec::new();
        if self.tables.is_empty() {
            errors.push("schema must contain at least one table".to_string());
        }
        let mut table_names = HashSet::new();
        for table in &self.tables {
            if !is_identifier(&table.name) {
                errors.push(format!("table name `{}` is not a valid identifier", table.name));
            }
            if !table_names.insert(table.name.as_str()) {
                errors.push(format!("duplicate table `{}`", table.name));
            }
            if table.columns.is_empty() {
                errors.push(format!("table `{}` has no columns", table.name));
            }
            let mut column_names = HashSet::new();
            for column in &table.columns {
                if !is_identifier(&column.name) {
                    errors.push(format!(
                        "column name `{}.{}` is not a valid identifier",
                        table.name, column.name
                    ));
                }
                if !column_names.insert(column.name.as_str()) {
                    errors.push(format!("duplicate column `{}.{}`", table.name, column.name));
                }
                let prior = column.annotation.awareness_prior;
                if prior.pseudo_known > prior.pseudo_asked {
                    errors.push(format!(
                        "awareness prior of `{}.{}` has pseudo_known > pseudo_asked",
                        table.name, column.name
                    ));
                }
            }
            if table.column(&table.primary_key).is_none() {
                errors.push(format!(
                    "primary key `{}` of table `{}` is not a column",
                    table.primary_key, table.name
                ));
            }
        }
        let mut fk_children = HashSet::new();
        for fk in &self.foreign_keys {
            let label = format!("foreign key {} -> {}", fk.child, fk.parent);
            if fk.child.table == fk.parent.table {
                errors.push(format!("{label}: self-referencing foreign keys are not supported"));
            }
            if !fk_children.insert(&fk.child) {
                errors.push(format!("{label}: column already has a foreign key"));
            }
            let child = self.column(&fk.child);
            if child.is_none() {
                errors.push(format!("{label}: child column `{}` does not exist", fk.child));
            }
            match self.table(&fk.parent.table) {
                None => errors.push(format!("{label}: parent table `{}` does not exist", fk.parent.table)),
                Some(parent) if parent.primary_key != fk.parent.column => errors.push(format!(
                    "{label}: parent column `{}` is not the primary key of `{}`",
                    fk.parent, parent.name
                )),
                Some(parent) => {
                    if let (Some(child), Some(pk)) = (child, parent.column(&parent.primary_key)) {
                        if child.semantic_type != pk.semantic_type {
                            errors.push(format!(
                                "{label}: child type {} differs from parent key type {}",
                                child.semantic_type, pk.semantic_type
                            ));
                        }
                    }
                }
            }
        }
        if errors.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(errors))
        }
    }

    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }

    pub fn table_index(&self, name: &str) -> Option<usize> {
        self.tables.iter().position(|t| t.name == name)
    }

    pub fn require_table(&self, name: &str) -> Result<&Table> {
        self.table(name).ok_or_else(|| Error::UnknownTable(name.to_string()))
    }

    pub fn column(&self, attr: &Attribute) -> Option<&Column> {
        self.table(&attr.table)?.column(&attr.column)
    }

    /// Position of the attribute's column within its table.
    pub fn column_index_of(&self, attr: &Attribute) -> Option<usize> {
        self.table(&attr.table)?.column_index(&attr.column)
    }

    pub fn require_column(&self, attr: &Attribute) -> Result<&Column> {
        self.column(attr).ok_or_else(|| Error::UnknownColumn(attr.to_string()))
    }

    pub fn foreign_key_of(&self, child: &Attribute) -> Option<&ForeignKey> {
        self.foreign_keys.iter().find(|fk| &fk.child == child)
    }

    /// A junction table links other tables many-to-many: it has at least two
    /// foreign keys and no columns other than its primary key and those keys.
    pub fn is_junction(&self, table: &str) -> bool {
        let Some(t) = self.table(table) else {
            return false;
        };
        let fk_columns: Vec<&str> = self
            .foreign_keys
            .iter()
            .filter(|fk| fk.child.table == table)
            .map(|fk| fk.child.column.as_str())
            .collect();
        fk_columns.len() >= 2
            && t.columns
                .iter()
                .all(|c| c.name == t.primary_key || fk_columns.contains(&c.name.as_str()))
    }

    /// Every qualified column of the schema, in declaration order.
    pub fn attributes(&self) -> impl Iterator<Item = Attribute> + '_ {
        self.tables.iter().flat_map(|t| {
            t.columns
                .iter()
                .map(move |c| Attribute::new(t.name.clone(), c.name.clone()))
        })
    }

    /// Returns a copy with one column's annotation replaced.
    pub fn annotate(&self, table: &str, column: &str, annotation: ColumnAnnotation) -> Result<Schema> {
        let mut next = self.clone();
        let col = next
            .tables
            .iter_mut()
            .find(|t| t.name == table)
            .and_then(|t| t.columns.iter_mut().find(|c| c.name == column))
            .ok_or_else(|| Error::UnknownColumn(format!("{table}.{column}")))?;
        col.annotation = annotation;
        next.validate()?;
        Ok(next)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINI: &str = r#"{
      "tables": [
        {"name": "movie", "primary_key": "movie_id", "columns": [
          {"name": "movie_id", "semantic_type": "identifier"},
          {"name": "title", "semantic_type": "text"}
        ]},
        {"name": "screening", "primary_key": "screening_id", "columns": [
          {"name": "screening_id", "semantic_type": "identifier"},
          {"name": "movie_id", "semantic_type": "identifier"}
        ]}
      ],
      "foreign_keys": [{"child": "screening.movie_id", "parent": "movie.movie_id"}]
    }"#;

    fn mini() -> Schema {
        Schema::from_json_str(MINI, "mini").unwrap()
    }

    #[test]
    fn empty_schema_is_rejected() {
        let err = Schema::from_json_str(r#"{"tables": []}"#, "empty").unwrap_err();
        assert!(err.to_string().contains("schema must contain at least one table"));
    }

    #[test]
    fn foreign_key_to_missing_table_is_named() {
        let src = MINI.replace("\"parent\": \"movie.movie_id\"", "\"parent\": \"film.movie_id\"");
        let err = Schema::from_json_str(&src, "bad").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("screening.movie_id -> film.movie_id"), "{msg}");
    }

    #[test]
    fn self_reference_and_non_key_parent_are_rejected() {
        let src = MINI.replace(
            "{\"child\": \"screening.movie_id\", \"parent\": \"movie.movie_id\"}",
            "{\"child\": \"screening.movie_id\", \"parent\": \"screening.screening_id\"}, \
             {\"child\": \"movie.title\", \"parent\": \"screening.movie_id\"}",
        );
        let Error::Validation(errors) = Schema::from_json_str(&src, "bad").unwrap_err() else {
            panic!("expected validation error");
        };
        assert!(errors.iter().any(|e| e.contains("self-referencing")));
        assert!(errors.iter().any(|e| e.contains("not the primary key")));
    }

    #[test]
    fn malformed_json_reports_position() {
        let err = Schema::from_json_str("{\"tables\": [", "broken.json").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }), "{err}");
    }

    #[test]
    fn annotate_replaces_only_the_target() {
        let schema = mini();
        let ann = ColumnAnnotation {
            request_preference: RequestPreference::Never,
            ..Default::default()
        };
        let next = schema.annotate("movie", "movie_id", ann.clone()).unwrap();
        assert_eq!(
            next.column(&Attribute::new("movie", "movie_id")).unwrap().annotation,
            ann
        );
        let mut expected = schema.clone();
        expected.tables[0].columns[0].annotation = ann;
        assert_eq!(next, expected);
        assert!(matches!(
            schema.annotate("movie", "nope", ColumnAnnotation::default()),
            Err(Error::UnknownColumn(_))
        ));
    }

    #[test]
    fn prior_must_be_consistent() {
        let bad = ColumnAnnotation {
            awareness_prior: AwarenessPrior::new(3, 2),
            ..Default::default()
        };
        assert!(mini().annotate("movie", "title", bad).is_err());
    }

    #[test]
    fn save_then_load_is_identical() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("schema.json");
        let schema = mini()
            .annotate(
                "movie",
                "title",
                ColumnAnnotation {
                    display_name: Some("movie title".into()),
                    awareness_prior: AwarenessPrior::new(9, 10),
                    ..Default::default()
                },
            )
            .unwrap();
        schema.save(&path).unwrap();
        let loaded = Schema::load(&path).unwrap();
        assert_eq!(loaded, schema);
        loaded.save(&path).unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), schema.to_json());
    }

    #[test]
    fn attribute_parsing() {
        let a: Attribute = "customer.city".parse().unwrap();
        assert_eq!(a, Attribute::new("customer", "city"));
        assert_eq!(a.slot_name(), "customer_city");
        assert!("customer".parse::<Attribute>().is_err());
        assert!("a.b.c".parse::<Attribute>().is_err());
    }
}

//! Transaction (task) definitions declared in `tasks.json`.

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::schema::{Attribute, Schema};
use crate::value::SemanticType;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SlotKind {
    Scalar(SemanticType),
    /// References a table; the bound value is that table's primary key.
    Entity(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotSpec {
    pub name: String,
    pub kind: SlotKind,
    #[serde(default = "default_true")]
    pub required: bool,
}

fn default_true() -> bool {
    true
}

impl SlotSpec {
    pub fn entity_table(&self) -> Option<&str> {
        match &self.kind {
            SlotKind::Entity(t) => Some(t),
            SlotKind::Scalar(_) => None,
        }
    }

    pub fn scalar_type(&self) -> Option<SemanticType> {
        match &self.kind {
            SlotKind::Scalar(t) => Some(*t),
            SlotKind::Entity(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskAction {
    /// Insert one row; `columns` maps column name to slot name. An unmapped
    /// primary key is generated.
    Insert {
        table: String,
        columns: BTreeMap<String, String>,
    },
    /// Delete the row whose primary key equals the mapped slot.
    Delete {
        table: String,
        key: BTreeMap<String, String>,
    },
    /// Return `projection` of the rows whose `filter` columns equal the mapped slots.
    Query {
        table: String,
        projection: Vec<String>,
        #[serde(default)]
        filter: BTreeMap<String, String>,
    },
}

impl TaskAction {
    pub fn table(&self) -> &str {
        match self {
            TaskAction::Insert { table, .. } | TaskAction::Delete { table, .. } | TaskAction::Query { table, .. } => {
                table
            }
        }
    }

    pub fn is_mutation(&self) -> bool {
        !matches!(self, TaskAction::Query { .. })
    }

    fn slot_mapping(&self) -> &BTreeMap<String, String> {
        match self {
            TaskAction::Insert { columns, .. } => columns,
            TaskAction::Delete { key, .. } => key,
            TaskAction::Query { filter, .. } => filter,
        }
    }

    /// (column, slot) pairs referenced by the action.
    pub fn mapping(&self) -> impl Iterator<Item = (&str, &str)> {
        self.slot_mapping().iter().map(|(c, s)| (c.as_str(), s.as_str()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskDefinition {
    pub name: String,
    /// Intent label that starts the task; defaults to `request_<name>`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intent: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub display_name: Option<String>,
    pub slots: Vec<SlotSpec>,
    pub action: TaskAction,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confirmation_required: Option<bool>,
}

impl TaskDefinition {
    pub fn request_intent(&self) -> String {
        self.intent.clone().unwrap_or_else(|| format!("request_{}", self.name))
    }

    pub fn display_name(&self) -> String {
        self.display_name.clone().unwrap_or_else(|| self.name.replace('_', " "))
    }

    pub fn requires_confirmation(&self) -> bool {
        self.confirmation_required.unwrap_or_else(|| self.action.is_mutation())
    }

    pub fn slot(&self, name: &str) -> Option<&SlotSpec> {
        self.slots.iter().find(|s| s.name == name)
    }

    fn validate(&self, schema: &Schema, errors: &mut Vec<String>) {
        let task = &self.name;
        let mut names = HashSet::new();
        for slot in &self.slots {
            if !names.insert(slot.name.as_str()) {
                errors.push(format!("task `{task}`: duplicate slot `{}`", slot.name));
            }
            if let SlotKind::Entity(table) = &slot.kind {
                if schema.table(table).is_none() {
                    errors.push(format!(
                        "task `{task}`: slot `{}` references unknown table `{table}`",
                        slot.name
                    ));
                }
            }
        }
        if self.action.is_mutation() && self.confirmation_required == Some(false) {
            errors.push(format!(
                "task `{task}`: insert and delete tasks must require confirmation"
            ));
        }
        let Some(table) = schema.table(self.action.table()) else {
            errors.push(format!(
                "task `{task}`: action references unknown table `{}`",
                self.action.table()
            ));
            return;
        };
        for (column, slot_name) in self.action.mapping() {
            let Some(col) = table.column(column) else {
                errors.push(format!(
                    "task `{task}`: action references unknown column `{}.{column}`",
                    table.name
                ));
                continue;
            };
            let Some(slot) = self.slot(slot_name) else {
                errors.push(format!(
                    "task `{task}`: action references undeclared slot `{slot_name}`"
                ));
                continue;
            };
            match &slot.kind {
                SlotKind::Scalar(ty) => {
                    let compatible = *ty == col.semantic_type || (ty.is_textual() && col.semantic_type.is_textual());
                    if !compatible {
                        errors.push(format!(
                            "task `{task}`: slot `{slot_name}` ({ty}) does not fit column `{}.{column}` ({})",
                            table.name, col.semantic_type
                        ));
                    }
                }
                SlotKind::Entity(entity) => {
                    let attr = Attribute::new(table.name.clone(), column);
                    let target = if &table.name == entity && column == table.primary_key {
                        Some(entity.as_str())
                    } else {
                        schema.foreign_key_of(&attr).map(|fk| fk.parent.table.as_str())
                    };
                    if target != Some(entity.as_str()) {
                        errors.push(format!(
                            "task `{task}`: entity slot `{slot_name}` ({entity}) cannot bind column `{attr}`"
                        ));
                    }
                }
            }
        }
        match &self.action {
            TaskAction::Delete { key, .. } => {
                if key.len() != 1 || !key.contains_key(&table.primary_key) {
                    errors.push(format!(
                        "task `{task}`: delete must map exactly the primary key `{}`",
                        table.primary_key
                    ));
                }
            }
            TaskAction::Query { projection, .. } => {
                for column in projection {
                    if table.column(column).is_none() {
                        errors.push(format!(
                            "task `{task}`: projection references unknown column `{}.{column}`",
                            table.name
                        ));
                    }
                }
            }
            TaskAction::Insert { .. } => {}
        }
    }
}

pub fn tasks_from_json_str(source: &str, origin: &str, schema: &Schema) -> Result<Vec<TaskDefinition>> {
    let tasks: Vec<TaskDefinition> = serde_json::from_str(source).map_err(|e| Error::json(origin, e))?;
    let mut errors = Vec::new();
    let mut names = HashSet::new();
    for task in &tasks {
        if !names.insert(task.name.as_str()) {
            errors.push(format!("duplicate task `{}`", task.name));
        }
        task.validate(schema, &mut errors);
    }
    if errors.is_empty() {
        Ok(tasks)
    } else {
        Err(Error::Validation(errors))
    }
}

pub fn load_tasks(path: impl AsRef<Path>, schema: &Schema) -> Result<Vec<TaskDefinition>> {
    let path = path.as_ref();
    let source = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    tasks_from_json_str(&source, &path.display().to_string(), schema)
}

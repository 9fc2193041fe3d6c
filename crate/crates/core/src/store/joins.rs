use std::collections::VecDeque;

use crate::schema::Schema;

/// One step of a join path between two tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Hop {
    /// Many-to-one: follow foreign-key column `column` of `from` to the primary key of `to`.
    Parent { from: usize, column: usize, to: usize },
    /// Many-to-many: from the primary key of `from` through the rows of
    /// `junction` whose `near` column references it, then along `far` to `to`.
    Junction {
        from: usize,
        junction: usize,
        near: usize,
        far: usize,
        to: usize,
    },
}

impl Hop {
    pub fn to(&self) -> usize {
        match *self {
            Hop::Parent { to, .. } | Hop::Junction { to, .. } => to,
        }
    }

    /// Tables touched by the hop, excluding its origin.
    pub fn tables(&self) -> impl Iterator<Item = usize> {
        let (a, b) = match *self {
            Hop::Parent { to, .. } => (None, to),
            Hop::Junction { junction, to, .. } => (Some(junction), to),
        };
        a.into_iter().chain(std::iter::once(b))
    }
}

/// A table reachable from a base table, with the path used to reach it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Reach {
    pub table: usize,
    pub depth: usize,
    pub path: Vec<Hop>,
}

/// Foreign-key graph used for join expansion.
///
/// Edges run child to parent, plus parent to parent across junction tables.
/// One-to-many edges into non-junction tables are not traversed: those rows
/// describe other facts about an entity rather than its properties.
#[derive(Debug, Clone)]
pub struct JoinGraph {
    edges: Vec<Vec<Hop>>,
    junction: Vec<bool>,
}

impl JoinGraph {
    pub fn new(schema: &Schema) -> Self {
        let n = schema.tables.len();
        let mut edges = vec![Vec::new(); n];
        let junction: Vec<bool> = schema.tables.iter().map(|t| schema.is_junction(&t.name)).collect();
        let idx = |name: &str| schema.table_index(name).expect("validated schema");
        for fk in &schema.foreign_keys {
            let from = idx(&fk.child.table);
            let column = schema.tables[from]
                .column_index(&fk.child.column)
                .expect("validated schema");
            edges[from].push(Hop::Parent {
                from,
                column,
                to: idx(&fk.parent.table),
            });
        }
        for (j, table) in schema.tables.iter().enumerate() {
            if !junction[j] {
                continue;
            }
            let fks: Vec<_> = schema
                .foreign_keys
                .iter()
                .filter(|fk| fk.child.table == table.name)
                .collect();
            for near in &fks {
                for far in &fks {
                    if near.child == far.child {
                        continue;
                    }
                    let from = idx(&near.parent.table);
                    let to = idx(&far.parent.table);
                    if from == to {
                        continue;
                    }
                    edges[from].push(Hop::Junction {
                        from,
                        junction: j,
                        near: table.column_index(&near.child.column).expect("validated"),
                        far: table.column_index(&far.child.column).expect("validated"),
                        to,
                    });
                }
            }
        }
        JoinGraph { edges, junction }
    }

    pub fn is_junction(&self, table: usize) -> bool {
        self.junction[table]
    }

    /// Breadth-first reach from `base` up to `max_depth` hops. The base table
    /// comes first with depth 0; junction tables are transparent and never
    /// listed. Each table appears once, on its first-discovered shortest path.
    pub fn reachable(&self, base: usize, max_depth: usize) -> Vec<Reach> {
        let mut seen = vec![false; self.edges.len()];
        seen[base] = true;
        let mut out = vec![Reach {
            table: base,
            depth: 0,
            path: Vec::new(),
        }];
        let mut queue = VecDeque::from([0usize]);
        while let Some(i) = queue.pop_front() {
            let (table, depth) = (out[i].table, out[i].depth);
            if depth == max_depth {
                continue;
            }
            for hop in &self.edges[table] {
                let to = hop.to();
                if seen[to] || self.junction[to] {
                    continue;
                }
                seen[to] = true;
                let mut path = out[i].path.clone();
                path.push(*hop);
                out.push(Reach {
                    table: to,
                    depth: depth + 1,
                    path,
                });
                queue.push_back(out.len() - 1);
            }
        }
        out
    }

    pub fn reach(&self, base: usize, target: usize, max_depth: usize) -> Option<Reach> {
        self.reachable(base, max_depth).into_iter().find(|r| r.table == target)
    }
}

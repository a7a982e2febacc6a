//! Read-only SQLite schema introspection and DDL rendering for prompts.

use std::fmt::Write as _;
use std::path::Path;

use rusqlite::{Connection, OpenFlags};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SchemaError {
    #[error("{0} is not a SQLite database")]
    NotADatabase(String),
    #[error("cannot read {path}: {reason}")]
    UnreadableFile { path: String, reason: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnDef {
    pub name: String,
    /// Declared type as written in the DDL; may be empty.
    pub decl_type: String,
    pub primary_key: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForeignKey {
    pub column: String,
    pub foreign_table: String,
    pub foreign_column: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableDef {
    pub name: String,
    pub columns: Vec<ColumnDef>,
    pub foreign_keys: Vec<ForeignKey>,
}

impl TableDef {
    /// Case-insensitive lookup, matching SQLite identifier semantics.
    pub fn column(&self, name: &str) -> Option<&ColumnDef> {
        self.columns.iter().find(|c| c.name.eq_ignore_ascii_case(name))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatabaseSchema {
    pub db_file_name: String,
    pub tables: Vec<TableDef>,
}

impl DatabaseSchema {
    pub fn table(&self, name: &str) -> Option<&TableDef> {
        self.tables.iter().find(|t| t.name.eq_ignore_ascii_case(name))
    }
}

pub(crate) fn open_read_only(db_file: &Path) -> Result<Connection, SchemaError> {
    let unreadable = |reason: String| SchemaError::UnreadableFile {
        path: db_file.display().to_string(),
        reason,
    };
    // rusqlite would happily create or open a directory path lazily; check first.
    let meta = std::fs::metadata(db_file).map_err(|e| unreadable(e.to_string()))?;
    if !meta.is_file() {
        return Err(unreadable("not a regular file".into()));
    }
    std::fs::File::open(db_file).map_err(|e| unreadable(e.to_string()))?;
    Connection::open_with_flags(
        db_file,
        OpenFlags::SQLITE_OPEN_READ_ONLY | OpenFlags::SQLITE_OPEN_NO_MUTEX | OpenFlags::SQLITE_OPEN_URI,
    )
    .map_err(|e| unreadable(e.to_string()))
}

fn map_sqlite_err(db_file: &Path, e: rusqlite::Error) -> SchemaError {
    match e.sqlite_error_code() {
        Some(rusqlite::ErrorCode::NotADatabase) => SchemaError::NotADatabase(db_file.display().to_string()),
        _ => SchemaError::UnreadableFile {
            path: db_file.display().to_string(),
            reason: e.to_string(),
        },
    }
}

/// Introspect every user base table (views and `sqlite_*` tables excluded).
pub fn introspect(db_file: &Path) -> Result<DatabaseSchema, SchemaError> {
    let conn = open_read_only(db_file)?;
    let err = |e| map_sqlite_err(db_file, e);
    let names: Vec<String> = {
        let mut stmt = conn
            .prepare("SELECT name FROM sqlite_master WHERE type = 'table' AND name NOT LIKE 'sqlite\\_%' ESCAPE '\\' ORDER BY rowid")
            .map_err(err)?;
        let rows = stmt.query_map([], |r| r.get::<_, String>(0)).map_err(err)?;
        rows.collect::<Result<_, _>>().map_err(err)?
    };

    let mut tables = Vec::with_capacity(names.len());
    for name in names {
        let mut cols_stmt = conn.prepare("SELECT name, type, pk FROM pragma_table_info(?1) ORDER BY cid").map_err(err)?;
        let columns: Vec<ColumnDef> = cols_stmt
            .query_map([&name], |r| {
                Ok(ColumnDef {
                    name: r.get(0)?,
                    decl_type: r.get::<_, Option<String>>(1)?.unwrap_or_default(),
                    primary_key: r.get::<_, i64>(2)? > 0,
                })
            })
            .map_err(err)?
            .collect::<Result<_, _>>()
            .map_err(err)?;
        let mut fk_stmt = conn
            .prepare(r#"SELECT "from", "table", "to" FROM pragma_foreign_key_list(?1) ORDER BY id, seq"#)
            .map_err(err)?;
        let foreign_keys: Vec<ForeignKey> = fk_stmt
            .query_map([&name], |r| {
                Ok((r.get::<_, String>(0)?, r.get::<_, String>(1)?, r.get::<_, Option<String>>(2)?))
            })
            .map_err(err)?
            .collect::<Result<Vec<_>, _>>()
            .map_err(err)?
            .into_iter()
            .map(|(column, foreign_table, to)| ForeignKey {
                column,
                foreign_column: to.unwrap_or_default(),
                foreign_table,
            })
            .collect();
        tables.push(TableDef {
            name,
            columns,
            foreign_keys,
        });
    }

    // An FK without an explicit target column points at the parent's primary key.
    let pk_of = |t: &str| -> Option<String> {
        tables
            .iter()
            .find(|d| d.name.eq_ignore_ascii_case(t))
            .and_then(|d| d.columns.iter().find(|c| c.primary_key))
            .map(|c| c.name.clone())
    };
    let fills: Vec<(usize, usize, String)> = tables
        .iter()
        .enumerate()
        .flat_map(|(ti, t)| {
            t.foreign_keys
                .iter()
                .enumerate()
                .filter(|(_, fk)| fk.foreign_column.is_empty())
                .filter_map(move |(fi, fk)| pk_of(&fk.foreign_table).map(|pk| (ti, fi, pk)))
                .collect::<Vec<_>>()
        })
        .collect();
    for (ti, fi, pk) in fills {
        tables[ti].foreign_keys[fi].foreign_column = pk;
    }

    let db_file_name = db_file
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    Ok(DatabaseSchema { db_file_name, tables })
}

const RESERVED: &[&str] = &[
    "abort", "action", "add", "after", "all", "alter", "analyze", "and", "as", "asc", "attach", "autoincrement",
    "before", "begin", "between", "by", "cascade", "case", "cast", "check", "collate", "column", "commit",
    "conflict", "constraint", "create", "cross", "current", "default", "deferrable", "deferred", "delete", "desc",
    "detach", "distinct", "drop", "each", "else", "end", "escape", "except", "exclusive", "exists", "explain",
    "fail", "for", "foreign", "from", "full", "glob", "group", "having", "if", "ignore", "immediate", "in", "index",
    "indexed", "initially", "inner", "insert", "instead", "intersect", "into", "is", "isnull", "join", "key",
    "left", "like", "limit", "match", "natural", "no", "not", "notnull", "null", "of", "offset", "on", "or",
    "order", "outer", "plan", "pragma", "primary", "query", "raise", "recursive", "references", "regexp",
    "reindex", "release", "rename", "replace", "restrict", "right", "rollback", "row", "savepoint", "select",
    "set", "table", "temp", "temporary", "then", "to", "transaction", "trigger", "union", "unique", "update",
    "using", "vacuum", "values", "view", "virtual", "when", "where", "with", "without",
];

/// Quote an identifier only when it is not a plain, non-reserved word.
pub fn quote_ident(name: &str) -> String {
    let plain = !name.is_empty()
        && name.chars().next().is_some_and(|c| c.is_ascii_alphabetic() || c == '_')
        && name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
        && !RESERVED.contains(&name.to_ascii_lowercase().as_str());
    if plain {
        name.to_string()
    } else {
        format!("\"{}\"", name.replace('"', "\"\""))
    }
}

/// Render the schema as executable SQLite DDL, one `CREATE TABLE` per table.
///
/// A single-column primary key is written inline; composite keys and foreign
/// keys become table constraints. Tables are separated by a blank line.
pub fn render_schema(schema: &DatabaseSchema) -> String {
    let mut out = String::new();
    for (i, table) in schema.tables.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        let pk: Vec<&ColumnDef> = table.columns.iter().filter(|c| c.primary_key).collect();
        let inline_pk = pk.len() == 1;
        let mut lines: Vec<String> = table
            .columns
            .iter()
            .map(|c| {
                let mut line = quote_ident(&c.name);
                if !c.decl_type.is_empty() {
                    line.push(' ');
                    line.push_str(&c.decl_type);
                }
                if inline_pk && c.primary_key {
                    line.push_str(" PRIMARY KEY");
                }
                line
            })
            .collect();
        if pk.len() > 1 {
            let cols: Vec<String> = pk.iter().map(|c| quote_ident(&c.name)).collect();
            lines.push(format!("PRIMARY KEY ({})", cols.join(", ")));
        }
        for fk in &table.foreign_keys {
            lines.push(format!(
                "FOREIGN KEY ({}) REFERENCES {}({})",
                quote_ident(&fk.column),
                quote_ident(&fk.foreign_table),
                quote_ident(&fk.foreign_column)
            ));
        }
        let _ = writeln!(out, "CREATE TABLE {} (", quote_ident(&table.name));
        let _ = writeln!(out, "  {}", lines.join(",\n  "));
        out.push_str(");\n");
    }
    out
}

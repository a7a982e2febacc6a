//! Model output → executable artifact: plan JSON or raw script, and plan
//! validation against the database schema.

pub mod sqlscan;

use std::fmt;
use std::str::FromStr;

use rusqlite::Connection;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::schema::{render_schema, DatabaseSchema};
use sqlscan::{Reference, SourceKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChartType {
    Bar,
    StackedBar,
    Line,
    GroupingLine,
    Scatter,
    GroupingScatter,
    Pie,
}

impl ChartType {
    pub const ALL: [ChartType; 7] = [
        Self::Bar,
        Self::StackedBar,
        Self::Line,
        Self::GroupingLine,
        Self::Scatter,
        Self::GroupingScatter,
        Self::Pie,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Bar => "bar",
            Self::StackedBar => "stacked_bar",
            Self::Line => "line",
            Self::GroupingLine => "grouping_line",
            Self::Scatter => "scatter",
            Self::GroupingScatter => "grouping_scatter",
            Self::Pie => "pie",
        }
    }

    /// Types whose encoding needs a series column.
    pub fn needs_series(self) -> bool {
        matches!(self, Self::StackedBar | Self::GroupingLine | Self::GroupingScatter)
    }

    pub fn is_scatter(self) -> bool {
        matches!(self, Self::Scatter | Self::GroupingScatter)
    }
}

impl fmt::Display for ChartType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ChartType {
    type Err = String;

    /// Accepts `stacked_bar`, `stacked bar`, `Stacked Bar`, `stacked-bar`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.trim().to_ascii_lowercase().replace([' ', '-'], "_");
        Self::ALL
            .into_iter()
            .find(|c| c.as_str() == norm)
            .ok_or_else(|| format!("unknown chart type {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SortDir {
    Asc,
    Desc,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SortSpec {
    pub by: String,
    pub dir: SortDir,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChartSpec {
    #[serde(rename = "type")]
    pub chart_type: ChartType,
    pub x: String,
    pub y: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub series: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sort: Option<SortSpec>,
}

impl ChartSpec {
    pub fn new(chart_type: ChartType, x: impl Into<String>, y: &[&str]) -> Self {
        Self {
            chart_type,
            x: x.into(),
            y: y.iter().map(|s| s.to_string()).collect(),
            series: None,
            sort: None,
        }
    }

    pub fn with_series(mut self, s: impl Into<String>) -> Self {
        self.series = Some(s.into());
        self
    }

    pub fn with_sort(mut self, by: impl Into<String>, dir: SortDir) -> Self {
        self.sort = Some(SortSpec { by: by.into(), dir });
        self
    }

    /// The per-type structural rules, independent of any data.
    pub fn check_shape(&self) -> Result<(), String> {
        if self.y.is_empty() {
            return Err("y must name at least one column".into());
        }
        if self.x.trim().is_empty() || self.y.iter().any(|c| c.trim().is_empty()) {
            return Err("column names must be non-empty".into());
        }
        match (self.chart_type, &self.series) {
            (ChartType::Pie, _) if self.y.len() != 1 => Err(format!("pie takes exactly one y column, got {}", self.y.len())),
            (ChartType::Pie, Some(_)) => Err("pie takes no series".into()),
            (t, None) if t.needs_series() => Err(format!("{t} requires a series column")),
            (t, Some(_)) if t.needs_series() && self.y.len() != 1 => {
                Err(format!("{t} takes exactly one y column alongside its series"))
            }
            (ChartType::Bar | ChartType::Line | ChartType::Scatter, Some(_)) => {
                Err(format!("{} takes no series", self.chart_type))
            }
            _ => Ok(()),
        }
    }

    /// Every column the chart names, x first.
    pub fn columns(&self) -> impl Iterator<Item = &str> {
        std::iter::once(self.x.as_str())
            .chain(self.y.iter().map(String::as_str))
            .chain(self.series.as_deref())
            .chain(self.sort.as_ref().map(|s| s.by.as_str()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnalysisPlan {
    pub sql: String,
    pub chart: ChartSpec,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratedScript {
    pub code: String,
    pub language_hint: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PlanError {
    #[error("response contains no fenced JSON block")]
    NoJsonBlock,
    #[error("plan JSON has the wrong shape: {0}")]
    BadPlanShape(String),
    #[error("plan SQL is not a single SELECT: starts with or contains {0}")]
    NonSelectSql(String),
    #[error("empty model response")]
    EmptyResponse,
    #[error("unknown table {0:?}")]
    UnknownTable(String),
    #[error("unknown column {column:?} in {table:?}")]
    UnknownColumn { table: String, column: String },
    #[error("chart shape: {0}")]
    ChartShapeError(String),
    #[error("plan SQL holds more than one statement")]
    MultipleStatements,
    #[error("SQL rejected: {0}")]
    SqlRejected(String),
}

/// Table name used in [`PlanError::UnknownColumn`] when a chart names a
/// column the query does not output.
pub const RESULT_TABLE: &str = "<query result>";

struct Fence<'a> {
    info: &'a str,
    body: String,
}

/// Fenced blocks in order of appearance. An unterminated fence runs to the end.
fn fenced_blocks(text: &str) -> Vec<Fence<'_>> {
    let mut out = Vec::new();
    let mut lines = text.lines();
    while let Some(line) = lines.next() {
        let trimmed = line.trim_start();
        let Some(rest) = trimmed.strip_prefix("```") else { continue };
        // one-line block: ```{"a": 1}```
        if let Some(inner) = rest.strip_suffix("```") {
            if !inner.trim().is_empty() {
                let inner = inner.trim();
                let (info, body) = match inner.find(['{', '[']) {
                    Some(p) => (inner[..p].trim(), inner[p..].to_string()),
                    None => ("", inner.to_string()),
                };
                out.push(Fence { info, body });
                continue;
            }
        }
        let info = rest.trim();
        let mut body = Vec::new();
        for inner in lines.by_ref() {
            if inner.trim_start().starts_with("```") {
                break;
            }
            body.push(inner);
        }
        out.push(Fence {
            info,
            body: body.join("\n"),
        });
    }
    out
}

#[derive(Deserialize)]
struct PlanJson {
    sql: Option<String>,
    chart: Option<ChartJson>,
}

#[derive(Deserialize)]
struct ChartJson {
    #[serde(rename = "type")]
    chart_type: Option<String>,
    x: Option<String>,
    y: Option<OneOrMany>,
    #[serde(default)]
    series: Option<String>,
    #[serde(default)]
    sort: Option<SortJson>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum OneOrMany {
    One(String),
    Many(Vec<String>),
}

#[derive(Deserialize)]
struct SortJson {
    by: String,
    #[serde(default)]
    dir: Option<String>,
}

/// Extract the first fenced JSON block and map it onto an [`AnalysisPlan`].
pub fn parse_plan(llm_text: &str) -> Result<AnalysisPlan, PlanError> {
    let fence = fenced_blocks(llm_text)
        .into_iter()
        .find(|f| f.info.eq_ignore_ascii_case("json") || f.body.trim_start().starts_with('{'))
        .ok_or(PlanError::NoJsonBlock)?;
    let raw: PlanJson =
        serde_json::from_str(fence.body.trim()).map_err(|e| PlanError::BadPlanShape(format!("invalid JSON: {e}")))?;
    let sql = raw
        .sql
        .filter(|s| !s.trim().is_empty())
        .ok_or_else(|| PlanError::BadPlanShape("missing \"sql\"".into()))?;
    let chart = raw.chart.ok_or_else(|| PlanError::BadPlanShape("missing \"chart\"".into()))?;
    let chart_type = chart
        .chart_type
        .ok_or_else(|| PlanError::BadPlanShape("missing chart \"type\"".into()))?
        .parse::<ChartType>()
        .map_err(PlanError::BadPlanShape)?;
    let x = chart.x.ok_or_else(|| PlanError::BadPlanShape("missing chart \"x\"".into()))?;
    let y = match chart.y.ok_or_else(|| PlanError::BadPlanShape("missing chart \"y\"".into()))? {
        OneOrMany::One(s) => vec![s],
        OneOrMany::Many(v) => v,
    };
    let sort = chart
        .sort
        .map(|s| {
            let dir = match s.dir.as_deref().map(str::to_ascii_lowercase).as_deref() {
                None | Some("asc") => SortDir::Asc,
                Some("desc") => SortDir::Desc,
                Some(other) => return Err(PlanError::BadPlanShape(format!("sort dir {other:?}"))),
            };
            Ok(SortSpec { by: s.by, dir })
        })
        .transpose()?;

    let tokens = sqlscan::tokenize(&sql).map_err(|e| PlanError::BadPlanShape(e.0))?;
    sqlscan::check_read_only(&tokens).map_err(PlanError::NonSelectSql)?;

    Ok(AnalysisPlan {
        sql,
        chart: ChartSpec {
            chart_type,
            x,
            y,
            series: chart.series,
            sort,
        },
    })
}

/// The model-facing v1 plan shape, fenced.
pub fn serialize_plan(plan: &AnalysisPlan) -> String {
    let json = serde_json::to_string_pretty(plan).expect("plan serializes");
    format!("```json\n{json}\n```\n")
}

/// First fenced block's contents, or the whole response when there is no fence.
pub fn parse_script(llm_text: &str) -> Result<GeneratedScript, PlanError> {
    if llm_text.trim().is_empty() {
        return Err(PlanError::EmptyResponse);
    }
    let (code, hint) = match fenced_blocks(llm_text).into_iter().next() {
        Some(f) => (f.body, f.info.to_string()),
        None => (llm_text.to_string(), String::new()),
    };
    if code.trim().is_empty() {
        return Err(PlanError::EmptyResponse);
    }
    let language_hint = if hint.is_empty() { "python".to_string() } else { hint.to_ascii_lowercase() };
    Ok(GeneratedScript { code, language_hint })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResolvedColumn {
    pub name: String,
    /// Declared type of the underlying column; `None` for computed values.
    pub decl_type: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidatedPlan {
    pub plan: AnalysisPlan,
    /// Output columns of the SQL, in SELECT order.
    pub columns: Vec<ResolvedColumn>,
}

/// Check a plan against the schema it will run on.
///
/// Identifier checks come from the scanner (structured errors); the SQL is
/// then prepared against an empty in-memory copy of the schema, which yields
/// the output column names the chart must refer to.
pub fn validate_plan(plan: &AnalysisPlan, schema: &DatabaseSchema) -> Result<ValidatedPlan, PlanError> {
    let tokens = sqlscan::tokenize(&plan.sql).map_err(|e| PlanError::SqlRejected(e.0))?;
    if sqlscan::statement_count(&tokens) > 1 {
        return Err(PlanError::MultipleStatements);
    }
    sqlscan::check_read_only(&tokens).map_err(PlanError::NonSelectSql)?;
    check_references(&tokens, schema)?;
    plan.chart.check_shape().map_err(PlanError::ChartShapeError)?;

    let columns = output_columns(&plan.sql, schema)?;
    for name in plan.chart.columns() {
        if !columns.iter().any(|c| c.name.eq_ignore_ascii_case(name)) {
            return Err(PlanError::UnknownColumn {
                table: RESULT_TABLE.into(),
                column: name.to_string(),
            });
        }
    }
    Ok(ValidatedPlan {
        plan: plan.clone(),
        columns,
    })
}

fn check_references(tokens: &[sqlscan::Token], schema: &DatabaseSchema) -> Result<(), PlanError> {
    let scan = sqlscan::scan(tokens);
    for src in &scan.sources {
        if let SourceKind::Table(name) = &src.kind {
            if schema.table(name).is_none() {
                return Err(PlanError::UnknownTable(name.clone()));
            }
        }
    }
    let base: Vec<_> = scan.base_tables().filter_map(|t| schema.table(t)).collect();
    for r in &scan.references {
        match r {
            Reference::Qualified { qualifier, column, .. } => {
                let Some(src) = scan.resolve_qualifier(qualifier) else {
                    if scan.cte_names.iter().any(|c| c.eq_ignore_ascii_case(qualifier)) {
                        continue;
                    }
                    return Err(PlanError::UnknownTable(qualifier.clone()));
                };
                let (SourceKind::Table(t), Some(col)) = (&src.kind, column) else { continue };
                let table = schema.table(t).expect("sources checked above");
                if table.column(col).is_none() && !col.eq_ignore_ascii_case("rowid") {
                    return Err(PlanError::UnknownColumn {
                        table: table.name.clone(),
                        column: col.clone(),
                    });
                }
            }
            Reference::Bare { name, double_quoted, .. } => {
                let known = base.iter().any(|t| t.column(name).is_some())
                    || scan.is_defined(name)
                    || scan.base_tables().any(|t| t.eq_ignore_ascii_case(name))
                    || name.eq_ignore_ascii_case("rowid");
                if known || *double_quoted || scan.has_derived_source() {
                    continue;
                }
                let table = base.first().map(|t| t.name.clone()).unwrap_or_default();
                return Err(PlanError::UnknownColumn {
                    table,
                    column: name.clone(),
                });
            }
        }
    }
    Ok(())
}

fn output_columns(sql: &str, schema: &DatabaseSchema) -> Result<Vec<ResolvedColumn>, PlanError> {
    let conn = Connection::open_in_memory().map_err(|e| PlanError::SqlRejected(e.to_string()))?;
    conn.execute_batch(&render_schema(schema))
        .map_err(|e| PlanError::SqlRejected(format!("schema does not load: {e}")))?;
    let stmt = conn.prepare(sql).map_err(|e| PlanError::SqlRejected(e.to_string()))?;
    if !stmt.readonly() {
        return Err(PlanError::NonSelectSql("statement writes".into()));
    }
    Ok(stmt
        .columns()
        .into_iter()
        .map(|c| ResolvedColumn {
            name: c.name().to_string(),
            decl_type: c.decl_type().map(str::to_string),
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::{ColumnDef, ForeignKey, TableDef};

    fn col(name: &str, ty: &str, pk: bool) -> ColumnDef {
        ColumnDef {
            name: name.into(),
            decl_type: ty.into(),
            primary_key: pk,
        }
    }

    fn aircraft_schema() -> DatabaseSchema {
        DatabaseSchema {
            db_file_name: "aircraft.sqlite".into(),
            tables: vec![
                TableDef {
                    name: "aircraft".into(),
                    columns: vec![col("Aircraft_ID", "INTEGER", true), col("Aircraft", "TEXT", false)],
                    foreign_keys: vec![],
                },
                TableDef {
                    name: "match".into(),
                    columns: vec![col("Round", "REAL", false), col("Winning_Aircraft", "INTEGER", false)],
                    foreign_keys: vec![ForeignKey {
                        column: "Winning_Aircraft".into(),
                        foreign_table: "aircraft".into(),
                        foreign_column: "Aircraft_ID".into(),
                    }],
                },
            ],
        }
    }

    const CASE_SQL: &str = "SELECT a.Aircraft, COUNT(m.Winning_Aircraft) as wins FROM aircraft a \
                            JOIN match m ON a.Aircraft_ID = m.Winning_Aircraft GROUP BY a.Aircraft ORDER BY wins DESC";

    fn case_plan(sql: &str) -> AnalysisPlan {
        AnalysisPlan {
            sql: sql.into(),
            chart: ChartSpec::new(ChartType::Pie, "Aircraft", &["wins"]),
        }
    }

    #[test]
    fn parses_fenced_plan_amid_prose() {
        let text = "Here is the plan:\n```json\n{\"sql\":\"SELECT a FROM t\",\"chart\":{\"type\":\"bar\",\"x\":\"a\",\"y\":[\"a\"]}}\n```\nDone.";
        let plan = parse_plan(text).unwrap();
        assert_eq!(plan.sql, "SELECT a FROM t");
        assert_eq!(plan.chart, ChartSpec::new(ChartType::Bar, "a", &["a"]));
    }

    #[test]
    fn prose_only_has_no_block() {
        assert_eq!(parse_plan("I would select a from t."), Err(PlanError::NoJsonBlock));
    }

    #[test]
    fn drop_table_is_rejected() {
        let text = "```json\n{\"sql\":\"DROP TABLE t\",\"chart\":{\"type\":\"bar\",\"x\":\"a\",\"y\":[\"a\"]}}\n```";
        assert!(matches!(parse_plan(text), Err(PlanError::NonSelectSql(k)) if k == "DROP"));
    }

    #[test]
    fn missing_fields_are_bad_shape() {
        for body in [
            r#"{"chart":{"type":"bar","x":"a","y":["a"]}}"#,
            r#"{"sql":"SELECT 1"}"#,
            r#"{"sql":"SELECT 1","chart":{"x":"a","y":["a"]}}"#,
            r#"{"sql":"SELECT 1","chart":{"type":"donut","x":"a","y":["a"]}}"#,
            r#"{"sql":"SELECT 1","chart":{"type":"bar","y":["a"]}}"#,
            r#"{"sql": 3}"#,
        ] {
            let text = format!("```json\n{body}\n```");
            assert!(matches!(parse_plan(&text), Err(PlanError::BadPlanShape(_))), "{body}");
        }
    }

    #[test]
    fn plan_tolerates_scalar_y_and_one_line_fence() {
        let text = r#"```{"sql":"SELECT a, b FROM t","chart":{"type":"Stacked Bar","x":"a","y":"b","series":"a","sort":{"by":"b","dir":"DESC"}}}```"#;
        let plan = parse_plan(text).unwrap();
        assert_eq!(plan.chart.chart_type, ChartType::StackedBar);
        assert_eq!(plan.chart.y, ["b"]);
        assert_eq!(plan.chart.sort, Some(SortSpec { by: "b".into(), dir: SortDir::Desc }));
    }

    #[test]
    fn serialize_round_trips() {
        let plan = AnalysisPlan {
            sql: CASE_SQL.into(),
            chart: ChartSpec::new(ChartType::GroupingLine, "x", &["y"])
                .with_series("s")
                .with_sort("x", SortDir::Desc),
        };
        assert_eq!(parse_plan(&serialize_plan(&plan)).unwrap(), plan);
    }

    #[test]
    fn script_extraction() {
        let code = "import sqlite3\nconn = sqlite3.connect('aircraft.sqlite')\n";
        let fenced = format!("Sure:\n```python\n{code}```\nThat joins and groups.");
        let s = parse_script(&fenced).unwrap();
        assert_eq!(s.code, code.trim_end());
        assert_eq!(s.language_hint, "python");
        assert_eq!(parse_script(code).unwrap().code, code);
        assert_eq!(parse_script(""), Err(PlanError::EmptyResponse));
        assert_eq!(parse_script("```\n```"), Err(PlanError::EmptyResponse));
    }

    #[test]
    fn case_study_sql_validates() {
        let v = validate_plan(&case_plan(CASE_SQL), &aircraft_schema()).unwrap();
        let names: Vec<_> = v.columns.iter().map(|c| c.name.as_str()).collect();
        assert_eq!(names, ["Aircraft", "wins"]);
        assert_eq!(v.columns[0].decl_type.as_deref(), Some("TEXT"));
        assert_eq!(v.columns[1].decl_type, None);
    }

    #[test]
    fn renamed_column_is_unknown() {
        let sql = CASE_SQL.replace("m.Winning_Aircraft", "m.Winning_Aircrafts");
        assert_eq!(
            validate_plan(&case_plan(&sql), &aircraft_schema()),
            Err(PlanError::UnknownColumn {
                table: "match".into(),
                column: "Winning_Aircrafts".into()
            })
        );
    }

    #[test]
    fn unknown_table_and_qualifier() {
        let sql = CASE_SQL.replace("JOIN match m", "JOIN matches m");
        assert_eq!(
            validate_plan(&case_plan(&sql), &aircraft_schema()),
            Err(PlanError::UnknownTable("matches".into()))
        );
        let sql = CASE_SQL.replace("a.Aircraft_ID", "b.Aircraft_ID");
        assert_eq!(
            validate_plan(&case_plan(&sql), &aircraft_schema()),
            Err(PlanError::UnknownTable("b".into()))
        );
    }

    #[test]
    fn chart_shape_rules() {
        let schema = aircraft_schema();
        let sql = "SELECT Aircraft, Aircraft_ID, Aircraft_ID AS n FROM aircraft";
        let bad = [
            ChartSpec::new(ChartType::Pie, "Aircraft", &["Aircraft_ID", "n"]),
            ChartSpec::new(ChartType::Pie, "Aircraft", &["n"]).with_series("Aircraft"),
            ChartSpec::new(ChartType::StackedBar, "Aircraft", &["n"]),
            ChartSpec::new(ChartType::GroupingLine, "Aircraft", &["n"]),
            ChartSpec::new(ChartType::GroupingScatter, "Aircraft", &["n"]),
            ChartSpec::new(ChartType::Bar, "Aircraft", &["n"]).with_series("Aircraft"),
            ChartSpec::new(ChartType::Scatter, "Aircraft", &[]),
        ];
        for chart in bad {
            let plan = AnalysisPlan { sql: sql.into(), chart: chart.clone() };
            assert!(
                matches!(validate_plan(&plan, &schema), Err(PlanError::ChartShapeError(_))),
                "{chart:?}"
            );
        }
        let ok = AnalysisPlan {
            sql: sql.into(),
            chart: ChartSpec::new(ChartType::StackedBar, "Aircraft", &["n"]).with_series("Aircraft_ID"),
        };
        validate_plan(&ok, &schema).unwrap();
    }

    #[test]
    fn chart_must_name_output_columns() {
        let plan = AnalysisPlan {
            sql: "SELECT Aircraft FROM aircraft".into(),
            chart: ChartSpec::new(ChartType::Bar, "Aircraft", &["Aircraft_ID"]),
        };
        assert_eq!(
            validate_plan(&plan, &aircraft_schema()),
            Err(PlanError::UnknownColumn {
                table: RESULT_TABLE.into(),
                column: "Aircraft_ID".into()
            })
        );
    }

    #[test]
    fn multiple_statements_and_writes() {
        let schema = aircraft_schema();
        let plan = case_plan("SELECT Aircraft FROM aircraft; SELECT 1");
        assert_eq!(validate_plan(&plan, &schema), Err(PlanError::MultipleStatements));
        let plan = case_plan("DELETE FROM aircraft");
        assert!(matches!(validate_plan(&plan, &schema), Err(PlanError::NonSelectSql(_))));
        let plan = AnalysisPlan {
            sql: "SELECT Aircraft, 1 AS wins FROM aircraft;".into(),
            chart: ChartSpec::new(ChartType::Pie, "Aircraft", &["wins"]),
        };
        validate_plan(&plan, &schema).unwrap();
    }

    #[test]
    fn unresolvable_references_are_skipped() {
        let schema = aircraft_schema();
        let plan = AnalysisPlan {
            sql: "SELECT s.k AS Aircraft, COUNT(*) AS wins FROM (SELECT Aircraft AS k FROM aircraft) s GROUP BY s.k".into(),
            chart: ChartSpec::new(ChartType::Pie, "Aircraft", &["wins"]),
        };
        validate_plan(&plan, &schema).unwrap();
    }
}

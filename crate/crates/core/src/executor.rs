//! Read-only plan execution and the `data.txt` codec.
//!
//! `data.txt` is UTF-8, LF line endings, one tab-joined header line of
//! column labels, then one tab-joined line per row, with a trailing newline.
//! Integers are written without a decimal point, reals in shortest
//! round-trip form with at least one fractional digit (`2.0`, `0.5`), and
//! null as an empty field. Tabs, CR and LF inside text are written as
//! spaces; text is otherwise verbatim.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;
use std::time::Duration;

use rusqlite::types::ValueRef;
use rusqlite::{Connection, OpenFlags};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::plan::ValidatedPlan;

pub const ROW_LIMIT: usize = 100_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Null,
    Integer(i64),
    Real(f64),
    Text(String),
}

impl Value {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Value::Integer(i) => Some(*i as f64),
            Value::Real(r) => Some(*r),
            Value::Text(t) => t.trim().parse::<f64>().ok().filter(|v| v.is_finite()),
            Value::Null => None,
        }
    }

    pub fn is_null(&self) -> bool {
        matches!(self, Value::Null)
    }

    /// Display form used for chart labels.
    pub fn label(&self) -> String {
        match self {
            Value::Null => String::new(),
            other => other.to_string(),
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Null => Ok(()),
            Value::Integer(i) => write!(f, "{i}"),
            // Debug gives shortest round-trip and keeps `.0` on integral values.
            Value::Real(r) => write!(f, "{r:?}"),
            Value::Text(t) => f.write_str(&sanitize(t)),
        }
    }
}

fn sanitize(s: &str) -> String {
    if s.contains(['\t', '\n', '\r']) {
        s.replace(['\t', '\n', '\r'], " ")
    } else {
        s.to_string()
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum DataError {
    #[error("column labels must be non-empty and unique, got {0:?}")]
    BadLabels(Vec<String>),
    #[error("row {row} has {got} values, expected {expected}")]
    Arity { row: usize, got: usize, expected: usize },
    #[error("line {line}: expected {expected} fields, got {got}")]
    RaggedRow { line: usize, expected: usize, got: usize },
    #[error("data file is empty")]
    EmptyFile,
    #[error("data file is not UTF-8")]
    NotUtf8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractedData {
    columns: Vec<String>,
    rows: Vec<Vec<Value>>,
}

impl ExtractedData {
    pub fn new(columns: Vec<String>, rows: Vec<Vec<Value>>) -> Result<Self, DataError> {
        let mut seen = std::collections::HashSet::new();
        if columns.is_empty() || columns.iter().any(|c| c.is_empty() || !seen.insert(c.as_str())) {
            return Err(DataError::BadLabels(columns));
        }
        if let Some((row, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != columns.len()) {
            return Err(DataError::Arity {
                row,
                got: r.len(),
                expected: columns.len(),
            });
        }
        Ok(Self { columns, rows })
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn rows(&self) -> &[Vec<Value>] {
        &self.rows
    }

    pub fn row_count(&self) -> usize {
        self.rows.len()
    }

    /// Case-sensitive first, then case-insensitive.
    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns
            .iter()
            .position(|c| c == name)
            .or_else(|| self.columns.iter().position(|c| c.eq_ignore_ascii_case(name)))
    }

    pub fn column_values(&self, idx: usize) -> impl Iterator<Item = &Value> {
        self.rows.iter().map(move |r| &r[idx])
    }
}

#[derive(Debug, Error)]
pub enum ExecError {
    #[error("cannot open database: {0}")]
    Open(String),
    #[error("database is locked: {0}")]
    DbLocked(String),
    #[error("query failed: {0}")]
    SqlRuntime(String),
    #[error("query returned more than {limit} rows")]
    RowLimitExceeded { limit: usize },
    #[error("query result has unusable column labels {0:?}")]
    BadLabels(Vec<String>),
}

fn map_exec_err(e: rusqlite::Error) -> ExecError {
    match e.sqlite_error_code() {
        Some(rusqlite::ErrorCode::DatabaseBusy | rusqlite::ErrorCode::DatabaseLocked) => ExecError::DbLocked(e.to_string()),
        _ => ExecError::SqlRuntime(e.to_string()),
    }
}

/// Run the plan's SQL on a read-only, query-only connection.
pub fn execute_plan(plan: &ValidatedPlan, db_file: &Path) -> Result<ExtractedData, ExecError> {
    execute_sql(&plan.plan.sql, db_file)
}

/// Same as [`execute_plan`] for raw SQL; used for gold queries.
pub fn execute_sql(sql: &str, db_file: &Path) -> Result<ExtractedData, ExecError> {
    execute_sql_capped(sql, db_file, ROW_LIMIT)
}

pub fn execute_sql_capped(sql: &str, db_file: &Path, limit: usize) -> Result<ExtractedData, ExecError> {
    if !db_file.is_file() {
        return Err(ExecError::Open(format!("{} is not a file", db_file.display())));
    }
    let conn = Connection::open_with_flags(db_file, OpenFlags::SQLITE_OPEN_READ_ONLY | OpenFlags::SQLITE_OPEN_NO_MUTEX)
        .map_err(|e| ExecError::Open(e.to_string()))?;
    conn.busy_timeout(Duration::from_secs(5)).map_err(map_exec_err)?;
    conn.pragma_update(None, "query_only", true).map_err(map_exec_err)?;

    let mut stmt = conn.prepare(sql).map_err(map_exec_err)?;
    if !stmt.readonly() {
        return Err(ExecError::SqlRuntime("statement is not read-only".into()));
    }
    let columns: Vec<String> = stmt.column_names().into_iter().map(str::to_string).collect();
    let width = columns.len();
    let mut rows = Vec::new();
    let mut cursor = stmt.query([]).map_err(map_exec_err)?;
    while let Some(row) = cursor.next().map_err(map_exec_err)? {
        if rows.len() == limit {
            return Err(ExecError::RowLimitExceeded { limit });
        }
        let mut values = Vec::with_capacity(width);
        for i in 0..width {
            let v = match row.get_ref(i).map_err(map_exec_err)? {
                ValueRef::Null => Value::Null,
                ValueRef::Integer(n) => Value::Integer(n),
                ValueRef::Real(r) => Value::Real(r),
                ValueRef::Text(t) => Value::Text(String::from_utf8_lossy(t).into_owned()),
                ValueRef::Blob(b) => Value::Text(hex::encode(b)),
            };
            values.push(v);
        }
        rows.push(values);
    }
    ExtractedData::new(columns, rows).map_err(|e| match e {
        DataError::BadLabels(l) => ExecError::BadLabels(l),
        other => ExecError::SqlRuntime(other.to_string()),
    })
}

pub fn serialize_data(data: &ExtractedData) -> Vec<u8> {
    let mut out = String::new();
    let header: Vec<String> = data.columns.iter().map(|c| sanitize(c)).collect();
    out.push_str(&header.join("\t"));
    out.push('\n');
    for row in &data.rows {
        let fields: Vec<String> = row.iter().map(Value::to_string).collect();
        out.push_str(&fields.join("\t"));
        out.push('\n');
    }
    out.into_bytes()
}

fn looks_numeric(s: &str) -> bool {
    matches!(s, "inf" | "-inf" | "NaN")
        || (s.bytes().any(|b| b.is_ascii_digit())
            && s.bytes().all(|b| b.is_ascii_digit() || matches!(b, b'+' | b'-' | b'.' | b'e' | b'E')))
}

fn parse_field(s: &str) -> Value {
    if s.is_empty() {
        return Value::Null;
    }
    if looks_numeric(s) {
        if let Ok(i) = s.parse::<i64>() {
            return Value::Integer(i);
        }
        if let Ok(r) = s.parse::<f64>() {
            return Value::Real(r);
        }
    }
    Value::Text(s.to_string())
}

/// Inverse of [`serialize_data`]. Fields are typed integer, else real, else
/// text; an empty field is null. CRLF input is tolerated.
pub fn parse_data(bytes: &[u8]) -> Result<ExtractedData, DataError> {
    let text = std::str::from_utf8(bytes).map_err(|_| DataError::NotUtf8)?;
    let body = text.strip_suffix('\n').unwrap_or(text);
    if body.is_empty() {
        return Err(DataError::EmptyFile);
    }
    let mut lines = body.split('\n').map(|l| l.strip_suffix('\r').unwrap_or(l));
    let header: Vec<String> = lines.next().unwrap_or_default().split('\t').map(str::to_string).collect();
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != header.len() {
            return Err(DataError::RaggedRow {
                line: i + 2,
                expected: header.len(),
                got: fields.len(),
            });
        }
        rows.push(fields.into_iter().map(parse_field).collect());
    }
    ExtractedData::new(header, rows)
}

// ---------------------------------------------------------------- gold comparison

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchClass {
    Exact,
    Minor,
    Wrong,
}

impl MatchClass {
    /// Figure-correctness points for this class.
    pub fn score(self) -> f64 {
        match self {
            MatchClass::Exact => 1.0,
            MatchClass::Minor => 0.5,
            MatchClass::Wrong => 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataMatchReport {
    pub class: MatchClass,
    pub score: f64,
    pub labels_match: bool,
    pub missing_rows: usize,
    pub extra_rows: usize,
    pub reason: String,
}

const REL_TOL: f64 = 1e-9;

fn values_equal(a: &Value, b: &Value) -> bool {
    match (a, b) {
        (Value::Null, Value::Null) => true,
        (Value::Text(x), Value::Text(y)) => x == y,
        (Value::Integer(x), Value::Integer(y)) => x == y,
        (Value::Integer(_) | Value::Real(_), Value::Integer(_) | Value::Real(_)) => {
            let (x, y) = (a.as_f64().unwrap_or(f64::NAN), b.as_f64().unwrap_or(f64::NAN));
            x == y || (x - y).abs() <= REL_TOL * x.abs().max(y.abs())
        }
        _ => false,
    }
}

fn rows_equal(a: &[Value], b: &[Value]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| values_equal(x, y))
}

/// Bucket key that tolerant-equal rows almost always share.
fn row_key(row: &[Value]) -> String {
    let mut k = String::new();
    for v in row {
        match v {
            Value::Null => k.push_str("N|"),
            Value::Text(t) => {
                k.push('T');
                k.push_str(t);
                k.push('|');
            }
            Value::Integer(_) | Value::Real(_) => {
                let f = v.as_f64().unwrap_or(0.0);
                k.push_str(&format!("F{f:.6e}|"));
            }
        }
    }
    k
}

/// Match `data` rows into `gold` rows as a multiset. Returns, for each data
/// row, whether it found a gold partner, plus how many gold rows were unused.
fn multiset_match(data: &[Vec<Value>], gold: &[Vec<Value>]) -> (usize, usize) {
    let mut buckets: HashMap<String, Vec<usize>> = HashMap::new();
    for (i, g) in gold.iter().enumerate() {
        buckets.entry(row_key(g)).or_default().push(i);
    }
    let mut used = vec![false; gold.len()];
    let mut unmatched_data = Vec::new();
    for (di, d) in data.iter().enumerate() {
        let hit = buckets
            .get_mut(&row_key(d))
            .and_then(|b| b.iter().position(|&gi| rows_equal(d, &gold[gi])).map(|p| b.remove(p)));
        match hit {
            Some(gi) => used[gi] = true,
            None => unmatched_data.push(di),
        }
    }
    // Fall back to a linear scan for rows whose numeric key straddled a rounding boundary.
    let mut extra = 0;
    for di in unmatched_data {
        match (0..gold.len()).find(|&gi| !used[gi] && rows_equal(&data[di], &gold[gi])) {
            Some(gi) => used[gi] = true,
            None => extra += 1,
        }
    }
    (extra, used.iter().filter(|u| !**u).count())
}

/// Is `data` an in-order subsequence of `gold`?
fn ordered_subsequence(data: &[Vec<Value>], gold: &[Vec<Value>]) -> bool {
    let mut g = gold.iter();
    data.iter().all(|d| g.any(|row| rows_equal(d, row)))
}

/// Automatic approximation of figure-correctness grading.
///
/// * exact (1.0): same labels; same rows as a multiset, or as a sequence when `ordered`.
/// * minor (0.5): rows exact but labels degraded (e.g. indexes instead of names),
///   or one or two gold rows missing with every present row correct.
/// * wrong (0.0): anything else, including extra rows and altered values.
pub fn compare_to_gold(data: &ExtractedData, gold: &ExtractedData, ordered: bool) -> DataMatchReport {
    let labels_match = data.columns == gold.columns;
    let report = |class: MatchClass, missing: usize, extra: usize, reason: String| DataMatchReport {
        class,
        score: class.score(),
        labels_match,
        missing_rows: missing,
        extra_rows: extra,
        reason,
    };
    if data.columns.len() != gold.columns.len() {
        return report(
            MatchClass::Wrong,
            0,
            0,
            format!("{} columns, gold has {}", data.columns.len(), gold.columns.len()),
        );
    }
    let (extra, missing) = multiset_match(&data.rows, &gold.rows);
    let order_ok = !ordered || ordered_subsequence(&data.rows, &gold.rows);
    if extra > 0 {
        return report(MatchClass::Wrong, missing, extra, format!("{extra} rows not in gold"));
    }
    if !order_ok {
        return report(MatchClass::Wrong, missing, 0, "row order differs from gold".into());
    }
    match (missing, labels_match) {
        (0, true) => report(MatchClass::Exact, 0, 0, "identical".into()),
        (0, false) => report(MatchClass::Minor, 0, 0, "values match, labels differ".into()),
        (1..=2, _) if !data.rows.is_empty() => report(MatchClass::Minor, missing, 0, format!("{missing} rows missing")),
        _ => report(MatchClass::Wrong, missing, 0, format!("{missing} rows missing")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(s: &str) -> Value {
        Value::Text(s.into())
    }

    fn data(cols: &[&str], rows: Vec<Vec<Value>>) -> ExtractedData {
        ExtractedData::new(cols.iter().map(|s| s.to_string()).collect(), rows).unwrap()
    }

    fn wins_fixture() -> ExtractedData {
        data(
            &["aircraft", "wins"],
            vec![
                vec![t("R22"), Value::Integer(2)],
                vec![t("Mi26"), Value::Integer(2)],
                vec![t("CH53"), Value::Integer(1)],
            ],
        )
    }

    fn wins_db() -> (tempfile::TempDir, std::path::PathBuf) {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("wins.sqlite");
        let c = Connection::open(&p).unwrap();
        c.execute_batch(
            "CREATE TABLE wins (aircraft TEXT);
             INSERT INTO wins VALUES ('R22'), ('R22'), ('Mi26'), ('Mi26'), ('CH53');",
        )
        .unwrap();
        (dir, p)
    }

    #[test]
    fn executes_group_by_on_fixture() {
        let (_d, p) = wins_db();
        let out = execute_sql(
            "SELECT aircraft, COUNT(*) AS wins FROM wins GROUP BY aircraft ORDER BY wins DESC",
            &p,
        )
        .unwrap();
        assert_eq!(out.columns(), ["aircraft", "wins"]);
        assert_eq!(out.row_count(), 3);
        assert_eq!(out.rows()[2], vec![t("CH53"), Value::Integer(1)]);
        let top: std::collections::HashSet<String> = out.rows()[..2].iter().map(|r| r[0].label()).collect();
        assert_eq!(top, ["R22".to_string(), "Mi26".to_string()].into_iter().collect());
        assert!(out.rows()[..2].iter().all(|r| r[1] == Value::Integer(2)));
    }

    #[test]
    fn select_constant() {
        let (_d, p) = wins_db();
        let out = execute_sql("SELECT 1 AS one", &p).unwrap();
        assert_eq!(out.rows(), [vec![Value::Integer(1)]]);
    }

    #[test]
    fn dropped_table_is_runtime_error() {
        let (_d, p) = wins_db();
        Connection::open(&p).unwrap().execute_batch("DROP TABLE wins").unwrap();
        assert!(matches!(execute_sql("SELECT aircraft FROM wins", &p), Err(ExecError::SqlRuntime(_))));
    }

    #[test]
    fn row_cap_is_an_error_not_truncation() {
        let (_d, p) = wins_db();
        assert!(matches!(
            execute_sql_capped("SELECT * FROM wins", &p, 4),
            Err(ExecError::RowLimitExceeded { limit: 4 })
        ));
        assert_eq!(execute_sql_capped("SELECT * FROM wins", &p, 5).unwrap().row_count(), 5);
    }

    #[test]
    fn execution_is_read_only() {
        let (_d, p) = wins_db();
        let before = std::fs::read(&p).unwrap();
        assert!(execute_sql("DELETE FROM wins", &p).is_err());
        assert!(execute_sql("CREATE TABLE x(a)", &p).is_err());
        execute_sql("SELECT * FROM wins", &p).unwrap();
        assert_eq!(std::fs::read(&p).unwrap(), before);
    }

    #[test]
    fn duplicate_output_labels_rejected() {
        let (_d, p) = wins_db();
        assert!(matches!(
            execute_sql("SELECT aircraft, aircraft FROM wins", &p),
            Err(ExecError::BadLabels(_))
        ));
    }

    #[test]
    fn serialize_formats() {
        assert_eq!(serialize_data(&data(&["a", "b"], vec![])), b"a\tb\n");
        assert_eq!(
            String::from_utf8(serialize_data(&wins_fixture())).unwrap(),
            "aircraft\twins\nR22\t2\nMi26\t2\nCH53\t1\n"
        );
        let reals = data(
            &["r"],
            vec![vec![Value::Real(0.5)], vec![Value::Real(2.0)], vec![Value::Null], vec![t("a\tb")]],
        );
        assert_eq!(String::from_utf8(serialize_data(&reals)).unwrap(), "r\n0.5\n2.0\n\na b\n");
    }

    #[test]
    fn parse_rules() {
        assert_eq!(parse_data(&serialize_data(&wins_fixture())).unwrap(), wins_fixture());
        assert_eq!(
            parse_data(b"a\tb\n1\n"),
            Err(DataError::RaggedRow {
                line: 2,
                expected: 2,
                got: 1
            })
        );
        let d = parse_data(b"a\n1.25\n").unwrap();
        assert_eq!(d.rows(), [vec![Value::Real(1.25)]]);
        assert_eq!(parse_data(b""), Err(DataError::EmptyFile));
        assert_eq!(parse_data(b"\n"), Err(DataError::EmptyFile));
        let d = parse_data(b"a\tb\r\nx\t\r\n").unwrap();
        assert_eq!(d.rows(), [vec![t("x"), Value::Null]]);
        let d = parse_data(b"a\n-3\n1e3\nnan\n12-3\n").unwrap();
        assert_eq!(
            d.rows(),
            [vec![Value::Integer(-3)], vec![Value::Real(1000.0)], vec![t("nan")], vec![t("12-3")]]
        );
    }

    #[test]
    fn gold_comparison_classes() {
        let gold = wins_fixture();
        assert_eq!(compare_to_gold(&gold, &gold, true).score, 1.0);

        let mut rows = gold.rows().to_vec();
        rows.remove(1);
        let minus_one = data(&["aircraft", "wins"], rows);
        assert_eq!(compare_to_gold(&minus_one, &gold, false).class, MatchClass::Minor);
        assert_eq!(compare_to_gold(&minus_one, &gold, true).class, MatchClass::Minor);

        let mut rows = gold.rows().to_vec();
        rows[2][1] = Value::Integer(3);
        let altered = data(&["aircraft", "wins"], rows);
        assert_eq!(compare_to_gold(&altered, &gold, false).score, 0.0);

        let indexed = data(&["0", "1"], gold.rows().to_vec());
        assert_eq!(compare_to_gold(&indexed, &gold, false).class, MatchClass::Minor);

        let mut rows = gold.rows().to_vec();
        rows.reverse();
        let reordered = data(&["aircraft", "wins"], rows);
        assert_eq!(compare_to_gold(&reordered, &gold, false).class, MatchClass::Exact);
        assert_eq!(compare_to_gold(&reordered, &gold, true).class, MatchClass::Wrong);

        let mut rows = gold.rows().to_vec();
        rows.push(vec![t("Bell"), Value::Integer(1)]);
        let extra = data(&["aircraft", "wins"], rows);
        assert_eq!(compare_to_gold(&extra, &gold, false).class, MatchClass::Wrong);

        let empty = data(&["aircraft", "wins"], vec![]);
        assert_eq!(compare_to_gold(&empty, &gold, false).class, MatchClass::Wrong);
    }

    #[test]
    fn reals_within_relative_tolerance() {
        let a = data(&["v"], vec![vec![Value::Real(0.1 + 0.2)]]);
        let b = data(&["v"], vec![vec![Value::Real(0.3)]]);
        assert_eq!(compare_to_gold(&a, &b, true).class, MatchClass::Exact);
        let c = data(&["v"], vec![vec![Value::Integer(3)]]);
        let d = data(&["v"], vec![vec![Value::Real(3.0)]]);
        assert_eq!(compare_to_gold(&c, &d, true).class, MatchClass::Exact);
        let e = data(&["v"], vec![vec![Value::Real(0.3000001)]]);
        assert_eq!(compare_to_gold(&e, &b, true).class, MatchClass::Wrong);
    }

    #[test]
    fn labels_must_be_unique_and_non_empty() {
        assert!(ExtractedData::new(vec!["a".into(), "a".into()], vec![]).is_err());
        assert!(ExtractedData::new(vec!["".into()], vec![]).is_err());
        assert!(ExtractedData::new(vec![], vec![]).is_err());
        assert!(matches!(
            ExtractedData::new(vec!["a".into()], vec![vec![]]),
            Err(DataError::Arity { row: 0, .. })
        ));
    }
}

//! A conservative SQL scanner: tokenization, statement counting, read-only
//! checks, and table/column reference extraction with alias resolution.
//!
//! This is not a parser. It recognizes enough structure (FROM/JOIN sources,
//! aliases, CTEs, subqueries, qualified names) to flag identifiers that
//! certainly do not exist, and it skips anything it cannot resolve.

use std::collections::HashSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TokKind {
    /// Bare or quoted identifier that is not a keyword.
    Ident,
    Keyword,
    Str,
    Num,
    Punct,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub kind: TokKind,
    /// Identifier text with quotes removed; keywords upper-cased.
    pub text: String,
    /// Identifier was written as `"x"`, `[x]` or `` `x` ``.
    pub quoted: bool,
    /// Only `"x"` identifiers can fall back to string literals in SQLite.
    pub double_quoted: bool,
    /// Byte range in the source.
    pub start: usize,
    pub end: usize,
}

const KEYWORDS: &[&str] = &[
    "ABORT", "ALL", "ALTER", "ANALYZE", "AND", "AS", "ASC", "ATTACH", "BETWEEN", "BY", "CASE", "CAST", "COLLATE",
    "CREATE", "CROSS", "CURRENT", "CURRENT_DATE", "CURRENT_TIME", "CURRENT_TIMESTAMP", "DELETE", "DESC", "DETACH",
    "DISTINCT", "DROP", "ELSE", "END", "ESCAPE", "EXCEPT", "EXCLUDE", "EXISTS", "EXPLAIN", "FALSE", "FILTER",
    "FIRST", "FOLLOWING", "FROM", "FULL", "GLOB", "GROUP", "GROUPS", "HAVING", "IN", "INDEXED", "INNER", "INSERT",
    "INTERSECT", "INTO", "IS", "ISNULL", "JOIN", "LAST", "LEFT", "LIKE", "LIMIT", "MATCH", "NATURAL", "NOT",
    "NOTNULL", "NULL", "NULLS", "OFFSET", "ON", "OR", "ORDER", "OTHERS", "OUTER", "OVER", "PARTITION", "PRAGMA",
    "PRECEDING", "RANGE", "RECURSIVE", "REGEXP", "REINDEX", "REPLACE", "RIGHT", "ROW", "ROWS", "SELECT", "SET",
    "THEN", "TIES", "TRUE", "UNBOUNDED", "UNION", "UPDATE", "USING", "VACUUM", "VALUES", "WHEN", "WHERE", "WINDOW",
    "WITH",
];

/// Statements that write or change connection state.
const WRITE_KEYWORDS: &[&str] = &[
    "ALTER", "ATTACH", "CREATE", "DELETE", "DETACH", "DROP", "INSERT", "PRAGMA", "REINDEX", "REPLACE", "UPDATE",
    "VACUUM",
];

/// Keywords that end a FROM source list.
const CLAUSE_END: &[&str] = &[
    "WHERE", "GROUP", "HAVING", "ORDER", "LIMIT", "UNION", "EXCEPT", "INTERSECT", "WINDOW", "ON", "USING", "JOIN",
    "INNER", "LEFT", "RIGHT", "FULL", "CROSS", "NATURAL", "OUTER",
];

/// Keywords SQLite also accepts as plain identifiers (table `match`, column `first`).
const FALLBACK: &[&str] = &[
    "ABORT", "ANALYZE", "CURRENT", "EXCLUDE", "EXPLAIN", "FILTER", "FIRST", "FOLLOWING", "GROUPS", "LAST", "MATCH",
    "NULLS", "OTHERS", "OVER", "PARTITION", "PRECEDING", "RANGE", "RECURSIVE", "REINDEX", "ROW", "ROWS", "TIES",
    "UNBOUNDED",
];

fn is_keyword(upper: &str) -> bool {
    KEYWORDS.binary_search(&upper).is_ok()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScanError(pub String);

pub fn tokenize(sql: &str) -> Result<Vec<Token>, ScanError> {
    let b = sql.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < b.len() {
        let c = b[i];
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        if c == b'-' && b.get(i + 1) == Some(&b'-') {
            while i < b.len() && b[i] != b'\n' {
                i += 1;
            }
            continue;
        }
        if c == b'/' && b.get(i + 1) == Some(&b'*') {
            let end = sql[i + 2..].find("*/").ok_or_else(|| ScanError("unterminated comment".into()))?;
            i += 2 + end + 2;
            continue;
        }
        let start = i;
        match c {
            b'\'' => {
                let (text, next) = read_quoted(sql, i, b'\'', b'\'')?;
                out.push(Token {
                    kind: TokKind::Str,
                    text,
                    quoted: false,
                    double_quoted: false,
                    start,
                    end: next,
                });
                i = next;
            }
            b'"' | b'`' | b'[' => {
                let close = match c {
                    b'[' => b']',
                    other => other,
                };
                let (text, next) = read_quoted(sql, i, c, close)?;
                out.push(Token {
                    kind: TokKind::Ident,
                    text,
                    quoted: true,
                    double_quoted: c == b'"',
                    start,
                    end: next,
                });
                i = next;
            }
            b'0'..=b'9' => {
                i = scan_number(b, i);
                out.push(tok(TokKind::Num, &sql[start..i], start, i));
            }
            b'.' if b.get(i + 1).is_some_and(u8::is_ascii_digit) => {
                i = scan_number(b, i);
                out.push(tok(TokKind::Num, &sql[start..i], start, i));
            }
            _ if c.is_ascii_alphabetic() || c == b'_' || c >= 0x80 => {
                while i < b.len() && (b[i].is_ascii_alphanumeric() || b[i] == b'_' || b[i] == b'$' || b[i] >= 0x80) {
                    i += 1;
                }
                let word = &sql[start..i];
                let upper = word.to_ascii_uppercase();
                if is_keyword(&upper) {
                    out.push(tok(TokKind::Keyword, &upper, start, i));
                } else {
                    out.push(tok(TokKind::Ident, word, start, i));
                }
            }
            b'?' | b':' | b'@' | b'$' => {
                // bound parameters; never valid in a generated plan but harmless to scan
                i += 1;
                while i < b.len() && (b[i].is_ascii_alphanumeric() || b[i] == b'_') {
                    i += 1;
                }
                out.push(tok(TokKind::Punct, &sql[start..i], start, i));
            }
            _ => {
                let two = sql.get(i..i + 2).unwrap_or("");
                let len = if ["<=", ">=", "<>", "!=", "==", "||", "<<", ">>", "->"].contains(&two) {
                    if two == "->" && sql.get(i..i + 3) == Some("->>") {
                        3
                    } else {
                        2
                    }
                } else {
                    sql[i..].chars().next().map_or(1, char::len_utf8)
                };
                i += len;
                out.push(tok(TokKind::Punct, &sql[start..i], start, i));
            }
        }
    }
    Ok(out)
}

fn tok(kind: TokKind, text: &str, start: usize, end: usize) -> Token {
    Token {
        kind,
        text: text.to_string(),
        quoted: false,
        double_quoted: false,
        start,
        end,
    }
}

fn scan_number(b: &[u8], mut i: usize) -> usize {
    if b[i] == b'0' && matches!(b.get(i + 1), Some(b'x' | b'X')) {
        i += 2;
        while i < b.len() && b[i].is_ascii_hexdigit() {
            i += 1;
        }
        return i;
    }
    while i < b.len() && (b[i].is_ascii_digit() || b[i] == b'.') {
        i += 1;
    }
    if i < b.len() && (b[i] == b'e' || b[i] == b'E') {
        let mut j = i + 1;
        if j < b.len() && (b[j] == b'+' || b[j] == b'-') {
            j += 1;
        }
        if j < b.len() && b[j].is_ascii_digit() {
            i = j;
            while i < b.len() && b[i].is_ascii_digit() {
                i += 1;
            }
        }
    }
    i
}

/// Read a quoted run starting at `open_at`; a doubled closing quote escapes itself.
fn read_quoted(sql: &str, open_at: usize, _open: u8, close: u8) -> Result<(String, usize), ScanError> {
    let b = sql.as_bytes();
    let mut i = open_at + 1;
    let mut text = String::new();
    let mut run_start = i;
    while i < b.len() {
        if b[i] == close {
            if close != b']' && b.get(i + 1) == Some(&close) {
                text.push_str(&sql[run_start..=i]);
                i += 2;
                run_start = i;
                continue;
            }
            text.push_str(&sql[run_start..i]);
            return Ok((text, i + 1));
        }
        i += 1;
    }
    Err(ScanError(format!("unterminated quote starting at byte {open_at}")))
}

/// Number of non-empty statements (trailing semicolons do not count).
pub fn statement_count(tokens: &[Token]) -> usize {
    let mut count = 0;
    let mut in_stmt = false;
    for t in tokens {
        if t.kind == TokKind::Punct && t.text == ";" {
            if in_stmt {
                count += 1;
            }
            in_stmt = false;
        } else {
            in_stmt = true;
        }
    }
    count + usize::from(in_stmt)
}

/// `Err(keyword)` when the statement is anything other than a pure query.
pub fn check_read_only(tokens: &[Token]) -> Result<(), String> {
    let first = tokens.iter().find(|t| !(t.kind == TokKind::Punct && t.text == "("));
    match first {
        Some(t) if t.kind == TokKind::Keyword && (t.text == "SELECT" || t.text == "WITH" || t.text == "VALUES") => {}
        Some(t) => return Err(t.text.clone()),
        None => return Err("empty statement".into()),
    }
    for (i, t) in tokens.iter().enumerate() {
        if t.kind != TokKind::Keyword || !WRITE_KEYWORDS.contains(&t.text.as_str()) {
            continue;
        }
        let next_is_paren = tokens.get(i + 1).is_some_and(|n| n.text == "(");
        let prev_is_dot = i > 0 && tokens[i - 1].text == ".";
        if !next_is_paren && !prev_is_dot {
            return Err(t.text.clone());
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SourceKind {
    Table(String),
    /// CTE, subquery or table-valued function: columns unknown.
    Derived,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Source {
    pub kind: SourceKind,
    pub alias: Option<String>,
    /// Token index of the table name, for `Table` sources.
    pub name_token: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Reference {
    /// `qualifier.column`; `column` is `None` for `qualifier.*`.
    Qualified {
        qualifier: String,
        column: Option<String>,
        token: usize,
    },
    Bare { name: String, double_quoted: bool, token: usize },
}

#[derive(Debug, Default, Clone)]
pub struct Scan {
    pub sources: Vec<Source>,
    pub cte_names: Vec<String>,
    /// Output aliases, CTE column lists, and other names introduced by the query.
    pub defined_names: Vec<String>,
    pub references: Vec<Reference>,
}

impl Scan {
    pub fn has_derived_source(&self) -> bool {
        self.sources.iter().any(|s| s.kind == SourceKind::Derived)
    }

    pub fn base_tables(&self) -> impl Iterator<Item = &str> {
        self.sources.iter().filter_map(|s| match &s.kind {
            SourceKind::Table(t) => Some(t.as_str()),
            SourceKind::Derived => None,
        })
    }

    /// Resolve a qualifier to its source: by alias first, then by bare table name.
    pub fn resolve_qualifier(&self, q: &str) -> Option<&Source> {
        self.sources
            .iter()
            .find(|s| s.alias.as_deref().is_some_and(|a| a.eq_ignore_ascii_case(q)))
            .or_else(|| {
                self.sources.iter().find(|s| {
                    s.alias.is_none() && matches!(&s.kind, SourceKind::Table(t) if t.eq_ignore_ascii_case(q))
                })
            })
            .or_else(|| {
                self.sources
                    .iter()
                    .find(|s| matches!(&s.kind, SourceKind::Table(t) if t.eq_ignore_ascii_case(q)))
            })
    }

    pub fn is_defined(&self, name: &str) -> bool {
        self.defined_names.iter().any(|d| d.eq_ignore_ascii_case(name))
            || self.cte_names.iter().any(|d| d.eq_ignore_ascii_case(name))
            || self
                .sources
                .iter()
                .any(|s| s.alias.as_deref().is_some_and(|a| a.eq_ignore_ascii_case(name)))
    }
}

fn is_ident(t: Option<&Token>) -> bool {
    t.is_some_and(|t| t.kind == TokKind::Ident)
}

/// An identifier, or a fallback keyword standing where a name must be.
fn is_name(t: Option<&Token>) -> bool {
    t.is_some_and(|t| t.kind == TokKind::Ident || (t.kind == TokKind::Keyword && FALLBACK.contains(&t.text.as_str())))
}

fn is_kw(t: Option<&Token>, kw: &str) -> bool {
    t.is_some_and(|t| t.kind == TokKind::Keyword && t.text == kw)
}

fn is_punct(t: Option<&Token>, p: &str) -> bool {
    t.is_some_and(|t| t.kind == TokKind::Punct && t.text == p)
}

/// Index just past the parenthesis group opening at `open`.
fn skip_group(tokens: &[Token], open: usize) -> usize {
    let mut depth = 0usize;
    let mut i = open;
    while i < tokens.len() {
        if is_punct(tokens.get(i), "(") {
            depth += 1;
        } else if is_punct(tokens.get(i), ")") {
            depth = depth.saturating_sub(1);
            if depth == 0 {
                return i + 1;
            }
        }
        i += 1;
    }
    tokens.len()
}

/// Extract sources, definitions and references from a tokenized query.
pub fn scan(tokens: &[Token]) -> Scan {
    let mut s = Scan::default();
    // Token indices that define a name and are not references themselves.
    let mut definition: HashSet<usize> = HashSet::new();
    // Subquery groups whose trailing alias is a derived source.
    let n = tokens.len();

    // CTEs: WITH [RECURSIVE] name [(cols)] AS ( ... ) [, ...]
    let mut i = 0;
    while i < n {
        if is_kw(tokens.get(i), "WITH") {
            let mut j = i + 1;
            if is_kw(tokens.get(j), "RECURSIVE") {
                j += 1;
            }
            loop {
                if !is_ident(tokens.get(j)) {
                    break;
                }
                s.cte_names.push(tokens[j].text.clone());
                definition.insert(j);
                j += 1;
                if is_punct(tokens.get(j), "(") {
                    let end = skip_group(tokens, j);
                    for (k, tok) in tokens.iter().enumerate().take(end.saturating_sub(1)).skip(j + 1) {
                        if tok.kind == TokKind::Ident {
                            s.defined_names.push(tok.text.clone());
                            definition.insert(k);
                        }
                    }
                    j = end;
                }
                if !is_kw(tokens.get(j), "AS") {
                    break;
                }
                j += 1;
                if is_kw(tokens.get(j), "NOT") {
                    j += 1;
                }
                if tokens.get(j).is_some_and(|t| t.text.eq_ignore_ascii_case("MATERIALIZED")) {
                    j += 1;
                }
                if !is_punct(tokens.get(j), "(") {
                    break;
                }
                j = skip_group(tokens, j);
                if is_punct(tokens.get(j), ",") {
                    j += 1;
                    continue;
                }
                break;
            }
        }
        i += 1;
    }

    // FROM / JOIN sources.
    let mut i = 0;
    while i < n {
        let starts_list = is_kw(tokens.get(i), "FROM") || is_kw(tokens.get(i), "JOIN");
        if !starts_list {
            i += 1;
            continue;
        }
        let in_from = is_kw(tokens.get(i), "FROM");
        let mut j = i + 1;
        loop {
            if is_punct(tokens.get(j), "(") {
                let end = skip_group(tokens, j);
                j = end;
                let (alias, next) = read_alias(tokens, j, &mut definition);
                s.sources.push(Source {
                    kind: SourceKind::Derived,
                    alias,
                    name_token: None,
                });
                j = next;
            } else if is_name(tokens.get(j)) {
                let mut name_at = j;
                // schema-qualified: main.t
                if is_punct(tokens.get(j + 1), ".") && is_name(tokens.get(j + 2)) {
                    definition.insert(j);
                    name_at = j + 2;
                }
                let name = if tokens[name_at].kind == TokKind::Keyword {
                    tokens[name_at].text.to_ascii_lowercase()
                } else {
                    tokens[name_at].text.clone()
                };
                definition.insert(name_at);
                let mut next = name_at + 1;
                let kind = if is_punct(tokens.get(next), "(") {
                    next = skip_group(tokens, next);
                    SourceKind::Derived
                } else if s.cte_names.iter().any(|c| c.eq_ignore_ascii_case(&name)) {
                    SourceKind::Derived
                } else {
                    SourceKind::Table(name)
                };
                let name_token = matches!(kind, SourceKind::Table(_)).then_some(name_at);
                let (alias, after) = read_alias(tokens, next, &mut definition);
                s.sources.push(Source {
                    kind,
                    alias,
                    name_token,
                });
                j = after;
                // INDEXED BY idx / NOT INDEXED
                if is_kw(tokens.get(j), "INDEXED") && is_kw(tokens.get(j + 1), "BY") {
                    definition.insert(j + 2);
                    j += 3;
                }
            } else {
                break;
            }
            if in_from && is_punct(tokens.get(j), ",") {
                j += 1;
                continue;
            }
            break;
        }
        i += 1;
    }

    // Output aliases: `AS name` not already consumed, plus implicit `expr name` before `,`/FROM.
    for i in 0..n {
        if is_kw(tokens.get(i), "AS") && is_ident(tokens.get(i + 1)) && !definition.contains(&(i + 1)) {
            s.defined_names.push(tokens[i + 1].text.clone());
            definition.insert(i + 1);
        }
    }
    for i in 1..n {
        if !is_ident(tokens.get(i)) || definition.contains(&i) {
            continue;
        }
        let prev = &tokens[i - 1];
        let prev_ends_expr = (prev.kind == TokKind::Punct && prev.text == ")")
            || prev.kind == TokKind::Ident
            || prev.kind == TokKind::Num
            || prev.kind == TokKind::Str;
        let next_ends_item = is_punct(tokens.get(i + 1), ",") || is_kw(tokens.get(i + 1), "FROM");
        let prev_ends_expr = prev_ends_expr || (prev.kind == TokKind::Keyword && prev.text == "END");
        if prev_ends_expr && next_ends_item {
            // `a.b c,` : c is an alias of a.b; `f(x) c,` likewise
            s.defined_names.push(tokens[i].text.clone());
            definition.insert(i);
        }
    }
    // COLLATE name and window names are not column references.
    for i in 0..n {
        if (is_kw(tokens.get(i), "COLLATE") || is_kw(tokens.get(i), "WINDOW") || is_kw(tokens.get(i), "OVER"))
            && is_ident(tokens.get(i + 1))
        {
            definition.insert(i + 1);
        }
    }

    // References.
    let mut i = 0;
    while i < n {
        let t = &tokens[i];
        let fallback_qualifier = t.kind == TokKind::Keyword
            && FALLBACK.contains(&t.text.as_str())
            && is_punct(tokens.get(i + 1), ".");
        if (t.kind != TokKind::Ident && !fallback_qualifier) || definition.contains(&i) {
            i += 1;
            continue;
        }
        if is_punct(tokens.get(i + 1), "(") {
            // function call
            i += 1;
            continue;
        }
        if is_punct(tokens.get(i + 1), ".") {
            let col = tokens.get(i + 2);
            let column = match col {
                Some(c) if c.kind == TokKind::Ident || c.kind == TokKind::Keyword => Some(c.text.clone()),
                _ => None,
            };
            s.references.push(Reference::Qualified {
                qualifier: t.text.clone(),
                column,
                token: i,
            });
            i += 3;
            continue;
        }
        if i > 0 && is_punct(tokens.get(i - 1), ".") {
            i += 1;
            continue;
        }
        s.references.push(Reference::Bare {
            name: t.text.clone(),
            double_quoted: t.double_quoted,
            token: i,
        });
        i += 1;
    }
    s
}

fn read_alias(tokens: &[Token], at: usize, definition: &mut HashSet<usize>) -> (Option<String>, usize) {
    if is_kw(tokens.get(at), "AS") && is_ident(tokens.get(at + 1)) {
        definition.insert(at + 1);
        return (Some(tokens[at + 1].text.clone()), at + 2);
    }
    if is_ident(tokens.get(at)) && !is_punct(tokens.get(at + 1), ".") && !is_punct(tokens.get(at + 1), "(") {
        let upper = tokens[at].text.to_ascii_uppercase();
        if !CLAUSE_END.contains(&upper.as_str()) {
            definition.insert(at);
            return (Some(tokens[at].text.clone()), at + 1);
        }
    }
    (None, at)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scan_sql(sql: &str) -> Scan {
        scan(&tokenize(sql).unwrap())
    }

    #[test]
    fn keywords_sorted_for_binary_search() {
        let mut sorted = KEYWORDS.to_vec();
        sorted.sort_unstable();
        assert_eq!(sorted, KEYWORDS);
    }

    #[test]
    fn tokenizes_quotes_comments_numbers() {
        let toks = tokenize("SELECT \"a b\", [c], `d`, 'it''s', 1.5e3, .5 -- tail\n/* c */ FROM t").unwrap();
        let texts: Vec<_> = toks.iter().map(|t| t.text.as_str()).collect();
        assert_eq!(
            texts,
            ["SELECT", "a b", ",", "c", ",", "d", ",", "it's", ",", "1.5e3", ",", ".5", "FROM", "t"]
        );
        assert!(toks[1].double_quoted && toks[3].quoted && !toks[3].double_quoted);
        assert!(tokenize("SELECT 'open").is_err());
    }

    #[test]
    fn statement_counting() {
        let c = |s| statement_count(&tokenize(s).unwrap());
        assert_eq!(c("SELECT 1"), 1);
        assert_eq!(c("SELECT 1;"), 1);
        assert_eq!(c("SELECT 1;;"), 1);
        assert_eq!(c("SELECT 1; SELECT 2"), 2);
        assert_eq!(c("SELECT ';'"), 1);
    }

    #[test]
    fn read_only_detection() {
        let ro = |s| check_read_only(&tokenize(s).unwrap());
        assert!(ro("SELECT replace(a, 'x', 'y') FROM t").is_ok());
        assert!(ro("WITH c AS (SELECT 1) SELECT * FROM c").is_ok());
        assert_eq!(ro("DROP TABLE t"), Err("DROP".into()));
        assert_eq!(ro("SELECT 1; DELETE FROM t"), Err("DELETE".into()));
        assert!(ro("PRAGMA table_info(t)").is_err());
    }

    #[test]
    fn aliases_and_qualified_refs() {
        let s = scan_sql(
            "SELECT a.Aircraft, COUNT(m.Winning_Aircraft) as wins FROM aircraft a JOIN match m \
             ON a.Aircraft_ID = m.Winning_Aircraft GROUP BY a.Aircraft ORDER BY wins DESC",
        );
        assert_eq!(s.sources.len(), 2);
        assert_eq!(s.sources[0].kind, SourceKind::Table("aircraft".into()));
        assert_eq!(s.sources[0].alias.as_deref(), Some("a"));
        assert_eq!(s.sources[1].alias.as_deref(), Some("m"));
        assert!(s.defined_names.iter().any(|d| d == "wins"));
        let qualified = s
            .references
            .iter()
            .filter(|r| matches!(r, Reference::Qualified { .. }))
            .count();
        assert_eq!(qualified, 5);
        assert!(s
            .references
            .iter()
            .any(|r| matches!(r, Reference::Bare { name, .. } if name == "wins")));
    }

    #[test]
    fn comma_joins_subqueries_and_ctes() {
        let s = scan_sql("WITH c(x) AS (SELECT 1) SELECT * FROM t1, t2 AS b, (SELECT y FROM t3) q, c");
        let kinds: Vec<_> = s.sources.iter().map(|s| s.kind.clone()).collect();
        assert!(kinds.contains(&SourceKind::Table("t1".into())));
        assert!(kinds.contains(&SourceKind::Table("t2".into())));
        assert!(kinds.contains(&SourceKind::Table("t3".into())));
        assert_eq!(kinds.iter().filter(|k| **k == SourceKind::Derived).count(), 2);
        assert_eq!(s.cte_names, ["c"]);
        assert!(s.is_defined("x"));
        assert!(s.is_defined("q"));
    }

    #[test]
    fn implicit_alias() {
        let s = scan_sql("SELECT count(*) n, name FROM t");
        assert!(s.is_defined("n"));
        assert!(s
            .references
            .iter()
            .any(|r| matches!(r, Reference::Bare { name, .. } if name == "name")));
    }
}

//! Benchmark corpus: loading the JSON manifest, filtering and seeded sampling.

use std::collections::HashSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::plan::ChartType;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot parse manifest {path}: {reason}")]
    ManifestParse { path: PathBuf, reason: String },
    #[error("task {task_id}: database {path} does not exist or is not readable")]
    MissingDatabase { task_id: String, path: PathBuf },
    #[error("duplicate task id {0:?}")]
    DuplicateTaskId(String),
    #[error("unknown task id {0:?}")]
    UnknownTask(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Difficulty {
    Easy,
    Medium,
    Hard,
    ExtraHard,
}

impl Difficulty {
    pub const ALL: [Difficulty; 4] = [Self::Easy, Self::Medium, Self::Hard, Self::ExtraHard];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Easy => "easy",
            Self::Medium => "medium",
            Self::Hard => "hard",
            Self::ExtraHard => "extra_hard",
        }
    }
}

impl fmt::Display for Difficulty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Difficulty {
    type Err = String;

    /// Accepts `extra_hard`, `extra hard`, `Extra Hard` and `extra-hard`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.trim().to_ascii_lowercase().replace([' ', '-'], "_");
        Self::ALL
            .into_iter()
            .find(|d| d.as_str() == norm)
            .ok_or_else(|| format!("unknown difficulty {s:?}"))
    }
}

/// One benchmark item.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub id: String,
    pub question: String,
    /// Absolute (or root-joined) path to the SQLite file.
    pub db_file: PathBuf,
    #[serde(rename = "chart_type", default, skip_serializing_if = "Option::is_none")]
    pub required_chart_type: Option<ChartType>,
    pub difficulty: Difficulty,
    pub domain: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_sql: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_bullets: Option<Vec<String>>,
}

impl TaskSpec {
    /// File name of the database, as shown to the model.
    pub fn db_file_name(&self) -> String {
        self.db_file
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| self.db_file.to_string_lossy().into_owned())
    }
}

#[derive(Debug, Clone, Default)]
pub struct Corpus {
    pub root: PathBuf,
    pub tasks: Vec<TaskSpec>,
}

/// On-disk manifest shape. `db_file` entries are relative to `root`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub root: String,
    pub tasks: Vec<ManifestTask>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestTask {
    pub id: String,
    pub question: String,
    pub db_file: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chart_type: Option<ChartType>,
    pub difficulty: Difficulty,
    pub domain: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_sql: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_bullets: Option<Vec<String>>,
}

const MANIFEST_KEYS: &[&str] = &["root", "tasks"];
const TASK_KEYS: &[&str] = &[
    "id",
    "question",
    "db_file",
    "chart_type",
    "difficulty",
    "domain",
    "gold_sql",
    "gold_bullets",
];

/// Load and resolve a manifest file.
///
/// A relative `root` is taken relative to the manifest's own directory.
pub fn load_corpus(manifest: &Path) -> Result<Corpus, CorpusError> {
    let text = std::fs::read_to_string(manifest).map_err(|e| CorpusError::ManifestParse {
        path: manifest.to_path_buf(),
        reason: e.to_string(),
    })?;
    let parse_err = |reason: String| CorpusError::ManifestParse {
        path: manifest.to_path_buf(),
        reason,
    };
    let raw: serde_json::Value = serde_json::from_str(&text).map_err(|e| parse_err(e.to_string()))?;
    warn_unknown_fields(&raw);
    let parsed: Manifest = serde_json::from_value(raw).map_err(|e| parse_err(e.to_string()))?;

    let base = manifest.parent().unwrap_or_else(|| Path::new("."));
    let root = {
        let r = PathBuf::from(&parsed.root);
        if r.is_absolute() {
            r
        } else {
            base.join(r)
        }
    };

    let mut seen = HashSet::new();
    let mut tasks = Vec::with_capacity(parsed.tasks.len());
    for t in parsed.tasks {
        if !seen.insert(t.id.clone()) {
            return Err(CorpusError::DuplicateTaskId(t.id));
        }
        let db_file = root.join(&t.db_file);
        let readable = std::fs::File::open(&db_file)
            .and_then(|f| f.metadata())
            .is_ok_and(|m| m.is_file());
        if !readable {
            return Err(CorpusError::MissingDatabase {
                task_id: t.id,
                path: db_file,
            });
        }
        tasks.push(TaskSpec {
            id: t.id,
            question: t.question,
            db_file,
            required_chart_type: t.chart_type,
            difficulty: t.difficulty,
            domain: t.domain,
            gold_sql: t.gold_sql,
            gold_bullets: t.gold_bullets,
        });
    }
    Ok(Corpus { root, tasks })
}

fn warn_unknown_fields(raw: &serde_json::Value) {
    let Some(obj) = raw.as_object() else { return };
    for key in obj.keys().filter(|k| !MANIFEST_KEYS.contains(&k.as_str())) {
        tracing::warn!(field = %key, "ignoring unknown manifest field");
    }
    let Some(tasks) = obj.get("tasks").and_then(|t| t.as_array()) else { return };
    for (i, task) in tasks.iter().enumerate() {
        if let Some(task) = task.as_object() {
            for key in task.keys().filter(|k| !TASK_KEYS.contains(&k.as_str())) {
                tracing::warn!(task = i, field = %key, "ignoring unknown task field");
            }
        }
    }
}

impl Corpus {
    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }

    pub fn get(&self, id: &str) -> Result<&TaskSpec, CorpusError> {
        self.tasks
            .iter()
            .find(|t| t.id == id)
            .ok_or_else(|| CorpusError::UnknownTask(id.to_string()))
    }

    /// Serialize back to manifest form, with `db_file` relative to `root` where possible.
    pub fn to_manifest(&self) -> Manifest {
        Manifest {
            root: self.root.to_string_lossy().into_owned(),
            tasks: self
                .tasks
                .iter()
                .map(|t| ManifestTask {
                    id: t.id.clone(),
                    question: t.question.clone(),
                    db_file: t
                        .db_file
                        .strip_prefix(&self.root)
                        .unwrap_or(&t.db_file)
                        .to_string_lossy()
                        .into_owned(),
                    chart_type: t.required_chart_type,
                    difficulty: t.difficulty,
                    domain: t.domain.clone(),
                    gold_sql: t.gold_sql.clone(),
                    gold_bullets: t.gold_bullets.clone(),
                })
                .collect(),
        }
    }
}

/// Every field is optional; an empty filter selects the whole corpus.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TaskFilter {
    pub chart_type: Option<ChartType>,
    pub difficulty: Option<Difficulty>,
    pub domain: Option<String>,
    pub ids: Option<Vec<String>>,
    pub count: Option<usize>,
    pub seed: Option<u64>,
}

impl TaskFilter {
    fn matches(&self, t: &TaskSpec) -> bool {
        self.chart_type.is_none_or(|c| t.required_chart_type == Some(c))
            && self.difficulty.is_none_or(|d| t.difficulty == d)
            && self.domain.as_deref().is_none_or(|d| t.domain.eq_ignore_ascii_case(d))
            && self.ids.as_ref().is_none_or(|ids| ids.contains(&t.id))
    }
}

/// Filter, then optionally sample `count` tasks.
///
/// With a seed the sample is a seeded draw without replacement; without one
/// it is the first `count` matches. Either way results come back in manifest
/// order.
pub fn select_tasks(corpus: &Corpus, filter: &TaskFilter) -> Vec<TaskSpec> {
    let matches: Vec<&TaskSpec> = corpus.tasks.iter().filter(|t| filter.matches(t)).collect();
    let picked: Vec<&TaskSpec> = match filter.count {
        Some(n) if n < matches.len() => match filter.seed {
            Some(seed) => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mut idx = rand::seq::index::sample(&mut rng, matches.len(), n).into_vec();
                idx.sort_unstable();
                idx.into_iter().map(|i| matches[i]).collect()
            }
            None => matches.into_iter().take(n).collect(),
        },
        _ => matches,
    };
    picked.into_iter().cloned().collect()
}

// ---------------------------------------------------------------- NvBench import

#[derive(Deserialize)]
struct NvEntry {
    chart: Option<String>,
    hardness: Option<String>,
    db_id: Option<String>,
    #[serde(default)]
    nl_queries: Vec<String>,
    vis_query: Option<NvVisQuery>,
}

#[derive(Deserialize)]
struct NvVisQuery {
    data_part: Option<NvDataPart>,
}

#[derive(Deserialize)]
struct NvDataPart {
    sql_part: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImportReport {
    pub imported: usize,
    /// `(entry id, reason)` for every entry left out.
    pub skipped: Vec<(String, String)>,
}

/// Convert an `NVBench.json` file (object of id → entry) into a manifest.
///
/// Databases are looked up as `<database_dir>/<db_id>/<db_id>.sqlite`; the
/// manifest root is `database_dir`. Entries without a question, a known
/// chart type, a known hardness or an existing database are reported as
/// skipped. The first natural-language query is the question.
pub fn import_nvbench(nvbench_json: &Path, database_dir: &Path) -> Result<(Manifest, ImportReport), CorpusError> {
    let text = std::fs::read_to_string(nvbench_json)?;
    let parse_err = |reason: String| CorpusError::ManifestParse {
        path: nvbench_json.to_path_buf(),
        reason,
    };
    let raw: std::collections::BTreeMap<String, serde_json::Value> =
        serde_json::from_str(&text).map_err(|e| parse_err(e.to_string()))?;
    let mut ids: Vec<&String> = raw.keys().collect();
    ids.sort_by(|a, b| natural_key(a).cmp(&natural_key(b)));

    let mut report = ImportReport::default();
    let mut tasks = Vec::new();
    for id in ids {
        let entry: NvEntry = match serde_json::from_value(raw[id].clone()) {
            Ok(e) => e,
            Err(e) => {
                report.skipped.push((id.clone(), format!("bad entry: {e}")));
                continue;
            }
        };
        let outcome = (|| {
            let db_id = entry.db_id.filter(|d| !d.is_empty()).ok_or("no db_id")?;
            let question = entry
                .nl_queries
                .into_iter()
                .map(|q| q.trim().to_string())
                .find(|q| !q.is_empty())
                .ok_or("no natural-language query")?;
            let chart: ChartType = entry.chart.as_deref().ok_or("no chart")?.parse().map_err(|_| "unknown chart type")?;
            let difficulty: Difficulty = entry
                .hardness
                .as_deref()
                .ok_or("no hardness")?
                .parse()
                .map_err(|_| "unknown hardness")?;
            let db_file = format!("{db_id}/{db_id}.sqlite");
            if !database_dir.join(&db_file).is_file() {
                return Err("database file missing");
            }
            let gold_sql = entry
                .vis_query
                .and_then(|v| v.data_part)
                .and_then(|d| d.sql_part)
                .map(|s| s.trim().to_string())
                .filter(|s| !s.is_empty());
            Ok(ManifestTask {
                id: id.clone(),
                question,
                db_file,
                chart_type: Some(chart),
                difficulty,
                domain: db_id,
                gold_sql,
                gold_bullets: None,
            })
        })();
        match outcome {
            Ok(t) => tasks.push(t),
            Err(reason) => report.skipped.push((id.clone(), reason.to_string())),
        }
    }
    report.imported = tasks.len();
    let root = std::path::absolute(database_dir).unwrap_or_else(|_| database_dir.to_path_buf());
    Ok((
        Manifest {
            root: root.to_string_lossy().into_owned(),
            tasks,
        },
        report,
    ))
}

/// Leading integer first, so `"10"` sorts after `"9"`.
fn natural_key(id: &str) -> (u64, &str) {
    let digits = id.len() - id.trim_start_matches(|c: char| c.is_ascii_digit()).len();
    (id[..digits].parse().unwrap_or(u64::MAX), id)
}

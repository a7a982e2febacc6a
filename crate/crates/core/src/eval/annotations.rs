//! Annotation CSV ingestion.
//!
//! Header: `task_id,annotator_id,annotator_group,subject,bullet_index,metric,value`.
//! `subject` is `figure` or `bullet`; `bullet_index` is 1-based and empty
//! for figure rows. Row numbers in errors are file line numbers, header = 1.

use std::collections::HashMap;
use std::fmt;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::rubric::{Metric, SubjectKind};
use super::EvalError;

pub const HEADER: [&str; 7] = [
    "task_id",
    "annotator_id",
    "annotator_group",
    "subject",
    "bullet_index",
    "metric",
    "value",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Subject {
    Figure,
    /// 1-based bullet position.
    Bullet(usize),
}

impl Subject {
    pub fn kind(self) -> SubjectKind {
        match self {
            Subject::Figure => SubjectKind::Figure,
            Subject::Bullet(_) => SubjectKind::Bullet,
        }
    }
}

impl fmt::Display for Subject {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Subject::Figure => f.write_str("figure"),
            Subject::Bullet(i) => write!(f, "bullet {i}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    pub task_id: String,
    pub annotator_id: String,
    pub group: String,
    pub subject: Subject,
    pub metric: Metric,
    pub value: f64,
}

pub fn ingest_annotations(path: &Path) -> Result<Vec<Annotation>, EvalError> {
    let file = std::fs::File::open(path).map_err(|e| EvalError::Io {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    ingest_reader(file)
}

pub fn ingest_reader(reader: impl Read) -> Result<Vec<Annotation>, EvalError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| EvalError::MalformedRow {
            row: 1,
            reason: e.to_string(),
        })?
        .clone();
    let index: HashMap<&str, usize> = headers.iter().enumerate().map(|(i, h)| (h, i)).collect();
    let cols: Vec<usize> = HEADER
        .iter()
        .map(|h| {
            index.get(h).copied().ok_or_else(|| EvalError::MalformedRow {
                row: 1,
                reason: format!("missing column {h:?}"),
            })
        })
        .collect::<Result<_, _>>()?;

    let mut out = Vec::new();
    let mut seen: HashMap<(String, String, Subject, Metric), usize> = HashMap::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| EvalError::MalformedRow {
            row: e.position().map_or(0, |p| p.line() as usize),
            reason: e.to_string(),
        })?;
        let row = rec.position().map_or(0, |p| p.line() as usize);
        let field = |i: usize| rec.get(cols[i]).unwrap_or("");
        let malformed = |reason: String| EvalError::MalformedRow { row, reason };

        let task_id = field(0);
        let annotator_id = field(1);
        if task_id.is_empty() || annotator_id.is_empty() {
            return Err(malformed("task_id and annotator_id are required".into()));
        }
        let metric: Metric = field(5).parse().map_err(malformed)?;
        let subject = match (field(3), field(4)) {
            ("figure", "") => Subject::Figure,
            ("figure", idx) => return Err(malformed(format!("figure row has bullet_index {idx:?}"))),
            ("bullet", idx) => match idx.parse::<usize>() {
                Ok(i) if i >= 1 => Subject::Bullet(i),
                _ => return Err(malformed(format!("bullet_index {idx:?} is not a positive integer"))),
            },
            (other, _) => return Err(malformed(format!("unknown subject {other:?}"))),
        };
        if subject.kind() != metric.subject() {
            return Err(malformed(format!("metric {metric} does not apply to {subject}")));
        }
        let raw = field(6);
        let value: f64 = raw.parse().map_err(|_| EvalError::RangeViolation {
            row,
            metric,
            value: raw.to_string(),
        })?;
        if !metric.accepts(value) {
            return Err(EvalError::RangeViolation {
                row,
                metric,
                value: raw.to_string(),
            });
        }
        let key = (task_id.to_string(), annotator_id.to_string(), subject, metric);
        if let Some(&first_row) = seen.get(&key) {
            return Err(EvalError::DuplicateAnnotation {
                row,
                first_row,
                task_id: key.0,
                annotator_id: key.1,
                subject: subject.to_string(),
                metric,
            });
        }
        seen.insert(key, row);
        out.push(Annotation {
            task_id: task_id.to_string(),
            annotator_id: annotator_id.to_string(),
            group: field(2).to_string(),
            subject,
            metric,
            value,
        });
    }
    Ok(out)
}

/// Inverse of [`ingest_reader`].
pub fn to_csv(annotations: &[Annotation]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(HEADER).expect("in-memory write");
    for a in annotations {
        let (subject, idx) = match a.subject {
            Subject::Figure => ("figure", String::new()),
            Subject::Bullet(i) => ("bullet", i.to_string()),
        };
        w.write_record([
            a.task_id.as_str(),
            a.annotator_id.as_str(),
            a.group.as_str(),
            subject,
            idx.as_str(),
            a.metric.as_str(),
            &super::fmt_value(a.value),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("UTF-8")
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEAD: &str = "task_id,annotator_id,annotator_group,subject,bullet_index,metric,value\n";

    fn ingest(body: &str) -> Result<Vec<Annotation>, EvalError> {
        ingest_reader(format!("{HEAD}{body}").as_bytes())
    }

    #[test]
    fn accepts_valid_row() {
        let a = ingest("t1,a1,g1,figure,,aesthetics,2\n").unwrap();
        assert_eq!(a.len(), 1);
        assert_eq!(a[0].value, 2.0);
        assert_eq!(a[0].subject, Subject::Figure);
        let b = ingest("t1,a1,g1,bullet,3,complexity,1\n").unwrap();
        assert_eq!(b[0].subject, Subject::Bullet(3));
    }

    #[test]
    fn range_violation_names_row() {
        let e = ingest("t1,a1,g1,figure,,aesthetics,2\nt1,a1,g1,figure,,fig_correctness,0.7\n").unwrap_err();
        assert!(matches!(
            e,
            EvalError::RangeViolation {
                row: 3,
                metric: Metric::FigCorrectness,
                ..
            }
        ));
        assert!(matches!(
            ingest("t1,a1,g1,figure,,chart_type,yes\n"),
            Err(EvalError::RangeViolation { row: 2, .. })
        ));
    }

    #[test]
    fn duplicates_rejected() {
        let e = ingest("t1,a1,g1,figure,,aesthetics,2\nt1,a1,g1,figure,,aesthetics,3\n").unwrap_err();
        assert!(matches!(e, EvalError::DuplicateAnnotation { row: 3, first_row: 2, .. }));
        // Same cell from a different annotator is fine.
        assert_eq!(ingest("t1,a1,g1,figure,,aesthetics,2\nt1,a2,g2,figure,,aesthetics,3\n").unwrap().len(), 2);
    }

    #[test]
    fn subject_rules() {
        assert!(matches!(ingest("t1,a1,g1,figure,2,aesthetics,2\n"), Err(EvalError::MalformedRow { row: 2, .. })));
        assert!(matches!(ingest("t1,a1,g1,bullet,,fluency,2\n"), Err(EvalError::MalformedRow { .. })));
        assert!(matches!(ingest("t1,a1,g1,bullet,0,fluency,2\n"), Err(EvalError::MalformedRow { .. })));
        assert!(matches!(ingest("t1,a1,g1,bullet,1,aesthetics,2\n"), Err(EvalError::MalformedRow { .. })));
        assert!(matches!(ingest("t1,a1,g1,figure,,fluency,2\n"), Err(EvalError::MalformedRow { .. })));
        assert!(matches!(ingest("t1,a1,g1,chart,,aesthetics,2\n"), Err(EvalError::MalformedRow { .. })));
        assert!(matches!(
            ingest_reader("task_id,metric\n".as_bytes()),
            Err(EvalError::MalformedRow { row: 1, .. })
        ));
    }

    #[test]
    fn csv_round_trip() {
        let rows = ingest("t1,a1,g1,figure,,fig_correctness,0.5\nt1,a1,g1,bullet,2,alignment,1\n").unwrap();
        assert_eq!(ingest_reader(to_csv(&rows).as_bytes()).unwrap(), rows);
    }
}

//! Group means, the Average column and inter-annotator agreement.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::annotations::{Annotation, Subject};
use super::rubric::Metric;
use super::EvalError;

/// Half-up rounding to `places` decimals, done on integers so that
/// values like 2.495 are not pushed down by binary representation.
pub fn round_half_up(x: f64, places: u32) -> f64 {
    assert!(places <= 9, "at most 9 decimal places");
    let n = (x * 1e9).round() as i128;
    let scale = 10i128.pow(9 - places);
    let q = (n + scale / 2).div_euclid(scale);
    q as f64 / 10f64.powi(places as i32)
}

pub fn fmt2(x: f64) -> String {
    format!("{:.2}", round_half_up(x, 2))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub metric: Metric,
    /// Same order as [`MetricTable::groups`]; `None` where the group
    /// scored nothing (partial tables only).
    pub group_means: Vec<Option<f64>>,
    pub average: f64,
    /// Distinct scored cells: tasks for figure metrics, bullets otherwise.
    pub samples: usize,
}

impl MetricRow {
    pub fn from_group_means(metric: Metric, group_means: Vec<Option<f64>>, samples: usize) -> Self {
        let present: Vec<f64> = group_means.iter().flatten().copied().collect();
        let average = mean(&present);
        Self {
            metric,
            group_means,
            average,
            samples,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricTable {
    pub groups: Vec<String>,
    pub rows: Vec<MetricRow>,
}

impl MetricTable {
    pub fn row(&self, metric: Metric) -> Option<&MetricRow> {
        self.rows.iter().find(|r| r.metric == metric)
    }

    pub fn sample_count(&self) -> usize {
        self.rows.iter().map(|r| r.samples).max().unwrap_or(0)
    }
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

type Cell<'a> = (&'a str, Subject);

/// Mean over cells of each `(metric, group)`, where several annotators of
/// one group on the same cell are averaged first. Rows appear for every
/// metric present in the input, in rubric order; a metric that some group
/// never scored is an error.
pub fn aggregate(annotations: &[Annotation]) -> Result<MetricTable, EvalError> {
    aggregate_inner(annotations, true)
}

/// As [`aggregate`], but a group that never scored a metric gets `None`
/// and the Average covers the groups that did. Empty input gives an
/// empty table.
pub fn aggregate_partial(annotations: &[Annotation]) -> MetricTable {
    aggregate_inner(annotations, false).expect("partial aggregation does not fail")
}

fn aggregate_inner(annotations: &[Annotation], strict: bool) -> Result<MetricTable, EvalError> {
    if strict && annotations.is_empty() {
        return Err(EvalError::EmptyCell {
            metric: "any metric".into(),
            group: "any group".into(),
        });
    }
    let groups: Vec<String> = annotations
        .iter()
        .map(|a| a.group.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    // (metric, group) -> cell -> values
    let mut by: BTreeMap<(Metric, &str), BTreeMap<Cell, Vec<f64>>> = BTreeMap::new();
    for a in annotations {
        by.entry((a.metric, a.group.as_str()))
            .or_default()
            .entry((a.task_id.as_str(), a.subject))
            .or_default()
            .push(a.value);
    }
    let present: BTreeSet<Metric> = annotations.iter().map(|a| a.metric).collect();
    let mut rows = Vec::new();
    for metric in Metric::ALL.into_iter().filter(|m| present.contains(m)) {
        let mut group_means = Vec::with_capacity(groups.len());
        let mut cells: BTreeSet<Cell> = BTreeSet::new();
        for g in &groups {
            let Some(cell_map) = by.get(&(metric, g.as_str())) else {
                if strict {
                    return Err(EvalError::EmptyCell {
                        metric: metric.to_string(),
                        group: g.clone(),
                    });
                }
                group_means.push(None);
                continue;
            };
            let per_cell: Vec<f64> = cell_map.values().map(|v| sorted_mean(v)).collect();
            group_means.push(Some(sorted_mean(&per_cell)));
            cells.extend(cell_map.keys().copied());
        }
        rows.push(MetricRow::from_group_means(metric, group_means, cells.len()));
    }
    Ok(MetricTable { groups, rows })
}

/// Mean with a fixed summation order, so input permutation cannot move
/// the last bits.
fn sorted_mean(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    mean(&v)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricAgreement {
    pub metric: Metric,
    pub cells: usize,
    pub exact_match_rate: f64,
    pub mean_abs_diff: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    pub metrics: Vec<MetricAgreement>,
}

impl AgreementReport {
    pub fn get(&self, metric: Metric) -> Option<&MetricAgreement> {
        self.metrics.iter().find(|m| m.metric == metric)
    }
}

/// Exact-match rate and mean absolute difference over cells scored by
/// exactly two annotators. Cells with any other count are skipped.
pub fn agreement(annotations: &[Annotation]) -> AgreementReport {
    let mut cells: BTreeMap<(Metric, &str, Subject), Vec<f64>> = BTreeMap::new();
    for a in annotations {
        cells
            .entry((a.metric, a.task_id.as_str(), a.subject))
            .or_default()
            .push(a.value);
    }
    let mut per: BTreeMap<Metric, (usize, usize, f64)> = BTreeMap::new();
    for ((metric, _, _), v) in &cells {
        if v.len() != 2 {
            continue;
        }
        let e = per.entry(*metric).or_default();
        e.0 += 1;
        if v[0] == v[1] {
            e.1 += 1;
        }
        e.2 += (v[0] - v[1]).abs();
    }
    AgreementReport {
        metrics: per
            .into_iter()
            .map(|(metric, (n, same, diff))| MetricAgreement {
                metric,
                cells: n,
                exact_match_rate: same as f64 / n as f64,
                mean_abs_diff: diff / n as f64,
            })
            .collect(),
    }
}

//! Per-task scorecards: automatic figure scores merged with human ones.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::annotations::{Annotation, Subject};
use super::rubric::Metric;
use crate::corpus::TaskSpec;
use crate::executor::{compare_to_gold, parse_data, DataMatchReport, ExtractedData};
use crate::pipeline::{RunRecord, RunStatus, StepTimings};
use crate::plan::ChartType;

pub const AUTO_ANNOTATOR: &str = "auto";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Auto,
    Human,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HumanScore {
    pub annotator_id: String,
    pub group: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreCell {
    pub metric: Metric,
    pub subject: Subject,
    /// Mean of the human scores when there are any, else the automatic one.
    pub value: f64,
    pub provenance: Provenance,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub auto_value: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub human: Vec<HumanScore>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scorecard {
    pub task_id: String,
    pub run_id: String,
    pub status: RunStatus,
    pub required_chart_type: Option<ChartType>,
    pub chart_type: Option<ChartType>,
    pub timings: StepTimings,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub cost_usd: f64,
    pub bullet_count: Option<usize>,
    pub data_match: Option<DataMatchReport>,
    pub cells: Vec<ScoreCell>,
    /// Reasons an automatic score was left out.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl Scorecard {
    pub fn get(&self, metric: Metric, subject: Subject) -> Option<&ScoreCell> {
        self.cells.iter().find(|c| c.metric == metric && c.subject == subject)
    }

    pub fn value(&self, metric: Metric, subject: Subject) -> Option<f64> {
        self.get(metric, subject).map(|c| c.value)
    }

    /// One annotation per human score, plus one `auto` annotation for
    /// each cell that only has an automatic score.
    pub fn to_annotations(&self) -> Vec<Annotation> {
        let mut out = Vec::new();
        for c in &self.cells {
            let base = |annotator_id: &str, group: &str, value: f64| Annotation {
                task_id: self.task_id.clone(),
                annotator_id: annotator_id.into(),
                group: group.into(),
                subject: c.subject,
                metric: c.metric,
                value,
            };
            match c.provenance {
                Provenance::Human => out.extend(c.human.iter().map(|h| base(&h.annotator_id, &h.group, h.value))),
                Provenance::Auto => out.push(base(AUTO_ANNOTATOR, AUTO_ANNOTATOR, c.value)),
            }
        }
        out
    }

    fn upsert(&mut self, metric: Metric, subject: Subject) -> &mut ScoreCell {
        let idx = match self.cells.iter().position(|c| c.metric == metric && c.subject == subject) {
            Some(i) => i,
            None => {
                self.cells.push(ScoreCell {
                    metric,
                    subject,
                    value: f64::NAN,
                    provenance: Provenance::Human,
                    auto_value: None,
                    human: Vec::new(),
                });
                self.cells.len() - 1
            }
        };
        &mut self.cells[idx]
    }

    fn sort_cells(&mut self) {
        self.cells.sort_by_key(|a| (a.subject, a.metric));
    }
}

fn auto_cell(metric: Metric, value: f64) -> ScoreCell {
    ScoreCell {
        metric,
        subject: Subject::Figure,
        value,
        provenance: Provenance::Auto,
        auto_value: Some(value),
        human: Vec::new(),
    }
}

/// Figure correctness from the run's `data.txt` against the gold result
/// (row order ignored), and chart type when a required type is known.
/// Every other metric is left for annotators.
pub fn auto_scores(run: &RunRecord, task: &TaskSpec, gold: &ExtractedData) -> Scorecard {
    auto_scores_opt(run, task, Some(gold))
}

/// As [`auto_scores`]; without gold data figure correctness is left out.
pub fn auto_scores_opt(run: &RunRecord, task: &TaskSpec, gold: Option<&ExtractedData>) -> Scorecard {
    let mut card = Scorecard {
        task_id: run.task_id.clone(),
        run_id: run.run_id.clone(),
        status: run.status,
        required_chart_type: run.required_chart_type.or(task.required_chart_type),
        chart_type: run.chart_type,
        timings: run.timings.clone(),
        prompt_tokens: run.prompt_tokens,
        completion_tokens: run.completion_tokens,
        cost_usd: run.cost_usd,
        bullet_count: run.bullet_count,
        data_match: None,
        cells: Vec::new(),
        notes: Vec::new(),
    };
    if !run.is_ok() {
        card.notes.push(format!("run status {}", run.status.as_str()));
        return card;
    }
    match gold.map(|g| (g, run.artifact("data.txt").map(std::fs::read))) {
        None => card.notes.push("no gold data".into()),
        Some((gold, Some(Ok(bytes)))) => match parse_data(&bytes) {
            Ok(data) => {
                let report = compare_to_gold(&data, gold, false);
                card.cells.push(auto_cell(Metric::FigCorrectness, report.score));
                card.data_match = Some(report);
            }
            Err(e) => card.notes.push(format!("data.txt is not a table: {e}")),
        },
        Some((_, Some(Err(e)))) => card.notes.push(format!("data.txt unreadable: {e}")),
        Some((_, None)) => card.notes.push("no data.txt artifact".into()),
    }
    match (card.required_chart_type, card.chart_type) {
        (Some(req), Some(got)) => card.cells.push(auto_cell(Metric::ChartType, f64::from(u8::from(req == got)))),
        (None, _) => card.notes.push("required chart type unknown".into()),
        (_, None) => card.notes.push("rendered chart type unknown".into()),
    }
    card.sort_cells();
    card
}

/// Attach human scores to matching scorecards. Human values replace the
/// automatic value of a cell. Returns task ids with annotations but no
/// scorecard.
pub fn merge_annotations(cards: &mut [Scorecard], annotations: &[Annotation]) -> Vec<String> {
    let mut by_task: BTreeMap<&str, Vec<&Annotation>> = BTreeMap::new();
    for a in annotations {
        by_task.entry(a.task_id.as_str()).or_default().push(a);
    }
    for card in cards.iter_mut() {
        let Some(anns) = by_task.remove(card.task_id.as_str()) else {
            continue;
        };
        for a in anns {
            let cell = card.upsert(a.metric, a.subject);
            cell.human.push(HumanScore {
                annotator_id: a.annotator_id.clone(),
                group: a.group.clone(),
                value: a.value,
            });
            cell.human.sort_by(|x, y| x.annotator_id.cmp(&y.annotator_id));
            cell.provenance = Provenance::Human;
            cell.value = cell.human.iter().map(|h| h.value).sum::<f64>() / cell.human.len() as f64;
        }
        card.sort_cells();
    }
    by_task.into_keys().map(str::to_string).collect()
}

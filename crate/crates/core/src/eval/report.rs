//! Markdown tables: metric by group, analyst-versus-model comparison, and
//! per-instance cost.

use std::fmt::Write;

use serde::{Deserialize, Serialize};

use super::aggregate::{aggregate_partial, fmt2, MetricTable};
use super::cost::{cost_ratio, format_percent, CostModel, FixedRate, SalaryRow};
use super::rubric::{Metric, SubjectKind};
use super::score::{Provenance, Scorecard, AUTO_ANNOTATOR};
use super::EvalError;

const FIGURE_METRICS: [Metric; 3] = [Metric::FigCorrectness, Metric::ChartType, Metric::Aesthetics];
const ANALYSIS_METRICS: [Metric; 4] = [Metric::AnaCorrectness, Metric::Complexity, Metric::Alignment, Metric::Fluency];

fn table_order() -> impl Iterator<Item = Metric> {
    FIGURE_METRICS.into_iter().chain(ANALYSIS_METRICS)
}

fn aspect(m: Metric) -> &'static str {
    match m.subject() {
        SubjectKind::Figure => "Figure",
        SubjectKind::Bullet => "Data Analysis",
    }
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), fmt2)
}

/// Metric rows by annotator group with an Average column. An `auto`
/// column holds cells no human scored.
pub fn metric_table_markdown(table: &MetricTable) -> String {
    let mut s = String::new();
    let groups: Vec<&str> = table
        .groups
        .iter()
        .map(|g| if g == AUTO_ANNOTATOR { "Auto" } else { g.as_str() })
        .collect();
    let _ = writeln!(s, "| | Metric | {} | Average |", groups.join(" | "));
    let _ = writeln!(s, "|---|---|{}---|", "---|".repeat(groups.len()));
    let mut last = "";
    for m in table_order() {
        let Some(row) = table.row(m) else { continue };
        let a = aspect(m);
        let head = if a == last { "" } else { a };
        last = a;
        let vals: Vec<String> = row.group_means.iter().map(|v| cell(*v)).collect();
        let _ = writeln!(s, "| {head} | {} | {} | {} |", m.label(), vals.join(" | "), fmt2(row.average));
    }
    s
}

pub fn scorecard_metric_table(cards: &[Scorecard]) -> MetricTable {
    let anns: Vec<_> = cards.iter().flat_map(Scorecard::to_annotations).collect();
    aggregate_partial(&anns)
}

/// One line of the analyst-versus-model comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub annotator: String,
    pub samples: usize,
    /// Correctness, chart type, aesthetics.
    pub figure: [Option<f64>; 3],
    pub figure_time_s: Option<f64>,
    /// Correctness, complexity, alignment, fluency.
    pub analysis: [Option<f64>; 4],
    pub analysis_time_s: Option<f64>,
    /// True where any contributing cell was scored automatically.
    #[serde(default)]
    pub auto_marks: [bool; 7],
}

fn mean(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

/// Mean over cells per metric, and mean step times of successful runs.
/// Figure time covers planning, execution and rendering; analysis time
/// covers retrieval and the analysis call.
pub fn model_row(label: &str, cards: &[Scorecard]) -> ComparisonRow {
    let metric_mean = |m: Metric| -> (Option<f64>, bool) {
        let cells: Vec<_> = cards.iter().flat_map(|c| c.cells.iter().filter(move |x| x.metric == m)).collect();
        let vals: Vec<f64> = cells.iter().map(|c| c.value).collect();
        (mean(&vals), cells.iter().any(|c| c.provenance == Provenance::Auto))
    };
    let ok: Vec<&Scorecard> = cards.iter().filter(|c| c.status == crate::pipeline::RunStatus::Ok).collect();
    let fig_t: Vec<f64> = ok.iter().map(|c| c.timings.step1_s + c.timings.step2_s).collect();
    let ana_t: Vec<f64> = ok.iter().map(|c| c.timings.step3_s).collect();
    let mut marks = [false; 7];
    let mut figure = [None; 3];
    for (i, m) in FIGURE_METRICS.into_iter().enumerate() {
        (figure[i], marks[i]) = metric_mean(m);
    }
    let mut analysis = [None; 4];
    for (i, m) in ANALYSIS_METRICS.into_iter().enumerate() {
        (analysis[i], marks[3 + i]) = metric_mean(m);
    }
    ComparisonRow {
        annotator: label.into(),
        samples: cards.len(),
        figure,
        figure_time_s: mean(&fig_t),
        analysis,
        analysis_time_s: mean(&ana_t),
        auto_marks: marks,
    }
}

fn time(t: Option<f64>) -> String {
    t.map_or_else(|| "-".into(), |t| format!("{t:.0}"))
}

/// Cells marked `*` include automatic scores.
pub fn comparison_markdown(rows: &[ComparisonRow]) -> String {
    let mut s = String::new();
    s.push_str("| Annotator | Samples | Figure Correctness | Chart Type | Aesthetics | Figure Time (s) | Analysis Correctness | Complexity | Alignment | Fluency | Analysis Time (s) |\n");
    s.push_str("|---|---|---|---|---|---|---|---|---|---|---|\n");
    for r in rows {
        let mark = |i: usize, v: Option<f64>| {
            let c = cell(v);
            if r.auto_marks[i] && v.is_some() {
                format!("{c}*")
            } else {
                c
            }
        };
        let fig: Vec<String> = r.figure.iter().enumerate().map(|(i, v)| mark(i, *v)).collect();
        let ana: Vec<String> = r.analysis.iter().enumerate().map(|(i, v)| mark(3 + i, *v)).collect();
        let _ = writeln!(
            s,
            "| {} | {} | {} | {} | {} | {} |",
            r.annotator,
            r.samples,
            fig.join(" | "),
            time(r.figure_time_s),
            ana.join(" | "),
            time(r.analysis_time_s)
        );
    }
    s
}

/// Mean measured model cost per successful task.
pub fn mean_model_cost(cards: &[Scorecard]) -> Option<f64> {
    let c: Vec<f64> = cards
        .iter()
        .filter(|c| c.status == crate::pipeline::RunStatus::Ok)
        .map(|c| c.cost_usd)
        .collect();
    mean(&c)
}

/// Salary-derived rows, fixed rates, the model's cost, then the model's
/// cost as a share of each fixed rate. Without a model cost the last two
/// parts are left out.
pub fn cost_markdown(
    model: &CostModel,
    salaries: &[SalaryRow],
    rates: &[FixedRate],
    model_label: &str,
    model_cost: Option<f64>,
) -> Result<String, EvalError> {
    let mut s = String::new();
    s.push_str("| Source | Level | Median/Average Annual Salary (USD) | Cost per instance (USD) |\n");
    s.push_str("|---|---|---|---|\n");
    for r in salaries {
        let _ = writeln!(
            s,
            "| {} | {} | {} | {:.2} |",
            r.source,
            r.level,
            thousands(r.annual_salary),
            r.cost(model)?
        );
    }
    for r in rates {
        let _ = writeln!(s, "| {} | {} | - | {:.2} |", r.source, r.level, r.cost_per_instance);
    }
    let Some(model_cost) = model_cost else {
        return Ok(s);
    };
    let _ = writeln!(s, "| {model_label} | | - | {:.2} |", model_cost);
    if !rates.is_empty() {
        s.push('\n');
        for r in rates {
            let p = cost_ratio(model_cost, r.cost_per_instance)?;
            let _ = writeln!(s, "- {model_label} costs {} of {} {}.", format_percent(p), r.source, r.level);
        }
    }
    Ok(s)
}

fn thousands(x: f64) -> String {
    let n = x.round() as i64;
    let digits = n.abs().to_string();
    let mut out = String::new();
    for (i, ch) in digits.chars().enumerate() {
        if i > 0 && (digits.len() - i).is_multiple_of(3) {
            out.push(',');
        }
        out.push(ch);
    }
    if n < 0 {
        out.insert(0, '-');
    }
    out
}

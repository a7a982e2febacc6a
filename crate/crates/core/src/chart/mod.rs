//! Chart rendering for the seven supported chart types, and detection of
//! the chart type a question asks for.

mod pdf;
pub mod scene;
mod svg;

use std::path::{Path, PathBuf};
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::executor::ExtractedData;
use crate::plan::{ChartSpec, ChartType};

pub use scene::{build_scene, Scene};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FigureFormat {
    #[default]
    Svg,
    Pdf,
}

impl FigureFormat {
    pub fn file_name(self) -> &'static str {
        match self {
            Self::Svg => "figure.svg",
            Self::Pdf => "figure.pdf",
        }
    }
}

impl std::str::FromStr for FigureFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "svg" => Ok(Self::Svg),
            "pdf" => Ok(Self::Pdf),
            _ => Err(format!("unknown figure format {s:?} (expected svg or pdf)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RenderOptions {
    pub format: FigureFormat,
    pub width: u32,
    pub height: u32,
}

impl Default for RenderOptions {
    fn default() -> Self {
        Self {
            format: FigureFormat::Svg,
            width: 800,
            height: 500,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FigureArtifact {
    pub path: PathBuf,
    pub format: FigureFormat,
    pub chart_type: ChartType,
    pub width: u32,
    pub height: u32,
}

#[derive(Debug, Error, PartialEq)]
pub enum ChartError {
    #[error("chart column {0:?} is not in the data")]
    ColumnMissing(String),
    #[error("column {column:?} row {row}: {value:?} is not numeric")]
    NonNumericY { column: String, row: usize, value: String },
    #[error("no rows to chart")]
    EmptyData,
    #[error("pie values must be non-negative with a positive sum: {0}")]
    PieDomainError(String),
    #[error("invalid chart spec: {0}")]
    BadSpec(String),
    #[error("cannot write {path}: {reason}")]
    Io { path: PathBuf, reason: String },
}

pub fn render_bytes(spec: &ChartSpec, data: &ExtractedData, opts: &RenderOptions) -> Result<Vec<u8>, ChartError> {
    let scene = build_scene(spec, data, f64::from(opts.width), f64::from(opts.height))?;
    Ok(match opts.format {
        FigureFormat::Svg => svg::to_svg(&scene),
        FigureFormat::Pdf => pdf::to_pdf(&scene),
    })
}

/// Render to `out`. Nothing is written when the chart spec does not fit the data.
pub fn render(
    spec: &ChartSpec,
    data: &ExtractedData,
    out: &Path,
    opts: &RenderOptions,
) -> Result<FigureArtifact, ChartError> {
    let bytes = render_bytes(spec, data, opts)?;
    std::fs::write(out, bytes).map_err(|e| ChartError::Io {
        path: out.to_path_buf(),
        reason: e.to_string(),
    })?;
    Ok(FigureArtifact {
        path: out.to_path_buf(),
        format: opts.format,
        chart_type: spec.chart_type,
        width: opts.width,
        height: opts.height,
    })
}

fn re(p: &str) -> Regex {
    Regex::new(p).expect("static pattern")
}

static STACKED: LazyLock<Regex> = LazyLock::new(|| re(r"\bstack(ed)?\s+bars?\b|\bstacked\b"));
static GROUPING: LazyLock<Regex> = LazyLock::new(|| re(r"\bgroup(ing|ed)?\b"));
static PIE: LazyLock<Regex> = LazyLock::new(|| re(r"\bpie\b|\bproportions?\b"));
static SCATTER: LazyLock<Regex> = LazyLock::new(|| re(r"\bscatter(ed)?\b"));
static LINE: LazyLock<Regex> = LazyLock::new(|| re(r"\bline\b|\bline\s+(chart|graph|plot)s?\b|\btrend\s+line\b"));
static BAR: LazyLock<Regex> = LazyLock::new(|| re(r"\bbars?\b|\bhistograms?\b"));

/// Chart type named by the question, if any.
pub fn infer_required_chart_type(question: &str) -> Option<ChartType> {
    let q = question.to_lowercase();
    if STACKED.is_match(&q) {
        return Some(ChartType::StackedBar);
    }
    if PIE.is_match(&q) {
        return Some(ChartType::Pie);
    }
    let grouped = GROUPING.is_match(&q);
    if SCATTER.is_match(&q) {
        return Some(if grouped {
            ChartType::GroupingScatter
        } else {
            ChartType::Scatter
        });
    }
    if LINE.is_match(&q) {
        return Some(if grouped { ChartType::GroupingLine } else { ChartType::Line });
    }
    if BAR.is_match(&q) {
        return Some(ChartType::Bar);
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::executor::Value;
    use crate::plan::SortDir;

    fn t(s: &str) -> Value {
        Value::Text(s.into())
    }

    fn wins() -> ExtractedData {
        ExtractedData::new(
            vec!["aircraft".into(), "wins".into()],
            vec![
                vec![t("R22"), Value::Integer(2)],
                vec![t("Mi26"), Value::Integer(2)],
                vec![t("CH53"), Value::Integer(1)],
            ],
        )
        .unwrap()
    }

    fn svg(spec: &ChartSpec, data: &ExtractedData) -> String {
        String::from_utf8(render_bytes(spec, data, &RenderOptions::default()).unwrap()).unwrap()
    }

    fn titles(svg: &str, class: &str) -> Vec<String> {
        let pat = Regex::new(&format!(r#"class="{class}"[^>]*><title>([^<]*)</title>"#)).unwrap();
        pat.captures_iter(svg).map(|c| c[1].to_string()).collect()
    }

    #[test]
    fn pie_has_three_labeled_sectors() {
        let s = svg(&ChartSpec::new(ChartType::Pie, "aircraft", &["wins"]), &wins());
        let sectors = titles(&s, "sector");
        assert_eq!(sectors, ["R22: 2", "Mi26: 2", "CH53: 1"]);
        assert!(s.contains(">R22 (40%)<"));
    }

    #[test]
    fn scatter_height_weight() {
        let pts = [(188, 82), (189, 85), (190, 90), (192, 86), (194, 89), (195, 88), (197, 92), (200, 91), (202, 94)];
        let data = ExtractedData::new(
            vec!["Height".into(), "Weight".into()],
            pts.iter().map(|(h, w)| vec![Value::Integer(*h), Value::Integer(*w)]).collect(),
        )
        .unwrap();
        let spec = ChartSpec::new(ChartType::Scatter, "Height", &["Weight"]);
        let s = svg(&spec, &data);
        assert_eq!(titles(&s, "point").len(), 9);
        assert!(titles(&s, "point").contains(&"(188, 82)".to_string()));
        assert!(s.contains(">Height</text>"));
        assert!(s.contains(">Weight</text>"));
        assert!(!s.contains("legend"));

        let scene = build_scene(&spec, &data, 800.0, 500.0).unwrap();
        let xs: Vec<(f64, f64)> = scene
            .prims
            .iter()
            .filter_map(|p| match p {
                scene::Prim::Circle { cx, cy, class: "point", .. } => Some((*cx, *cy)),
                _ => None,
            })
            .collect();
        // Taller and heavier points sit further right and higher up.
        assert!(xs[0].0 < xs[8].0);
        assert!(xs[0].1 > xs[8].1);
    }

    #[test]
    fn bar_sorted_ascending() {
        let data = ExtractedData::new(
            vec!["Position".into(), "avg_points".into()],
            vec![
                vec![t("Forward"), Value::Real(12.5)],
                vec![t("Guard"), Value::Real(3.0)],
                vec![t("Center"), Value::Real(7.25)],
            ],
        )
        .unwrap();
        let spec = ChartSpec::new(ChartType::Bar, "Position", &["avg_points"]).with_sort("avg_points", SortDir::Asc);
        assert_eq!(titles(&svg(&spec, &data), "bar"), ["Guard: 3", "Center: 7.25", "Forward: 12.5"]);
        let spec = ChartSpec::new(ChartType::Bar, "Position", &["avg_points"]).with_sort("avg_points", SortDir::Desc);
        assert_eq!(titles(&svg(&spec, &data), "bar"), ["Forward: 12.5", "Center: 7.25", "Guard: 3"]);
    }

    #[test]
    fn descending_sort_keeps_tie_order() {
        let spec = ChartSpec::new(ChartType::Bar, "aircraft", &["wins"]).with_sort("wins", SortDir::Desc);
        assert_eq!(titles(&svg(&spec, &wins()), "bar"), ["R22: 2", "Mi26: 2", "CH53: 1"]);
    }

    fn grouped_data() -> ExtractedData {
        let rows = [("2020", "A", 1), ("2020", "B", 2), ("2021", "A", 3), ("2021", "B", 4), ("2022", "A", 5)];
        ExtractedData::new(
            vec!["year".into(), "team".into(), "n".into()],
            rows.iter().map(|(y, s, n)| vec![t(y), t(s), Value::Integer(*n)]).collect(),
        )
        .unwrap()
    }

    #[test]
    fn every_type_renders_and_is_deterministic() {
        let d = grouped_data();
        let specs = [
            ChartSpec::new(ChartType::Bar, "year", &["n"]),
            ChartSpec::new(ChartType::StackedBar, "year", &["n"]).with_series("team"),
            ChartSpec::new(ChartType::Line, "year", &["n"]),
            ChartSpec::new(ChartType::GroupingLine, "year", &["n"]).with_series("team"),
            ChartSpec::new(ChartType::Scatter, "year", &["n"]),
            ChartSpec::new(ChartType::GroupingScatter, "year", &["n"]).with_series("team"),
            ChartSpec::new(ChartType::Pie, "year", &["n"]),
        ];
        for spec in &specs {
            for format in [FigureFormat::Svg, FigureFormat::Pdf] {
                let opts = RenderOptions {
                    format,
                    ..Default::default()
                };
                let a = render_bytes(spec, &d, &opts).unwrap();
                assert!(!a.is_empty());
                assert_eq!(a, render_bytes(spec, &d, &opts).unwrap(), "{:?}", spec.chart_type);
            }
            let s = svg(spec, &d);
            assert_eq!(s.contains("class=\"legend\""), spec.series.is_some(), "{:?}", spec.chart_type);
        }
    }

    #[test]
    fn series_encodings() {
        let d = grouped_data();
        let stacked = svg(&ChartSpec::new(ChartType::StackedBar, "year", &["n"]).with_series("team"), &d);
        assert_eq!(titles(&stacked, "bar").len(), 5);
        let lines = svg(&ChartSpec::new(ChartType::GroupingLine, "year", &["n"]).with_series("team"), &d);
        assert_eq!(titles(&lines, "line"), ["A", "B"]);
        let pts = svg(&ChartSpec::new(ChartType::GroupingScatter, "year", &["n"]).with_series("team"), &d);
        assert_eq!(titles(&pts, "point").len(), 5);
    }

    #[test]
    fn many_categories_rotate_labels() {
        let rows = (0..9).map(|i| vec![t(&format!("c{i}")), Value::Integer(i)]).collect();
        let d = ExtractedData::new(vec!["c".into(), "v".into()], rows).unwrap();
        let s = svg(&ChartSpec::new(ChartType::Bar, "c", &["v"]), &d);
        assert!(s.contains("rotate(-45"));
        let s = svg(&ChartSpec::new(ChartType::Bar, "aircraft", &["wins"]), &wins());
        assert!(!s.contains("rotate(-45"));
    }

    #[test]
    fn errors() {
        let d = wins();
        let missing = ChartSpec::new(ChartType::Bar, "aircraft", &["losses"]);
        assert_eq!(
            render_bytes(&missing, &d, &RenderOptions::default()),
            Err(ChartError::ColumnMissing("losses".into()))
        );
        let text_y = ChartSpec::new(ChartType::Bar, "wins", &["aircraft"]);
        assert!(matches!(
            render_bytes(&text_y, &d, &RenderOptions::default()),
            Err(ChartError::NonNumericY { .. })
        ));
        let empty = ExtractedData::new(vec!["aircraft".into(), "wins".into()], vec![]).unwrap();
        assert_eq!(
            render_bytes(&ChartSpec::new(ChartType::Bar, "aircraft", &["wins"]), &empty, &RenderOptions::default()),
            Err(ChartError::EmptyData)
        );
        let neg = ExtractedData::new(
            vec!["k".into(), "v".into()],
            vec![vec![t("a"), Value::Integer(-1)], vec![t("b"), Value::Integer(3)]],
        )
        .unwrap();
        let pie = ChartSpec::new(ChartType::Pie, "k", &["v"]);
        assert!(matches!(
            render_bytes(&pie, &neg, &RenderOptions::default()),
            Err(ChartError::PieDomainError(_))
        ));
        let zero = ExtractedData::new(vec!["k".into(), "v".into()], vec![vec![t("a"), Value::Integer(0)]]).unwrap();
        assert!(matches!(
            render_bytes(&pie, &zero, &RenderOptions::default()),
            Err(ChartError::PieDomainError(_))
        ));
    }

    #[test]
    fn render_writes_file() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("figure.pdf");
        let opts = RenderOptions {
            format: FigureFormat::Pdf,
            ..Default::default()
        };
        let art = render(&ChartSpec::new(ChartType::Pie, "aircraft", &["wins"]), &wins(), &out, &opts).unwrap();
        assert_eq!(art.chart_type, ChartType::Pie);
        let bytes = std::fs::read(&out).unwrap();
        assert!(bytes.starts_with(b"%PDF-1.4"));
        assert!(bytes.ends_with(b"%%EOF\n"));
        let missing = dir.path().join("none.svg");
        assert!(render(&ChartSpec::new(ChartType::Bar, "x", &["wins"]), &wins(), &missing, &opts).is_err());
        assert!(!missing.exists());
    }

    #[test]
    fn infers_chart_type() {
        use ChartType::*;
        let cases = [
            ("List the position of players and the average number of points of players of each position. Visualize by bar chart, and could you sort by the total number in ascending?", Some(Bar)),
            ("Show me about the correlation between Height and Weight in a scatter chart.", Some(Scatter)),
            ("Which room is more popular?", None),
            ("Show a stacked bar of sales by region and year.", Some(StackedBar)),
            ("Draw a pie chart of the share of each team.", Some(Pie)),
            ("What proportion of reservations does each room take?", Some(Pie)),
            ("Plot a line chart of revenue per year.", Some(Line)),
            ("Show the trend as a grouping line chart for each team.", Some(GroupingLine)),
            ("Show a scatter plot of price against rating, grouped by brand.", Some(GroupingScatter)),
            ("Display a histogram of ages.", Some(Bar)),
            ("Who is the online barista?", None),
        ];
        for (q, want) in cases {
            assert_eq!(infer_required_chart_type(q), want, "{q}");
        }
    }
}

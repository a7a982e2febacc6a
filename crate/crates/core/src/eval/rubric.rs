//! The seven rubric metrics, their discrete ranges and level definitions.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    FigCorrectness,
    ChartType,
    Aesthetics,
    AnaCorrectness,
    Alignment,
    Complexity,
    Fluency,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubjectKind {
    Figure,
    Bullet,
}

/// One level of a metric with the guideline text shown to annotators.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Level {
    pub value: f64,
    pub meaning: &'static str,
}

const fn lv(value: f64, meaning: &'static str) -> Level {
    Level { value, meaning }
}

const FIG_CORRECTNESS: &[Level] = &[
    lv(0.0, "Important data is incorrect: wrong, extra or missing data, or wrong axis names."),
    lv(0.5, "Minor errors: mostly correct but missing one or two data points, or showing indexes instead of axis names, without changing the conclusion."),
    lv(1.0, "Information is correct. Colour, small inaccuracies and row order do not count as errors."),
];
const CHART_TYPE: &[Level] = &[
    lv(0.0, "Chart type differs from the one the question asks for."),
    lv(1.0, "Chart type matches the question."),
];
const AESTHETICS: &[Level] = &[
    lv(0.0, "Format problems seriously affect reading."),
    lv(1.0, "Format problems affect understanding to some extent."),
    lv(2.0, "Minor format issues."),
    lv(3.0, "All information is clear."),
];
const ANA_CORRECTNESS: &[Level] = &[
    lv(0.0, "The bullet contains false information."),
    lv(1.0, "All information in the bullet is correct."),
];
const ALIGNMENT: &[Level] = &[
    lv(0.0, "The bullet is irrelevant to the question."),
    lv(1.0, "The bullet is relevant to the question."),
];
const COMPLEXITY: &[Level] = &[
    lv(0.0, "General description obtainable without the data, e.g. what the axes represent."),
    lv(1.0, "Directly visible data points, e.g. \"the quantity on Wednesday reached 50\"."),
    lv(2.0, "Obtained by comparison or calculation: ranges, maxima, sums, trends."),
    lv(3.0, "An insight about the figure's content, typically \"indicates\", \"suggests\" or \"shows\"."),
];
const FLUENCY: &[Level] = &[
    lv(0.0, "Serious grammar errors that significantly affect reading."),
    lv(1.0, "Grammar errors that affect understanding to some extent."),
    lv(2.0, "Minor grammar or spelling errors that do not affect understanding."),
    lv(3.0, "Very smooth, no grammar errors."),
];

impl Metric {
    pub const ALL: [Metric; 7] = [
        Self::FigCorrectness,
        Self::ChartType,
        Self::Aesthetics,
        Self::AnaCorrectness,
        Self::Alignment,
        Self::Complexity,
        Self::Fluency,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::FigCorrectness => "fig_correctness",
            Self::ChartType => "chart_type",
            Self::Aesthetics => "aesthetics",
            Self::AnaCorrectness => "ana_correctness",
            Self::Alignment => "alignment",
            Self::Complexity => "complexity",
            Self::Fluency => "fluency",
        }
    }

    /// Row label used in report tables.
    pub fn label(self) -> &'static str {
        match self {
            Self::FigCorrectness | Self::AnaCorrectness => "Correctness",
            Self::ChartType => "Chart Type",
            Self::Aesthetics => "Aesthetics",
            Self::Alignment => "Alignment",
            Self::Complexity => "Complexity",
            Self::Fluency => "Fluency",
        }
    }

    pub fn subject(self) -> SubjectKind {
        match self {
            Self::FigCorrectness | Self::ChartType | Self::Aesthetics => SubjectKind::Figure,
            _ => SubjectKind::Bullet,
        }
    }

    pub fn levels(self) -> &'static [Level] {
        match self {
            Self::FigCorrectness => FIG_CORRECTNESS,
            Self::ChartType => CHART_TYPE,
            Self::Aesthetics => AESTHETICS,
            Self::AnaCorrectness => ANA_CORRECTNESS,
            Self::Alignment => ALIGNMENT,
            Self::Complexity => COMPLEXITY,
            Self::Fluency => FLUENCY,
        }
    }

    pub fn allowed_values(self) -> Vec<f64> {
        self.levels().iter().map(|l| l.value).collect()
    }

    pub fn max_value(self) -> f64 {
        self.levels().last().map_or(0.0, |l| l.value)
    }

    /// Exact membership; nothing is clamped or snapped.
    pub fn accepts(self, value: f64) -> bool {
        self.levels().iter().any(|l| l.value == value)
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Metric {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        Self::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| format!("unknown metric {s:?}"))
    }
}

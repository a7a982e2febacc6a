//! Prompt builders. All are pure: identical inputs give identical bytes.

use thiserror::Error;

use crate::knowledge::KnowledgeSnippets;
use crate::plan::ChartType;

pub const CODE_INSTRUCTION: &str = "Write Python code to select relevant data and draw the chart. Please save the plot to \"figure.pdf\" and save the label and value shown in the graph to \"data.txt\".";
pub const ANALYSIS_INSTRUCTION: &str = "Generate analysis and insights about the data in 5 bullet points.";
pub const KNOWLEDGE_HEADER: &str = "Online information:";
pub const PLAN_SCHEMA_VERSION: &str = "schema v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PromptKind {
    Code,
    Plan,
    Analysis,
    AnalysisWithKnowledge,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PromptError {
    #[error("prompt slot {0:?} is empty")]
    EmptySlot(&'static str),
}

fn require<'a>(slot: &'static str, value: &'a str) -> Result<&'a str, PromptError> {
    if value.trim().is_empty() {
        Err(PromptError::EmptySlot(slot))
    } else {
        Ok(value)
    }
}

fn trim_block(s: &str) -> &str {
    s.trim_end_matches(['\n', '\r'])
}

pub fn build_code_prompt(question: &str, db_file_name: &str, schema_text: &str) -> Result<String, PromptError> {
    let question = require("question", question)?;
    let db = require("database file name", db_file_name)?;
    let schema = require("database schema", schema_text)?;
    Ok(format!(
        "Question: {question}\n\nconn = sqlite3.connect({db})\n\n{}\n\n{CODE_INSTRUCTION}",
        trim_block(schema)
    ))
}

pub fn chart_constraint(chart: ChartType) -> String {
    format!("The chart type must be {chart}.")
}

pub fn build_plan_prompt(
    question: &str,
    schema_text: &str,
    required_chart: Option<ChartType>,
) -> Result<String, PromptError> {
    let question = require("question", question)?;
    let schema = require("database schema", schema_text)?;
    let types: Vec<&str> = ChartType::ALL.iter().map(|c| c.as_str()).collect();
    let mut out = format!(
        "Question: {question}\n\n{}\n\n\
         Select the data needed to answer the question and describe the chart to draw. \
         Reply with exactly one fenced JSON object (plan {PLAN_SCHEMA_VERSION}):\n\
         ```json\n\
         {{\"sql\": \"<one SQLite SELECT statement>\", \"chart\": {{\"type\": \"<chart type>\", \"x\": \"<column>\", \"y\": [\"<column>\"], \"series\": \"<column, optional>\", \"sort\": {{\"by\": \"<column>\", \"dir\": \"asc|desc\"}}}}}}\n\
         ```\n\
         Chart types: {}.\n\
         x, y, series and sort.by name columns of the SQL result. \
         pie takes one y column and no series; stacked_bar, grouping_line and grouping_scatter need a series and one y column; bar, line and scatter take no series.",
        trim_block(schema),
        types.join(", ")
    );
    if let Some(chart) = required_chart {
        out.push('\n');
        out.push_str(&chart_constraint(chart));
    }
    Ok(out)
}

pub fn build_analysis_prompt(
    question: &str,
    data_txt: &str,
    snippets: Option<&KnowledgeSnippets>,
) -> Result<String, PromptError> {
    let question = require("question", question)?;
    let data = require("extracted data", data_txt)?;
    let mut out = format!("Question: {question}\n\n{}\n\n", trim_block(data));
    if let Some(s) = snippets {
        out.push_str(&knowledge_block(s));
        out.push_str("\n\n");
    }
    out.push_str(ANALYSIS_INSTRUCTION);
    Ok(out)
}

/// `Online information:` followed by one `- ` line per snippet, rank order.
pub fn knowledge_block(snippets: &KnowledgeSnippets) -> String {
    let mut out = String::from(KNOWLEDGE_HEADER);
    for s in &snippets.snippets {
        out.push_str("\n- ");
        out.push_str(&s.text.replace(['\n', '\r'], " "));
    }
    out
}

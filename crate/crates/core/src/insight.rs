//! The analysis step: prompt, model call, and bullet parsing.

use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::executor::{serialize_data, ExtractedData};
use crate::gateway::{GatewayError, LlmGateway, LlmResponse, ModelParams};
use crate::knowledge::KnowledgeSnippets;
use crate::prompt::{build_analysis_prompt, PromptError};

pub const TARGET_BULLETS: usize = 5;
pub const MAX_BULLETS: usize = 10;
pub const ANALYSIS_TAG: &str = "analysis";

static MARKER: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^\s*(?:\d{1,2}[.)]|[-•*·])(?:\s+|$)").unwrap());

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnalysisBullets {
    pub bullets: Vec<String>,
    pub deviation_flag: bool,
}

impl AnalysisBullets {
    fn from_items(items: Vec<String>) -> Result<Self, InsightError> {
        let bullets: Vec<String> = items.into_iter().filter(|b| !b.trim().is_empty()).collect();
        if bullets.is_empty() {
            return Err(InsightError::UnparseableAnalysis("no bullet text found".into()));
        }
        if bullets.len() > MAX_BULLETS {
            return Err(InsightError::UnparseableAnalysis(format!(
                "{} items, more than {MAX_BULLETS}",
                bullets.len()
            )));
        }
        Ok(Self {
            deviation_flag: bullets.len() != TARGET_BULLETS,
            bullets,
        })
    }

    pub fn len(&self) -> usize {
        self.bullets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bullets.is_empty()
    }

    /// `1. ...` through `N. ...`, one per line.
    pub fn to_markdown(&self) -> String {
        self.bullets
            .iter()
            .enumerate()
            .map(|(i, b)| format!("{}. {b}\n", i + 1))
            .collect()
    }
}

#[derive(Debug, Error)]
pub enum InsightError {
    #[error("analysis has no usable bullet structure: {0}")]
    UnparseableAnalysis(String),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

fn squash(lines: &[&str]) -> String {
    lines
        .iter()
        .flat_map(|l| l.split_whitespace())
        .collect::<Vec<_>>()
        .join(" ")
}

/// Split model output into bullets.
///
/// Numbered (`1.`, `2)`) and dashed (`-`, `•`, `*`) items are recognised;
/// text before the first marker and after a blank line that ends the last
/// item is dropped, and wrapped continuation lines are joined. Output with
/// no markers at all is split into blank-line separated paragraphs.
pub fn parse_bullets(text: &str) -> Result<AnalysisBullets, InsightError> {
    let lines: Vec<&str> = text.lines().collect();
    let has_markers = lines.iter().any(|l| MARKER.is_match(l));
    let mut items: Vec<Vec<&str>> = Vec::new();
    if has_markers {
        let mut open = false;
        for line in &lines {
            if let Some(m) = MARKER.find(line) {
                items.push(vec![&line[m.end()..]]);
                open = true;
            } else if line.trim().is_empty() {
                open = false;
            } else if open {
                if let Some(cur) = items.last_mut() {
                    cur.push(line);
                }
            }
        }
    } else {
        let mut cur: Vec<&str> = Vec::new();
        for line in &lines {
            if line.trim().is_empty() {
                if !cur.is_empty() {
                    items.push(std::mem::take(&mut cur));
                }
            } else {
                cur.push(line);
            }
        }
        if !cur.is_empty() {
            items.push(cur);
        }
    }
    AnalysisBullets::from_items(items.iter().map(|i| squash(i)).collect())
}

#[derive(Debug, Clone)]
pub struct Analysis {
    pub bullets: AnalysisBullets,
    pub prompt: String,
    pub raw_response: String,
    pub response: LlmResponse,
}

/// Output of a model call that parsed badly, kept for the run directory.
#[derive(Debug)]
pub struct AnalysisFailure {
    pub prompt: Option<String>,
    pub response: Option<LlmResponse>,
    pub error: InsightError,
}

pub fn generate_analysis(
    question: &str,
    data: &ExtractedData,
    snippets: Option<&KnowledgeSnippets>,
    gateway: &LlmGateway,
    params: &ModelParams,
) -> Result<Analysis, AnalysisFailure> {
    let data_txt = String::from_utf8(serialize_data(data)).expect("serialized data is UTF-8");
    generate_analysis_from_text(question, &data_txt, snippets, gateway, params)
}

/// As [`generate_analysis`], for a `data.txt` whose layout is not known.
pub fn generate_analysis_from_text(
    question: &str,
    data_txt: &str,
    snippets: Option<&KnowledgeSnippets>,
    gateway: &LlmGateway,
    params: &ModelParams,
) -> Result<Analysis, AnalysisFailure> {
    let prompt = build_analysis_prompt(question, data_txt, snippets).map_err(|e| AnalysisFailure {
        prompt: None,
        response: None,
        error: e.into(),
    })?;
    let response = match gateway.complete(&params.request(prompt.clone(), ANALYSIS_TAG)) {
        Ok(r) => r,
        Err(e) => {
            return Err(AnalysisFailure {
                prompt: Some(prompt),
                response: None,
                error: e.into(),
            })
        }
    };
    match parse_bullets(&response.text) {
        Ok(bullets) => Ok(Analysis {
            bullets,
            prompt,
            raw_response: response.text.clone(),
            response,
        }),
        Err(error) => Err(AnalysisFailure {
            prompt: Some(prompt),
            response: Some(response),
            error,
        }),
    }
}

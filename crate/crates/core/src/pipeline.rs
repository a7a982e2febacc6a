//! One task end to end (code or plan generation, execution, analysis) and
//! batches of tasks, with every intermediate artifact persisted.
//!
//! Run directory layout: `<out_dir>/<run_id>/<task_id>/`, created once and
//! never overwritten.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chart::{infer_required_chart_type, render, RenderOptions};
use crate::corpus::TaskSpec;
use crate::executor::{execute_plan, parse_data, serialize_data, ExtractedData};
use crate::gateway::{estimate_cost, BackendKind, BackendMode, LlmGateway, LlmResponse, ModelParams, PriceTable};
use crate::insight::{generate_analysis_from_text, AnalysisFailure};
use crate::knowledge::{formulate_query, KnowledgeSnippets, Retriever, DEFAULT_K};
use crate::plan::{parse_plan, parse_script, validate_plan, ChartType};
use crate::prompt::{build_code_prompt, build_plan_prompt};
use crate::sandbox::{SandboxClient, SandboxJob, SandboxStatus};
use crate::schema::{introspect, render_schema};

pub const CODE_TAG: &str = "code";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PipelineMode {
    #[default]
    Plan,
    Script,
}

impl std::str::FromStr for PipelineMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "plan" => Ok(Self::Plan),
            "script" => Ok(Self::Script),
            _ => Err(format!("unknown mode {s:?} (expected plan or script)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub mode: PipelineMode,
    pub online: bool,
    pub model: ModelParams,
    pub backend_mode: BackendMode,
    pub out_dir: PathBuf,
    pub run_id: String,
    pub retriever_k: usize,
    pub figure: RenderOptions,
    pub price: PriceTable,
}

impl PipelineConfig {
    pub fn new(out_dir: impl Into<PathBuf>, run_id: impl Into<String>) -> Self {
        Self {
            mode: PipelineMode::Plan,
            online: false,
            model: ModelParams::default(),
            backend_mode: BackendMode::Mock,
            out_dir: out_dir.into(),
            run_id: run_id.into(),
            retriever_k: DEFAULT_K,
            figure: RenderOptions::default(),
            price: PriceTable::default(),
        }
    }

    pub fn run_root(&self) -> PathBuf {
        self.out_dir.join(&self.run_id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Ok,
    Step1Failed,
    Step2Failed,
    Step3Failed,
}

impl RunStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Ok => "ok",
            Self::Step1Failed => "step1_failed",
            Self::Step2Failed => "step2_failed",
            Self::Step3Failed => "step3_failed",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StepTimings {
    pub step1_s: f64,
    pub step2_s: f64,
    pub step3_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CallUsage {
    pub tag: String,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub latency_s: f64,
    pub backend: BackendKind,
}

impl CallUsage {
    fn of(tag: &str, r: &LlmResponse) -> Self {
        Self {
            tag: tag.to_string(),
            prompt_tokens: r.prompt_tokens,
            completion_tokens: r.completion_tokens,
            latency_s: r.latency,
            backend: r.backend,
        }
    }

    /// Response carrying just this call's usage, for cost arithmetic.
    pub fn as_response(&self) -> LlmResponse {
        LlmResponse {
            text: String::new(),
            prompt_tokens: self.prompt_tokens,
            completion_tokens: self.completion_tokens,
            latency: self.latency_s,
            backend: self.backend,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepFailure {
    pub step: u8,
    pub kind: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub task_id: String,
    pub run_id: String,
    pub status: RunStatus,
    pub mode: PipelineMode,
    pub online: bool,
    pub required_chart_type: Option<ChartType>,
    /// Chart type of the plan that was rendered (plan mode only).
    pub chart_type: Option<ChartType>,
    pub timings: StepTimings,
    pub calls: Vec<CallUsage>,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub cost_usd: f64,
    pub run_dir: PathBuf,
    /// File names written to `run_dir`, in write order.
    pub artifacts: Vec<String>,
    pub bullet_count: Option<usize>,
    pub deviation_flag: Option<bool>,
    pub error: Option<StepFailure>,
}

impl RunRecord {
    pub fn artifact(&self, name: &str) -> Option<PathBuf> {
        self.artifacts.iter().any(|a| a == name).then(|| self.run_dir.join(name))
    }

    pub fn is_ok(&self) -> bool {
        self.status == RunStatus::Ok
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("task id {0:?} cannot name a directory")]
    BadTaskId(String),
    #[error("run directory {0} already exists")]
    RunDirExists(PathBuf),
    #[error("i/o error on {path}: {reason}")]
    Io { path: PathBuf, reason: String },
}

fn io_err(path: &Path, e: std::io::Error) -> PipelineError {
    PipelineError::Io {
        path: path.to_path_buf(),
        reason: e.to_string(),
    }
}

/// The configured pipeline plus the services it shares across tasks.
pub struct Pipeline {
    config: PipelineConfig,
    gateway: Arc<LlmGateway>,
    retriever: Option<Arc<Retriever>>,
    sandbox: Option<SandboxClient>,
}

impl Pipeline {
    pub fn new(config: PipelineConfig, gateway: Arc<LlmGateway>) -> Self {
        Self {
            config,
            gateway,
            retriever: None,
            sandbox: None,
        }
    }

    pub fn with_retriever(mut self, r: Arc<Retriever>) -> Self {
        self.retriever = Some(r);
        self
    }

    pub fn with_sandbox(mut self, s: SandboxClient) -> Self {
        self.sandbox = Some(s);
        self
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn gateway(&self) -> &LlmGateway {
        &self.gateway
    }

    /// Reject combinations that cannot run.
    pub fn check(&self) -> Result<(), PipelineError> {
        let c = &self.config;
        if c.mode == PipelineMode::Script && self.sandbox.is_none() {
            return Err(PipelineError::Config("script mode needs a sandbox runner".into()));
        }
        if c.online && self.retriever.is_none() {
            return Err(PipelineError::Config("online mode needs a retriever".into()));
        }
        if c.retriever_k == 0 {
            return Err(PipelineError::Config("retriever_k must be at least 1".into()));
        }
        if c.backend_mode != self.gateway.mode() {
            return Err(PipelineError::Config(format!(
                "config says {:?} but the gateway is {:?}",
                c.backend_mode,
                self.gateway.mode()
            )));
        }
        if c.run_id.is_empty() || !is_plain_name(&c.run_id) {
            return Err(PipelineError::Config(format!("run id {:?} cannot name a directory", c.run_id)));
        }
        Ok(())
    }

    pub fn run_task(&self, task: &TaskSpec) -> Result<RunRecord, PipelineError> {
        self.check()?;
        if !is_plain_name(&task.id) {
            return Err(PipelineError::BadTaskId(task.id.clone()));
        }
        let root = self.config.run_root();
        fs::create_dir_all(&root).map_err(|e| io_err(&root, e))?;
        let dir = root.join(&task.id);
        match fs::create_dir(&dir) {
            Ok(()) => {}
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => return Err(PipelineError::RunDirExists(dir)),
            Err(e) => return Err(io_err(&dir, e)),
        }
        let mut run = TaskRun::new(self, task, dir);
        let outcome = run.execute();
        let record = run.finish(outcome);
        let meta = serde_json::to_vec_pretty(&record).expect("record serializes");
        let meta_path = record.run_dir.join("meta.json");
        fs::write(&meta_path, meta).map_err(|e| io_err(&meta_path, e))?;
        Ok(record)
    }

    /// One record per task, in input order. A task whose run directory
    /// cannot be set up is reported as failing at step 1.
    pub fn run_batch(&self, tasks: &[TaskSpec], parallelism: usize) -> Vec<RunRecord> {
        crate::par::map_ordered(tasks, parallelism.max(1), |task| {
            self.run_task(task)
                .unwrap_or_else(|e| self.infrastructure_failure(task, e))
        })
    }

    fn infrastructure_failure(&self, task: &TaskSpec, e: PipelineError) -> RunRecord {
        tracing::error!(task = %task.id, "task not run: {e}");
        RunRecord {
            task_id: task.id.clone(),
            run_id: self.config.run_id.clone(),
            status: RunStatus::Step1Failed,
            mode: self.config.mode,
            online: self.config.online,
            required_chart_type: task.required_chart_type,
            chart_type: None,
            timings: StepTimings::default(),
            calls: Vec::new(),
            prompt_tokens: 0,
            completion_tokens: 0,
            cost_usd: 0.0,
            run_dir: self.config.run_root().join(&task.id),
            artifacts: Vec::new(),
            bullet_count: None,
            deviation_flag: None,
            error: Some(StepFailure {
                step: 1,
                kind: "infrastructure".into(),
                message: e.to_string(),
            }),
        }
    }
}

fn is_plain_name(s: &str) -> bool {
    !s.is_empty() && s != "." && s != ".." && !s.contains(['/', '\\', '\0'])
}

struct Failed {
    step: u8,
    kind: &'static str,
    message: String,
}

fn fail(step: u8, kind: &'static str, e: impl std::fmt::Display) -> Failed {
    Failed {
        step,
        kind,
        message: e.to_string(),
    }
}

/// Mutable state of one task while it runs.
struct TaskRun<'a> {
    p: &'a Pipeline,
    task: &'a TaskSpec,
    dir: PathBuf,
    artifacts: Vec<String>,
    responses: Vec<(String, LlmResponse)>,
    timings: StepTimings,
    required: Option<ChartType>,
    chart_type: Option<ChartType>,
    bullets: Option<(usize, bool)>,
}

impl<'a> TaskRun<'a> {
    fn new(p: &'a Pipeline, task: &'a TaskSpec, dir: PathBuf) -> Self {
        Self {
            p,
            task,
            dir,
            artifacts: Vec::new(),
            responses: Vec::new(),
            timings: StepTimings::default(),
            required: task.required_chart_type.or_else(|| infer_required_chart_type(&task.question)),
            chart_type: None,
            bullets: None,
        }
    }

    fn write(&mut self, name: &str, bytes: impl AsRef<[u8]>) -> Result<(), Failed> {
        let path = self.dir.join(name);
        fs::write(&path, bytes).map_err(|e| fail(0, "io", format!("{}: {e}", path.display())))?;
        self.artifacts.push(name.to_string());
        Ok(())
    }

    fn execute(&mut self) -> Result<(), Failed> {
        let q = self.task.question.clone();
        self.write("question.txt", &q)?;

        let t = Instant::now();
        let step1 = self.step1();
        self.timings.step1_s = t.elapsed().as_secs_f64();
        let artifact = step1?;

        let t = Instant::now();
        let step2 = self.step2(artifact);
        self.timings.step2_s = t.elapsed().as_secs_f64();
        let (data_txt, data) = step2?;

        let t = Instant::now();
        let step3 = self.step3(&data_txt, data.as_ref());
        self.timings.step3_s = t.elapsed().as_secs_f64();
        step3
    }

    fn step1(&mut self) -> Result<Step1Output, Failed> {
        let schema = introspect(&self.task.db_file).map_err(|e| fail(1, "schema", e))?;
        let schema_text = render_schema(&schema);
        let cfg = &self.p.config;
        let prompt = match cfg.mode {
            PipelineMode::Plan => build_plan_prompt(&self.task.question, &schema_text, self.required),
            PipelineMode::Script => build_code_prompt(&self.task.question, &schema.db_file_name, &schema_text),
        }
        .map_err(|e| fail(1, "prompt", e))?;
        self.write("prompt_code.txt", &prompt)?;
        let resp = self
            .p
            .gateway
            .complete(&cfg.model.request(prompt, CODE_TAG))
            .map_err(|e| fail(1, "gateway", e))?;
        let text = resp.text.clone();
        self.responses.push((CODE_TAG.to_string(), resp));
        self.write("llm_code_response.txt", &text)?;
        match cfg.mode {
            PipelineMode::Plan => {
                let plan = parse_plan(&text).map_err(|e| fail(1, "plan_parse", e))?;
                self.write("plan.json", serde_json::to_vec_pretty(&plan).expect("plan serializes"))?;
                Ok(Step1Output::Plan(plan, schema))
            }
            PipelineMode::Script => {
                let script = parse_script(&text).map_err(|e| fail(1, "script_parse", e))?;
                self.write("script.py_text", &script.code)?;
                Ok(Step1Output::Script(script.code))
            }
        }
    }

    /// Returns the `data.txt` text and, when it follows the canonical
    /// layout, its parsed form.
    fn step2(&mut self, input: Step1Output) -> Result<(String, Option<ExtractedData>), Failed> {
        match input {
            Step1Output::Plan(plan, schema) => {
                let validated = validate_plan(&plan, &schema).map_err(|e| fail(2, "plan_validation", e))?;
                self.chart_type = Some(plan.chart.chart_type);
                let data = execute_plan(&validated, &self.task.db_file).map_err(|e| fail(2, "sql", e))?;
                let bytes = serialize_data(&data);
                self.write("data.txt", &bytes)?;
                let fig_opts = self.p.config.figure;
                let name = fig_opts.format.file_name();
                render(&plan.chart, &data, &self.dir.join(name), &fig_opts).map_err(|e| fail(2, "chart", e))?;
                self.artifacts.push(name.to_string());
                Ok((String::from_utf8(bytes).expect("data is UTF-8"), Some(data)))
            }
            Step1Output::Script(code) => {
                let client = self.p.sandbox.as_ref().expect("checked in Pipeline::check");
                let mut job = SandboxJob::new(code, &self.task.db_file);
                job.db_alias = Some(self.task.db_file_name());
                let res = client.run_script(&job).map_err(|e| fail(2, "sandbox", e))?;
                if res.status != SandboxStatus::Ok {
                    let tail: String = res.stderr.chars().rev().take(2000).collect::<Vec<_>>().into_iter().rev().collect();
                    return Err(fail(2, "sandbox", format!("{:?}: {tail}", res.status)));
                }
                let data_bytes = res.data_txt.unwrap_or_default();
                let figure = res.figure.unwrap_or_default();
                self.write("data.txt", &data_bytes)?;
                self.write("figure.pdf", &figure)?;
                let text = String::from_utf8(data_bytes).map_err(|_| fail(2, "data", "data.txt is not UTF-8"))?;
                let parsed = parse_data(text.as_bytes()).ok();
                Ok((text, parsed))
            }
        }
    }

    fn step3(&mut self, data_txt: &str, data: Option<&ExtractedData>) -> Result<(), Failed> {
        let cfg = &self.p.config;
        let snippets: Option<KnowledgeSnippets> = if cfg.online {
            let retriever = self.p.retriever.as_ref().expect("checked in Pipeline::check");
            let empty;
            let data = match data {
                Some(d) => d,
                None => {
                    empty = ExtractedData::new(vec!["data".into()], Vec::new()).expect("valid header");
                    &empty
                }
            };
            let query = formulate_query(&self.task.question, data);
            let s = retriever
                .retrieve(&query, cfg.retriever_k)
                .map_err(|e| fail(3, "retrieval", e))?;
            self.write("snippets.json", serde_json::to_vec_pretty(&s).expect("snippets serialize"))?;
            Some(s)
        } else {
            None
        };
        let result = generate_analysis_from_text(&self.task.question, data_txt, snippets.as_ref(), &self.p.gateway, &cfg.model);
        match result {
            Ok(a) => {
                self.write("prompt_analysis.txt", &a.prompt)?;
                self.responses.push(("analysis".to_string(), a.response.clone()));
                self.write("llm_analysis_response.txt", &a.raw_response)?;
                self.write("analysis.md", a.bullets.to_markdown())?;
                self.bullets = Some((a.bullets.len(), a.bullets.deviation_flag));
                Ok(())
            }
            Err(AnalysisFailure {
                prompt,
                response,
                error,
            }) => {
                if let Some(p) = prompt {
                    self.write("prompt_analysis.txt", &p)?;
                }
                if let Some(r) = response {
                    self.write("llm_analysis_response.txt", &r.text)?;
                    self.responses.push(("analysis".to_string(), r));
                }
                Err(fail(3, "analysis", error))
            }
        }
    }

    fn finish(self, outcome: Result<(), Failed>) -> RunRecord {
        let cfg = &self.p.config;
        let (status, error) = match outcome {
            Ok(()) => (RunStatus::Ok, None),
            Err(f) => {
                // An artifact write failure is charged to the step that was running.
                let step = if f.step == 0 { self.current_step() } else { f.step };
                let status = match step {
                    1 => RunStatus::Step1Failed,
                    2 => RunStatus::Step2Failed,
                    _ => RunStatus::Step3Failed,
                };
                tracing::warn!(task = %self.task.id, step, kind = f.kind, "{}", f.message);
                (
                    status,
                    Some(StepFailure {
                        step,
                        kind: f.kind.to_string(),
                        message: f.message,
                    }),
                )
            }
        };
        let calls: Vec<CallUsage> = self.responses.iter().map(|(t, r)| CallUsage::of(t, r)).collect();
        let cost = estimate_cost(self.responses.iter().map(|(_, r)| r), &cfg.price);
        let mut record = RunRecord {
            task_id: self.task.id.clone(),
            run_id: cfg.run_id.clone(),
            status,
            mode: cfg.mode,
            online: cfg.online,
            required_chart_type: self.required,
            chart_type: self.chart_type,
            timings: self.timings,
            prompt_tokens: calls.iter().map(|c| c.prompt_tokens).sum(),
            completion_tokens: calls.iter().map(|c| c.completion_tokens).sum(),
            calls,
            cost_usd: cost,
            run_dir: self.dir,
            artifacts: self.artifacts,
            bullet_count: self.bullets.map(|b| b.0),
            deviation_flag: self.bullets.map(|b| b.1),
            error,
        };
        record.artifacts.push("meta.json".to_string());
        record
    }

    fn current_step(&self) -> u8 {
        if self.artifacts.iter().any(|a| a == "data.txt") {
            3
        } else if self.artifacts.iter().any(|a| a == "llm_code_response.txt") {
            2
        } else {
            1
        }
    }
}

enum Step1Output {
    Plan(crate::plan::AnalysisPlan, crate::schema::DatabaseSchema),
    Script(String),
}

// ---------------------------------------------------------------- batch summary

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchSummary {
    pub run_id: String,
    pub tasks: usize,
    pub by_status: BTreeMap<String, usize>,
    pub total_cost_usd: f64,
    pub mean_step1_s: f64,
    pub mean_step2_s: f64,
    pub mean_step3_s: f64,
    pub failed: Vec<String>,
}

impl BatchSummary {
    pub fn all_ok(&self) -> bool {
        self.failed.is_empty()
    }
}

pub fn summarize(run_id: &str, records: &[RunRecord]) -> BatchSummary {
    let mut by_status: BTreeMap<String, usize> = [
        RunStatus::Ok,
        RunStatus::Step1Failed,
        RunStatus::Step2Failed,
        RunStatus::Step3Failed,
    ]
    .into_iter()
    .map(|s| (s.as_str().to_string(), 0))
    .collect();
    for r in records {
        *by_status.entry(r.status.as_str().to_string()).or_default() += 1;
    }
    let n = records.len();
    let mean = |f: fn(&RunRecord) -> f64| {
        if n == 0 {
            0.0
        } else {
            records.iter().map(f).sum::<f64>() / n as f64
        }
    };
    BatchSummary {
        run_id: run_id.to_string(),
        tasks: n,
        by_status,
        total_cost_usd: records.iter().map(|r| r.cost_usd).sum(),
        mean_step1_s: mean(|r| r.timings.step1_s),
        mean_step2_s: mean(|r| r.timings.step2_s),
        mean_step3_s: mean(|r| r.timings.step3_s),
        failed: records.iter().filter(|r| !r.is_ok()).map(|r| r.task_id.clone()).collect(),
    }
}

/// Load every task's `meta.json` under a run root, sorted by task id.
pub fn load_run_records(run_root: &Path) -> Result<Vec<RunRecord>, PipelineError> {
    let mut out = Vec::new();
    let entries = fs::read_dir(run_root).map_err(|e| io_err(run_root, e))?;
    for entry in entries {
        let entry = entry.map_err(|e| io_err(run_root, e))?;
        let meta = entry.path().join("meta.json");
        if !meta.is_file() {
            continue;
        }
        let raw = fs::read(&meta).map_err(|e| io_err(&meta, e))?;
        let rec: RunRecord = serde_json::from_slice(&raw).map_err(|e| PipelineError::Io {
            path: meta.clone(),
            reason: e.to_string(),
        })?;
        out.push(rec);
    }
    out.sort_by(|a, b| a.task_id.cmp(&b.task_id));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Difficulty;
    use crate::gateway::MockScript;
    use crate::knowledge::{CannedBackend, SearchHit};

    fn fixture() -> (tempfile::TempDir, TaskSpec) {
        let dir = tempfile::tempdir().unwrap();
        let db = dir.path().join("wins.sqlite");
        let c = rusqlite::Connection::open(&db).unwrap();
        c.execute_batch(
            "CREATE TABLE wins (aircraft TEXT);
             INSERT INTO wins VALUES ('R22'), ('R22'), ('Mi26'), ('Mi26'), ('CH53');",
        )
        .unwrap();
        let task = TaskSpec {
            id: "t1".into(),
            question: "How many wins does each aircraft have? Show a bar chart.".into(),
            db_file: db,
            required_chart_type: None,
            difficulty: Difficulty::Easy,
            domain: "aviation".into(),
            gold_sql: None,
            gold_bullets: None,
        };
        (dir, task)
    }

    const PLAN: &str = "```json\n{\"sql\": \"SELECT aircraft, COUNT(*) AS wins FROM wins GROUP BY aircraft ORDER BY wins DESC\", \"chart\": {\"type\": \"bar\", \"x\": \"aircraft\", \"y\": [\"wins\"]}}\n```";
    const BULLETS: &str = "1. a\n2. b\n3. c\n4. d\n5. e";

    fn pipeline(dir: &Path, script: MockScript) -> Pipeline {
        Pipeline::new(PipelineConfig::new(dir.join("runs"), "r1"), Arc::new(LlmGateway::mock(script)))
    }

    #[test]
    fn plan_mode_writes_all_artifacts() {
        let (dir, task) = fixture();
        let p = pipeline(dir.path(), MockScript::new().with("code", PLAN).with("analysis", BULLETS));
        let rec = p.run_task(&task).unwrap();
        assert_eq!(rec.status, RunStatus::Ok, "{:?}", rec.error);
        for name in [
            "question.txt",
            "prompt_code.txt",
            "llm_code_response.txt",
            "plan.json",
            "data.txt",
            "figure.svg",
            "prompt_analysis.txt",
            "llm_analysis_response.txt",
            "analysis.md",
            "meta.json",
        ] {
            assert!(rec.run_dir.join(name).is_file(), "{name}");
        }
        assert!(!rec.run_dir.join("snippets.json").exists());
        assert_eq!(rec.chart_type, Some(ChartType::Bar));
        assert_eq!(rec.required_chart_type, Some(ChartType::Bar));
        assert_eq!(
            fs::read_to_string(rec.run_dir.join("data.txt")).unwrap(),
            "aircraft\twins\nR22\t2\nMi26\t2\nCH53\t1\n"
        );
        assert_eq!(rec.calls.len(), 2);
        let recomputed = estimate_cost(rec.calls.iter().map(CallUsage::as_response).collect::<Vec<_>>().iter(), &PriceTable::default());
        assert!((rec.cost_usd - recomputed).abs() < 1e-12);
        let meta: RunRecord = serde_json::from_slice(&fs::read(rec.run_dir.join("meta.json")).unwrap()).unwrap();
        assert_eq!((meta.status, &meta.artifacts, meta.calls.len()), (rec.status, &rec.artifacts, 2));
    }

    #[test]
    fn run_dir_is_write_once() {
        let (dir, task) = fixture();
        let p = pipeline(dir.path(), MockScript::new().with("code", PLAN).with("analysis", BULLETS));
        p.run_task(&task).unwrap();
        let before = fs::read(p.config().run_root().join("t1/analysis.md")).unwrap();
        assert!(matches!(p.run_task(&task), Err(PipelineError::RunDirExists(_))));
        assert_eq!(fs::read(p.config().run_root().join("t1/analysis.md")).unwrap(), before);
    }

    #[test]
    fn failures_map_to_steps() {
        let (dir, task) = fixture();
        let p = pipeline(dir.path(), MockScript::new().with("code", "no plan here").with("analysis", BULLETS));
        let rec = p.run_task(&task).unwrap();
        assert_eq!(rec.status, RunStatus::Step1Failed);
        assert!(rec.artifact("llm_code_response.txt").is_some());

        let bad = PLAN.replace("FROM wins", "FROM losses");
        let p = Pipeline::new(
            PipelineConfig::new(dir.path().join("runs"), "r2"),
            Arc::new(LlmGateway::mock(MockScript::new().with("code", bad).with("analysis", BULLETS))),
        );
        let rec = p.run_task(&task).unwrap();
        assert_eq!(rec.status, RunStatus::Step2Failed);
        assert_eq!(rec.error.as_ref().unwrap().kind, "plan_validation");

        let p = Pipeline::new(
            PipelineConfig::new(dir.path().join("runs"), "r3"),
            Arc::new(LlmGateway::mock(MockScript::new().with("code", PLAN))),
        );
        let rec = p.run_task(&task).unwrap();
        assert_eq!(rec.status, RunStatus::Step3Failed);
        assert!(rec.artifact("data.txt").is_some());
        assert!(rec.artifact("prompt_analysis.txt").is_some());
        assert!(rec.artifact("analysis.md").is_none());
        assert!(rec.run_dir.join("meta.json").is_file());
    }

    #[test]
    fn online_adds_snippets() {
        let (dir, task) = fixture();
        let hits = vec![SearchHit {
            text: "Robinson is a helicopter maker.".into(),
            url: "https://example.org".into(),
        }];
        let backend = Arc::new(CannedBackend::new([("*".to_string(), hits)].into_iter().collect()));
        let retriever = Arc::new(Retriever::new(backend));
        let mut cfg = PipelineConfig::new(dir.path().join("runs"), "on");
        cfg.online = true;
        let p = Pipeline::new(cfg, Arc::new(LlmGateway::mock(MockScript::new().with("code", PLAN).with("analysis", BULLETS))))
            .with_retriever(retriever.clone());
        let rec = p.run_task(&task).unwrap();
        assert!(rec.is_ok());
        assert_eq!(retriever.interactions(), 1);
        let prompt = fs::read_to_string(rec.run_dir.join("prompt_analysis.txt")).unwrap();
        assert!(prompt.contains("Online information:\n- Robinson is a helicopter maker."));
        assert!(rec.run_dir.join("snippets.json").is_file());
    }

    #[test]
    fn config_checks() {
        let (dir, task) = fixture();
        let mut cfg = PipelineConfig::new(dir.path().join("runs"), "x");
        cfg.online = true;
        let p = Pipeline::new(cfg, Arc::new(LlmGateway::mock(MockScript::new())));
        assert!(matches!(p.run_task(&task), Err(PipelineError::Config(_))));
        let mut cfg = PipelineConfig::new(dir.path().join("runs"), "x");
        cfg.mode = PipelineMode::Script;
        let p = Pipeline::new(cfg, Arc::new(LlmGateway::mock(MockScript::new())));
        assert!(matches!(p.run_task(&task), Err(PipelineError::Config(_))));
        let p = Pipeline::new(PipelineConfig::new(dir.path().join("runs"), "../x"), Arc::new(LlmGateway::mock(MockScript::new())));
        assert!(matches!(p.run_task(&task), Err(PipelineError::Config(_))));
        assert!(!dir.path().join("runs").exists());
    }

    #[cfg(unix)]
    #[test]
    fn script_mode_uses_sandbox_outputs() {
        use base64::Engine;
        let (dir, task) = fixture();
        let enc = |b: &[u8]| base64::engine::general_purpose::STANDARD.encode(b);
        let reply = format!(
            r#"{{"status":"ok","stdout":"","stderr":"","wall_time_s":0.1,"data_txt_b64":"{}","figure_b64":"{}"}}"#,
            enc(b"aircraft\twins\nR22\t2\n"),
            enc(b"%PDF-1.4 fake")
        );
        let reply_path = dir.path().join("reply.json");
        fs::write(&reply_path, reply).unwrap();
        let runner = SandboxClient::new("sh").with_args(["-c".to_string(), format!("cat >/dev/null; cat '{}'", reply_path.display())]);
        let mut cfg = PipelineConfig::new(dir.path().join("runs"), "s");
        cfg.mode = PipelineMode::Script;
        let code = "```python\nimport sqlite3\nconn = sqlite3.connect('wins.sqlite')\n```";
        let p = Pipeline::new(cfg, Arc::new(LlmGateway::mock(MockScript::new().with("code", code).with("analysis", BULLETS))))
            .with_sandbox(runner);
        let rec = p.run_task(&task).unwrap();
        assert!(rec.is_ok(), "{:?}", rec.error);
        let prompt = fs::read_to_string(rec.run_dir.join("prompt_code.txt")).unwrap();
        assert!(prompt.contains("conn = sqlite3.connect(wins.sqlite)"));
        assert!(prompt.ends_with("save the label and value shown in the graph to \"data.txt\"."));
        assert_eq!(fs::read_to_string(rec.run_dir.join("script.py_text")).unwrap(), "import sqlite3\nconn = sqlite3.connect('wins.sqlite')");
        assert_eq!(fs::read(rec.run_dir.join("figure.pdf")).unwrap(), b"%PDF-1.4 fake");
        assert!(fs::read_to_string(rec.run_dir.join("prompt_analysis.txt")).unwrap().contains("R22\t2"));
    }

    #[test]
    fn batch_preserves_order_and_isolates_failures() {
        let (dir, task) = fixture();
        let mut tasks: Vec<TaskSpec> = (0..6)
            .map(|i| TaskSpec {
                id: format!("t{i}"),
                ..task.clone()
            })
            .collect();
        tasks[3].id = "../escape".into();
        let p = pipeline(dir.path(), MockScript::new().with("code", PLAN).with("analysis", BULLETS));
        let recs = p.run_batch(&tasks, 4);
        assert_eq!(recs.iter().map(|r| r.task_id.as_str()).collect::<Vec<_>>(), ["t0", "t1", "t2", "../escape", "t4", "t5"]);
        assert_eq!(recs[3].status, RunStatus::Step1Failed);
        assert_eq!(recs.iter().filter(|r| r.is_ok()).count(), 5);
        let s = summarize("r1", &recs);
        assert_eq!(s.by_status["ok"], 5);
        assert_eq!(s.by_status["step1_failed"], 1);
        assert_eq!(s.failed, ["../escape"]);
        assert!(p.run_batch(&[], 8).is_empty());
        let loaded = load_run_records(&p.config().run_root()).unwrap();
        assert_eq!(loaded.len(), 5);
    }
}

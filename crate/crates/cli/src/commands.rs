use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use analyst_core::chart::RenderOptions;
use analyst_core::corpus::{import_nvbench, load_corpus, select_tasks, Corpus};
use analyst_core::eval::cost::{reference_annotation_rates, reference_salary_rows};
use analyst_core::eval::report::{
    comparison_markdown, cost_markdown, mean_model_cost, metric_table_markdown, model_row, scorecard_metric_table,
};
use analyst_core::eval::{auto_scores_opt, ingest_annotations, merge_annotations, CostModel, Scorecard};
use analyst_core::executor::execute_sql;
use analyst_core::gateway::{BackendMode, Cassette, HttpCompleter, LlmGateway, MockScript, ModelParams, PriceTable};
use analyst_core::knowledge::{CannedBackend, HttpSearchBackend, Retriever, SearchBackend, DEFAULT_K};
use analyst_core::pipeline::{summarize, BatchSummary, Pipeline, PipelineConfig, PipelineMode, RunRecord};
use analyst_core::sandbox::SandboxClient;
use analyst_core::{Difficulty, TaskFilter, TaskSpec};
use anyhow::{anyhow, bail, Context, Result};
use clap::CommandFactory;

use crate::config::{load_file_config, FileConfig};
use crate::{BatchArgs, Cli, Command, EvalArgs, ImportArgs, PipelineArgs, ReportArgs, RunArgs};

pub enum Outcome {
    Success,
    TaskFailed,
}

pub fn dispatch(cli: &Cli) -> Result<Outcome> {
    let file = load_file_config(cli.config.as_deref())?;
    match &cli.command {
        Command::Run(a) => cmd_run(a, &file),
        Command::Batch(a) => cmd_batch(a, &file),
        Command::Eval(a) => cmd_eval(a, &file),
        Command::Report(a) => cmd_report(a),
        Command::CorpusImport(a) => cmd_import(a),
    }
}

fn parse_opt<T: std::str::FromStr<Err = String>>(key: &str, v: Option<&String>) -> Result<Option<T>> {
    v.map(|s| s.parse::<T>().map_err(|e| anyhow!("config {key}: {e}"))).transpose()
}

fn default_run_id() -> String {
    chrono::Local::now().format("run-%Y%m%d-%H%M%S").to_string()
}

/// Flags over file values over defaults, then the services each
/// setting implies.
pub fn build_pipeline(a: &PipelineArgs, file: &FileConfig) -> Result<Pipeline> {
    let mode = match a.mode {
        Some(m) => m,
        None => parse_opt::<PipelineMode>("mode", file.mode.as_ref())?.unwrap_or_default(),
    };
    let backend = match a.backend {
        Some(b) => b,
        None => parse_opt::<BackendMode>("backend", file.backend.as_ref())?.unwrap_or(BackendMode::Live),
    };
    let online = !a.offline && (a.online || file.online.unwrap_or(false));
    let figure_format = match a.figure_format {
        Some(f) => f,
        None => parse_opt("figure_format", file.figure_format.as_ref())?.unwrap_or_default(),
    };
    let defaults = ModelParams::default();
    let model = ModelParams {
        model_id: a.model.clone().or_else(|| file.model.clone()).unwrap_or(defaults.model_id),
        temperature: a.temperature.or(file.temperature).unwrap_or(defaults.temperature),
        max_tokens: a.max_tokens.or(file.max_tokens).unwrap_or(defaults.max_tokens),
    };
    let figure_defaults = RenderOptions::default();
    let default_price = PriceTable::default();
    let config = PipelineConfig {
        mode,
        online,
        model,
        backend_mode: backend,
        out_dir: a
            .out_dir
            .clone()
            .or_else(|| file.out_dir.clone())
            .unwrap_or_else(|| PathBuf::from("runs")),
        run_id: a.run_id.clone().or_else(|| file.run_id.clone()).unwrap_or_else(default_run_id),
        retriever_k: a.top_k.or(file.top_k).unwrap_or(DEFAULT_K),
        figure: RenderOptions {
            format: figure_format,
            width: a.figure_width.or(file.figure_width).unwrap_or(figure_defaults.width),
            height: a.figure_height.or(file.figure_height).unwrap_or(figure_defaults.height),
        },
        price: PriceTable {
            prompt_per_1k: a
                .prompt_price
                .or(file.prompt_price_per_1k)
                .unwrap_or(default_price.prompt_per_1k),
            completion_per_1k: a
                .completion_price
                .or(file.completion_price_per_1k)
                .unwrap_or(default_price.completion_per_1k),
        },
    };

    let cassette = a.cassette.clone().or_else(|| file.cassette.clone());
    let gateway = match backend {
        BackendMode::Mock => {
            let path = a
                .mock_script
                .clone()
                .or_else(|| file.mock_script.clone())
                .ok_or_else(|| anyhow!("--backend mock needs --mock-script"))?;
            LlmGateway::mock(MockScript::load(&path)?)
        }
        BackendMode::Replay => {
            let path = cassette.ok_or_else(|| anyhow!("--backend replay needs --cassette"))?;
            LlmGateway::replay(Cassette::load(&path)?)
        }
        BackendMode::Record => {
            let path = cassette.ok_or_else(|| anyhow!("--backend record needs --cassette"))?;
            LlmGateway::record(Arc::new(HttpCompleter::from_env()?), Some(path))
        }
        BackendMode::Live => LlmGateway::live(Arc::new(HttpCompleter::from_env()?)),
    };
    let mut pipeline = Pipeline::new(config, Arc::new(gateway));

    if online {
        let spec = a
            .retriever
            .clone()
            .or_else(|| file.retriever.clone())
            .ok_or_else(|| anyhow!("--online needs --retriever <canned.json|http>"))?;
        let backend: Arc<dyn SearchBackend> = if spec == "http" {
            Arc::new(HttpSearchBackend::from_env()?)
        } else {
            Arc::new(CannedBackend::load(Path::new(&spec))?)
        };
        let mut retriever = Retriever::new(backend);
        if let Some(cache) = a.search_cache.clone().or_else(|| file.search_cache.clone()) {
            retriever = retriever.with_cache_file(cache)?;
        }
        pipeline = pipeline.with_retriever(Arc::new(retriever));
    }
    if mode == PipelineMode::Script {
        let cmd = a
            .sandbox_cmd
            .clone()
            .or_else(|| file.sandbox_cmd.clone())
            .ok_or_else(|| anyhow!("--mode script needs --sandbox-cmd"))?;
        let client = SandboxClient::from_command_line(&cmd).ok_or_else(|| anyhow!("--sandbox-cmd is empty"))?;
        pipeline = pipeline.with_sandbox(client);
    }
    pipeline.check()?;
    Ok(pipeline)
}

fn corpus_path(flag: &Option<PathBuf>, file: &FileConfig) -> Option<PathBuf> {
    flag.clone().or_else(|| file.corpus.clone())
}

fn load(path: &Path) -> Result<Corpus> {
    load_corpus(path).with_context(|| format!("loading corpus {}", path.display()))
}

fn usage(sub: &str) -> String {
    let mut cmd = Cli::command();
    cmd.find_subcommand_mut(sub)
        .map(|c| c.render_usage().to_string())
        .unwrap_or_default()
}

fn print_record(r: &RunRecord) {
    println!("task {}: {}", r.task_id, r.status.as_str());
    println!("run dir: {}", r.run_dir.display());
    for a in &r.artifacts {
        println!("  {}", r.run_dir.join(a).display());
    }
    if let Some(e) = &r.error {
        println!("failed at step {} ({}): {}", e.step, e.kind, e.message);
    }
}

fn cmd_run(a: &RunArgs, file: &FileConfig) -> Result<Outcome> {
    let task: TaskSpec = match (&a.task, &a.question, &a.db) {
        (Some(id), _, _) => {
            let path = corpus_path(&a.corpus, file).ok_or_else(|| anyhow!("--task needs --corpus"))?;
            load(&path)?.get(id)?.clone()
        }
        (None, Some(q), Some(db)) => {
            if !db.is_file() {
                bail!("database {} does not exist", db.display());
            }
            TaskSpec {
                id: a.task_id.clone().unwrap_or_else(|| "adhoc".into()),
                question: q.clone(),
                db_file: db.clone(),
                required_chart_type: a.chart_type,
                difficulty: Difficulty::Medium,
                domain: db
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_default(),
                gold_sql: None,
                gold_bullets: None,
            }
        }
        _ => bail!("run needs --question and --db, or --task with --corpus\n\n{}", usage("run")),
    };
    let pipeline = build_pipeline(&a.pipeline, file)?;
    let dir = pipeline.config().run_root().join(&task.id);
    if dir.exists() {
        bail!("run directory {} already exists; pick another --run-id", dir.display());
    }
    let record = pipeline.run_task(&task)?;
    print_record(&record);
    Ok(if record.is_ok() {
        Outcome::Success
    } else {
        Outcome::TaskFailed
    })
}

fn cmd_batch(a: &BatchArgs, file: &FileConfig) -> Result<Outcome> {
    let path = corpus_path(&a.corpus, file).ok_or_else(|| anyhow!("batch needs --corpus\n\n{}", usage("batch")))?;
    let corpus = load(&path)?;
    let filter = TaskFilter {
        chart_type: a.chart_type,
        difficulty: a.difficulty,
        domain: a.domain.clone(),
        ids: a.ids.clone(),
        count: a.count,
        seed: a.seed,
    };
    let tasks = select_tasks(&corpus, &filter);
    let pipeline = build_pipeline(&a.pipeline, file)?;
    let root = pipeline.config().run_root();
    if root.exists() {
        bail!("run directory {} already exists; pick another --run-id", root.display());
    }
    fs::create_dir_all(&root).with_context(|| format!("creating {}", root.display()))?;
    let parallelism = a
        .parallelism
        .or(file.parallelism)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let records = pipeline.run_batch(&tasks, parallelism);
    let summary: BatchSummary = summarize(&pipeline.config().run_id, &records);
    let out = root.join("batch_summary.json");
    fs::write(&out, serde_json::to_vec_pretty(&summary)?).with_context(|| format!("writing {}", out.display()))?;
    for r in &records {
        println!("{}\t{}", r.task_id, r.status.as_str());
    }
    println!(
        "{} tasks, {} ok, total cost {:.4} USD; summary at {}",
        summary.tasks,
        summary.by_status.get("ok").copied().unwrap_or(0),
        summary.total_cost_usd,
        out.display()
    );
    Ok(if summary.all_ok() {
        Outcome::Success
    } else {
        Outcome::TaskFailed
    })
}

fn cmd_eval(a: &EvalArgs, file: &FileConfig) -> Result<Outcome> {
    let out = a.run_dir.join("scorecards.json");
    if out.exists() && !a.force {
        bail!("{} already exists; pass --force to replace it", out.display());
    }
    let path = corpus_path(&a.corpus, file).ok_or_else(|| anyhow!("eval needs --corpus for gold SQL"))?;
    let corpus = load(&path)?;
    let annotations = match a.annotations.clone().or_else(|| file.annotations.clone()) {
        Some(p) => ingest_annotations(&p).with_context(|| format!("annotation file {}", p.display()))?,
        None => Vec::new(),
    };
    let records = analyst_core::pipeline::load_run_records(&a.run_dir)?;
    if records.is_empty() {
        bail!("no task runs under {}", a.run_dir.display());
    }
    let mut cards: Vec<Scorecard> = Vec::with_capacity(records.len());
    for r in &records {
        let task = corpus.get(&r.task_id)?;
        let gold = match &task.gold_sql {
            Some(sql) => match execute_sql(sql, &task.db_file) {
                Ok(d) => Some(d),
                Err(e) => {
                    tracing::warn!(task = %task.id, "gold SQL failed: {e}");
                    None
                }
            },
            None => None,
        };
        cards.push(auto_scores_opt(r, task, gold.as_ref()));
    }
    for id in merge_annotations(&mut cards, &annotations) {
        tracing::warn!(task = %id, "annotations for a task with no run");
    }
    fs::write(&out, serde_json::to_vec_pretty(&cards)?).with_context(|| format!("writing {}", out.display()))?;
    println!("{} scorecards written to {}", cards.len(), out.display());
    Ok(Outcome::Success)
}

fn cmd_report(a: &ReportArgs) -> Result<Outcome> {
    if let Some(out) = &a.out {
        if out.exists() && !a.force {
            bail!("{} already exists; pass --force to replace it", out.display());
        }
    }
    let mut sets: Vec<(String, Vec<Scorecard>)> = Vec::new();
    for p in &a.scorecards {
        let raw = fs::read(p).with_context(|| format!("reading {}", p.display()))?;
        let cards: Vec<Scorecard> = serde_json::from_slice(&raw).with_context(|| format!("parsing {}", p.display()))?;
        let label = cards.first().map(|c| c.run_id.clone()).unwrap_or_else(|| p.display().to_string());
        sets.push((label, cards));
    }
    let all: Vec<Scorecard> = sets.iter().flat_map(|(_, c)| c.iter().cloned()).collect();
    let mut md = String::new();
    md.push_str("## Scores by annotator group\n\n");
    md.push_str(&metric_table_markdown(&scorecard_metric_table(&all)));
    md.push_str("\n## Comparison\n\n");
    let rows: Vec<_> = sets.iter().map(|(label, cards)| model_row(label, cards)).collect();
    md.push_str(&comparison_markdown(&rows));
    md.push_str("\nCells marked * include automatic scores.\n");
    md.push_str("\n## Cost per instance\n\n");
    md.push_str(&cost_markdown(
        &CostModel::default(),
        &reference_salary_rows(),
        &reference_annotation_rates(),
        "Model",
        mean_model_cost(&all),
    )?);
    match &a.out {
        Some(out) => fs::write(out, &md).with_context(|| format!("writing {}", out.display()))?,
        None => print!("{md}"),
    }
    Ok(Outcome::Success)
}

fn cmd_import(a: &ImportArgs) -> Result<Outcome> {
    if a.out.exists() && !a.force {
        bail!("{} already exists; pass --force to replace it", a.out.display());
    }
    let (manifest, report) = import_nvbench(&a.nvbench, &a.databases)?;
    for (id, reason) in &report.skipped {
        tracing::warn!(entry = %id, "skipped: {reason}");
    }
    fs::write(&a.out, serde_json::to_vec_pretty(&manifest)?).with_context(|| format!("writing {}", a.out.display()))?;
    println!(
        "imported {} tasks, skipped {}; manifest at {}",
        report.imported,
        report.skipped.len(),
        a.out.display()
    );
    Ok(Outcome::Success)
}

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use analyst_core::chart::FigureFormat;
use analyst_core::gateway::BackendMode;
use analyst_core::pipeline::PipelineMode;
use analyst_core::{ChartType, Difficulty};
use clap::{Args, Parser, Subcommand};

/// Ask questions of a SQLite database: SQL plan, extracted data, chart and
/// a five-bullet analysis per question, plus scoring and cost reports.
///
/// Settings come from flags, then DA_* environment variables, then a TOML
/// file (--config, DA_CONFIG, or ./da.toml when present).
///
/// Exit codes: 0 success, 1 a task failed, 2 usage or configuration error.
#[derive(Debug, Parser)]
#[command(name = "da", version)]
pub struct Cli {
    /// TOML config file. Defaults to ./da.toml when it exists.
    #[arg(long, global = true, env = "DA_CONFIG")]
    pub config: Option<PathBuf>,
    /// Log filter for stderr, e.g. `info` or `analyst_core=debug`.
    #[arg(long, global = true, env = "DA_LOG")]
    pub log: Option<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one question, from a corpus task or given directly.
    Run(RunArgs),
    /// Run every selected corpus task and write batch_summary.json.
    Batch(BatchArgs),
    /// Score a finished run and write scorecards.json into it.
    Eval(EvalArgs),
    /// Markdown tables from one or more scorecards.json files.
    Report(ReportArgs),
    /// Convert an NVBench.json file into a corpus manifest.
    CorpusImport(ImportArgs),
}

#[derive(Debug, Clone, Args)]
pub struct PipelineArgs {
    /// Directory holding run directories [default: runs]
    #[arg(long, env = "DA_OUT_DIR")]
    pub out_dir: Option<PathBuf>,
    /// Run id; a timestamped id is generated when omitted.
    #[arg(long, env = "DA_RUN_ID")]
    pub run_id: Option<String>,
    /// `plan` (structured SQL + chart) or `script` (generated code in the sandbox) [default: plan]
    #[arg(long)]
    pub mode: Option<PipelineMode>,
    /// Model backend: live, record, replay or mock [default: live]
    #[arg(long, env = "DA_BACKEND")]
    pub backend: Option<BackendMode>,
    /// Cassette file, read by replay and written by record.
    #[arg(long, env = "DA_CASSETTE")]
    pub cassette: Option<PathBuf>,
    /// Scripted responses (JSON) for the mock backend.
    #[arg(long)]
    pub mock_script: Option<PathBuf>,
    /// Add retrieved knowledge to the analysis prompt.
    #[arg(long, conflicts_with = "offline")]
    pub online: bool,
    /// Turn off retrieval even if the config file enables it.
    #[arg(long)]
    pub offline: bool,
    /// Search backend: a canned JSON answer file, or `http` for DA_SEARCH_ENDPOINT.
    #[arg(long)]
    pub retriever: Option<String>,
    /// File that keeps retrieval results between invocations.
    #[arg(long)]
    pub search_cache: Option<PathBuf>,
    /// Snippets retrieved per question [default: 6]
    #[arg(long)]
    pub top_k: Option<usize>,
    /// Model id sent to the endpoint [default: gpt-4-0314]
    #[arg(long, env = "DA_LLM_MODEL")]
    pub model: Option<String>,
    /// Sampling temperature [default: 0]
    #[arg(long)]
    pub temperature: Option<f64>,
    /// Completion token limit per call [default: 1024]
    #[arg(long)]
    pub max_tokens: Option<u32>,
    /// Figure file format: svg or pdf [default: svg]
    #[arg(long)]
    pub figure_format: Option<FigureFormat>,
    /// Figure width in points [default: 800]
    #[arg(long)]
    pub figure_width: Option<u32>,
    /// Figure height in points [default: 500]
    #[arg(long)]
    pub figure_height: Option<u32>,
    /// Command line that starts the sandbox runner (script mode).
    #[arg(long, env = "DA_SANDBOX_CMD")]
    pub sandbox_cmd: Option<String>,
    /// USD per 1K prompt tokens [default: 0.03]
    #[arg(long)]
    pub prompt_price: Option<f64>,
    /// USD per 1K completion tokens [default: 0.06]
    #[arg(long)]
    pub completion_price: Option<f64>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub pipeline: PipelineArgs,
    /// Corpus task id to run (needs --corpus).
    #[arg(long, conflicts_with_all = ["question", "db"])]
    pub task: Option<String>,
    /// Corpus manifest file.
    #[arg(long, env = "DA_CORPUS")]
    pub corpus: Option<PathBuf>,
    /// Question to answer (with --db).
    #[arg(long)]
    pub question: Option<String>,
    /// SQLite database file (with --question).
    #[arg(long)]
    pub db: Option<PathBuf>,
    /// Required chart type for a direct question; inferred from the wording when omitted.
    #[arg(long)]
    pub chart_type: Option<ChartType>,
    /// Task id for a direct question [default: adhoc]
    #[arg(long)]
    pub task_id: Option<String>,
}

#[derive(Debug, Args)]
pub struct BatchArgs {
    #[command(flatten)]
    pub pipeline: PipelineArgs,
    /// Corpus manifest file.
    #[arg(long, env = "DA_CORPUS")]
    pub corpus: Option<PathBuf>,
    /// Keep only tasks requiring this chart type.
    #[arg(long)]
    pub chart_type: Option<ChartType>,
    /// Keep only tasks of this difficulty.
    #[arg(long)]
    pub difficulty: Option<Difficulty>,
    /// Keep only tasks of this domain (database id).
    #[arg(long)]
    pub domain: Option<String>,
    /// Keep only these task ids (comma separated).
    #[arg(long, value_delimiter = ',')]
    pub ids: Option<Vec<String>>,
    /// Sample this many of the matching tasks.
    #[arg(long)]
    pub count: Option<usize>,
    /// Seed for --count sampling; without it the first matches are taken.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Tasks run at once [default: available cores]
    #[arg(long, env = "DA_PARALLELISM")]
    pub parallelism: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Run directory (the one holding per-task directories).
    #[arg(long)]
    pub run_dir: PathBuf,
    /// Corpus manifest the run was made from; supplies gold SQL.
    #[arg(long, env = "DA_CORPUS")]
    pub corpus: Option<PathBuf>,
    /// Human annotation CSV to merge over the automatic scores.
    #[arg(long)]
    pub annotations: Option<PathBuf>,
    /// Replace an existing scorecards.json.
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// scorecards.json files; each becomes one model row of the comparison.
    #[arg(long, num_args = 1.., required = true)]
    pub scorecards: Vec<PathBuf>,
    /// Write the Markdown here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Replace an existing --out file.
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct ImportArgs {
    /// The NVBench.json file.
    #[arg(long)]
    pub nvbench: PathBuf,
    /// Directory holding `<db_id>/<db_id>.sqlite` databases.
    #[arg(long)]
    pub databases: PathBuf,
    /// Manifest file to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Replace an existing manifest.
    #[arg(long)]
    pub force: bool,
}

fn init_logging(filter: Option<&str>) {
    let filter = tracing_subscriber::EnvFilter::try_new(filter.unwrap_or("warn"))
        .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("warn"));
    let _ = tracing_subscriber::fmt()
        .with_env_filter(filter)
        .with_writer(std::io::stderr)
        .try_init();
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_logging(cli.log.as_deref());
    match commands::dispatch(&cli) {
        Ok(commands::Outcome::Success) => ExitCode::SUCCESS,
        Ok(commands::Outcome::TaskFailed) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

//! `da.toml` plus environment plus flags, merged into one resolved view.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Deserialize;

pub const DEFAULT_CONFIG: &str = "da.toml";

/// Every key is optional; relative paths are taken from the file's directory.
#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub out_dir: Option<PathBuf>,
    pub run_id: Option<String>,
    pub mode: Option<String>,
    pub backend: Option<String>,
    pub online: Option<bool>,
    pub cassette: Option<PathBuf>,
    pub mock_script: Option<PathBuf>,
    pub retriever: Option<String>,
    pub search_cache: Option<PathBuf>,
    pub top_k: Option<usize>,
    pub model: Option<String>,
    pub temperature: Option<f64>,
    pub max_tokens: Option<u32>,
    pub figure_format: Option<String>,
    pub figure_width: Option<u32>,
    pub figure_height: Option<u32>,
    pub sandbox_cmd: Option<String>,
    pub parallelism: Option<usize>,
    pub corpus: Option<PathBuf>,
    pub annotations: Option<PathBuf>,
    pub prompt_price_per_1k: Option<f64>,
    pub completion_price_per_1k: Option<f64>,
}

impl FileConfig {
    fn rebase(mut self, base: &Path) -> Self {
        let fix = |p: &mut Option<PathBuf>| {
            if let Some(path) = p.as_mut() {
                if path.is_relative() {
                    *path = base.join(&*path);
                }
            }
        };
        fix(&mut self.out_dir);
        fix(&mut self.cassette);
        fix(&mut self.mock_script);
        fix(&mut self.search_cache);
        fix(&mut self.corpus);
        fix(&mut self.annotations);
        if let Some(r) = self.retriever.as_mut() {
            if r != "http" && Path::new(r).is_relative() {
                *r = base.join(&*r).to_string_lossy().into_owned();
            }
        }
        self
    }
}

/// `explicit` (the `--config` flag or `DA_CONFIG`) must exist; the default
/// `./da.toml` is used only if present.
pub fn load_file_config(explicit: Option<&Path>) -> Result<FileConfig> {
    let path = match explicit {
        Some(p) => {
            if !p.is_file() {
                bail!("config file {} does not exist", p.display());
            }
            p.to_path_buf()
        }
        None => {
            let p = PathBuf::from(DEFAULT_CONFIG);
            if !p.is_file() {
                return Ok(FileConfig::default());
            }
            p
        }
    };
    let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    let cfg: FileConfig = toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok(cfg.rebase(&base))
}

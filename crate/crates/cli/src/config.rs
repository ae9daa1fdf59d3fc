use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::Args;
use ovir_core::pipeline::{PipelineConfig, StageTimings};
use ovir_core::Strategy;
use serde::{Deserialize, Serialize};

use crate::output::UsageError;

/// Pipeline flags shared by the commands that run fusion or evaluation.
/// Precedence: built-in defaults, then `--config`, then individual flags.
#[derive(Args, Debug, Default, Clone)]
pub struct Overrides {
    /// JSON file holding a pipeline config or a run manifest.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub theta_s: Option<f64>,
    #[arg(long)]
    pub theta_iou: Option<f64>,
    #[arg(long)]
    pub theta_det: Option<f64>,
    #[arg(long)]
    pub theta_recall: Option<f64>,
    #[arg(long)]
    pub period: Option<u64>,
    #[arg(long)]
    pub eps: Option<f64>,
    #[arg(long)]
    pub kmeans_k: Option<usize>,
    #[arg(long)]
    pub strategy: Option<Strategy>,
    #[arg(long)]
    pub seed: Option<u64>,
}

impl Overrides {
    pub fn resolve(&self) -> anyhow::Result<PipelineConfig> {
        let mut cfg = match &self.config {
            Some(path) => read_config(path)?,
            None => PipelineConfig::default(),
        };
        let f = &mut cfg.fusion;
        set(&mut f.theta_s, self.theta_s);
        set(&mut f.theta_iou, self.theta_iou);
        set(&mut f.theta_det, self.theta_det);
        set(&mut f.theta_recall, self.theta_recall);
        set(&mut f.period, self.period);
        set(&mut cfg.postprocess.eps, self.eps);
        set(&mut cfg.eval.kmeans_k, self.kmeans_k);
        set(&mut cfg.eval.strategy, self.strategy);
        set(&mut cfg.seed, self.seed);
        cfg.validate()?;
        Ok(cfg)
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

/// Accepts either a bare `PipelineConfig` or a `RunManifest`, whose
/// `config` field is used.
fn read_config(path: &Path) -> anyhow::Result<PipelineConfig> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let value: serde_json::Value =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    let inner = match value.get("tool_version") {
        Some(_) => value.get("config").cloned().unwrap_or_default(),
        None => value,
    };
    serde_json::from_value(inner).with_context(|| format!("config in {}", path.display()))
}

/// Record written next to every `fuse` output.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub command: String,
    pub config: PipelineConfig,
    pub inputs: BTreeMap<String, PathBuf>,
    pub outputs: BTreeMap<String, PathBuf>,
    pub timings: StageTimings,
    pub frames_per_second: f64,
}

impl RunManifest {
    pub fn new(command: &str, config: PipelineConfig) -> Self {
        Self {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            config,
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
            timings: StageTimings::default(),
            frames_per_second: 0.0,
        }
    }
}

/// Applies `OVIR_THREADS` to the global worker pool.
pub fn init_threads() -> anyhow::Result<()> {
    let Ok(raw) = std::env::var("OVIR_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| UsageError(format!("OVIR_THREADS must be a positive integer, got {raw:?}")))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    Ok(())
}

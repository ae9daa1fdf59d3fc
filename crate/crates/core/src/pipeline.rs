//! End-to-end runs: frames to bank, bank to queryable index.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::eval::EvalConfig;
use crate::fusion::{FusionConfig, FusionStats, MemoryBank};
use crate::postprocess::{split_and_filter, PostprocessConfig, Segment};
use crate::retrieval::InstanceIndex;
use crate::scene::{FrameObservation, ScenePointCloud};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct PipelineConfig {
    pub fusion: FusionConfig,
    pub postprocess: PostprocessConfig,
    pub eval: EvalConfig,
    pub seed: u64,
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.fusion.validate()?;
        self.postprocess.validate()?;
        self.eval.validate()
    }
}

/// Wall-clock seconds per stage.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    pub frames: usize,
    pub fusion_secs: f64,
    pub finalize_secs: f64,
    pub postprocess_secs: f64,
    pub representatives_secs: f64,
    pub fusion_fps: f64,
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub bank: MemoryBank,
    pub frame_stats: Vec<FusionStats>,
    pub segments: Vec<Segment>,
    pub index: InstanceIndex,
    pub timings: StageTimings,
}

/// Fuses frames in order and runs the closing sweep.
pub fn fuse_sequence<I>(cloud: &ScenePointCloud, frames: I, config: &FusionConfig) -> Result<(MemoryBank, Vec<FusionStats>)>
where
    I: IntoIterator<Item = Result<FrameObservation>>,
{
    let mut bank = MemoryBank::new(*config)?;
    let mut stats = Vec::new();
    for frame in frames {
        stats.push(bank.fuse_frame(&frame?, cloud)?);
    }
    bank.finalize();
    Ok((bank, stats))
}

/// Post-processes a finalized bank and builds representatives.
pub fn build_index(
    bank: &MemoryBank,
    cloud: &ScenePointCloud,
    config: &PipelineConfig,
) -> Result<(Vec<Segment>, InstanceIndex)> {
    let segments = split_and_filter(bank, cloud, &config.postprocess)?;
    let dim = bank.feature_dim().unwrap_or(0);
    let index = InstanceIndex::build(&segments, dim, config.eval.kmeans_k, config.seed)?;
    Ok((segments, index))
}

pub fn run<I>(cloud: &ScenePointCloud, frames: I, config: &PipelineConfig) -> Result<PipelineOutput>
where
    I: IntoIterator<Item = Result<FrameObservation>>,
{
    config.validate()?;
    let mut timings = StageTimings::default();
    let mut bank = MemoryBank::new(config.fusion)?;
    let mut frame_stats = Vec::new();
    let start = Instant::now();
    for frame in frames {
        frame_stats.push(bank.fuse_frame(&frame?, cloud)?);
    }
    timings.fusion_secs = start.elapsed().as_secs_f64();
    timings.frames = frame_stats.len();
    if timings.fusion_secs > 0.0 {
        timings.fusion_fps = timings.frames as f64 / timings.fusion_secs;
    }

    let start = Instant::now();
    bank.finalize();
    timings.finalize_secs = start.elapsed().as_secs_f64();

    let start = Instant::now();
    let segments = split_and_filter(&bank, cloud, &config.postprocess)?;
    timings.postprocess_secs = start.elapsed().as_secs_f64();

    let start = Instant::now();
    let dim = bank.feature_dim().unwrap_or(0);
    let index = InstanceIndex::build(&segments, dim, config.eval.kmeans_k, config.seed)?;
    timings.representatives_secs = start.elapsed().as_secs_f64();

    Ok(PipelineOutput {
        bank,
        frame_stats,
        segments,
        index,
        timings,
    })
}

use std::time::Instant;

use ovir_core::fusion::FusionConfig;
use ovir_core::projection::{compute_visibility, project_frame};
use ovir_core::scene::SceneDir;
use ovir_core::synth::{stress_fixture, StressSpec};
use ovir_core::{Error, MemoryBank};
use serde::Serialize;

use crate::output::write_json;
use crate::BenchArgs;

#[derive(Debug, Serialize)]
struct LatencySummary {
    frames: usize,
    repetitions: usize,
    min_ms: f64,
    median_ms: f64,
    p90_ms: f64,
    max_ms: f64,
    mean_ms: f64,
    /// Median latency of each repetition.
    repetition_medians_ms: Vec<f64>,
    /// Coefficient of variation of the repetition medians.
    median_cv: f64,
    frames_per_second: f64,
}

#[derive(Debug, Serialize)]
struct ScalingRow {
    regions: usize,
    instances: usize,
    scoring_ms: f64,
    ns_per_pair: f64,
    /// Scoring time relative to the first row.
    relative_cost: f64,
}

#[derive(Debug, Serialize)]
struct BenchReport {
    scene: String,
    config: FusionConfig,
    latency: LatencySummary,
    scaling: Vec<ScalingRow>,
}

pub fn run(a: &BenchArgs) -> anyhow::Result<()> {
    if a.repetitions == 0 {
        return Err(crate::output::UsageError("--repetitions must be at least 1".into()).into());
    }
    let cfg = a.overrides.resolve()?.fusion;
    let scene = SceneDir::new(&a.scene);
    let cloud = scene.load_cloud()?;
    let frames = scene.load_frames()?;
    if frames.is_empty() {
        return Err(Error::Validation(format!("no frames in {}", scene.frames_dir().display())).into());
    }

    let mut all = Vec::new();
    let mut medians = Vec::new();
    for _ in 0..a.repetitions {
        let mut bank = MemoryBank::new(cfg)?;
        let mut times = Vec::with_capacity(frames.len());
        for f in &frames {
            let t = Instant::now();
            bank.fuse_frame(f, &cloud)?;
            times.push(t.elapsed().as_secs_f64() * 1e3);
        }
        medians.push(quantile(&mut times.clone(), 0.5));
        all.extend(times);
    }
    let mean_ms = all.iter().sum::<f64>() / all.len() as f64;
    let med_mean = medians.iter().sum::<f64>() / medians.len() as f64;
    let med_sd = (medians.iter().map(|m| (m - med_mean).powi(2)).sum::<f64>() / medians.len() as f64).sqrt();
    let latency = LatencySummary {
        frames: frames.len(),
        repetitions: a.repetitions,
        min_ms: quantile(&mut all, 0.0),
        median_ms: quantile(&mut all, 0.5),
        p90_ms: quantile(&mut all, 0.9),
        max_ms: quantile(&mut all, 1.0),
        mean_ms,
        median_cv: if med_mean > 0.0 { med_sd / med_mean } else { 0.0 },
        repetition_medians_ms: medians,
        frames_per_second: if mean_ms > 0.0 { 1e3 / mean_ms } else { 0.0 },
    };

    let scaling = if a.no_scaling { Vec::new() } else { scaling_table(cfg)? };
    let report = BenchReport {
        scene: a.scene.display().to_string(),
        config: cfg,
        latency,
        scaling,
    };
    print_report(&report);
    if let Some(path) = &a.out {
        write_json(path, &report)?;
    }
    Ok(())
}

fn quantile(xs: &mut [f64], q: f64) -> f64 {
    xs.sort_by(f64::total_cmp);
    xs[((xs.len() - 1) as f64 * q).round() as usize]
}

/// Frame-start scoring on stress fixtures over an 8x range of
/// regions x instances.
fn scaling_table(cfg: FusionConfig) -> anyhow::Result<Vec<ScalingRow>> {
    let mut rows: Vec<ScalingRow> = Vec::new();
    for (r, m) in [(25, 100), (50, 100), (100, 100), (50, 200), (100, 200)] {
        let fx = stress_fixture(&StressSpec {
            instances: m,
            regions_per_frame: r,
            frames: 1,
            ..Default::default()
        })?;
        let mut bank = MemoryBank::new(cfg)?;
        bank.fuse_frame(&fx.warmup, &fx.cloud)?;
        let f = &fx.frames[0];
        let vis = compute_visibility(&fx.cloud, f, cfg.depth_tolerance)?;
        let regions = project_frame(f, &vis, cfg.min_region_points);
        let feats: Vec<&[f32]> = regions.iter().map(|x| f.regions[x.source_region].feature.as_slice()).collect();
        let mut times: Vec<f64> = (0..9)
            .map(|_| {
                let t = Instant::now();
                std::hint::black_box(bank.score_regions(&regions, &feats, &vis));
                t.elapsed().as_secs_f64() * 1e3
            })
            .collect();
        let ms = quantile(&mut times, 0.5);
        let pairs = (regions.len() * bank.instances().len()).max(1);
        let base = rows.first().map_or(ms, |b| b.scoring_ms);
        rows.push(ScalingRow {
            regions: regions.len(),
            instances: bank.instances().len(),
            scoring_ms: ms,
            ns_per_pair: ms * 1e6 / pairs as f64,
            relative_cost: ms / base,
        });
    }
    Ok(rows)
}

fn print_report(r: &BenchReport) {
    let l = &r.latency;
    println!(
        "{} frames x {} repetitions: median {:.2} ms, p90 {:.2} ms, max {:.2} ms, {:.1} frames/s, median cv {:.3}",
        l.frames, l.repetitions, l.median_ms, l.p90_ms, l.max_ms, l.frames_per_second, l.median_cv
    );
    if r.scaling.is_empty() {
        return;
    }
    println!("| regions | instances | scoring ms | ns/pair | relative |");
    println!("|---|---|---|---|---|");
    for row in &r.scaling {
        println!(
            "| {} | {} | {:.3} | {:.1} | {:.2} |",
            row.regions, row.instances, row.scoring_ms, row.ns_per_pair, row.relative_cost
        );
    }
}

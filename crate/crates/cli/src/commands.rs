use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::Context;
use ovir_core::eval::{evaluate, EvalScene};
use ovir_core::pipeline::run;
use ovir_core::scene::{load_cloud, load_ground_truth, load_query, load_query_dir, save_cloud, SceneDir};
use ovir_core::snapshot::{load_index, write_bank, write_index};
use ovir_core::synth::{benchmark, BenchmarkSpec, NoiseSpec, OrbitSpec};
use ovir_core::{Error, InstanceIndex, ScenePointCloud};

use crate::config::RunManifest;
use crate::output::{palette, write_atomic, write_json, UsageError, GRAY};
use crate::{EvalArgs, ExportPlyArgs, FuseArgs, NoisePreset, QueryArgs, SynthArgs};

pub fn synth(a: &SynthArgs) -> anyhow::Result<()> {
    let spec = BenchmarkSpec {
        n_objects: a.objects,
        feature_dim: a.feature_dim,
        orbit: OrbitSpec {
            frames: a.frames,
            ..Default::default()
        },
        noise: match a.noise {
            NoisePreset::None => NoiseSpec::default(),
            NoisePreset::Benchmark => NoiseSpec::benchmark(),
        },
        seed: a.seed,
        ..Default::default()
    };
    let b = benchmark(&spec)?;
    SceneDir::new(&a.out).write(&b.scene.cloud, &b.frames, Some(&b.scene.ground_truth), &b.scene.queries())?;
    println!(
        "wrote {} points, {} frames, {} objects to {}",
        b.scene.cloud.len(),
        b.frames.len(),
        b.scene.ground_truth.instances.len(),
        a.out.display()
    );
    Ok(())
}

pub fn fuse(a: &FuseArgs) -> anyhow::Result<()> {
    let cfg = a.overrides.resolve()?;
    let scene = SceneDir::new(&a.scene);
    let frame_paths = scene.frame_paths()?;
    if frame_paths.is_empty() {
        return Err(Error::Validation(format!("no frames in {}", scene.frames_dir().display())).into());
    }
    let cloud = scene.load_cloud()?;
    let out = run(&cloud, frame_paths.iter().map(ovir_core::scene::load_frame), &cfg)?;

    std::fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    let bank_path = a.out.join("bank.ovb");
    let index_path = a.out.join("index.ovi");
    let mut bytes = Vec::new();
    write_bank(&mut bytes, &out.bank)?;
    write_atomic(&bank_path, &bytes)?;
    bytes.clear();
    write_index(&mut bytes, &out.index)?;
    write_atomic(&index_path, &bytes)?;

    let mut manifest = RunManifest::new("fuse", cfg);
    manifest.inputs.insert("scene".into(), a.scene.clone());
    manifest.outputs.insert("bank".into(), bank_path);
    manifest.outputs.insert("index".into(), index_path);
    manifest.frames_per_second = out.timings.fusion_fps;
    manifest.timings = out.timings;
    write_json(&a.out.join("manifest.json"), &manifest)?;
    println!(
        "fused {} frames at {:.1} frames/s: {} bank instances, {} final instances",
        manifest.timings.frames,
        manifest.frames_per_second,
        out.bank.instances().len(),
        out.index.len()
    );
    Ok(())
}

pub fn query(a: &QueryArgs) -> anyhow::Result<()> {
    let index = load_index(&a.index)?;
    let q = load_query(&a.query)?;
    let result = index.rank(&q, a.k, a.strategy)?;
    match &a.out {
        Some(path) => write_json(path, &result)?,
        None => println!("{}", serde_json::to_string_pretty(&result)?),
    }
    if let (Some(ply), Some(scene)) = (&a.ply, &a.scene) {
        let cloud = SceneDir::new(scene).load_cloud()?;
        let masks: Vec<&[u32]> = result
            .ranked
            .iter()
            .filter_map(|r| index.instances.iter().find(|i| i.id == r.id))
            .map(|i| i.point_indices.as_slice())
            .collect();
        paint(&cloud, &masks, ply)?;
    }
    Ok(())
}

/// Gray cloud with each mask in its own color; earlier masks win overlaps.
fn paint(cloud: &ScenePointCloud, masks: &[&[u32]], path: &Path) -> anyhow::Result<()> {
    let mut colors = vec![GRAY; cloud.len()];
    for (rank, mask) in masks.iter().enumerate().rev() {
        for &p in mask.iter() {
            let slot = colors
                .get_mut(p as usize)
                .ok_or_else(|| Error::Validation(format!("instance point {p} is outside the cloud")))?;
            *slot = palette(rank);
        }
    }
    save_cloud(path, cloud.points(), Some(&colors))?;
    Ok(())
}

pub fn export_ply(a: &ExportPlyArgs) -> anyhow::Result<()> {
    let cloud = load_cloud(SceneDir::new(&a.scene).cloud_path())?;
    let index = load_index(&a.index)?;
    let masks: Vec<&[u32]> = index.instances.iter().map(|i| i.point_indices.as_slice()).collect();
    paint(&cloud, &masks, &a.out)?;
    println!("painted {} instances into {}", masks.len(), a.out.display());
    Ok(())
}

pub fn eval(a: &EvalArgs) -> anyhow::Result<()> {
    if a.index.len() != a.gt.len() {
        return Err(UsageError(format!("{} --index values but {} --gt values", a.index.len(), a.gt.len())).into());
    }
    if a.queries.len() != 1 && a.queries.len() != a.index.len() {
        return Err(UsageError("--queries takes one directory or one per scene".into()).into());
    }
    let cfg = a.overrides.resolve()?;
    let start = Instant::now();
    let mut query_sets: BTreeMap<&PathBuf, _> = BTreeMap::new();
    let mut scenes = Vec::with_capacity(a.index.len());
    for (i, (index_path, gt_path)) in a.index.iter().zip(&a.gt).enumerate() {
        let qdir = &a.queries[i.min(a.queries.len() - 1)];
        if !query_sets.contains_key(qdir) {
            query_sets.insert(qdir, load_query_dir(qdir)?);
        }
        let index: InstanceIndex = load_index(index_path)?;
        scenes.push(EvalScene {
            name: scene_name(index_path),
            instances: index.instances,
            ground_truth: load_ground_truth(gt_path)?,
            queries: query_sets[qdir].clone(),
        });
    }
    let report = evaluate(&scenes, &cfg.eval)?;

    std::fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    write_json(&a.out.join("eval_report.json"), &report)?;
    let table = report.table("ovir");
    write_atomic(&a.out.join("eval_table.txt"), table.as_bytes())?;
    print!("{table}");
    eprintln!("evaluated {} scenes in {:.2}s", scenes.len(), start.elapsed().as_secs_f64());
    Ok(())
}

/// The run directory name for `<run>/index.ovi`, else the file stem.
fn scene_name(index_path: &Path) -> String {
    let stem = index_path.file_stem().map(|s| s.to_string_lossy().into_owned());
    match (stem.as_deref(), index_path.parent().and_then(|p| p.file_name())) {
        (Some("index"), Some(dir)) => dir.to_string_lossy().into_owned(),
        (Some(s), _) => s.to_string(),
        _ => index_path.display().to_string(),
    }
}

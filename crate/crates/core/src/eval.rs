//! Retrieval mAP over ranked instance masks.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fusion::iou;
use crate::retrieval::{rank, FinalInstance, Strategy, DEFAULT_KMEANS_K};
use crate::scene::{GroundTruthAnnotation, QueryEmbedding};

/// Thresholds averaged into the overall mAP: 0.50, 0.55, ..., 0.95.
pub fn coco_thresholds() -> Vec<f64> {
    (0..10).map(|i| (50 + 5 * i) as f64 / 100.0).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub iou_thresholds: Vec<f64>,
    pub strategy: Strategy,
    pub kmeans_k: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        let mut iou_thresholds = vec![0.25];
        iou_thresholds.extend(coco_thresholds());
        Self {
            iou_thresholds,
            strategy: Strategy::Clustered,
            kmeans_k: DEFAULT_KMEANS_K,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if let Some(t) = self.iou_thresholds.iter().find(|t| !(**t > 0.0 && **t <= 1.0)) {
            return Err(Error::validation(format!("IoU threshold {t} outside (0, 1]")));
        }
        if self.kmeans_k < 1 {
            return Err(Error::validation("kmeans_k must be at least 1"));
        }
        Ok(())
    }

    /// Configured thresholds plus the overall-mAP set, sorted and deduplicated.
    fn all_thresholds(&self) -> Vec<f64> {
        let mut t: Vec<f64> = self.iou_thresholds.iter().copied().chain(coco_thresholds()).collect();
        t.sort_by(f64::total_cmp);
        t.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
        t
    }
}

/// Non-interpolated average precision of a ranked list of masks.
///
/// Predictions are matched greedily in rank order to the unmatched ground
/// truth mask with the highest IoU; a match at or above `threshold` is a true
/// positive. Returns 0 when `gt` is empty.
pub fn average_precision<P: AsRef<[u32]>, G: AsRef<[u32]>>(ranked: &[P], gt: &[G], threshold: f64) -> f64 {
    if gt.is_empty() {
        return 0.0;
    }
    let mut matched = vec![false; gt.len()];
    let mut tp = 0usize;
    let mut ap = 0.0;
    for (k, pred) in ranked.iter().enumerate() {
        let mut best: Option<(usize, f64)> = None;
        for (g, mask) in gt.iter().enumerate() {
            if matched[g] {
                continue;
            }
            let v = iou(pred.as_ref(), mask.as_ref());
            if best.is_none_or(|(_, b)| v > b) {
                best = Some((g, v));
            }
        }
        if let Some((g, v)) = best {
            if v >= threshold {
                matched[g] = true;
                tp += 1;
                ap += tp as f64 / (k + 1) as f64;
            }
        }
    }
    ap / gt.len() as f64
}

/// One scene's inputs to [`evaluate`].
#[derive(Debug, Clone)]
pub struct EvalScene {
    pub name: String,
    pub instances: Vec<FinalInstance>,
    pub ground_truth: GroundTruthAnnotation,
    /// Query embedding per category name.
    pub queries: BTreeMap<String, QueryEmbedding>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneReport {
    pub name: String,
    /// AP per category, aligned with `EvalReport::thresholds`.
    pub ap: BTreeMap<String, Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub strategy: Strategy,
    pub thresholds: Vec<f64>,
    /// AP per category averaged over the scenes containing it.
    pub per_category_ap: BTreeMap<String, Vec<f64>>,
    /// Mean over categories, aligned with `thresholds`.
    pub map_at: Vec<f64>,
    pub overall_map: f64,
    pub per_scene: Vec<SceneReport>,
}

impl EvalReport {
    pub fn map_at(&self, threshold: f64) -> Option<f64> {
        self.thresholds
            .iter()
            .position(|t| (t - threshold).abs() < 1e-9)
            .map(|i| self.map_at[i])
    }

    pub fn map25(&self) -> Option<f64> {
        self.map_at(0.25)
    }

    pub fn map50(&self) -> Option<f64> {
        self.map_at(0.5)
    }

    /// A markdown table row set in the `| Method | mAP25 | mAP50 | mAP |` layout.
    pub fn table(&self, method: &str) -> String {
        let cell = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |v| format!("{v:.3}"));
        format!(
            "| Method | mAP25 | mAP50 | mAP |\n|---|---|---|---|\n| {method} | {} | {} | {} |\n",
            cell(self.map25()),
            cell(self.map50()),
            cell(Some(self.overall_map))
        )
    }
}

/// Ranks every scene's instances for each annotated category and averages
/// AP per category, then over categories.
pub fn evaluate(scenes: &[EvalScene], cfg: &EvalConfig) -> Result<EvalReport> {
    cfg.validate()?;
    let thresholds = cfg.all_thresholds();
    let per_scene: Vec<SceneReport> = scenes
        .par_iter()
        .map(|s| evaluate_scene(s, cfg.strategy, &thresholds))
        .collect::<Result<_>>()?;

    let mut sums: BTreeMap<String, (Vec<f64>, usize)> = BTreeMap::new();
    for s in &per_scene {
        for (cat, ap) in &s.ap {
            let e = sums.entry(cat.clone()).or_insert_with(|| (vec![0.0; thresholds.len()], 0));
            for (acc, v) in e.0.iter_mut().zip(ap) {
                *acc += v;
            }
            e.1 += 1;
        }
    }
    let per_category_ap: BTreeMap<String, Vec<f64>> = sums
        .into_iter()
        .map(|(cat, (sum, n))| (cat, sum.into_iter().map(|v| v / n as f64).collect()))
        .collect();
    let map_at: Vec<f64> = (0..thresholds.len())
        .map(|i| {
            if per_category_ap.is_empty() {
                0.0
            } else {
                per_category_ap.values().map(|ap| ap[i]).sum::<f64>() / per_category_ap.len() as f64
            }
        })
        .collect();
    let coco = coco_thresholds();
    let overall_map = coco
        .iter()
        .map(|t| {
            let i = thresholds.iter().position(|x| (x - t).abs() < 1e-9).unwrap();
            map_at[i]
        })
        .sum::<f64>()
        / coco.len() as f64;
    Ok(EvalReport {
        strategy: cfg.strategy,
        thresholds,
        per_category_ap,
        map_at,
        overall_map,
        per_scene,
    })
}

fn evaluate_scene(scene: &EvalScene, strategy: Strategy, thresholds: &[f64]) -> Result<SceneReport> {
    let mut ap = BTreeMap::new();
    for cat in scene.ground_truth.categories() {
        let query = scene.queries.get(&cat).ok_or_else(|| {
            Error::validation(format!("scene '{}': no query embedding for category '{cat}'", scene.name))
        })?;
        let result = rank(query, &scene.instances, scene.instances.len(), strategy)?;
        let by_id: BTreeMap<u32, &FinalInstance> = scene.instances.iter().map(|i| (i.id, i)).collect();
        let ranked: Vec<&[u32]> = result
            .ranked
            .iter()
            .map(|r| by_id[&r.id].point_indices.as_slice())
            .collect();
        let gt = scene.ground_truth.masks_for(&cat);
        let values = thresholds.iter().map(|&t| average_precision(&ranked, &gt, t)).collect();
        ap.insert(cat, values);
    }
    Ok(SceneReport {
        name: scene.name.clone(),
        ap,
    })
}

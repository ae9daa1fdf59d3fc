//! Splits fused instances into spatially connected segments and drops
//! noise-sized pieces.

mod dbscan;

pub use dbscan::{dbscan, Labels};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fusion::{Instance3D, MemoryBank};
use crate::scene::ScenePointCloud;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PostprocessConfig {
    /// Neighborhood radius in meters.
    pub eps: f64,
    /// Neighbors within `eps`, the point itself included, that make a core point.
    pub min_pts: usize,
    pub min_segment_points: usize,
}

impl Default for PostprocessConfig {
    fn default() -> Self {
        Self {
            eps: 0.10,
            min_pts: 4,
            min_segment_points: 50,
        }
    }
}

impl PostprocessConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.eps.is_finite() || self.eps <= 0.0 {
            return Err(Error::validation("eps must be positive"));
        }
        if self.min_pts < 1 {
            return Err(Error::validation("min_pts must be at least 1"));
        }
        if self.min_segment_points < 1 {
            return Err(Error::validation("min_segment_points must be at least 1"));
        }
        Ok(())
    }
}

/// A connected piece of a fused instance. Features are inherited from the
/// parent unchanged.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub parent_id: u32,
    pub point_indices: Vec<u32>,
    pub mean_feature: Vec<f32>,
    pub view_features: Vec<Vec<f32>>,
    pub largest_view_feature: Vec<f32>,
    pub n_regions: u32,
}

/// Clusters every instance of `bank` and keeps clusters with at least
/// `min_segment_points` points, ordered by parent id, then size descending.
pub fn split_and_filter(
    bank: &MemoryBank,
    cloud: &ScenePointCloud,
    cfg: &PostprocessConfig,
) -> Result<Vec<Segment>> {
    cfg.validate()?;
    let n = cloud.len() as u32;
    if let Some(inst) = bank.instances().iter().find(|i| i.points.last().is_some_and(|&p| p >= n)) {
        return Err(Error::validation(format!(
            "instance {} references points beyond the cloud ({} points)",
            inst.id,
            cloud.len()
        )));
    }
    let per_instance: Vec<Vec<Segment>> = bank
        .instances()
        .par_iter()
        .map(|inst| split_instance(inst, cloud, cfg))
        .collect();
    Ok(per_instance.into_iter().flatten().collect())
}

fn split_instance(inst: &Instance3D, cloud: &ScenePointCloud, cfg: &PostprocessConfig) -> Vec<Segment> {
    if inst.is_empty() {
        return Vec::new();
    }
    let positions: Vec<[f32; 3]> = inst.points.iter().map(|&p| cloud.point(p)).collect();
    let labels = dbscan(&positions, cfg.eps, cfg.min_pts);
    let mut clusters: Vec<Vec<u32>> = vec![Vec::new(); labels.n_clusters];
    for (k, label) in labels.labels.iter().enumerate() {
        if let Some(c) = label {
            clusters[*c as usize].push(inst.points[k]);
        }
    }
    clusters.retain(|c| c.len() >= cfg.min_segment_points);
    // Members are pushed in ascending point order, so c[0] is the minimum.
    clusters.sort_by(|a, b| b.len().cmp(&a.len()).then(a[0].cmp(&b[0])));
    clusters
        .into_iter()
        .map(|point_indices| Segment {
            parent_id: inst.id,
            point_indices,
            mean_feature: inst.mean_feature.clone(),
            view_features: inst.view_features.clone(),
            largest_view_feature: inst.largest_view_feature.clone(),
            n_regions: inst.n_regions,
        })
        .collect()
}

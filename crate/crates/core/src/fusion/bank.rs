use rayon::prelude::*;

use super::instance::{intersection_size, Instance3D};
use super::sweep::SweepStats;
use super::FusionConfig;
use crate::error::{Error, Result};
use crate::projection::{compute_visibility, project_frame, Region3D, VisibilityResult};
use crate::scene::{FrameObservation, ScenePointCloud};
use crate::vector;

/// Per-frame fusion counters.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FusionStats {
    pub frame_id: u64,
    pub regions_in: usize,
    pub regions_projected: usize,
    pub matched: usize,
    pub created: usize,
    pub visible_points: usize,
    pub sweep: Option<SweepStats>,
}

/// Similarity and IoU between a projected region and the visible part of an
/// instance. The region feature must be unit length.
pub fn match_score(
    region: &Region3D,
    region_feature: &[f32],
    instance: &Instance3D,
    vis: &VisibilityResult,
) -> (f64, f64) {
    let similarity = vector::dot(region_feature, instance.unit_mean()).clamp(-1.0, 1.0);
    let visible_part: Vec<u32> = instance
        .points
        .iter()
        .copied()
        .filter(|&p| vis.is_visible(p))
        .collect();
    if visible_part.is_empty() {
        return (similarity, 0.0);
    }
    let inter = intersection_size(&region.point_indices, &visible_part);
    let union = region.len() + visible_part.len() - inter;
    (similarity, inter as f64 / union as f64)
}

/// The evolving set of fused instances for one sequence.
#[derive(Debug, Clone)]
pub struct MemoryBank {
    pub(crate) config: FusionConfig,
    pub(crate) instances: Vec<Instance3D>,
    pub(crate) frames_seen: u64,
    pub(crate) next_id: u32,
    pub(crate) feature_dim: Option<usize>,
    pub(crate) cloud_len: Option<usize>,
    pub(crate) last_frame_id: Option<u64>,
}

/// Overlap and similarity of every (instance, region) pair of one frame.
/// Rows follow bank order, columns follow region order.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix {
    n_regions: usize,
    region_sizes: Vec<u32>,
    visible: Vec<u32>,
    inter: Vec<u32>,
    sim: Vec<f64>,
}

impl ScoreMatrix {
    pub fn n_instances(&self) -> usize {
        self.visible.len()
    }

    pub fn n_regions(&self) -> usize {
        self.n_regions
    }

    pub fn similarity(&self, instance: usize, region: usize) -> f64 {
        self.sim[instance * self.n_regions + region]
    }

    /// IoU of the region with the instance's visible part.
    pub fn iou(&self, instance: usize, region: usize) -> f64 {
        let visible = self.visible[instance] as usize;
        if visible == 0 {
            return 0.0;
        }
        let inter = self.inter[instance * self.n_regions + region] as usize;
        let union = self.region_sizes[region] as usize + visible - inter;
        inter as f64 / union as f64
    }
}

impl MemoryBank {
    pub fn new(config: FusionConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            instances: Vec::new(),
            frames_seen: 0,
            next_id: 0,
            feature_dim: None,
            cloud_len: None,
            last_frame_id: None,
        })
    }

    pub fn config(&self) -> &FusionConfig {
        &self.config
    }

    /// Replaces thresholds for subsequent frames and sweeps.
    pub fn set_config(&mut self, config: FusionConfig) -> Result<()> {
        config.validate()?;
        self.config = config;
        Ok(())
    }

    pub fn instances(&self) -> &[Instance3D] {
        &self.instances
    }

    pub fn frames_seen(&self) -> u64 {
        self.frames_seen
    }

    pub fn feature_dim(&self) -> Option<usize> {
        self.feature_dim
    }

    pub fn instance(&self, id: u32) -> Option<&Instance3D> {
        self.instances
            .binary_search_by_key(&id, |i| i.id)
            .ok()
            .map(|k| &self.instances[k])
    }

    /// Fuses one frame. Frames must arrive in increasing `frame_id` order.
    pub fn fuse_frame(&mut self, frame: &FrameObservation, cloud: &ScenePointCloud) -> Result<FusionStats> {
        if let Some(dim) = frame.feature_dim() {
            match self.feature_dim {
                Some(expected) if expected != dim => {
                    return Err(Error::DimensionMismatch { expected, found: dim })
                }
                _ => {}
            }
        }
        match self.cloud_len {
            Some(n) if n != cloud.len() => {
                return Err(Error::validation(format!(
                    "bank was built over {n} points, cloud has {}",
                    cloud.len()
                )))
            }
            _ => {}
        }
        if let Some(last) = self.last_frame_id {
            if frame.frame_id <= last {
                return Err(Error::validation(format!(
                    "frame {} arrived after frame {last}",
                    frame.frame_id
                )));
            }
        }
        let vis = compute_visibility(cloud, frame, self.config.depth_tolerance)?;
        if frame.feature_dim().is_some() {
            self.feature_dim = frame.feature_dim();
        }
        self.cloud_len = Some(cloud.len());
        self.last_frame_id = Some(frame.frame_id);

        let regions = project_frame(frame, &vis, self.config.min_region_points);
        let features: Vec<&[f32]> = regions
            .iter()
            .map(|r| frame.regions[r.source_region].feature.as_slice())
            .collect();
        let scores = self.score_regions(&regions, &features, &vis);
        let assignment = self.assign(&scores);
        self.bump_visibility(&vis);

        let mut stats = FusionStats {
            frame_id: frame.frame_id,
            regions_in: frame.regions.len(),
            regions_projected: regions.len(),
            visible_points: vis.len(),
            ..Default::default()
        };

        // Grow matched instances: every region is absorbed as one view, while a
        // point's detection count rises at most once per frame.
        let cap = self.config.max_view_features;
        let mut per_instance: Vec<Vec<usize>> = vec![Vec::new(); self.instances.len()];
        for (r, a) in assignment.iter().enumerate() {
            if let Some(j) = a {
                per_instance[*j].push(r);
            }
        }
        self.instances
            .par_iter_mut()
            .zip(per_instance.par_iter())
            .filter(|(_, rs)| !rs.is_empty())
            .for_each(|(inst, rs)| {
                for &r in rs {
                    inst.absorb_view(features[r], regions[r].len() as u32, cap);
                }
                let union = union_sorted(rs.iter().map(|&r| regions[r].point_indices.as_slice()));
                inst.add_detected_points(&union);
            });
        stats.matched = assignment.iter().filter(|a| a.is_some()).count();

        for (r, region) in regions.iter().enumerate() {
            if assignment[r].is_none() {
                let id = self.next_id;
                self.next_id += 1;
                self.instances.push(Instance3D::seed(
                    id,
                    frame.frame_id,
                    region.point_indices.clone(),
                    features[r],
                ));
                stats.created += 1;
            }
        }

        self.frames_seen += 1;
        if self.frames_seen.is_multiple_of(self.config.period) {
            stats.sweep = Some(self.periodic_sweep());
        }
        Ok(stats)
    }

    /// Scores every region against every instance of the bank. Cost is
    /// linear in the instances' points plus regions times instances.
    pub fn score_regions(&self, regions: &[Region3D], features: &[&[f32]], vis: &VisibilityResult) -> ScoreMatrix {
        let r_count = regions.len();
        // Point -> covering regions, as CSR up to the largest covered index.
        let n = regions
            .iter()
            .filter_map(|r| r.point_indices.last())
            .map(|&p| p as usize + 1)
            .max()
            .unwrap_or(0);
        let mut offsets = vec![0u32; n + 1];
        for r in regions {
            for &p in &r.point_indices {
                offsets[p as usize + 1] += 1;
            }
        }
        for i in 1..offsets.len() {
            offsets[i] += offsets[i - 1];
        }
        let mut cursor = offsets.clone();
        let mut cover = vec![0u32; offsets[n] as usize];
        for (k, r) in regions.iter().enumerate() {
            for &p in &r.point_indices {
                let c = &mut cursor[p as usize];
                cover[*c as usize] = k as u32;
                *c += 1;
            }
        }

        let rows: Vec<(u32, Vec<u32>, Vec<f64>)> = self
            .instances
            .par_iter()
            .map(|inst| {
                let mut inter = vec![0u32; r_count];
                let mut visible = 0u32;
                for &p in &inst.points {
                    if !vis.is_visible(p) {
                        continue;
                    }
                    visible += 1;
                    if (p as usize) < n {
                        let (lo, hi) = (offsets[p as usize] as usize, offsets[p as usize + 1] as usize);
                        for &r in &cover[lo..hi] {
                            inter[r as usize] += 1;
                        }
                    }
                }
                let sim = features
                    .iter()
                    .map(|f| vector::dot(f, inst.unit_mean()).clamp(-1.0, 1.0))
                    .collect();
                (visible, inter, sim)
            })
            .collect();
        let mut m = ScoreMatrix {
            n_regions: r_count,
            region_sizes: regions.iter().map(|r| r.len() as u32).collect(),
            visible: Vec::with_capacity(rows.len()),
            inter: Vec::with_capacity(rows.len() * r_count),
            sim: Vec::with_capacity(rows.len() * r_count),
        };
        for (v, i, s) in rows {
            m.visible.push(v);
            m.inter.extend(i);
            m.sim.extend(s);
        }
        m
    }

    fn bump_visibility(&mut self, vis: &VisibilityResult) {
        self.instances.par_iter_mut().for_each(|inst| {
            for (k, &p) in inst.points.iter().enumerate() {
                if vis.is_visible(p) {
                    inst.vis_count[k] += 1;
                }
            }
        });
    }

    /// Picks, per region, the passing instance with the highest IoU (ties:
    /// higher similarity, then lower id).
    fn assign(&self, scores: &ScoreMatrix) -> Vec<Option<usize>> {
        let cfg = &self.config;
        (0..scores.n_regions())
            .map(|r| {
                let mut best: Option<(usize, f64, f64)> = None;
                for j in 0..scores.n_instances() {
                    let sim = scores.similarity(j, r);
                    if sim < cfg.theta_s {
                        continue;
                    }
                    let iou = scores.iou(j, r);
                    if iou < cfg.theta_iou || scores.visible[j] == 0 {
                        continue;
                    }
                    // Instances are sorted by id, so strict comparison keeps
                    // the lower id on exact ties.
                    let better = match best {
                        None => true,
                        Some((_, bi, bs)) => iou > bi || (iou == bi && sim > bs),
                    };
                    if better {
                        best = Some((j, iou, sim));
                    }
                }
                best.map(|(j, _, _)| j)
            })
            .collect()
    }

    /// Runs a final sweep so the bank is filtered and merged regardless of
    /// how the sequence length relates to the period.
    pub fn finalize(&mut self) -> SweepStats {
        self.periodic_sweep()
    }
}

/// Sorted, deduplicated union of sorted slices.
fn union_sorted<'a>(sets: impl Iterator<Item = &'a [u32]>) -> Vec<u32> {
    let mut all: Vec<u32> = sets.flat_map(|s| s.iter().copied()).collect();
    all.sort_unstable();
    all.dedup();
    all
}

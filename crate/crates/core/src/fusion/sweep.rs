use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::bank::MemoryBank;
use super::instance::{intersection_size, Instance3D};
use super::FusionConfig;
use crate::error::{Error, Result};
use crate::vector;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SweepStats {
    pub points_removed: usize,
    pub instances_dropped: usize,
    pub merges: usize,
}

/// Whether `a` and `b` should be merged under `config`.
pub(crate) fn should_merge(a: &Instance3D, b: &Instance3D, config: &FusionConfig) -> bool {
    let sim = vector::dot(a.unit_mean(), b.unit_mean());
    sim >= config.theta_s && overlap_passes(a, b, config)
}

fn overlap_passes(a: &Instance3D, b: &Instance3D, config: &FusionConfig) -> bool {
    if a.is_empty() || b.is_empty() {
        return false;
    }
    let inter = intersection_size(&a.points, &b.points) as f64;
    let union = (a.len() + b.len()) as f64 - inter;
    inter / union >= config.theta_iou
        || inter / b.len() as f64 >= config.theta_recall
        || inter / a.len() as f64 >= config.theta_recall
}

impl MemoryBank {
    /// Point filter, instance filter, then merges until no pair qualifies.
    pub fn periodic_sweep(&mut self) -> SweepStats {
        let mut stats = SweepStats::default();
        let theta_det = self.config.theta_det;
        for inst in &mut self.instances {
            stats.points_removed += filter_points(inst, theta_det);
        }
        let before = self.instances.len();
        self.instances
            .retain(|i| !i.is_empty() && i.len() as f64 >= i.median_segment_size());
        stats.instances_dropped = before - self.instances.len();
        stats.merges = self.merge_to_fixed_point();
        stats
    }

    /// Repeatedly merges the first qualifying pair in id order. Verdicts for
    /// pairs untouched by a merge cannot change, so failures are cached.
    fn merge_to_fixed_point(&mut self) -> usize {
        let config = self.config;
        let mut rejected: HashSet<(u32, u32)> = HashSet::new();
        let mut merges = 0;
        'scan: loop {
            let n = self.instances.len();
            for i in 0..n {
                for j in i + 1..n {
                    let key = (self.instances[i].id, self.instances[j].id);
                    if rejected.contains(&key) {
                        continue;
                    }
                    if !should_merge(&self.instances[i], &self.instances[j], &config) {
                        rejected.insert(key);
                        continue;
                    }
                    let survivor_id = self.merge_pair(i, j);
                    rejected.retain(|&(a, b)| a != survivor_id && b != survivor_id);
                    merges += 1;
                    continue 'scan;
                }
            }
            return merges;
        }
    }

    /// Merges the instances at positions `i < j`; the one with more regions
    /// survives (ties: smaller id). Returns the survivor id.
    fn merge_pair(&mut self, i: usize, j: usize) -> u32 {
        let cap = self.config.max_view_features;
        let (keep, drop) = if self.instances[j].n_regions > self.instances[i].n_regions {
            (j, i)
        } else {
            (i, j)
        };
        let absorbed = self.instances.remove(drop);
        let keep = if keep > drop { keep - 1 } else { keep };
        self.instances[keep].merge_from(absorbed, cap);
        self.instances[keep].id
    }

    /// Merges instance `b` into instance `a` by id regardless of the merge
    /// predicate. Used to construct duplicate scenarios.
    pub fn force_merge(&mut self, a: u32, b: u32) -> Result<()> {
        let find = |id: u32| {
            self.instances
                .binary_search_by_key(&id, |i| i.id)
                .map_err(|_| Error::validation(format!("no instance with id {id}")))
        };
        let (ia, ib) = (find(a)?, find(b)?);
        if ia == ib {
            return Err(Error::validation("cannot merge an instance with itself"));
        }
        let absorbed = self.instances.remove(ib);
        let ia = if ia > ib { ia - 1 } else { ia };
        self.instances[ia].merge_from(absorbed, self.config.max_view_features);
        Ok(())
    }

    /// True when no instance pair satisfies the merge predicate.
    pub fn is_merge_fixed_point(&self) -> bool {
        let n = self.instances.len();
        (0..n).all(|i| (i + 1..n).all(|j| !should_merge(&self.instances[i], &self.instances[j], &self.config)))
    }
}

/// Drops points whose detection rate is below `theta_det`. Points never seen
/// since joining are kept.
fn filter_points(inst: &mut Instance3D, theta_det: f64) -> usize {
    let before = inst.points.len();
    let mut w = 0;
    for k in 0..before {
        let (det, vis) = (inst.det_count[k], inst.vis_count[k]);
        if vis > 0 && (det as f64) / (vis as f64) < theta_det {
            continue;
        }
        inst.points[w] = inst.points[k];
        inst.det_count[w] = det;
        inst.vis_count[w] = vis;
        w += 1;
    }
    inst.points.truncate(w);
    inst.det_count.truncate(w);
    inst.vis_count.truncate(w);
    before - w
}

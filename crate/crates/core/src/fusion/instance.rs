use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::vector;

/// A fused 3D instance in the memory bank.
///
/// `points`, `det_count` and `vis_count` are parallel arrays; `points` is
/// sorted ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance3D {
    pub id: u32,
    pub points: Vec<u32>,
    /// Times each point was part of a region fused into this instance.
    pub det_count: Vec<u32>,
    /// Times each point was visible since it joined this instance.
    pub vis_count: Vec<u32>,
    /// Running mean of the fused region features.
    pub mean_feature: Vec<f32>,
    pub(crate) unit_mean: Vec<f32>,
    pub n_regions: u32,
    pub view_features: Vec<Vec<f32>>,
    pub segment_sizes: Vec<u32>,
    pub largest_view_size: u32,
    pub largest_view_feature: Vec<f32>,
    pub created_at_frame: u64,
}

impl Instance3D {
    pub(crate) fn seed(id: u32, frame: u64, points: Vec<u32>, feature: &[f32]) -> Self {
        let n = points.len();
        Self {
            id,
            det_count: vec![1; n],
            vis_count: vec![1; n],
            mean_feature: feature.to_vec(),
            unit_mean: unit(feature),
            n_regions: 1,
            view_features: vec![feature.to_vec()],
            segment_sizes: vec![n as u32],
            largest_view_size: n as u32,
            largest_view_feature: feature.to_vec(),
            created_at_frame: frame,
            points,
        }
    }

    /// Rebuilds derived state after deserialization.
    pub(crate) fn refresh(&mut self) {
        self.unit_mean = unit(&self.mean_feature);
    }

    /// Unit-length copy of the mean feature used for matching.
    pub fn unit_mean(&self) -> &[f32] {
        &self.unit_mean
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Records one fused region's feature and size.
    pub(crate) fn absorb_view(&mut self, feature: &[f32], size: u32, cap: usize) {
        vector::running_mean_update(&mut self.mean_feature, self.n_regions, feature);
        self.unit_mean = unit(&self.mean_feature);
        self.offer_view(feature, cap);
        self.n_regions += 1;
        self.segment_sizes.push(size);
        if size > self.largest_view_size {
            self.largest_view_size = size;
            self.largest_view_feature = feature.to_vec();
        }
    }

    /// Reservoir sampling keyed on `(id, offer index)` so the choice does not
    /// depend on any carried RNG state.
    fn offer_view(&mut self, feature: &[f32], cap: usize) {
        let seen = self.n_regions as u64;
        if self.view_features.len() < cap {
            self.view_features.push(feature.to_vec());
            return;
        }
        let j = splitmix64((self.id as u64) << 32 ^ seen) % (seen + 1);
        if (j as usize) < cap {
            self.view_features[j as usize] = feature.to_vec();
        }
    }

    /// Adds points with fresh counters, bumping detection counts of points
    /// already present. `new_points` must be sorted and unique, and visible
    /// in the current frame.
    pub(crate) fn add_detected_points(&mut self, new_points: &[u32]) {
        let total = self.points.len() + new_points.len();
        let mut points = Vec::with_capacity(total);
        let mut det = Vec::with_capacity(total);
        let mut vis = Vec::with_capacity(total);
        let (mut i, mut j) = (0, 0);
        while i < self.points.len() || j < new_points.len() {
            let a = self.points.get(i).copied().unwrap_or(u32::MAX);
            let b = new_points.get(j).copied().unwrap_or(u32::MAX);
            if a < b || j == new_points.len() {
                points.push(a);
                det.push(self.det_count[i]);
                vis.push(self.vis_count[i]);
                i += 1;
            } else if b < a || i == self.points.len() {
                points.push(b);
                det.push(1);
                vis.push(1);
                j += 1;
            } else {
                points.push(a);
                det.push(self.det_count[i] + 1);
                vis.push(self.vis_count[i]);
                i += 1;
                j += 1;
            }
        }
        self.points = points;
        self.det_count = det;
        self.vis_count = vis;
    }

    /// Folds `other` into `self`, keeping `self.id`.
    pub(crate) fn merge_from(&mut self, other: Instance3D, cap: usize) {
        let total = self.points.len() + other.points.len();
        let mut points = Vec::with_capacity(total);
        let mut det = Vec::with_capacity(total);
        let mut vis = Vec::with_capacity(total);
        let (mut i, mut j) = (0, 0);
        while i < self.points.len() || j < other.points.len() {
            let a = self.points.get(i).copied();
            let b = other.points.get(j).copied();
            match (a, b) {
                (Some(a), Some(b)) if a == b => {
                    points.push(a);
                    det.push(self.det_count[i] + other.det_count[j]);
                    vis.push(self.vis_count[i] + other.vis_count[j]);
                    i += 1;
                    j += 1;
                }
                (Some(a), b) if b.is_none_or(|b| a < b) => {
                    points.push(a);
                    det.push(self.det_count[i]);
                    vis.push(self.vis_count[i]);
                    i += 1;
                }
                (_, Some(b)) => {
                    points.push(b);
                    det.push(other.det_count[j]);
                    vis.push(other.vis_count[j]);
                    j += 1;
                }
                _ => unreachable!(),
            }
        }
        self.points = points;
        self.det_count = det;
        self.vis_count = vis;

        let (np, nq) = (self.n_regions as f64, other.n_regions as f64);
        for (m, &g) in self.mean_feature.iter_mut().zip(&other.mean_feature) {
            *m = ((np * *m as f64 + nq * g as f64) / (np + nq)) as f32;
        }
        self.unit_mean = unit(&self.mean_feature);
        self.n_regions += other.n_regions;
        self.segment_sizes.extend_from_slice(&other.segment_sizes);
        self.view_features.extend(other.view_features);
        if self.view_features.len() > cap {
            let seed = splitmix64((self.id as u64) << 32 ^ self.n_regions as u64);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut keep = index::sample(&mut rng, self.view_features.len(), cap).into_vec();
            keep.sort_unstable();
            let views = std::mem::take(&mut self.view_features);
            self.view_features = keep.into_iter().map(|k| views[k].clone()).collect();
        }
        if other.largest_view_size > self.largest_view_size {
            self.largest_view_size = other.largest_view_size;
            self.largest_view_feature = other.largest_view_feature;
        }
        self.created_at_frame = self.created_at_frame.min(other.created_at_frame);
    }

    /// Median of the recorded segment sizes (mean of the middle pair for
    /// even counts).
    pub fn median_segment_size(&self) -> f64 {
        let mut s = self.segment_sizes.clone();
        if s.is_empty() {
            return 0.0;
        }
        s.sort_unstable();
        let mid = s.len() / 2;
        if s.len() % 2 == 1 {
            s[mid] as f64
        } else {
            (s[mid - 1] as f64 + s[mid] as f64) / 2.0
        }
    }
}

fn unit(v: &[f32]) -> Vec<f32> {
    let acc: Vec<f64> = v.iter().map(|&x| x as f64).collect();
    vector::normalized_f32(&acc)
}

pub(crate) fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// `|a ∩ b|` for sorted index sets.
pub fn intersection_size(a: &[u32], b: &[u32]) -> usize {
    let (mut i, mut j, mut n) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                n += 1;
                i += 1;
                j += 1;
            }
        }
    }
    n
}

/// Intersection over union of sorted index sets; 0 when both are empty.
pub fn iou(a: &[u32], b: &[u32]) -> f64 {
    let inter = intersection_size(a, b);
    let union = a.len() + b.len() - inter;
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

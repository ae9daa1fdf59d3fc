//! Independent reference implementations used as test oracles. They favor
//! obviousness over speed and share no code with the engine beyond the
//! scene types.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use ovir_core::fusion::FusionConfig;
use ovir_core::scene::{FrameObservation, ScenePointCloud};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

// ---------------------------------------------------------------- fusion ---

#[derive(Debug, Clone)]
pub struct RefInstance {
    pub id: u32,
    /// point -> (detections, visibilities)
    pub points: BTreeMap<u32, (u32, u32)>,
    /// Every fused feature, in fusion order.
    pub features: Vec<Vec<f32>>,
    pub segment_sizes: Vec<u32>,
    pub largest: (u32, Vec<f32>),
    pub created_at: u64,
}

impl RefInstance {
    pub fn mean(&self) -> Vec<f64> {
        let d = self.features[0].len();
        let mut m = vec![0.0; d];
        for f in &self.features {
            for (a, &b) in m.iter_mut().zip(f) {
                *a += b as f64;
            }
        }
        m.iter().map(|v| v / self.features.len() as f64).collect()
    }

    fn set(&self) -> BTreeSet<u32> {
        self.points.keys().copied().collect()
    }
}

pub fn cos64(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

fn to64(v: &[f32]) -> Vec<f64> {
    v.iter().map(|&x| x as f64).collect()
}

/// Brute-force visibility: point -> pixel for every visible point.
pub fn ref_visible(cloud: &ScenePointCloud, frame: &FrameObservation, tol: f64) -> BTreeMap<u32, usize> {
    let m = frame.pose.row_major();
    let k = &frame.intrinsics;
    let depth = frame.depth.as_ref().unwrap();
    let mut out = BTreeMap::new();
    for (i, p) in cloud.points().iter().enumerate() {
        let d = [p[0] as f64 - m[3], p[1] as f64 - m[7], p[2] as f64 - m[11]];
        // R^T d, with R the upper-left 3x3 of the row-major pose.
        let x = m[0] * d[0] + m[4] * d[1] + m[8] * d[2];
        let y = m[1] * d[0] + m[5] * d[1] + m[9] * d[2];
        let z = m[2] * d[0] + m[6] * d[1] + m[10] * d[2];
        if z <= 0.0 {
            continue;
        }
        let u = (k.fx * x / z + k.cx).round();
        let v = (k.fy * y / z + k.cy).round();
        if u < 0.0 || v < 0.0 || u >= k.width as f64 || v >= k.height as f64 {
            continue;
        }
        let pix = v as usize * k.width as usize + u as usize;
        let dz = depth[pix] as f64;
        if dz > 0.0 && (z - dz).abs() <= tol {
            out.insert(i as u32, pix);
        }
    }
    out
}

fn set_iou(a: &BTreeSet<u32>, b: &BTreeSet<u32>) -> f64 {
    let inter = a.intersection(b).count();
    let union = a.union(b).count();
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

fn median(v: &[u32]) -> f64 {
    let mut s = v.to_vec();
    s.sort();
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2] as f64
    } else {
        (s[n / 2 - 1] as f64 + s[n / 2] as f64) / 2.0
    }
}

/// Batch re-association over full sets; the arithmetic mean of all fused
/// features stands in for the running mean.
pub struct RefBank {
    pub cfg: FusionConfig,
    pub instances: Vec<RefInstance>,
    pub next_id: u32,
    pub frames_seen: u64,
}

impl RefBank {
    pub fn new(cfg: FusionConfig) -> Self {
        Self {
            cfg,
            instances: Vec::new(),
            next_id: 0,
            frames_seen: 0,
        }
    }

    pub fn fuse(&mut self, frame: &FrameObservation, cloud: &ScenePointCloud) {
        let vis = ref_visible(cloud, frame, self.cfg.depth_tolerance);
        let mut regions: Vec<(BTreeSet<u32>, Vec<f32>)> = Vec::new();
        for r in &frame.regions {
            let bits = r.mask.decode();
            let pts: BTreeSet<u32> = vis.iter().filter(|(_, &pix)| bits[pix]).map(|(&p, _)| p).collect();
            if pts.len() >= self.cfg.min_region_points {
                regions.push((pts, r.feature.clone()));
            }
        }
        let visible: BTreeSet<u32> = vis.keys().copied().collect();

        // Decide every region against the bank as it stood at frame start.
        let mut choice: Vec<Option<usize>> = Vec::new();
        for (pts, f) in &regions {
            let mut best: Option<(usize, f64, f64)> = None;
            for (j, inst) in self.instances.iter().enumerate() {
                let vis_part: BTreeSet<u32> = inst.set().intersection(&visible).copied().collect();
                if vis_part.is_empty() {
                    continue;
                }
                let s = cos64(&inst.mean(), &to64(f));
                let iou = set_iou(pts, &vis_part);
                if s < self.cfg.theta_s || iou < self.cfg.theta_iou {
                    continue;
                }
                let better = match best {
                    None => true,
                    Some((_, bi, bs)) => iou > bi || (iou == bi && s > bs),
                };
                if better {
                    best = Some((j, iou, s));
                }
            }
            choice.push(best.map(|b| b.0));
        }

        for inst in &mut self.instances {
            for (p, c) in inst.points.iter_mut() {
                if visible.contains(p) {
                    c.1 += 1;
                }
            }
        }
        let mut detected: BTreeMap<usize, BTreeSet<u32>> = BTreeMap::new();
        for (r, (pts, f)) in regions.iter().enumerate() {
            if let Some(j) = choice[r] {
                let inst = &mut self.instances[j];
                inst.features.push(f.clone());
                inst.segment_sizes.push(pts.len() as u32);
                if pts.len() as u32 > inst.largest.0 {
                    inst.largest = (pts.len() as u32, f.clone());
                }
                detected.entry(j).or_default().extend(pts.iter().copied());
            }
        }
        for (j, pts) in detected {
            let inst = &mut self.instances[j];
            for p in pts {
                inst.points.entry(p).and_modify(|c| c.0 += 1).or_insert((1, 1));
            }
        }
        for (r, (pts, f)) in regions.iter().enumerate() {
            if choice[r].is_none() {
                self.instances.push(RefInstance {
                    id: self.next_id,
                    points: pts.iter().map(|&p| (p, (1, 1))).collect(),
                    features: vec![f.clone()],
                    segment_sizes: vec![pts.len() as u32],
                    largest: (pts.len() as u32, f.clone()),
                    created_at: frame.frame_id,
                });
                self.next_id += 1;
            }
        }
        self.frames_seen += 1;
        if self.frames_seen.is_multiple_of(self.cfg.period) {
            self.sweep();
        }
    }

    fn should_merge(&self, a: &RefInstance, b: &RefInstance) -> bool {
        if cos64(&a.mean(), &b.mean()) < self.cfg.theta_s {
            return false;
        }
        let (sa, sb) = (a.set(), b.set());
        if sa.is_empty() || sb.is_empty() {
            return false;
        }
        let inter = sa.intersection(&sb).count() as f64;
        set_iou(&sa, &sb) >= self.cfg.theta_iou
            || inter / sb.len() as f64 >= self.cfg.theta_recall
            || inter / sa.len() as f64 >= self.cfg.theta_recall
    }

    pub fn sweep(&mut self) {
        let theta = self.cfg.theta_det;
        for inst in &mut self.instances {
            inst.points.retain(|_, (d, v)| *v == 0 || (*d as f64 / *v as f64) >= theta);
        }
        self.instances
            .retain(|i| !i.points.is_empty() && i.points.len() as f64 >= median(&i.segment_sizes));
        'restart: loop {
            for i in 0..self.instances.len() {
                for j in i + 1..self.instances.len() {
                    if !self.should_merge(&self.instances[i], &self.instances[j]) {
                        continue;
                    }
                    let (a, b) = (&self.instances[i], &self.instances[j]);
                    let (keep, gone) = if b.features.len() > a.features.len() { (j, i) } else { (i, j) };
                    let other = self.instances[gone].clone();
                    let s = &mut self.instances[keep];
                    for (p, (d, v)) in other.points {
                        let e = s.points.entry(p).or_insert((0, 0));
                        e.0 += d;
                        e.1 += v;
                    }
                    s.features.extend(other.features);
                    s.segment_sizes.extend(other.segment_sizes);
                    if other.largest.0 > s.largest.0 {
                        s.largest = other.largest;
                    }
                    s.created_at = s.created_at.min(other.created_at);
                    self.instances.remove(gone);
                    continue 'restart;
                }
            }
            break;
        }
    }
}

// ---------------------------------------------------------------- dbscan ---

/// O(n^2) DBSCAN reference: core flags and, per point, the set of cluster
/// ids it may legally carry (core: exactly one; border: any adjacent core's
/// cluster; noise: none). Cluster ids are union-find roots.
pub fn ref_dbscan(points: &[[f32; 3]], eps: f64, min_pts: usize) -> (Vec<bool>, Vec<BTreeSet<usize>>) {
    let n = points.len();
    let d2 = |a: &[f32; 3], b: &[f32; 3]| -> f64 { (0..3).map(|k| (a[k] as f64 - b[k] as f64).powi(2)).sum() };
    let nbrs: Vec<Vec<usize>> = (0..n)
        .map(|i| (0..n).filter(|&j| d2(&points[i], &points[j]) <= eps * eps).collect())
        .collect();
    let core: Vec<bool> = nbrs.iter().map(|v| v.len() >= min_pts).collect();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], x: usize) -> usize {
        let mut r = x;
        while p[r] != r {
            r = p[r];
        }
        let mut y = x;
        while p[y] != r {
            let next = p[y];
            p[y] = r;
            y = next;
        }
        r
    }
    for i in 0..n {
        if !core[i] {
            continue;
        }
        for &j in &nbrs[i] {
            if core[j] {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                parent[a.max(b)] = a.min(b);
            }
        }
    }
    let allowed = (0..n)
        .map(|i| {
            if core[i] {
                BTreeSet::from([find(&mut parent, i)])
            } else {
                nbrs[i]
                    .iter()
                    .filter(|&&j| core[j])
                    .map(|&j| find(&mut parent, j))
                    .collect()
            }
        })
        .collect();
    (core, allowed)
}

/// Checks engine labels against the reference up to a relabeling.
pub fn dbscan_agrees(labels: &[Option<u32>], allowed: &[BTreeSet<usize>]) -> Result<(), String> {
    let mut map: BTreeMap<u32, usize> = BTreeMap::new();
    let mut back: BTreeMap<usize, u32> = BTreeMap::new();
    // Core points (single allowed id) fix the bijection.
    for (i, (l, a)) in labels.iter().zip(allowed).enumerate() {
        match (l, a.len()) {
            (None, 0) => {}
            (None, _) => return Err(format!("point {i} labeled noise but reachable")),
            (Some(_), 0) => return Err(format!("point {i} clustered but unreachable")),
            (Some(c), 1) => {
                let r = *a.iter().next().unwrap();
                if *map.entry(*c).or_insert(r) != r || *back.entry(r).or_insert(*c) != *c {
                    return Err(format!("point {i}: cluster {c} is not a relabeling"));
                }
            }
            _ => {}
        }
    }
    for (i, (l, a)) in labels.iter().zip(allowed).enumerate() {
        if let Some(c) = l {
            let r = map.get(c).ok_or(format!("cluster {c} has no core point"))?;
            if !a.contains(r) {
                return Err(format!("border point {i} joined a non-adjacent cluster"));
            }
        }
    }
    Ok(())
}

// -------------------------------------------------------------------- AP ---

/// Average precision by explicit tabulation: build the IoU table, walk the
/// ranking with greedy matching, record precision and recall at every cutoff
/// and sum precision times recall increments.
pub fn ref_average_precision(ranked: &[Vec<u32>], gt: &[Vec<u32>], threshold: f64) -> f64 {
    if gt.is_empty() {
        return 0.0;
    }
    let sets = |v: &[Vec<u32>]| -> Vec<BTreeSet<u32>> { v.iter().map(|m| m.iter().copied().collect()).collect() };
    let (p, g) = (sets(ranked), sets(gt));
    let table: Vec<Vec<f64>> = p.iter().map(|a| g.iter().map(|b| set_iou(a, b)).collect()).collect();
    let mut used = vec![false; g.len()];
    let mut precision = Vec::new();
    let mut recall = Vec::new();
    let mut tp = 0.0;
    for (k, row) in table.iter().enumerate() {
        let mut best: Option<usize> = None;
        for (j, &v) in row.iter().enumerate() {
            if !used[j] && best.is_none_or(|b| v > row[b]) {
                best = Some(j);
            }
        }
        if let Some(j) = best {
            if row[j] >= threshold {
                used[j] = true;
                tp += 1.0;
            }
        }
        precision.push(tp / (k + 1) as f64);
        recall.push(tp / g.len() as f64);
    }
    let mut ap = 0.0;
    let mut prev = 0.0;
    for (pr, rc) in precision.iter().zip(&recall) {
        ap += pr * (rc - prev);
        prev = *rc;
    }
    ap
}

/// Exact comparison of an engine bank against the reference, with the mean
/// feature allowed to differ by `mean_tol` per component.
pub fn banks_agree(bank: &ovir_core::MemoryBank, reference: &RefBank, mean_tol: f64) -> Result<(), String> {
    let a = bank.instances();
    let b = &reference.instances;
    if a.len() != b.len() {
        return Err(format!("{} instances vs {} in reference", a.len(), b.len()));
    }
    for (x, y) in a.iter().zip(b) {
        let ctx = |what: &str| format!("instance {}: {what} differs", x.id);
        if x.id != y.id {
            return Err(format!("id {} vs {}", x.id, y.id));
        }
        let pts: Vec<u32> = y.points.keys().copied().collect();
        let det: Vec<u32> = y.points.values().map(|c| c.0).collect();
        let vis: Vec<u32> = y.points.values().map(|c| c.1).collect();
        if x.points != pts {
            return Err(ctx("point set"));
        }
        if x.det_count != det {
            return Err(ctx("detection counts"));
        }
        if x.vis_count != vis {
            return Err(ctx("visibility counts"));
        }
        if x.n_regions as usize != y.features.len() || x.view_features != y.features {
            return Err(ctx("view history"));
        }
        if x.segment_sizes != y.segment_sizes {
            return Err(ctx("segment sizes"));
        }
        if x.largest_view_size != y.largest.0 || x.largest_view_feature != y.largest.1 {
            return Err(ctx("largest view"));
        }
        if x.created_at_frame != y.created_at {
            return Err(ctx("creation frame"));
        }
        let m = y.mean();
        if let Some(k) = (0..m.len()).find(|&k| (x.mean_feature[k] as f64 - m[k]).abs() > mean_tol) {
            return Err(format!(
                "instance {}: mean[{k}] {} vs {}",
                x.id, x.mean_feature[k], m[k]
            ));
        }
    }
    Ok(())
}

// ------------------------------------------------------------ generators ---

/// Points around a few random centers plus uniform clutter.
pub fn random_point_set(rng: &mut ChaCha8Rng) -> Vec<[f32; 3]> {
    let n = rng.random_range(1..=500);
    let centers: Vec<[f32; 3]> = (0..rng.random_range(1..5))
        .map(|_| [rng.random(), rng.random(), rng.random()])
        .collect();
    let spread: f32 = rng.random_range(0.02..0.15);
    (0..n)
        .map(|_| {
            if rng.random::<f64>() < 0.2 {
                [rng.random(), rng.random(), rng.random()]
            } else {
                let c = centers[rng.random_range(0..centers.len())];
                [
                    c[0] + rng.random_range(-spread..spread),
                    c[1] + rng.random_range(-spread..spread),
                    c[2] + rng.random_range(-spread..spread),
                ]
            }
        })
        .collect()
}

pub fn random_mask(rng: &mut ChaCha8Rng, universe: u32) -> Vec<u32> {
    let lo = rng.random_range(0..universe);
    let hi = rng.random_range(lo..=universe.min(lo + 40));
    let mut m: Vec<u32> = (lo..hi).filter(|_| rng.random::<f64>() < 0.8).collect();
    if m.is_empty() {
        m.push(lo);
    }
    m
}

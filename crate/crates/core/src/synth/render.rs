use std::f64::consts::PI;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::morphology;
use super::{random_unit, SynthScene, BACKGROUND};
use crate::error::{Error, Result};
use crate::fusion::splitmix64;
use crate::scene::{CameraIntrinsics, CameraPose, FrameObservation, Region2D, RleMask};
use crate::vector;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseSpec {
    /// Probability that an object's region is omitted from a frame.
    pub mask_dropout_prob: f64,
    /// Masks are grown or shrunk by a uniform random number of pixels in
    /// `[-k, k]`.
    pub mask_boundary_erosion: u32,
    /// Largest angle, radians, by which a region feature is rotated away
    /// from its object feature.
    pub feature_noise_angle: f64,
    /// Expected spurious blob regions per frame.
    pub false_positive_rate: f64,
    pub depth_noise_sigma: f64,
    /// Object footprints smaller than this are not reported.
    pub min_region_pixels: usize,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self {
            mask_dropout_prob: 0.0,
            mask_boundary_erosion: 0,
            feature_noise_angle: 0.0,
            false_positive_rate: 0.0,
            depth_noise_sigma: 0.0,
            min_region_pixels: 20,
        }
    }
}

impl NoiseSpec {
    /// The noisy benchmark setting.
    pub fn benchmark() -> Self {
        Self {
            mask_dropout_prob: 0.2,
            mask_boundary_erosion: 2,
            feature_noise_angle: 0.2,
            false_positive_rate: 1.0,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.mask_dropout_prob) {
            return Err(Error::validation("mask_dropout_prob outside [0, 1]"));
        }
        if !(0.0..=PI).contains(&self.feature_noise_angle) {
            return Err(Error::validation("feature_noise_angle outside [0, pi]"));
        }
        if !(self.false_positive_rate >= 0.0 && self.false_positive_rate.is_finite()) {
            return Err(Error::validation("false_positive_rate must be non-negative"));
        }
        if !(self.depth_noise_sigma >= 0.0 && self.depth_noise_sigma.is_finite()) {
            return Err(Error::validation("depth_noise_sigma must be non-negative"));
        }
        Ok(())
    }
}

/// A circular camera path at fixed height looking at `target`, optionally
/// bobbing vertically.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OrbitSpec {
    pub frames: usize,
    pub radius: f64,
    pub height: f64,
    pub target: [f64; 3],
    /// Amplitude of a vertical oscillation (two periods per orbit).
    pub vertical_wave: f64,
    pub start_angle: f64,
}

impl Default for OrbitSpec {
    fn default() -> Self {
        Self {
            frames: 60,
            radius: 2.0,
            height: 1.3,
            target: [0.0, 0.0, 0.2],
            vertical_wave: 0.0,
            start_angle: 0.0,
        }
    }
}

pub fn orbit(spec: &OrbitSpec) -> Result<Vec<CameraPose>> {
    let target = Vector3::from(spec.target);
    (0..spec.frames)
        .map(|i| {
            let phase = 2.0 * PI * i as f64 / spec.frames as f64;
            let a = spec.start_angle + phase;
            let z = spec.height + spec.vertical_wave * (2.0 * phase).sin();
            let eye = Vector3::new(spec.radius * a.cos(), spec.radius * a.sin(), z);
            CameraPose::look_at(eye, target, Vector3::z())
        })
        .collect()
}

struct Render {
    depth: Vec<f32>,
    owner: Vec<u32>,
}

/// Point z-buffer: each pixel keeps the nearest cloud point (ties: lower
/// index), using the same projection as the visibility test.
fn zbuffer(scene: &SynthScene, k: &CameraIntrinsics, pose: &CameraPose) -> Render {
    let (rot, trans) = pose.world_to_camera();
    let n = k.pixel_count();
    let mut best = vec![f64::INFINITY; n];
    let mut owner = vec![BACKGROUND; n];
    for (i, p) in scene.cloud.points().iter().enumerate() {
        let cam = rot * Vector3::new(p[0] as f64, p[1] as f64, p[2] as f64) + trans;
        let Some((row, col)) = k.project(&cam) else {
            continue;
        };
        let pix = (row * k.width + col) as usize;
        if cam.z < best[pix] {
            best[pix] = cam.z;
            owner[pix] = scene.labels[i];
        }
    }
    let depth = best.iter().map(|&d| if d.is_finite() { d as f32 } else { 0.0 }).collect();
    Render { depth, owner }
}

/// Rotates unit vector `f` by `angle` towards a random orthogonal direction.
pub(crate) fn perturb(f: &[f32], angle: f64, rng: &mut impl Rng) -> Vec<f32> {
    if angle == 0.0 {
        return f.to_vec();
    }
    loop {
        let r = random_unit(rng, f.len());
        let along = vector::dot(&r, f);
        let ortho: Vec<f64> = r.iter().zip(f).map(|(&x, &y)| x as f64 - along * y as f64).collect();
        let n = ortho.iter().map(|v| v * v).sum::<f64>().sqrt();
        if n < 1e-6 {
            continue;
        }
        let (c, s) = (angle.cos(), angle.sin());
        let out: Vec<f64> = f.iter().zip(&ortho).map(|(&a, &o)| c * a as f64 + s * o / n).collect();
        return vector::normalized_f32(&out);
    }
}

fn ellipse_mask(w: u32, h: u32, rng: &mut impl Rng) -> Vec<bool> {
    let (wf, hf) = (w as f64, h as f64);
    let side = wf.min(hf);
    let (cx, cy) = (rng.random_range(0.0..wf), rng.random_range(0.0..hf));
    let (a, b) = (rng.random_range(0.05..0.2) * side, rng.random_range(0.05..0.2) * side);
    let t: f64 = rng.random_range(0.0..PI);
    let (ct, st) = (t.cos(), t.sin());
    let mut m = vec![false; (w * h) as usize];
    for r in 0..h {
        for c in 0..w {
            let (dx, dy) = (c as f64 - cx, r as f64 - cy);
            let (u, v) = (dx * ct + dy * st, -dx * st + dy * ct);
            m[(r * w + c) as usize] = (u / a).powi(2) + (v / b).powi(2) <= 1.0;
        }
    }
    m
}

/// Renders depth and region proposals for one camera.
pub fn render_observation(
    scene: &SynthScene,
    frame_id: u64,
    intrinsics: &CameraIntrinsics,
    pose: &CameraPose,
    noise: &NoiseSpec,
    seed: u64,
) -> Result<FrameObservation> {
    intrinsics.validate()?;
    noise.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(seed ^ splitmix64(frame_id)));
    let Render { mut depth, owner } = zbuffer(scene, intrinsics, pose);
    let (w, h) = (intrinsics.width as usize, intrinsics.height as usize);
    if noise.depth_noise_sigma > 0.0 {
        let normal = Normal::new(0.0, noise.depth_noise_sigma).map_err(|e| Error::validation(e.to_string()))?;
        for d in depth.iter_mut().filter(|d| **d > 0.0) {
            *d = (*d as f64 + normal.sample(&mut rng)).max(0.0) as f32;
        }
    }

    let mut regions = Vec::new();
    for (o, obj) in scene.spec.objects.iter().enumerate() {
        let mut mask: Vec<bool> = owner.iter().map(|&l| l == o as u32).collect();
        if !mask.iter().any(|&b| b) {
            continue;
        }
        let dropped = rng.random::<f64>() < noise.mask_dropout_prob;
        let k = noise.mask_boundary_erosion as i32;
        if k > 0 {
            let r = rng.random_range(-k..=k);
            mask = morphology::offset(&morphology::close(&mask, w, h), w, h, r);
        }
        let feature = perturb(&obj.feature, rng.random::<f64>() * noise.feature_noise_angle, &mut rng);
        let area = mask.iter().filter(|&&b| b).count();
        if dropped || area < noise.min_region_pixels {
            continue;
        }
        let mask = RleMask::encode(intrinsics.width, intrinsics.height, &mask)?;
        regions.push(Region2D::new(mask, feature, 1.0)?);
    }

    let rate = noise.false_positive_rate;
    let extra = rate.floor() as usize + usize::from(rng.random::<f64>() < rate.fract());
    for _ in 0..extra {
        let mask = ellipse_mask(intrinsics.width, intrinsics.height, &mut rng);
        let feature = random_unit(&mut rng, scene.feature_dim().max(1));
        let confidence = rng.random_range(0.3..1.0);
        regions.push(Region2D::new(
            RleMask::encode(intrinsics.width, intrinsics.height, &mask)?,
            feature,
            confidence,
        )?);
    }

    let frame = FrameObservation {
        frame_id,
        intrinsics: *intrinsics,
        pose: *pose,
        depth: Some(depth),
        regions,
    };
    frame.validate()?;
    Ok(frame)
}

/// Renders one frame per pose; frame ids are the pose indices.
pub fn render_sequence(
    scene: &SynthScene,
    intrinsics: &CameraIntrinsics,
    poses: &[CameraPose],
    noise: &NoiseSpec,
    seed: u64,
) -> Result<Vec<FrameObservation>> {
    poses
        .par_iter()
        .enumerate()
        .map(|(i, pose)| render_observation(scene, i as u64, intrinsics, pose, noise, seed))
        .collect()
}

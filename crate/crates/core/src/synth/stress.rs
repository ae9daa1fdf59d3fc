//! A large planar fixture for timing fusion: a bank of tile-shaped instances
//! re-observed by frames of jittered tiles.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::random_unit;
use super::render::perturb;
use crate::error::{Error, Result};
use crate::scene::{CameraIntrinsics, CameraPose, FrameObservation, Region2D, RleMask, ScenePointCloud};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StressSpec {
    pub points: usize,
    pub instances: usize,
    pub regions_per_frame: usize,
    pub feature_dim: usize,
    pub frames: usize,
    pub width: u32,
    pub height: u32,
    pub seed: u64,
}

impl Default for StressSpec {
    fn default() -> Self {
        Self {
            points: 100_000,
            instances: 200,
            regions_per_frame: 50,
            feature_dim: 512,
            frames: 20,
            width: 640,
            height: 480,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct StressFixture {
    pub cloud: ScenePointCloud,
    /// One region per tile; fusing it into an empty bank yields
    /// `instances` instances.
    pub warmup: FrameObservation,
    pub frames: Vec<FrameObservation>,
}

const PLANE_DEPTH: f64 = 2.0;

fn tile_mask(k: &CameraIntrinsics, rect: [i64; 4]) -> Result<RleMask> {
    let (w, h) = (k.width as i64, k.height as i64);
    let mut bits = vec![false; k.pixel_count()];
    for r in rect[0].max(0)..rect[1].min(h) {
        for c in rect[2].max(0)..rect[3].min(w) {
            bits[(r * w + c) as usize] = true;
        }
    }
    RleMask::encode(k.width, k.height, &bits)
}

pub fn stress_fixture(spec: &StressSpec) -> Result<StressFixture> {
    if spec.instances == 0 || spec.points == 0 || spec.feature_dim == 0 {
        return Err(Error::validation("stress fixture needs points, instances and features"));
    }
    if spec.regions_per_frame > spec.instances {
        return Err(Error::validation("more regions per frame than instances"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (w, h) = (spec.width, spec.height);
    let k = CameraIntrinsics::new(500.0, 500.0, (w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0, w, h)?;

    // Points on the plane z = PLANE_DEPTH covering the whole image.
    let (hx, hy) = (k.cx / k.fx * PLANE_DEPTH, k.cy / k.fy * PLANE_DEPTH);
    let points: Vec<[f32; 3]> = (0..spec.points)
        .map(|_| {
            [
                rng.random_range(-hx..hx) as f32,
                rng.random_range(-hy..hy) as f32,
                PLANE_DEPTH as f32,
            ]
        })
        .collect();
    let cloud = ScenePointCloud::new(points, None)?;
    let depth = vec![PLANE_DEPTH as f32; k.pixel_count()];

    let cols = ((spec.instances as f64 * w as f64 / h as f64).sqrt().ceil() as usize).max(1);
    let rows = spec.instances.div_ceil(cols);
    let (tw, th) = (w as i64 / cols as i64, h as i64 / rows as i64);
    let tiles: Vec<[i64; 4]> = (0..spec.instances)
        .map(|t| {
            let (r, c) = ((t / cols) as i64, (t % cols) as i64);
            [r * th, (r + 1) * th, c * tw, (c + 1) * tw]
        })
        .collect();
    let features: Vec<Vec<f32>> = (0..spec.instances).map(|_| random_unit(&mut rng, spec.feature_dim)).collect();

    let frame = |id: u64, regions: Vec<Region2D>| FrameObservation {
        frame_id: id,
        intrinsics: k,
        pose: CameraPose::identity(),
        depth: Some(depth.clone()),
        regions,
    };
    let warmup_regions = tiles
        .iter()
        .zip(&features)
        .map(|(t, f)| Region2D::new(tile_mask(&k, *t)?, f.clone(), 1.0))
        .collect::<Result<_>>()?;
    let warmup = frame(0, warmup_regions);

    let mut frames = Vec::with_capacity(spec.frames);
    for i in 0..spec.frames {
        let chosen = index::sample(&mut rng, spec.instances, spec.regions_per_frame).into_vec();
        let mut regions = Vec::with_capacity(chosen.len());
        for t in chosen {
            let (dr, dc) = (rng.random_range(-2..=2), rng.random_range(-2..=2));
            let r = tiles[t];
            let rect = [r[0] + dr, r[1] + dr, r[2] + dc, r[3] + dc];
            let f = perturb(&features[t], 0.1, &mut rng);
            regions.push(Region2D::new(tile_mask(&k, rect)?, f, 1.0)?);
        }
        frames.push(frame(i as u64 + 1, regions));
    }
    Ok(StressFixture { cloud, warmup, frames })
}

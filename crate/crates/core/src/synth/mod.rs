//! Synthetic scenes with exact ground truth, rendered into frame
//! observations with controllable noise.

mod morphology;
mod render;
mod stress;

pub use render::{orbit, render_observation, render_sequence, NoiseSpec, OrbitSpec};
pub use stress::{stress_fixture, StressFixture, StressSpec};

use std::collections::BTreeMap;
use std::f64::consts::PI;

use nalgebra::{Rotation3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scene::{
    CameraIntrinsics, FrameObservation, GroundTruthAnnotation, GroundTruthInstance, QueryEmbedding, ScenePointCloud,
};
use crate::vector;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Shape {
    /// Full edge lengths along the local x, y, z axes.
    Box { size: [f64; 3] },
    Sphere { radius: f64 },
    /// Axis along world z.
    Cylinder { radius: f64, height: f64 },
}

impl Shape {
    /// Half extents of an axis-aligned box containing the shape for any yaw.
    fn half_extents(&self) -> [f64; 3] {
        match *self {
            Shape::Box { size } => {
                let r = 0.5 * (size[0] * size[0] + size[1] * size[1]).sqrt();
                [r, r, size[2] / 2.0]
            }
            Shape::Sphere { radius } => [radius; 3],
            Shape::Cylinder { radius, height } => [radius, radius, height / 2.0],
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            Shape::Box { size } => size.iter().all(|&s| s > 0.0 && s.is_finite()),
            Shape::Sphere { radius } => radius > 0.0 && radius.is_finite(),
            Shape::Cylinder { radius, height } => radius > 0.0 && height > 0.0 && radius.is_finite() && height.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::validation(format!("invalid shape dimensions {self:?}")))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthObject {
    pub shape: Shape,
    pub center: [f64; 3],
    /// Rotation about world z, radians.
    #[serde(default)]
    pub yaw: f64,
    pub feature: Vec<f32>,
    pub category: String,
}

/// A rectangular floor at z = 0 used as unlabeled background.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Floor {
    pub half_extent: [f64; 2],
    pub density: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSceneSpec {
    pub objects: Vec<SynthObject>,
    pub floor: Option<Floor>,
    /// Object surface samples per square meter.
    pub density: f64,
    /// Surface elements whose outward normal has a z component below this are
    /// not sampled. -1 keeps everything.
    #[serde(default = "keep_all_normals")]
    pub min_normal_z: f64,
    /// Minimum clearance between object bounding boxes, meters.
    #[serde(default)]
    pub min_clearance: f64,
    pub seed: u64,
}

fn keep_all_normals() -> f64 {
    -1.0
}

impl SynthSceneSpec {
    pub fn validate(&self) -> Result<()> {
        if self.density.is_nan() || self.density <= 0.0 {
            return Err(Error::validation("density must be positive"));
        }
        if let Some(f) = &self.floor {
            if f.density.is_nan() || f.density <= 0.0 || f.half_extent.iter().any(|h| h.is_nan() || *h <= 0.0) {
                return Err(Error::validation("floor needs positive extent and density"));
            }
        }
        let dim = self.objects.first().map(|o| o.feature.len());
        for (i, o) in self.objects.iter().enumerate() {
            o.shape.validate()?;
            if Some(o.feature.len()) != dim || vector::norm(&o.feature) == 0.0 {
                return Err(Error::validation(format!("object {i} has an invalid feature")));
            }
            if o.category.is_empty() {
                return Err(Error::validation(format!("object {i} has no category")));
            }
        }
        for i in 0..self.objects.len() {
            for j in i + 1..self.objects.len() {
                if boxes_overlap(&self.objects[i], &self.objects[j], self.min_clearance) {
                    return Err(Error::validation(format!("objects {i} and {j} overlap")));
                }
            }
        }
        Ok(())
    }

    /// A benchmark layout: `n_objects` boxes, spheres and cylinders on a
    /// floor, with random unit features of dimension `feature_dim`.
    pub fn benchmark(n_objects: usize, feature_dim: usize, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let gap = 0.08;
        let clearance = 0.15;
        let mut objects: Vec<SynthObject> = Vec::new();
        for i in 0..n_objects {
            let mut placed = false;
            for _ in 0..1000 {
                let shape = match i % 3 {
                    0 => Shape::Box {
                        size: [rng.random_range(0.25..0.5), rng.random_range(0.25..0.5), rng.random_range(0.25..0.5)],
                    },
                    1 => Shape::Sphere {
                        radius: rng.random_range(0.15..0.25),
                    },
                    _ => Shape::Cylinder {
                        radius: rng.random_range(0.12..0.2),
                        height: rng.random_range(0.3..0.6),
                    },
                };
                let half_z = shape.half_extents()[2];
                let obj = SynthObject {
                    shape,
                    center: [rng.random_range(-0.9..0.9), rng.random_range(-0.9..0.9), gap + half_z],
                    yaw: rng.random_range(0.0..PI),
                    feature: Vec::new(),
                    category: format!("object_{i}"),
                };
                if objects.iter().all(|o| !boxes_overlap(o, &obj, clearance)) {
                    objects.push(obj);
                    placed = true;
                    break;
                }
            }
            if !placed {
                return Err(Error::validation(format!("could not place {n_objects} objects")));
            }
        }
        for o in &mut objects {
            o.feature = random_unit(&mut rng, feature_dim);
        }
        Ok(Self {
            objects,
            floor: Some(Floor {
                half_extent: [1.6, 1.6],
                density: 2500.0,
            }),
            density: 20000.0,
            min_normal_z: -0.5,
            min_clearance: clearance,
            seed,
        })
    }
}

fn boxes_overlap(a: &SynthObject, b: &SynthObject, clearance: f64) -> bool {
    let (ha, hb) = (a.shape.half_extents(), b.shape.half_extents());
    (0..3).all(|k| (a.center[k] - b.center[k]).abs() < ha[k] + hb[k] + clearance)
}

pub(crate) fn random_unit(rng: &mut impl Rng, dim: usize) -> Vec<f32> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        if v.iter().map(|x| x * x).sum::<f64>() > 1e-12 {
            return vector::normalized_f32(&v);
        }
    }
}

/// Ground-truth label for background points.
pub const BACKGROUND: u32 = u32::MAX;

/// A generated scene and everything needed to render observations of it.
#[derive(Debug, Clone)]
pub struct SynthScene {
    pub spec: SynthSceneSpec,
    pub cloud: ScenePointCloud,
    pub ground_truth: GroundTruthAnnotation,
    /// Object index per cloud point, or [`BACKGROUND`].
    pub labels: Vec<u32>,
}

impl SynthScene {
    pub fn feature_dim(&self) -> usize {
        self.spec.objects.first().map_or(0, |o| o.feature.len())
    }

    pub fn object_feature(&self, object: usize) -> &[f32] {
        &self.spec.objects[object].feature
    }
}

/// Samples object surfaces and the floor. Object `i` becomes ground-truth
/// instance `i`; floor points are unlabeled.
pub fn generate_scene(spec: &SynthSceneSpec) -> Result<SynthScene> {
    spec.validate()?;
    let mut points: Vec<[f32; 3]> = Vec::new();
    let mut labels = Vec::new();
    let mut instances = Vec::new();
    for (i, obj) in spec.objects.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ ((i as u64 + 1) << 40));
        let local = sample_shape(&obj.shape, spec.density, spec.min_normal_z, &mut rng);
        let rot = Rotation3::from_axis_angle(&Vector3::z_axis(), obj.yaw);
        let c = Vector3::from(obj.center);
        let start = points.len() as u32;
        for p in local {
            let w = rot * p + c;
            points.push([w.x as f32, w.y as f32, w.z as f32]);
            labels.push(i as u32);
        }
        instances.push(GroundTruthInstance {
            id: i as u32,
            category: obj.category.clone(),
            point_indices: (start..points.len() as u32).collect(),
        });
    }
    if let Some(floor) = &spec.floor {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0xF100_0000_0000);
        let [hx, hy] = floor.half_extent;
        for (x, y) in stratified(2.0 * hx, 2.0 * hy, floor.density, &mut rng) {
            points.push([(x - hx) as f32, (y - hy) as f32, 0.0]);
            labels.push(BACKGROUND);
        }
    }
    if points.is_empty() {
        return Err(Error::validation("scene has no surface points"));
    }
    let cloud = ScenePointCloud::new(points, None)?;
    let ground_truth = GroundTruthAnnotation { instances };
    ground_truth.validate(Some(cloud.len()))?;
    Ok(SynthScene {
        spec: spec.clone(),
        cloud,
        ground_truth,
        labels,
    })
}

/// Jittered grid over an `a` by `b` rectangle with roughly `density * a * b`
/// samples.
fn stratified(a: f64, b: f64, density: f64, rng: &mut impl Rng) -> Vec<(f64, f64)> {
    let n = (a * b * density).round().max(1.0);
    let nu = ((n * a / b).sqrt().round() as usize).max(1);
    let nv = ((n / nu as f64).round() as usize).max(1);
    let (du, dv) = (a / nu as f64, b / nv as f64);
    let mut out = Vec::with_capacity(nu * nv);
    for i in 0..nu {
        for j in 0..nv {
            out.push(((i as f64 + rng.random::<f64>()) * du, (j as f64 + rng.random::<f64>()) * dv));
        }
    }
    out
}

/// Surface samples in the shape's local frame (centered at the origin).
fn sample_shape(shape: &Shape, density: f64, min_normal_z: f64, rng: &mut impl Rng) -> Vec<Vector3<f64>> {
    let mut out = Vec::new();
    match *shape {
        Shape::Box { size } => {
            let h = [size[0] / 2.0, size[1] / 2.0, size[2] / 2.0];
            // (normal axis, sign, in-plane axes)
            for (axis, sign) in [(0, 1.0), (0, -1.0), (1, 1.0), (1, -1.0), (2, 1.0), (2, -1.0)] {
                let normal_z = if axis == 2 { sign } else { 0.0 };
                if normal_z < min_normal_z {
                    continue;
                }
                let (u, v) = ((axis + 1) % 3, (axis + 2) % 3);
                for (a, b) in stratified(size[u], size[v], density, rng) {
                    let mut p = Vector3::zeros();
                    p[axis] = sign * h[axis];
                    p[u] = a - h[u];
                    p[v] = b - h[v];
                    out.push(p);
                }
            }
        }
        Shape::Sphere { radius } => {
            let n = ((4.0 * PI * radius * radius * density).round() as usize).max(1);
            let golden = PI * (3.0 - 5f64.sqrt());
            for i in 0..n {
                let z = 1.0 - (2.0 * i as f64 + 1.0) / n as f64;
                if z < min_normal_z {
                    continue;
                }
                let r = (1.0 - z * z).sqrt();
                let t = golden * i as f64;
                out.push(Vector3::new(r * t.cos(), r * t.sin(), z) * radius);
            }
        }
        Shape::Cylinder { radius, height } => {
            let h = height / 2.0;
            for (a, b) in stratified(2.0 * PI * radius, height, density, rng).into_iter().filter(|_| min_normal_z <= 0.0) {
                let t = a / radius;
                out.push(Vector3::new(radius * t.cos(), radius * t.sin(), b - h));
            }
            for sign in [1.0, -1.0] {
                if sign < min_normal_z {
                    continue;
                }
                for (a, b) in stratified(2.0 * radius, 2.0 * radius, density, rng) {
                    let (x, y) = (a - radius, b - radius);
                    if x * x + y * y <= radius * radius {
                        out.push(Vector3::new(x, y, sign * h));
                    }
                }
            }
        }
    }
    out
}

/// Camera used by the benchmark scenes.
pub fn default_intrinsics() -> CameraIntrinsics {
    CameraIntrinsics {
        fx: 280.0,
        fy: 280.0,
        cx: 159.5,
        cy: 119.5,
        width: 320,
        height: 240,
    }
}

impl SynthScene {
    /// One query per category: the object's own feature.
    pub fn queries(&self) -> BTreeMap<String, QueryEmbedding> {
        self.spec
            .objects
            .iter()
            .map(|o| {
                let q = QueryEmbedding::new(o.feature.clone(), Some(o.category.clone())).expect("validated feature");
                (o.category.clone(), q)
            })
            .collect()
    }
}

/// Parameters of a complete synthetic run: layout, camera path and noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchmarkSpec {
    pub n_objects: usize,
    pub feature_dim: usize,
    pub orbit: OrbitSpec,
    pub noise: NoiseSpec,
    pub intrinsics: CameraIntrinsics,
    pub seed: u64,
}

impl Default for BenchmarkSpec {
    fn default() -> Self {
        Self {
            n_objects: 5,
            feature_dim: 64,
            orbit: OrbitSpec::default(),
            noise: NoiseSpec::default(),
            intrinsics: default_intrinsics(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Benchmark {
    pub scene: SynthScene,
    pub frames: Vec<FrameObservation>,
}

/// Generates the layout for `spec.seed` and renders the orbit.
pub fn benchmark(spec: &BenchmarkSpec) -> Result<Benchmark> {
    let scene = generate_scene(&SynthSceneSpec::benchmark(spec.n_objects, spec.feature_dim, spec.seed)?)?;
    let poses = orbit(&spec.orbit)?;
    let frames = render_sequence(&scene, &spec.intrinsics, &poses, &spec.noise, spec.seed)?;
    Ok(Benchmark { scene, frames })
}

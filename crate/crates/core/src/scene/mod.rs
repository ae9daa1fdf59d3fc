//! Shared domain types and their interchange formats.
//!
//! Every instance mask in the engine is a sorted set of indices into one
//! [`ScenePointCloud`]. Loaded features are unit length, so cosine
//! similarity downstream is a dot product.

mod dir;
mod frame;
mod gt;
mod ply;
mod query;
mod rle;

pub use dir::{load_query_dir, SceneDir};
pub use frame::{load_frame, read_frame, save_frame, write_frame, FRAME_MAGIC};
pub use gt::{load_ground_truth, save_ground_truth, GroundTruthAnnotation, GroundTruthInstance};
pub use ply::{load_cloud, read_cloud, save_cloud, write_cloud};
pub use query::{load_query, read_query, save_query, write_query, QueryEmbedding};
pub use rle::RleMask;

use nalgebra::{Matrix3, Matrix4, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vector;

/// The reconstructed scan. Point indices `0..len()` are the index space of
/// every instance mask.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenePointCloud {
    points: Vec<[f32; 3]>,
    colors: Option<Vec<[u8; 3]>>,
}

impl ScenePointCloud {
    pub fn new(points: Vec<[f32; 3]>, colors: Option<Vec<[u8; 3]>>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::validation("point cloud is empty"));
        }
        if points.iter().flatten().any(|c| !c.is_finite()) {
            return Err(Error::validation("non-finite point coordinate"));
        }
        if let Some(c) = &colors {
            if c.len() != points.len() {
                return Err(Error::validation(format!(
                    "color count {} does not match point count {}",
                    c.len(),
                    points.len()
                )));
            }
        }
        Ok(Self { points, colors })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[[f32; 3]] {
        &self.points
    }

    pub fn colors(&self) -> Option<&[[u8; 3]]> {
        self.colors.as_deref()
    }

    pub fn point(&self, index: u32) -> [f32; 3] {
        self.points[index as usize]
    }
}

/// Pinhole intrinsics in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: u32, height: u32) -> Result<Self> {
        let k = Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.fx, self.fy, self.cx, self.cy].iter().all(|v| v.is_finite());
        if !finite || self.fx <= 0.0 || self.fy <= 0.0 {
            return Err(Error::validation("focal lengths must be positive and finite"));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::validation("image size must be nonzero"));
        }
        if !(0.0..self.width as f64).contains(&self.cx) || !(0.0..self.height as f64).contains(&self.cy)
        {
            return Err(Error::validation("principal point outside the image"));
        }
        Ok(())
    }

    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }

    /// Projects a camera-frame point to the nearest pixel `(row, col)`.
    /// Returns `None` behind the camera or outside the image.
    #[inline]
    pub fn project(&self, p: &Vector3<f64>) -> Option<(u32, u32)> {
        if p.z <= 0.0 {
            return None;
        }
        let u = (self.fx * p.x / p.z + self.cx).round();
        let v = (self.fy * p.y / p.z + self.cy).round();
        if u < 0.0 || v < 0.0 || u >= self.width as f64 || v >= self.height as f64 {
            return None;
        }
        Some((v as u32, u as u32))
    }
}

/// Rigid camera-to-world transform, stored row-major.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraPose {
    matrix: [f64; 16],
}

const POSE_TOLERANCE: f64 = 1e-4;

impl CameraPose {
    pub fn from_row_major(matrix: [f64; 16]) -> Result<Self> {
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::validation("pose contains non-finite values"));
        }
        if matrix[12..] != [0.0, 0.0, 0.0, 1.0] {
            return Err(Error::validation("pose last row must be (0, 0, 0, 1)"));
        }
        let pose = Self { matrix };
        let r = pose.rotation();
        let orth = (r.transpose() * r - Matrix3::identity()).abs().max();
        if orth > POSE_TOLERANCE || (r.determinant() - 1.0).abs() > POSE_TOLERANCE {
            return Err(Error::validation("pose rotation block is not a proper rotation"));
        }
        Ok(pose)
    }

    pub fn identity() -> Self {
        Self::from_matrix(&Matrix4::identity())
    }

    /// Builds a pose from rotation and camera center without validation
    /// beyond what the caller guarantees.
    pub fn from_rotation_translation(r: &Matrix3<f64>, t: &Vector3<f64>) -> Result<Self> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(r);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(t);
        let mut row_major = [0.0; 16];
        for (i, v) in row_major.iter_mut().enumerate() {
            *v = m[(i / 4, i % 4)];
        }
        Self::from_row_major(row_major)
    }

    fn from_matrix(m: &Matrix4<f64>) -> Self {
        let mut matrix = [0.0; 16];
        for (i, v) in matrix.iter_mut().enumerate() {
            *v = m[(i / 4, i % 4)];
        }
        Self { matrix }
    }

    /// Camera looking from `eye` towards `target`, image `y` pointing
    /// roughly along `-up` (x right, y down, z forward).
    pub fn look_at(eye: Vector3<f64>, target: Vector3<f64>, up: Vector3<f64>) -> Result<Self> {
        let z = (target - eye).normalize();
        let x = z.cross(&up);
        if x.norm() < 1e-9 {
            return Err(Error::validation("look-at direction is parallel to up"));
        }
        let x = x.normalize();
        let y = z.cross(&x);
        let r = Matrix3::from_columns(&[x, y, z]);
        Self::from_rotation_translation(&r, &eye)
    }

    pub fn row_major(&self) -> &[f64; 16] {
        &self.matrix
    }

    pub fn rotation(&self) -> Matrix3<f64> {
        let m = &self.matrix;
        Matrix3::new(m[0], m[1], m[2], m[4], m[5], m[6], m[8], m[9], m[10])
    }

    pub fn translation(&self) -> Vector3<f64> {
        Vector3::new(self.matrix[3], self.matrix[7], self.matrix[11])
    }

    /// World-to-camera transform as `(R^T, -R^T t)`.
    pub fn world_to_camera(&self) -> (Matrix3<f64>, Vector3<f64>) {
        let rt = self.rotation().transpose();
        let t = -(rt * self.translation());
        (rt, t)
    }
}

/// A 2D region proposal with its text-aligned feature.
#[derive(Debug, Clone, PartialEq)]
pub struct Region2D {
    pub mask: RleMask,
    pub feature: Vec<f32>,
    pub confidence: f32,
}

impl Region2D {
    /// Builds a region, normalizing the feature to unit length.
    pub fn new(mask: RleMask, mut feature: Vec<f32>, confidence: f32) -> Result<Self> {
        if feature.is_empty() {
            return Err(Error::validation("region feature is empty"));
        }
        if !vector::normalize_in_place(&mut feature) {
            return Err(Error::validation("region feature has zero norm or non-finite entries"));
        }
        if !(0.0..=1.0).contains(&confidence) {
            return Err(Error::validation(format!("confidence {confidence} outside [0, 1]")));
        }
        Ok(Self {
            mask,
            feature,
            confidence,
        })
    }
}

/// One RGB-D frame: calibration, pose, depth and region proposals.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameObservation {
    pub frame_id: u64,
    pub intrinsics: CameraIntrinsics,
    pub pose: CameraPose,
    /// Row-major depths in meters; 0 marks missing depth.
    pub depth: Option<Vec<f32>>,
    pub regions: Vec<Region2D>,
}

impl FrameObservation {
    pub fn validate(&self) -> Result<()> {
        self.intrinsics.validate()?;
        let (w, h) = (self.intrinsics.width, self.intrinsics.height);
        if let Some(depth) = &self.depth {
            if depth.len() != self.intrinsics.pixel_count() {
                return Err(Error::validation("depth size does not match image size"));
            }
            if depth.iter().any(|d| !d.is_finite() || *d < 0.0) {
                return Err(Error::validation("depth values must be finite and non-negative"));
            }
        }
        let dim = self.feature_dim();
        for (i, r) in self.regions.iter().enumerate() {
            if r.mask.width() != w || r.mask.height() != h {
                return Err(Error::validation(format!("region {i} mask size differs from frame")));
            }
            if Some(r.feature.len()) != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim.unwrap_or(0),
                    found: r.feature.len(),
                });
            }
        }
        Ok(())
    }

    /// Common feature dimension of the regions, if any.
    pub fn feature_dim(&self) -> Option<usize> {
        self.regions.first().map(|r| r.feature.len())
    }
}

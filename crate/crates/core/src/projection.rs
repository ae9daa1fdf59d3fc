//! Forward projection of the scene cloud into a frame and back-projection of
//! 2D regions onto cloud point indices.
//!
//! One pass over the cloud per frame decides visibility for every point; a
//! pixel-bucketed index of the visible points then turns each foreground RLE
//! run into a contiguous slice of point indices.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::scene::{FrameObservation, Region2D, ScenePointCloud};

const NOT_VISIBLE: u32 = u32::MAX;
const CHUNK: usize = 16 * 1024;

/// Points of the cloud visible in one frame.
#[derive(Debug, Clone)]
pub struct VisibilityResult {
    width: u32,
    /// Sorted visible point indices.
    visible: Vec<u32>,
    /// Linear pixel index per cloud point, `NOT_VISIBLE` otherwise.
    pixel: Vec<u32>,
    /// CSR index: visible points grouped by pixel, in ascending point order.
    pixel_offsets: Vec<u32>,
    by_pixel: Vec<u32>,
}

impl VisibilityResult {
    pub fn visible(&self) -> &[u32] {
        &self.visible
    }

    pub fn len(&self) -> usize {
        self.visible.len()
    }

    pub fn is_empty(&self) -> bool {
        self.visible.is_empty()
    }

    #[inline]
    pub fn is_visible(&self, point: u32) -> bool {
        self.pixel[point as usize] != NOT_VISIBLE
    }

    /// `(row, col)` of a visible point.
    pub fn pixel_of(&self, point: u32) -> Option<(u32, u32)> {
        match self.pixel.get(point as usize) {
            Some(&p) if p != NOT_VISIBLE => Some((p / self.width, p % self.width)),
            _ => None,
        }
    }

    /// Visible points landing on the half-open linear pixel range.
    fn points_in_pixels(&self, start: usize, end: usize) -> &[u32] {
        let lo = self.pixel_offsets[start] as usize;
        let hi = self.pixel_offsets[end] as usize;
        &self.by_pixel[lo..hi]
    }
}

/// A region back-projected onto the cloud.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Region3D {
    /// Index of the originating region within its frame.
    pub source_region: usize,
    /// Sorted cloud point indices.
    pub point_indices: Vec<u32>,
}

impl Region3D {
    pub fn len(&self) -> usize {
        self.point_indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.point_indices.is_empty()
    }
}

/// A point is visible when it lies in front of the camera, rounds to a pixel
/// inside the image, and that pixel holds valid depth within
/// `depth_tolerance` of the point's camera-frame depth.
pub fn compute_visibility(
    cloud: &ScenePointCloud,
    frame: &FrameObservation,
    depth_tolerance: f64,
) -> Result<VisibilityResult> {
    let depth = frame
        .depth
        .as_deref()
        .ok_or_else(|| Error::validation(format!("frame {} has no depth", frame.frame_id)))?;
    let k = frame.intrinsics;
    let (rot, trans) = frame.pose.world_to_camera();
    let width = k.width;

    let hits: Vec<Vec<(u32, u32)>> = cloud
        .points()
        .par_chunks(CHUNK)
        .enumerate()
        .map(|(chunk, pts)| {
            let base = (chunk * CHUNK) as u32;
            let mut out = Vec::new();
            for (i, p) in pts.iter().enumerate() {
                let world = nalgebra::Vector3::new(p[0] as f64, p[1] as f64, p[2] as f64);
                let cam = rot * world + trans;
                let Some((row, col)) = k.project(&cam) else {
                    continue;
                };
                let pix = row * width + col;
                let d = depth[pix as usize] as f64;
                if d > 0.0 && (cam.z - d).abs() <= depth_tolerance {
                    out.push((base + i as u32, pix));
                }
            }
            out
        })
        .collect();

    let total: usize = hits.iter().map(Vec::len).sum();
    let mut visible = Vec::with_capacity(total);
    let mut pixel = vec![NOT_VISIBLE; cloud.len()];
    let mut pixel_offsets = vec![0u32; k.pixel_count() + 1];
    for &(p, pix) in hits.iter().flatten() {
        visible.push(p);
        pixel[p as usize] = pix;
        pixel_offsets[pix as usize + 1] += 1;
    }
    for i in 1..pixel_offsets.len() {
        pixel_offsets[i] += pixel_offsets[i - 1];
    }
    let mut cursor = pixel_offsets.clone();
    let mut by_pixel = vec![0u32; total];
    for &p in &visible {
        let slot = &mut cursor[pixel[p as usize] as usize];
        by_pixel[*slot as usize] = p;
        *slot += 1;
    }

    Ok(VisibilityResult {
        width,
        visible,
        pixel,
        pixel_offsets,
        by_pixel,
    })
}

/// Visible points whose pixel lies inside the region mask.
pub fn project_region(region: &Region2D, source_region: usize, vis: &VisibilityResult) -> Region3D {
    let mut point_indices = Vec::new();
    for run in region.mask.foreground_runs() {
        point_indices.extend_from_slice(vis.points_in_pixels(run.start, run.end));
    }
    point_indices.sort_unstable();
    Region3D {
        source_region,
        point_indices,
    }
}

/// Projects every region of a frame, dropping those with fewer than
/// `min_points` points.
pub fn project_frame(frame: &FrameObservation, vis: &VisibilityResult, min_points: usize) -> Vec<Region3D> {
    frame
        .regions
        .par_iter()
        .enumerate()
        .map(|(i, r)| project_region(r, i, vis))
        .filter(|r| r.len() >= min_points)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{CameraIntrinsics, CameraPose, RleMask};

    fn intrinsics() -> CameraIntrinsics {
        CameraIntrinsics::new(10.0, 10.0, 5.0, 5.0, 10, 10).unwrap()
    }

    fn frame_with_depth(depth: Vec<f32>, regions: Vec<Region2D>) -> FrameObservation {
        FrameObservation {
            frame_id: 0,
            intrinsics: intrinsics(),
            pose: CameraPose::identity(),
            depth: Some(depth),
            regions,
        }
    }

    #[test]
    fn point_on_depth_surface_is_visible() {
        // Pixel (5, 5) is the principal point.
        let cloud = ScenePointCloud::new(vec![[0.0, 0.0, 2.0]], None).unwrap();
        let mut depth = vec![0.0; 100];
        depth[55] = 2.0;
        let vis = compute_visibility(&cloud, &frame_with_depth(depth, vec![]), 0.05).unwrap();
        assert_eq!(vis.visible(), &[0]);
        assert_eq!(vis.pixel_of(0), Some((5, 5)));
    }

    #[test]
    fn point_behind_camera_is_not_visible() {
        let cloud = ScenePointCloud::new(vec![[0.0, 0.0, -2.0]], None).unwrap();
        let vis = compute_visibility(&cloud, &frame_with_depth(vec![2.0; 100], vec![]), 0.05).unwrap();
        assert!(vis.is_empty());
        assert_eq!(vis.pixel_of(0), None);
    }

    #[test]
    fn depth_mismatch_and_invalid_depth_hide_points() {
        let cloud = ScenePointCloud::new(vec![[0.0, 0.0, 2.0], [0.1, 0.0, 2.0]], None).unwrap();
        let mut depth = vec![0.0; 100];
        depth[55] = 1.9; // occluder 10 cm in front
        let vis = compute_visibility(&cloud, &frame_with_depth(depth, vec![]), 0.05).unwrap();
        assert!(vis.is_empty());
    }

    #[test]
    fn frame_without_depth_is_an_error() {
        let cloud = ScenePointCloud::new(vec![[0.0, 0.0, 1.0]], None).unwrap();
        let mut f = frame_with_depth(vec![], vec![]);
        f.depth = None;
        assert!(compute_visibility(&cloud, &f, 0.05).is_err());
    }

    fn grid_cloud() -> (ScenePointCloud, Vec<f32>) {
        // One point per pixel on the plane z = 1.
        let mut pts = Vec::new();
        for row in 0..10 {
            for col in 0..10 {
                pts.push([(col as f32 - 5.0) / 10.0, (row as f32 - 5.0) / 10.0, 1.0]);
            }
        }
        (ScenePointCloud::new(pts, None).unwrap(), vec![1.0; 100])
    }

    #[test]
    fn full_and_empty_masks() {
        let (cloud, depth) = grid_cloud();
        let frame = frame_with_depth(depth, vec![]);
        let vis = compute_visibility(&cloud, &frame, 0.01).unwrap();
        assert_eq!(vis.len(), 100);
        let full = Region2D::new(RleMask::full(10, 10), vec![1.0], 1.0).unwrap();
        assert_eq!(project_region(&full, 0, &vis).point_indices, vis.visible());
        let empty = Region2D::new(RleMask::empty(10, 10), vec![1.0], 1.0).unwrap();
        assert!(project_region(&empty, 0, &vis).is_empty());
    }

    #[test]
    fn mask_selects_matching_pixels() {
        let (cloud, depth) = grid_cloud();
        let vis = compute_visibility(&cloud, &frame_with_depth(depth, vec![]), 0.01).unwrap();
        let mut bits = vec![false; 100];
        bits[23] = true;
        bits[77] = true;
        let r = Region2D::new(RleMask::encode(10, 10, &bits).unwrap(), vec![1.0], 1.0).unwrap();
        // Grid point index equals its pixel index.
        assert_eq!(project_region(&r, 0, &vis).point_indices, vec![23, 77]);
    }

    #[test]
    fn min_points_filter_drops_small_regions() {
        let (cloud, depth) = grid_cloud();
        let mut bits = vec![false; 100];
        bits[..30].fill(true);
        let big = Region2D::new(RleMask::encode(10, 10, &bits).unwrap(), vec![1.0], 1.0).unwrap();
        let mut small_bits = vec![false; 100];
        small_bits[50] = true;
        let small = Region2D::new(RleMask::encode(10, 10, &small_bits).unwrap(), vec![1.0], 1.0).unwrap();
        let frame = frame_with_depth(depth, vec![small, big]);
        let vis = compute_visibility(&cloud, &frame, 0.01).unwrap();
        let regions = project_frame(&frame, &vis, 25);
        assert_eq!(regions.len(), 1);
        assert_eq!(regions[0].source_region, 1);
    }
}

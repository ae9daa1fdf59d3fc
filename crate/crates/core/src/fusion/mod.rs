//! The instance memory bank and streaming 2D-to-3D association.
//!
//! Each frame's regions are scored against the bank as it stood at the start
//! of the frame, then applied serially: matched regions grow their instance,
//! unmatched ones seed new instances. Every `period` frames a sweep filters
//! unreliable points and instances and merges duplicates to a fixed point.

mod bank;
mod instance;
mod sweep;

pub use bank::{match_score, FusionStats, MemoryBank, ScoreMatrix};
pub use instance::{intersection_size, iou, Instance3D};
pub use sweep::SweepStats;
pub(crate) use instance::splitmix64;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FusionConfig {
    /// Minimum cosine similarity for a region/instance match and for merges.
    pub theta_s: f64,
    /// Minimum 3D IoU for a region/instance match and for merges.
    pub theta_iou: f64,
    /// Points whose detection rate falls below this are dropped in a sweep.
    pub theta_det: f64,
    /// Containment ratio above which similar instances merge.
    pub theta_recall: f64,
    /// Frames between sweeps.
    pub period: u64,
    /// Meters of slack in the depth-consistency visibility test.
    pub depth_tolerance: f64,
    /// Projected regions smaller than this are ignored.
    pub min_region_points: usize,
    /// Cap on stored per-instance view features.
    pub max_view_features: usize,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self {
            theta_s: 0.75,
            theta_iou: 0.25,
            theta_det: 0.2,
            theta_recall: 0.25,
            period: 300,
            depth_tolerance: 0.05,
            min_region_points: 25,
            max_view_features: 1024,
        }
    }
}

impl FusionConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("theta_s", self.theta_s),
            ("theta_iou", self.theta_iou),
            ("theta_det", self.theta_det),
            ("theta_recall", self.theta_recall),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::validation(format!("{name} = {v} outside [0, 1]")));
            }
        }
        if self.period < 1 {
            return Err(Error::validation("period must be at least 1"));
        }
        if self.depth_tolerance.is_nan() || self.depth_tolerance <= 0.0 {
            return Err(Error::validation("depth_tolerance must be positive"));
        }
        if self.max_view_features < 1 {
            return Err(Error::validation("max_view_features must be at least 1"));
        }
        Ok(())
    }
}

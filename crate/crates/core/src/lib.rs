//! Fusion of per-frame 2D region proposals carrying text-aligned features
//! into ranked, queryable 3D instances over a point cloud.
//!
//! The pipeline is [`projection`] of masks onto visible cloud points,
//! association into a [`fusion::MemoryBank`], periodic filtering and merging,
//! [`postprocess`] splitting with DBSCAN, and [`retrieval`] over K-Means
//! representative features. [`eval`] scores rankings with retrieval mAP and
//! [`synth`] generates scenes with exact ground truth.

pub mod error;
pub mod eval;
pub mod fusion;
pub mod postprocess;
pub mod projection;
pub mod retrieval;
pub mod pipeline;
pub mod scene;
pub mod snapshot;
pub mod synth;
pub mod vector;

pub use error::{Error, Result};
pub use eval::{average_precision, evaluate, EvalConfig, EvalReport, EvalScene};
pub use fusion::{FusionConfig, FusionStats, Instance3D, MemoryBank, SweepStats};
pub use postprocess::{dbscan, split_and_filter, PostprocessConfig, Segment};
pub use projection::{compute_visibility, project_frame, project_region, Region3D, VisibilityResult};
pub use retrieval::{rank, FinalInstance, InstanceIndex, RetrievalResult, Strategy};
pub use scene::{
    CameraIntrinsics, CameraPose, FrameObservation, GroundTruthAnnotation, QueryEmbedding, Region2D, RleMask,
    ScenePointCloud,
};

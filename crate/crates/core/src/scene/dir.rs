use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use super::{
    load_cloud, load_frame, load_ground_truth, load_query, save_cloud, save_frame, save_ground_truth, save_query,
    FrameObservation, GroundTruthAnnotation, QueryEmbedding, ScenePointCloud,
};
use crate::error::{Error, Result};

/// On-disk scene layout:
///
/// ```text
/// <root>/cloud.ply
/// <root>/frames/frame_000000.ovf ...
/// <root>/gt.json            (optional)
/// <root>/queries/<category>.qe
/// ```
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SceneDir {
    root: PathBuf,
}

impl SceneDir {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn cloud_path(&self) -> PathBuf {
        self.root.join("cloud.ply")
    }

    pub fn frames_dir(&self) -> PathBuf {
        self.root.join("frames")
    }

    pub fn gt_path(&self) -> PathBuf {
        self.root.join("gt.json")
    }

    pub fn queries_dir(&self) -> PathBuf {
        self.root.join("queries")
    }

    pub fn frame_path(&self, index: usize) -> PathBuf {
        self.frames_dir().join(format!("frame_{index:06}.ovf"))
    }

    pub fn load_cloud(&self) -> Result<ScenePointCloud> {
        load_cloud(self.cloud_path())
    }

    pub fn load_ground_truth(&self) -> Result<GroundTruthAnnotation> {
        load_ground_truth(self.gt_path())
    }

    /// `.ovf` files in the frames directory, sorted by name.
    pub fn frame_paths(&self) -> Result<Vec<PathBuf>> {
        let dir = self.frames_dir();
        let entries = fs::read_dir(&dir).map_err(|e| Error::io(&dir, e))?;
        let mut paths = Vec::new();
        for entry in entries {
            let path = entry.map_err(|e| Error::io(&dir, e))?.path();
            if path.extension().is_some_and(|x| x == "ovf") {
                paths.push(path);
            }
        }
        paths.sort();
        Ok(paths)
    }

    pub fn load_frames(&self) -> Result<Vec<FrameObservation>> {
        self.frame_paths()?.iter().map(load_frame).collect()
    }

    /// Query embeddings keyed by file stem.
    pub fn load_queries(&self) -> Result<BTreeMap<String, QueryEmbedding>> {
        load_query_dir(&self.queries_dir())
    }

    /// Writes every part of a scene, creating directories as needed.
    pub fn write(
        &self,
        cloud: &ScenePointCloud,
        frames: &[FrameObservation],
        gt: Option<&GroundTruthAnnotation>,
        queries: &BTreeMap<String, QueryEmbedding>,
    ) -> Result<()> {
        for dir in [self.root.clone(), self.frames_dir(), self.queries_dir()] {
            fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        }
        save_cloud(self.cloud_path(), cloud.points(), cloud.colors())?;
        for (i, f) in frames.iter().enumerate() {
            save_frame(f, self.frame_path(i))?;
        }
        if let Some(gt) = gt {
            save_ground_truth(gt, self.gt_path())?;
        }
        for (name, q) in queries {
            save_query(q, self.queries_dir().join(format!("{name}.qe")))?;
        }
        Ok(())
    }
}

/// Loads every `.qe` file of a directory, keyed by file stem.
pub fn load_query_dir(dir: &Path) -> Result<BTreeMap<String, QueryEmbedding>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut out = BTreeMap::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.extension().is_some_and(|x| x == "qe") {
            let q = load_query(&path)?;
            let name = q.label.clone().unwrap_or_default();
            out.insert(name, q);
        }
    }
    Ok(out)
}

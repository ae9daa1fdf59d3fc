use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruthInstance {
    pub id: u32,
    pub category: String,
    pub point_indices: Vec<u32>,
}

/// Annotated object instances over one scene cloud.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruthAnnotation {
    pub instances: Vec<GroundTruthInstance>,
}

impl GroundTruthAnnotation {
    /// Sorts and deduplicates indices, then checks the annotation invariants.
    pub fn normalized(mut self) -> Result<Self> {
        for inst in &mut self.instances {
            inst.point_indices.sort_unstable();
            inst.point_indices.dedup();
        }
        self.validate(None)?;
        Ok(self)
    }

    /// Checks index range (when the cloud size is known) and that instances
    /// of one category are disjoint. Indices must already be sorted.
    pub fn validate(&self, cloud_len: Option<usize>) -> Result<()> {
        let mut by_category: BTreeMap<&str, Vec<&GroundTruthInstance>> = BTreeMap::new();
        for inst in &self.instances {
            if !inst.point_indices.windows(2).all(|w| w[0] < w[1]) {
                return Err(Error::validation(format!("instance {} indices not sorted", inst.id)));
            }
            if let (Some(n), Some(&last)) = (cloud_len, inst.point_indices.last()) {
                if last as usize >= n {
                    return Err(Error::validation(format!(
                        "instance {} references point {last} beyond cloud size {n}",
                        inst.id
                    )));
                }
            }
            by_category.entry(&inst.category).or_default().push(inst);
        }
        for (cat, insts) in by_category {
            let mut all: Vec<u32> = insts.iter().flat_map(|i| i.point_indices.iter().copied()).collect();
            let n = all.len();
            all.sort_unstable();
            all.dedup();
            if all.len() != n {
                return Err(Error::validation(format!("overlapping instances in category '{cat}'")));
            }
        }
        Ok(())
    }

    /// Categories in sorted order.
    pub fn categories(&self) -> Vec<String> {
        let mut cats: Vec<String> = self.instances.iter().map(|i| i.category.clone()).collect();
        cats.sort();
        cats.dedup();
        cats
    }

    pub fn masks_for(&self, category: &str) -> Vec<&[u32]> {
        self.instances
            .iter()
            .filter(|i| i.category == category)
            .map(|i| i.point_indices.as_slice())
            .collect()
    }
}

pub fn load_ground_truth(path: impl AsRef<Path>) -> Result<GroundTruthAnnotation> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let gt: GroundTruthAnnotation = serde_json::from_reader(BufReader::new(file))
        .map_err(|e| Error::format(format!("bad ground truth JSON: {e}")))?;
    gt.normalized()
}

pub fn save_ground_truth(gt: &GroundTruthAnnotation, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer(&mut w, gt).map_err(|e| Error::format(e.to_string()))?;
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: &str) -> Result<GroundTruthAnnotation> {
        serde_json::from_str::<GroundTruthAnnotation>(s).unwrap().normalized()
    }

    #[test]
    fn overlapping_same_category_is_rejected() {
        let err = parse(
            r#"{"instances":[{"id":0,"category":"cup","point_indices":[1,2,3]},
                             {"id":1,"category":"cup","point_indices":[3,4]}]}"#,
        )
        .unwrap_err();
        assert!(err.to_string().contains("overlapping instances"));
    }

    #[test]
    fn different_categories_may_overlap() {
        let gt = parse(
            r#"{"instances":[{"id":0,"category":"cup","point_indices":[3,1,2]},
                             {"id":1,"category":"handle","point_indices":[3]}]}"#,
        )
        .unwrap();
        assert_eq!(gt.instances[0].point_indices, vec![1, 2, 3]);
        assert_eq!(gt.categories(), vec!["cup", "handle"]);
        assert!(gt.validate(Some(3)).is_err());
        assert!(gt.validate(Some(4)).is_ok());
    }

    #[test]
    fn json_round_trip() {
        let gt = parse(r#"{"instances":[{"id":4,"category":"lamp","point_indices":[0,9]}]}"#).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("gt.json");
        save_ground_truth(&gt, &p).unwrap();
        assert_eq!(load_ground_truth(&p).unwrap(), gt);
    }
}

//! Representative features and ranked instance retrieval.

mod kmeans;

pub use kmeans::{build_representatives, spherical_kmeans, KMeansResult, CONVERGENCE_TOLERANCE, MAX_ITERATIONS};

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fusion::splitmix64;
use crate::postprocess::Segment;
use crate::scene::QueryEmbedding;
use crate::vector;

pub const DEFAULT_KMEANS_K: usize = 64;

/// How an instance is scored against a query.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Mean,
    Clustered,
    LargestView,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::Mean, Strategy::Clustered, Strategy::LargestView];

    pub fn as_str(&self) -> &'static str {
        match self {
            Strategy::Mean => "mean",
            Strategy::Clustered => "clustered",
            Strategy::LargestView => "largest_view",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::validation(format!("unknown strategy '{s}' (expected mean, clustered or largest_view)")))
    }
}

/// A queryable instance after post-processing.
#[derive(Debug, Clone, PartialEq)]
pub struct FinalInstance {
    pub id: u32,
    pub parent_id: u32,
    /// Sorted cloud indices.
    pub point_indices: Vec<u32>,
    pub mean_feature: Vec<f32>,
    pub largest_view_feature: Vec<f32>,
    /// Unit-length K-Means centers of the view features.
    pub representatives: Vec<Vec<f32>>,
    pub source_view_count: u32,
}

impl FinalInstance {
    pub fn score(&self, query: &[f32], strategy: Strategy) -> f64 {
        let s = match strategy {
            Strategy::Mean => vector::cosine(query, &self.mean_feature),
            Strategy::LargestView => vector::cosine(query, &self.largest_view_feature),
            Strategy::Clustered => self
                .representatives
                .iter()
                .map(|c| vector::dot(query, c))
                .fold(f64::NEG_INFINITY, f64::max),
        };
        s.clamp(-1.0, 1.0)
    }

    pub fn feature_dim(&self) -> usize {
        self.mean_feature.len()
    }
}

/// Seed for one instance's K-Means, derived from the run seed and the
/// instance identity.
pub fn representative_seed(seed: u64, id: u32) -> u64 {
    splitmix64(seed ^ splitmix64(id as u64))
}

/// Builds final instances from segments, numbering them in segment order.
pub fn build_instances(segments: &[Segment], k: usize, seed: u64) -> Result<Vec<FinalInstance>> {
    if k < 1 {
        return Err(Error::validation("kmeans K must be at least 1"));
    }
    Ok(segments
        .par_iter()
        .enumerate()
        .map(|(i, s)| {
            let id = i as u32;
            let views: &[Vec<f32>] = if s.view_features.is_empty() {
                std::slice::from_ref(&s.mean_feature)
            } else {
                &s.view_features
            };
            FinalInstance {
                id,
                parent_id: s.parent_id,
                point_indices: s.point_indices.clone(),
                mean_feature: s.mean_feature.clone(),
                largest_view_feature: s.largest_view_feature.clone(),
                representatives: build_representatives(views, k, representative_seed(seed, id)),
                source_view_count: views.len() as u32,
            }
        })
        .collect())
}

/// The queryable output of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceIndex {
    pub feature_dim: usize,
    pub kmeans_k: usize,
    pub seed: u64,
    pub instances: Vec<FinalInstance>,
}

impl InstanceIndex {
    pub fn build(segments: &[Segment], feature_dim: usize, kmeans_k: usize, seed: u64) -> Result<Self> {
        if let Some(s) = segments.iter().find(|s| s.mean_feature.len() != feature_dim) {
            return Err(Error::DimensionMismatch {
                expected: feature_dim,
                found: s.mean_feature.len(),
            });
        }
        Ok(Self {
            feature_dim,
            kmeans_k,
            seed,
            instances: build_instances(segments, kmeans_k, seed)?,
        })
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn rank(&self, query: &QueryEmbedding, k_results: usize, strategy: Strategy) -> Result<RetrievalResult> {
        if query.feature.len() != self.feature_dim {
            return Err(Error::DimensionMismatch {
                expected: self.feature_dim,
                found: query.feature.len(),
            });
        }
        rank(query, &self.instances, k_results, strategy)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankedInstance {
    pub id: u32,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalResult {
    pub ranked: Vec<RankedInstance>,
    pub query_label: Option<String>,
}

/// Scores every instance, sorts by score descending (ties: lower id) and
/// keeps the first `k_results`.
pub fn rank(
    query: &QueryEmbedding,
    instances: &[FinalInstance],
    k_results: usize,
    strategy: Strategy,
) -> Result<RetrievalResult> {
    let q = &query.feature;
    if let Some(inst) = instances.iter().find(|i| i.feature_dim() != q.len()) {
        return Err(Error::DimensionMismatch {
            expected: inst.feature_dim(),
            found: q.len(),
        });
    }
    let mut ranked: Vec<RankedInstance> = instances
        .iter()
        .map(|i| RankedInstance {
            id: i.id,
            score: i.score(q, strategy),
        })
        .collect();
    ranked.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.id.cmp(&b.id)));
    ranked.truncate(k_results);
    Ok(RetrievalResult {
        ranked,
        query_label: query.label.clone(),
    })
}

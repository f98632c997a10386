//! Low-level density clustering (HDBSCAN over cosine distance), cluster
//! centers, and the average-link hierarchy over those centers.

mod cut_vectors;
mod hdbscan;
mod linkage;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::{cosine_distance_with_norms, norm, EmbeddedSpan};
use crate::extraction::SpanRef;

pub use cut_vectors::{generate_cut_vectors, CutCase, CutVectorSuite};
pub use hdbscan::hdbscan;
pub use linkage::{average_link, cut_dendrogram, Dendrogram, Merge};

/// Label of points that belong to no cluster.
pub const NOISE: i64 = -1;

#[derive(Debug, Error, PartialEq)]
pub enum ClusteringError {
    #[error("no points to cluster")]
    EmptyInput,
    #[error("point {index} has a non-finite coordinate")]
    NonFinite { index: usize },
    #[error("point {index} is the zero vector")]
    ZeroVector { index: usize },
    #[error("point {index} has dimension {got}, expected {expected}")]
    DimensionMismatch { index: usize, expected: usize, got: usize },
    #[error("invalid clustering parameters: {0}")]
    InvalidParams(String),
    #[error("distance threshold must be positive, got {0}")]
    InvalidThreshold(f64),
    #[error("{labels} labels for {points} points")]
    LabelCount { labels: usize, points: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClusterSelection {
    #[default]
    ExcessOfMass,
    Leaf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DensityParams {
    pub min_cluster_size: usize,
    /// Defaults to `min_cluster_size`.
    pub min_samples: Option<usize>,
    pub selection: ClusterSelection,
}

impl Default for DensityParams {
    fn default() -> Self {
        DensityParams::new(2)
    }
}

impl DensityParams {
    pub fn new(min_cluster_size: usize) -> Self {
        DensityParams {
            min_cluster_size,
            min_samples: None,
            selection: ClusterSelection::ExcessOfMass,
        }
    }

    pub fn min_samples(&self) -> usize {
        self.min_samples.unwrap_or(self.min_cluster_size)
    }

    pub fn validate(&self) -> Result<(), ClusteringError> {
        if self.min_cluster_size < 2 {
            return Err(ClusteringError::InvalidParams(format!(
                "min_cluster_size must be at least 2, got {}",
                self.min_cluster_size
            )));
        }
        if self.min_samples() < 1 {
            return Err(ClusteringError::InvalidParams("min_samples must be at least 1".into()));
        }
        Ok(())
    }
}

/// Checks shape and finiteness; returns the common dimension.
pub(crate) fn check_points(points: &[Vec<f64>]) -> Result<usize, ClusteringError> {
    let dim = points.first().ok_or(ClusteringError::EmptyInput)?.len();
    for (index, p) in points.iter().enumerate() {
        if p.len() != dim {
            return Err(ClusteringError::DimensionMismatch {
                index,
                expected: dim,
                got: p.len(),
            });
        }
        if p.iter().any(|v| !v.is_finite()) {
            return Err(ClusteringError::NonFinite { index });
        }
        if p.iter().all(|&v| v == 0.0) {
            return Err(ClusteringError::ZeroVector { index });
        }
    }
    Ok(dim)
}

/// Dense, exactly symmetric cosine-distance matrix in row-major order.
pub fn cosine_distance_matrix(points: &[Vec<f64>]) -> Result<Vec<f64>, ClusteringError> {
    check_points(points)?;
    let n = points.len();
    let norms: Vec<f64> = points.iter().map(|p| norm(p)).collect();
    let upper: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            ((i + 1)..n)
                .map(|j| cosine_distance_with_norms(&points[i], &points[j], norms[i], norms[j]))
                .collect()
        })
        .collect();
    let mut m = vec![0.0; n * n];
    for (i, row) in upper.into_iter().enumerate() {
        for (off, d) in row.into_iter().enumerate() {
            let j = i + 1 + off;
            m[i * n + j] = d;
            m[j * n + i] = d;
        }
    }
    Ok(m)
}

/// Componentwise mean of each cluster's members, indexed by label.
/// Centers are not renormalized.
pub fn compute_centers(labels: &[i64], points: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, ClusteringError> {
    if labels.len() != points.len() {
        return Err(ClusteringError::LabelCount {
            labels: labels.len(),
            points: points.len(),
        });
    }
    let count = labels.iter().copied().max().map_or(0, |m| (m + 1).max(0) as usize);
    let dim = points.first().map_or(0, Vec::len);
    let mut sums = vec![vec![0.0; dim]; count];
    let mut sizes = vec![0usize; count];
    for (&label, p) in labels.iter().zip(points) {
        if label < 0 {
            continue;
        }
        let k = label as usize;
        sizes[k] += 1;
        for (s, v) in sums[k].iter_mut().zip(p) {
            *s += v;
        }
    }
    Ok(sums
        .into_iter()
        .zip(sizes)
        .map(|(s, size)| s.into_iter().map(|v| v / size.max(1) as f64).collect())
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LowLevelCluster {
    pub id: usize,
    pub members: Vec<SpanRef>,
    pub center: Vec<f64>,
}

/// `labels[i]` belongs to `span_refs[i]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LowLevelClustering {
    pub span_refs: Vec<SpanRef>,
    pub labels: Vec<i64>,
    pub clusters: Vec<LowLevelCluster>,
}

impl LowLevelClustering {
    pub fn from_labels(spans: &[EmbeddedSpan], labels: Vec<i64>) -> Result<Self, ClusteringError> {
        let points: Vec<Vec<f64>> = spans.iter().map(EmbeddedSpan::to_f64).collect();
        let centers = compute_centers(&labels, &points)?;
        let mut clusters: Vec<LowLevelCluster> = centers
            .into_iter()
            .enumerate()
            .map(|(id, center)| LowLevelCluster {
                id,
                members: Vec::new(),
                center,
            })
            .collect();
        for (span, &label) in spans.iter().zip(&labels) {
            if label >= 0 {
                clusters[label as usize].members.push(span.span_ref.clone());
            }
        }
        Ok(LowLevelClustering {
            span_refs: spans.iter().map(|s| s.span_ref.clone()).collect(),
            labels,
            clusters,
        })
    }

    pub fn noise_count(&self) -> usize {
        self.labels.iter().filter(|&&l| l == NOISE).count()
    }

    pub fn centers(&self) -> Vec<Vec<f64>> {
        self.clusters.iter().map(|c| c.center.clone()).collect()
    }
}

/// Disjoint sets over `0..n` with path halving and union by size.
#[derive(Debug, Clone)]
pub(crate) struct UnionFind {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl UnionFind {
    pub(crate) fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
            size: vec![1; n],
        }
    }

    pub(crate) fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    /// Returns the new root, or `None` if already joined.
    pub(crate) fn union(&mut self, a: usize, b: usize) -> Option<usize> {
        let (mut ra, mut rb) = (self.find(a), self.find(b));
        if ra == rb {
            return None;
        }
        if self.size[ra] < self.size[rb] {
            std::mem::swap(&mut ra, &mut rb);
        }
        self.parent[rb] = ra;
        self.size[ra] += self.size[rb];
        Some(ra)
    }
}

/// Renumbers groups `0..` in order of their smallest member.
pub(crate) fn number_by_first_member<I: IntoIterator<Item = Option<usize>>>(groups: I) -> Vec<i64> {
    let mut seen = std::collections::HashMap::new();
    groups
        .into_iter()
        .map(|g| match g {
            None => NOISE,
            Some(g) => {
                let next = seen.len() as i64;
                *seen.entry(g).or_insert(next)
            }
        })
        .collect()
}

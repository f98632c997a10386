//! Test vectors for the top-level cut, shared with external consumers of
//! `dendrogram.json` that recut it themselves.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{average_link, cut_dendrogram, ClusteringError, Dendrogram};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CutCase {
    pub dendrogram: Dendrogram,
    pub thresholds: Vec<f64>,
    /// `labels[k]` is the cut at `thresholds[k]`.
    pub labels: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CutVectorSuite {
    pub rule: String,
    pub seed: u64,
    pub cases: Vec<CutCase>,
}

/// Random dendrograms over 4-12 unit centers, each cut at `thresholds`
/// values: every merge distance exactly (the strict boundary), and uniform
/// draws up to just past the last merge for the rest.
pub fn generate_cut_vectors(seed: u64, dendrograms: usize, thresholds: usize) -> Result<CutVectorSuite, ClusteringError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cases = Vec::with_capacity(dendrograms);
    for _ in 0..dendrograms {
        let n = rng.random_range(4..=12);
        let centers: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..5).map(|_| StandardNormal.sample(&mut rng)).collect())
            .collect();
        let dendrogram = average_link(&centers)?;
        let top = dendrogram.merges.last().map_or(1.0, |m| m.distance) * 1.1;
        let mut ts: Vec<f64> = dendrogram.merges.iter().map(|m| m.distance).take(thresholds).collect();
        while ts.len() < thresholds {
            ts.push(rng.random_range(1e-6..top));
        }
        let labels = ts
            .iter()
            .map(|&t| cut_dendrogram(&dendrogram, t))
            .collect::<Result<_, _>>()?;
        cases.push(CutCase {
            dendrogram,
            thresholds: ts,
            labels,
        });
    }
    Ok(CutVectorSuite {
        rule: "apply merges in order while distance < threshold; label components by smallest leaf".into(),
        seed,
        cases,
    })
}

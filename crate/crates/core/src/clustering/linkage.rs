//! Average-link agglomeration over cluster centers and the threshold cut
//! shared with the review tool.

use serde::{Deserialize, Serialize};

use super::{check_points, cosine_distance_matrix, ClusteringError, UnionFind};

/// One agglomeration step. Serialized as `[a, b, distance, size]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "(usize, usize, f64, usize)", into = "(usize, usize, f64, usize)")]
pub struct Merge {
    pub a: usize,
    pub b: usize,
    pub distance: f64,
    pub size: usize,
}

impl From<(usize, usize, f64, usize)> for Merge {
    fn from((a, b, distance, size): (usize, usize, f64, usize)) -> Self {
        Merge { a, b, distance, size }
    }
}

impl From<Merge> for (usize, usize, f64, usize) {
    fn from(m: Merge) -> Self {
        (m.a, m.b, m.distance, m.size)
    }
}

/// Leaves are `0..leaf_count`; merge `k` creates node `leaf_count + k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dendrogram {
    pub leaf_count: usize,
    pub merges: Vec<Merge>,
}

/// Average-link agglomeration on cosine distance between `centers`.
///
/// The closest pair merges first; ties go to the smallest `(a, b)` pair of
/// live node ids. Within a recorded merge the node holding the smaller leaf
/// comes first.
pub fn average_link(centers: &[Vec<f64>]) -> Result<Dendrogram, ClusteringError> {
    let n = centers.len();
    if n == 0 {
        return Ok(Dendrogram {
            leaf_count: 0,
            merges: Vec::new(),
        });
    }
    check_points(centers)?;
    let base = cosine_distance_matrix(centers)?;

    let total = 2 * n - 1;
    let mut d = vec![vec![f64::INFINITY; total]; total];
    for i in 0..n {
        for j in 0..n {
            d[i][j] = base[i * n + j];
        }
    }
    let mut size = vec![1usize; total];
    let mut min_leaf: Vec<usize> = (0..total).collect();
    let mut live: Vec<usize> = (0..n).collect();
    let mut merges = Vec::with_capacity(n - 1);

    while live.len() > 1 {
        let mut best = (f64::INFINITY, usize::MAX, usize::MAX);
        for (x, &i) in live.iter().enumerate() {
            for &j in &live[x + 1..] {
                if d[i][j] < best.0 || best.1 == usize::MAX {
                    best = (d[i][j], i, j);
                }
            }
        }
        let (dist, i, j) = best;
        let id = n + merges.len();
        size[id] = size[i] + size[j];
        min_leaf[id] = min_leaf[i].min(min_leaf[j]);
        live.retain(|&k| k != i && k != j);
        for &k in &live {
            let (wi, wj) = (size[i] as f64, size[j] as f64);
            let avg = (wi * d[k][i] + wj * d[k][j]) / (wi + wj);
            // Rounding must not pull the average below both inputs.
            let v = avg.max(d[k][i].min(d[k][j]));
            d[k][id] = v;
            d[id][k] = v;
        }
        live.push(id);
        let (a, b) = if min_leaf[i] <= min_leaf[j] { (i, j) } else { (j, i) };
        merges.push(Merge {
            a,
            b,
            distance: dist,
            size: size[id],
        });
    }
    Ok(Dendrogram { leaf_count: n, merges })
}

/// Applies merges in order while their distance is below `threshold` and
/// labels each leaf by its component, numbered by smallest leaf id.
pub fn cut_dendrogram(dend: &Dendrogram, threshold: f64) -> Result<Vec<usize>, ClusteringError> {
    if !(threshold > 0.0) {
        return Err(ClusteringError::InvalidThreshold(threshold));
    }
    let n = dend.leaf_count;
    let mut uf = UnionFind::new(n);
    let mut leaf_of: Vec<usize> = (0..n).collect();
    for m in &dend.merges {
        if !(m.distance < threshold) {
            break;
        }
        let (la, lb) = (leaf_of[m.a], leaf_of[m.b]);
        uf.union(la, lb);
        leaf_of.push(la.min(lb));
    }
    let mut label_of_root = vec![usize::MAX; n];
    let mut next = 0;
    Ok((0..n)
        .map(|leaf| {
            let r = uf.find(leaf);
            if label_of_root[r] == usize::MAX {
                label_of_root[r] = next;
                next += 1;
            }
            label_of_root[r]
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn worked_example() -> Dendrogram {
        average_link(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![-1.0, 0.0]]).unwrap()
    }

    #[test]
    fn three_center_example() {
        let d = worked_example();
        assert_eq!(d.leaf_count, 3);
        assert_eq!(d.merges.len(), 2);
        assert_eq!((d.merges[0].a, d.merges[0].b, d.merges[0].size), (0, 1, 2));
        assert!((d.merges[0].distance - 1.0).abs() < 1e-12);
        assert_eq!((d.merges[1].a, d.merges[1].b, d.merges[1].size), (3, 2, 3));
        assert!((d.merges[1].distance - 1.5).abs() < 1e-12);
    }

    #[test]
    fn cuts_of_the_example() {
        let d = worked_example();
        assert_eq!(cut_dendrogram(&d, 1.2).unwrap(), vec![0, 0, 1]);
        assert_eq!(cut_dendrogram(&d, 1.0).unwrap(), vec![0, 1, 2]);
        assert_eq!(cut_dendrogram(&d, 1.6).unwrap(), vec![0, 0, 0]);
        assert!(cut_dendrogram(&d, 0.0).is_err());
    }

    #[test]
    fn single_center_has_no_merges() {
        let d = average_link(&[vec![0.0, 1.0]]).unwrap();
        assert!(d.merges.is_empty());
        assert_eq!(cut_dendrogram(&d, 0.5).unwrap(), vec![0]);
    }

    #[test]
    fn merges_serialize_as_tuples() {
        let json = serde_json::to_string(&worked_example()).unwrap();
        assert!(json.contains("\"merges\":[[0,1,1.0,2],[3,2,1.5,3]]"), "{json}");
        let back: Dendrogram = serde_json::from_str(&json).unwrap();
        assert_eq!(back, worked_example());
    }
}

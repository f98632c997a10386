//! HDBSCAN over a dense cosine-distance matrix.
//!
//! Merges that happen at exactly the same distance are treated as one
//! multi-way split when condensing, so the result depends only on the
//! level sets of the mutual-reachability graph and not on the order in
//! which tied edges were visited.

use super::{
    check_points, cosine_distance_matrix, number_by_first_member, ClusterSelection, ClusteringError, DensityParams,
    UnionFind, NOISE,
};

/// Labels each point with a cluster id (`0..C`, numbered by smallest member
/// index) or [`NOISE`].
pub fn hdbscan(points: &[Vec<f64>], params: &DensityParams) -> Result<Vec<i64>, ClusteringError> {
    params.validate()?;
    check_points(points)?;
    let n = points.len();
    let mcs = params.min_cluster_size;
    if n < mcs {
        log::warn!("{n} point(s) is fewer than min_cluster_size {mcs}; everything is noise");
        return Ok(vec![NOISE; n]);
    }
    let min_samples = params.min_samples();
    if min_samples > n {
        return Err(ClusteringError::InvalidParams(format!(
            "min_samples {min_samples} exceeds the {n} available points"
        )));
    }

    let dist = cosine_distance_matrix(points)?;
    let core = core_distances(&dist, n, min_samples);
    let edges = prim_mst(&dist, &core, n);
    let tree = SingleLinkage::build(n, edges);
    let condensed = Condensed::build(&tree, mcs);
    let selected = condensed.select(params.selection);
    Ok(condensed.label(&selected, n))
}

/// Distance to the `k`-th nearest neighbour, the point itself being the first.
fn core_distances(dist: &[f64], n: usize, k: usize) -> Vec<f64> {
    (0..n)
        .map(|i| {
            let mut row = dist[i * n..(i + 1) * n].to_vec();
            row.sort_by(f64::total_cmp);
            row[k - 1]
        })
        .collect()
}

/// Dense Prim over mutual reachability; ties pick the smallest index.
fn prim_mst(dist: &[f64], core: &[f64], n: usize) -> Vec<(usize, usize, f64)> {
    let mut in_tree = vec![false; n];
    let mut best = vec![f64::INFINITY; n];
    let mut from = vec![0usize; n];
    let mut edges = Vec::with_capacity(n.saturating_sub(1));
    let mut current = 0;
    in_tree[0] = true;
    for _ in 1..n {
        for j in 0..n {
            if in_tree[j] {
                continue;
            }
            let w = dist[current * n + j].max(core[current]).max(core[j]);
            if w < best[j] {
                best[j] = w;
                from[j] = current;
            }
        }
        let mut next = usize::MAX;
        for j in 0..n {
            if !in_tree[j] && (next == usize::MAX || best[j] < best[next]) {
                next = j;
            }
        }
        in_tree[next] = true;
        edges.push((from[next], next, best[next]));
        current = next;
    }
    edges
}

/// Leaves are `0..n`; merge `k` creates node `n + k`.
struct SingleLinkage {
    n: usize,
    children: Vec<(usize, usize)>,
    distance: Vec<f64>,
    size: Vec<usize>,
}

impl SingleLinkage {
    fn build(n: usize, mut edges: Vec<(usize, usize, f64)>) -> Self {
        edges.sort_by(|a, b| {
            a.2.total_cmp(&b.2)
                .then(a.0.min(a.1).cmp(&b.0.min(b.1)))
                .then(a.0.max(a.1).cmp(&b.0.max(b.1)))
        });
        let mut uf = UnionFind::new(n);
        let mut node_of: Vec<usize> = (0..n).collect();
        let mut tree = SingleLinkage {
            n,
            children: Vec::with_capacity(n - 1),
            distance: Vec::with_capacity(n - 1),
            size: vec![1; n],
        };
        for (a, b, w) in edges {
            let (ra, rb) = (uf.find(a), uf.find(b));
            let (left, right) = (node_of[ra], node_of[rb]);
            let root = uf.union(ra, rb).expect("spanning tree edges join distinct components");
            let id = n + tree.children.len();
            tree.children.push((left, right));
            tree.distance.push(w);
            tree.size.push(tree.size[left] + tree.size[right]);
            node_of[root] = id;
        }
        tree
    }

    fn root(&self) -> usize {
        self.n + self.children.len() - 1
    }

    fn is_leaf(&self, node: usize) -> bool {
        node < self.n
    }

    fn distance(&self, node: usize) -> f64 {
        self.distance[node - self.n]
    }

    fn leaves(&self, node: usize, out: &mut Vec<usize>) {
        let mut stack = vec![node];
        while let Some(x) = stack.pop() {
            if self.is_leaf(x) {
                out.push(x);
            } else {
                let (l, r) = self.children[x - self.n];
                stack.push(r);
                stack.push(l);
            }
        }
    }

    /// Subtrees that separate when `node`'s level is lifted, looking through
    /// descendants merged at the very same distance.
    fn level_parts(&self, node: usize) -> Vec<usize> {
        let w = self.distance(node);
        let mut parts = Vec::new();
        let mut stack = vec![node];
        while let Some(x) = stack.pop() {
            if !self.is_leaf(x) && (x == node || self.distance(x) == w) {
                let (l, r) = self.children[x - self.n];
                stack.push(r);
                stack.push(l);
            } else {
                parts.push(x);
            }
        }
        parts
    }
}

fn lambda(distance: f64) -> f64 {
    if distance > 0.0 {
        1.0 / distance
    } else {
        f64::INFINITY
    }
}

/// `a - b` for `a >= b`, defined as 0 when both are infinite.
fn lambda_gap(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        a - b
    }
}

/// Cluster 0 is the root; children always have larger ids than parents.
struct Condensed {
    parent: Vec<Option<usize>>,
    birth: Vec<f64>,
    size: Vec<usize>,
    children: Vec<Vec<usize>>,
    /// `(cluster, point, lambda)` for the moment each point leaves.
    events: Vec<(usize, usize, f64)>,
}

impl Condensed {
    fn build(tree: &SingleLinkage, mcs: usize) -> Self {
        let mut c = Condensed {
            parent: vec![None],
            birth: vec![0.0],
            size: vec![tree.n],
            children: vec![Vec::new()],
            events: Vec::with_capacity(tree.n),
        };
        let mut stack = vec![(tree.root(), 0usize)];
        let mut scratch = Vec::new();
        while let Some((node, cluster)) = stack.pop() {
            let lam = lambda(tree.distance(node));
            let (big, small): (Vec<usize>, Vec<usize>) =
                tree.level_parts(node).into_iter().partition(|&p| tree.size[p] >= mcs);
            for part in small {
                scratch.clear();
                tree.leaves(part, &mut scratch);
                c.events.extend(scratch.iter().map(|&p| (cluster, p, lam)));
            }
            if big.len() == 1 {
                stack.push((big[0], cluster));
            } else {
                for part in big {
                    let id = c.birth.len();
                    c.parent.push(Some(cluster));
                    c.birth.push(lam);
                    c.size.push(tree.size[part]);
                    c.children.push(Vec::new());
                    c.children[cluster].push(id);
                    stack.push((part, id));
                }
            }
        }
        c
    }

    fn stability(&self) -> Vec<f64> {
        let mut s = vec![0.0; self.birth.len()];
        for &(cluster, _, lam) in &self.events {
            s[cluster] += lambda_gap(lam, self.birth[cluster]);
        }
        for (cluster, kids) in self.children.iter().enumerate() {
            for &k in kids {
                s[cluster] += self.size[k] as f64 * lambda_gap(self.birth[k], self.birth[cluster]);
            }
        }
        s
    }

    /// The root is never selected while it has child clusters; without them
    /// it is the only candidate.
    fn select(&self, rule: ClusterSelection) -> Vec<bool> {
        let m = self.birth.len();
        let mut selected = vec![false; m];
        if self.children[0].is_empty() {
            selected[0] = true;
            return selected;
        }
        match rule {
            ClusterSelection::Leaf => {
                for c in 1..m {
                    selected[c] = self.children[c].is_empty();
                }
            }
            ClusterSelection::ExcessOfMass => {
                let stability = self.stability();
                let mut value = vec![0.0; m];
                for c in (1..m).rev() {
                    let subtree: f64 = self.children[c].iter().map(|&k| value[k]).sum();
                    if !self.children[c].is_empty() && subtree > stability[c] {
                        value[c] = subtree;
                    } else {
                        value[c] = stability[c];
                        selected[c] = true;
                        let mut stack = self.children[c].clone();
                        while let Some(d) = stack.pop() {
                            selected[d] = false;
                            stack.extend_from_slice(&self.children[d]);
                        }
                    }
                }
            }
        }
        selected
    }

    fn label(&self, selected: &[bool], n: usize) -> Vec<i64> {
        let mut owner: Vec<Option<usize>> = vec![None; n];
        if selected[0] {
            // Sole root cluster: the points that persist to the densest level.
            let top = self
                .events
                .iter()
                .map(|e| e.2)
                .fold(f64::NEG_INFINITY, f64::max);
            for &(_, p, lam) in &self.events {
                if lam >= top {
                    owner[p] = Some(0);
                }
            }
        } else {
            for &(cluster, p, _) in &self.events {
                let mut c = Some(cluster);
                while let Some(k) = c {
                    if selected[k] {
                        owner[p] = Some(k);
                        break;
                    }
                    c = self.parent[k];
                }
            }
        }
        number_by_first_member(owner)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(angle: f64) -> Vec<f64> {
        vec![angle.cos(), angle.sin()]
    }

    #[test]
    fn two_pairs_and_a_singleton() {
        let pts = vec![unit(0.0), unit(0.05), unit(1.6), unit(1.65), unit(3.5)];
        let labels = hdbscan(&pts, &DensityParams::new(2)).unwrap();
        assert_eq!(labels, vec![0, 0, 1, 1, -1]);
    }

    #[test]
    fn identical_points_form_one_cluster() {
        let pts = vec![vec![0.6, 0.8]; 5];
        assert_eq!(hdbscan(&pts, &DensityParams::new(2)).unwrap(), vec![0; 5]);
    }

    #[test]
    fn too_few_points_are_noise() {
        let pts = vec![unit(0.0), unit(1.0)];
        assert_eq!(hdbscan(&pts, &DensityParams::new(3)).unwrap(), vec![-1, -1]);
    }

    #[test]
    fn nan_is_fatal_and_min_samples_is_bounded() {
        let pts = vec![unit(0.0), vec![f64::NAN, 1.0]];
        assert_eq!(
            hdbscan(&pts, &DensityParams::new(2)),
            Err(ClusteringError::NonFinite { index: 1 })
        );
        let params = DensityParams {
            min_samples: Some(5),
            ..DensityParams::new(2)
        };
        assert!(matches!(
            hdbscan(&[unit(0.0), unit(0.1), unit(0.2)], &params),
            Err(ClusteringError::InvalidParams(_))
        ));
    }

    #[test]
    fn leaf_selection_prefers_finest_clusters() {
        // Two groups, one of which holds two tight sub-pairs.
        let pts = vec![unit(0.0), unit(0.001), unit(0.05), unit(0.051), unit(2.0), unit(2.001)];
        let eom = hdbscan(&pts, &DensityParams::new(2)).unwrap();
        let leaf = hdbscan(
            &pts,
            &DensityParams {
                selection: ClusterSelection::Leaf,
                ..DensityParams::new(2)
            },
        )
        .unwrap();
        assert_eq!(leaf, vec![0, 0, 1, 1, 2, 2]);
        assert_eq!(eom.iter().filter(|&&l| l >= 0).count(), 6);
    }

    #[test]
    fn core_distance_counts_the_point_itself() {
        let dist = vec![0.0, 0.3, 0.5, 0.3, 0.0, 0.4, 0.5, 0.4, 0.0];
        assert_eq!(core_distances(&dist, 3, 1), vec![0.0, 0.0, 0.0]);
        assert_eq!(core_distances(&dist, 3, 2), vec![0.3, 0.3, 0.4]);
    }
}

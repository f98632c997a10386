//! Brute-force references for the clustering code.

use std::collections::{HashMap, VecDeque};

use intent_landscape::clustering::{hdbscan, ClusterSelection, DensityParams, Dendrogram};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn cos_dist(a: &[f64], b: &[f64]) -> f64 {
    let ab: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let aa: f64 = a.iter().map(|x| x * x).sum();
    let bb: f64 = b.iter().map(|x| x * x).sum();
    1.0 - ab / (aa.sqrt() * bb.sqrt())
}

/// Level-set HDBSCAN straight from the definitions: repeatedly find the
/// weakest link that keeps a cluster connected and split there.
pub mod naive {
    use super::*;

    pub struct Node {
        birth: f64,
        points: Vec<usize>,
        events: Vec<(usize, f64)>,
        children: Vec<usize>,
    }

    pub fn labels(points: &[Vec<f64>], mcs: usize, ms: usize, leaf: bool) -> Vec<i64> {
        let n = points.len();
        if n < mcs {
            return vec![-1; n];
        }
        let mut d = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    d[i][j] = cos_dist(&points[i], &points[j]).max(0.0);
                }
            }
        }
        let core: Vec<f64> = d
            .iter()
            .map(|row| {
                let mut r = row.clone();
                r.sort_by(|a, b| a.partial_cmp(b).unwrap());
                r[ms - 1]
            })
            .collect();
        let mr = |i: usize, j: usize| d[i][j].max(core[i]).max(core[j]);

        let mut nodes: Vec<Node> = Vec::new();
        grow(&mut nodes, (0..n).collect(), 0.0, mcs, &mr);

        let mut owner: Vec<Option<usize>> = vec![None; n];
        if nodes[0].children.is_empty() {
            let top = nodes[0].events.iter().map(|e| e.1).fold(f64::NEG_INFINITY, f64::max);
            for &(p, lam) in &nodes[0].events {
                if lam >= top {
                    owner[p] = Some(0);
                }
            }
        } else {
            let mut chosen = Vec::new();
            for &c in &nodes[0].children {
                chosen.extend(if leaf { leaves(&nodes, c) } else { eom(&nodes, c).1 });
            }
            for c in chosen {
                for &p in &nodes[c].points {
                    assert!(owner[p].is_none(), "overlapping selection");
                    owner[p] = Some(c);
                }
            }
        }
        canonical(&owner)
    }

    fn grow(nodes: &mut Vec<Node>, set: Vec<usize>, birth: f64, mcs: usize, mr: &dyn Fn(usize, usize) -> f64) -> usize {
        let id = nodes.len();
        nodes.push(Node {
            birth,
            points: set.clone(),
            events: Vec::new(),
            children: Vec::new(),
        });
        let mut current = set;
        loop {
            let eps = bottleneck(&current, mr);
            let lam = if eps > 0.0 { 1.0 / eps } else { f64::INFINITY };
            let comps = components(&current, eps, mr);
            let (big, small): (Vec<_>, Vec<_>) = comps.into_iter().partition(|c| c.len() >= mcs);
            for c in small {
                for p in c {
                    nodes[id].events.push((p, lam));
                }
            }
            match big.len() {
                0 => break,
                1 => current = big.into_iter().next().unwrap(),
                _ => {
                    for c in big {
                        let child = grow(nodes, c, lam, mcs, mr);
                        nodes[id].children.push(child);
                    }
                    break;
                }
            }
        }
        id
    }

    /// Smallest weight at which `set` is connected.
    fn bottleneck(set: &[usize], mr: &dyn Fn(usize, usize) -> f64) -> f64 {
        let mut ws: Vec<f64> = Vec::new();
        for (x, &i) in set.iter().enumerate() {
            for &j in &set[x + 1..] {
                ws.push(mr(i, j));
            }
        }
        ws.sort_by(|a, b| a.partial_cmp(b).unwrap());
        ws.dedup();
        let (mut lo, mut hi) = (0, ws.len() - 1);
        while lo < hi {
            let mid = (lo + hi) / 2;
            if connected_at_most(set, ws[mid], mr) {
                hi = mid;
            } else {
                lo = mid + 1;
            }
        }
        ws[lo]
    }

    fn connected_at_most(set: &[usize], w: f64, mr: &dyn Fn(usize, usize) -> f64) -> bool {
        bfs(set, |a, b| mr(a, b) <= w).len() == 1
    }

    fn components(set: &[usize], eps: f64, mr: &dyn Fn(usize, usize) -> f64) -> Vec<Vec<usize>> {
        bfs(set, |a, b| mr(a, b) < eps)
    }

    fn bfs(set: &[usize], linked: impl Fn(usize, usize) -> bool) -> Vec<Vec<usize>> {
        let mut seen = vec![false; set.len()];
        let mut out = Vec::new();
        for s in 0..set.len() {
            if seen[s] {
                continue;
            }
            seen[s] = true;
            let mut comp = vec![set[s]];
            let mut q = VecDeque::from([s]);
            while let Some(x) = q.pop_front() {
                for y in 0..set.len() {
                    if !seen[y] && linked(set[x], set[y]) {
                        seen[y] = true;
                        comp.push(set[y]);
                        q.push_back(y);
                    }
                }
            }
            out.push(comp);
        }
        out
    }

    fn stability(nodes: &[Node], c: usize) -> f64 {
        let gap = |a: f64, b: f64| if a == b { 0.0 } else { a - b };
        let node = &nodes[c];
        let mut s: f64 = node.events.iter().map(|&(_, lam)| gap(lam, node.birth)).sum();
        for &k in &node.children {
            s += nodes[k].points.len() as f64 * gap(nodes[k].birth, node.birth);
        }
        s
    }

    fn eom(nodes: &[Node], c: usize) -> (f64, Vec<usize>) {
        let own = stability(nodes, c);
        if nodes[c].children.is_empty() {
            return (own, vec![c]);
        }
        let mut sum = 0.0;
        let mut chosen = Vec::new();
        for &k in &nodes[c].children {
            let (v, sel) = eom(nodes, k);
            sum += v;
            chosen.extend(sel);
        }
        if sum > own {
            (sum, chosen)
        } else {
            (own, vec![c])
        }
    }

    fn leaves(nodes: &[Node], c: usize) -> Vec<usize> {
        if nodes[c].children.is_empty() {
            vec![c]
        } else {
            nodes[c].children.iter().flat_map(|&k| leaves(nodes, k)).collect()
        }
    }
}

pub fn canonical<T: Copy + Eq + std::hash::Hash>(groups: &[Option<T>]) -> Vec<i64> {
    let mut seen = HashMap::new();
    groups
        .iter()
        .map(|g| match g {
            None => -1,
            Some(g) => {
                let next = seen.len() as i64;
                *seen.entry(*g).or_insert(next)
            }
        })
        .collect()
}

pub fn canonical_labels(labels: &[i64]) -> Vec<i64> {
    let opts: Vec<Option<i64>> = labels.iter().map(|&l| (l >= 0).then_some(l)).collect();
    canonical(&opts)
}

pub fn random_unit(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / n).collect()
}

/// Points scattered around a few random directions.
pub fn blobs(rng: &mut ChaCha8Rng, n: usize, dim: usize, k: usize, spread: f64) -> Vec<Vec<f64>> {
    let centers: Vec<Vec<f64>> = (0..k).map(|_| random_unit(rng, dim)).collect();
    (0..n)
        .map(|_| {
            let c = &centers[rng.random_range(0..k)];
            let s = spread * rng.random_range(0.2..1.5);
            let v: Vec<f64> = c
                .iter()
                .map(|x| {
                    let z: f64 = StandardNormal.sample(rng);
                    x + s * z
                })
                .collect();
            let nv = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v.into_iter().map(|x| x / nv).collect()
        })
        .collect()
}

/// A few tight planted pairs among scattered noise points.
pub fn planted_pairs(seed: u64, pairs: usize, noise: usize, dim: usize) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pts = Vec::new();
    for _ in 0..pairs {
        let c = random_unit(&mut rng, dim);
        for _ in 0..2 {
            let v: Vec<f64> = c
                .iter()
                .map(|x| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    x + 0.002 * z
                })
                .collect();
            let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            pts.push(v.into_iter().map(|x| x / n).collect());
        }
    }
    for _ in 0..noise {
        pts.push(random_unit(&mut rng, dim));
    }
    pts
}

/// Compares `hdbscan` with the naive reference; returns the cluster count.
pub fn hdbscan_against_naive(points: &[Vec<f64>], mcs: usize, ms: usize, leaf: bool) -> Result<usize, String> {
    let params = DensityParams {
        min_cluster_size: mcs,
        min_samples: Some(ms),
        selection: if leaf {
            ClusterSelection::Leaf
        } else {
            ClusterSelection::ExcessOfMass
        },
    };
    let got = hdbscan(points, &params).map_err(|e| e.to_string())?;
    let want = naive::labels(points, mcs, ms, leaf);
    if canonical_labels(&got) != want {
        return Err(format!("labels {got:?}, reference {want:?}"));
    }
    // Already canonical: numbered by smallest member.
    if canonical_labels(&got) != got {
        return Err(format!("labels {got:?} are not numbered by smallest member"));
    }
    let count = (got.iter().copied().max().unwrap_or(-1) + 1) as usize;
    for label in 0..count as i64 {
        if got.iter().filter(|&&l| l == label).count() < mcs {
            return Err(format!("cluster {label} smaller than {mcs}"));
        }
    }
    Ok(count)
}

/// Average distance between every leaf pair across two groups.
pub fn group_distance(centers: &[Vec<f64>], a: &[usize], b: &[usize]) -> f64 {
    let mut sum = 0.0;
    for &i in a {
        for &j in b {
            sum += cos_dist(&centers[i], &centers[j]);
        }
    }
    sum / (a.len() * b.len()) as f64
}

/// Agglomerates from scratch by scanning all live group pairs each round.
/// Returns the merged groups and their distances in merge order.
pub fn brute_force_linkage(centers: &[Vec<f64>]) -> Vec<(Vec<usize>, f64)> {
    let mut live: Vec<Vec<usize>> = (0..centers.len()).map(|i| vec![i]).collect();
    let mut out = Vec::new();
    while live.len() > 1 {
        let mut best = (f64::INFINITY, 0, 0);
        for i in 0..live.len() {
            for j in i + 1..live.len() {
                let d = group_distance(centers, &live[i], &live[j]);
                if d < best.0 {
                    best = (d, i, j);
                }
            }
        }
        let (d, i, j) = best;
        let b = live.remove(j);
        let mut merged = live.remove(i);
        merged.extend(b);
        merged.sort_unstable();
        out.push((merged.clone(), d));
        live.push(merged);
    }
    out
}

/// Labels from applying every merge of `linkage` strictly below
/// `threshold`, numbered by smallest member.
pub fn cut_linkage(n: usize, linkage: &[(Vec<usize>, f64)], threshold: f64) -> Vec<usize> {
    let mut group: Vec<usize> = (0..n).collect();
    for (members, d) in linkage {
        if *d < threshold {
            for &m in members {
                group[m] = members[0];
            }
        }
    }
    let opts: Vec<Option<usize>> = group.into_iter().map(Some).collect();
    canonical(&opts).into_iter().map(|l| l as usize).collect()
}

pub fn brute_force_cut(centers: &[Vec<f64>], threshold: f64) -> Vec<usize> {
    cut_linkage(centers.len(), &brute_force_linkage(centers), threshold)
}

/// Checks every engine merge against brute-force group averages and the
/// closest-pair rule.
pub fn linkage_against_brute_force(centers: &[Vec<f64>], dend: &Dendrogram, tol: f64) -> Result<(), String> {
    let n = centers.len();
    let mut groups: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    let mut live: Vec<usize> = (0..n).collect();
    let mut last = f64::NEG_INFINITY;
    for (k, m) in dend.merges.iter().enumerate() {
        let brute = group_distance(centers, &groups[m.a], &groups[m.b]);
        if (brute - m.distance).abs() >= tol {
            return Err(format!("merge {k}: distance {} vs brute force {brute}", m.distance));
        }
        for (x, &i) in live.iter().enumerate() {
            for &j in &live[x + 1..] {
                if group_distance(centers, &groups[i], &groups[j]) < m.distance - tol {
                    return Err(format!("merge {k} was not the closest live pair"));
                }
            }
        }
        if m.distance < last {
            return Err(format!("merge {k} is not monotone"));
        }
        last = m.distance;
        let merged: Vec<usize> = groups[m.a].iter().chain(&groups[m.b]).copied().collect();
        if merged.len() != m.size {
            return Err(format!("merge {k}: size {} vs {}", m.size, merged.len()));
        }
        live.retain(|&x| x != m.a && x != m.b);
        live.push(groups.len());
        groups.push(merged);
    }
    if live.len() != 1 {
        return Err(format!("{} roots left", live.len()));
    }
    // Merge distances in order agree with the independent agglomeration.
    for ((_, d), m) in brute_force_linkage(centers).iter().zip(&dend.merges) {
        if (d - m.distance).abs() >= tol {
            return Err(format!("brute-force sequence {d} vs {}", m.distance));
        }
    }
    Ok(())
}

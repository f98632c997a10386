//! Principal-component projection to 2D for the review scatter plot.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::{EmbeddedSpan, EmbeddingError};
use crate::extraction::SpanRef;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Projection2D {
    pub dialogue_id: String,
    pub rank: usize,
    pub x: f64,
    pub y: f64,
}

impl Projection2D {
    pub fn span_ref(&self) -> SpanRef {
        SpanRef::new(self.dialogue_id.clone(), self.rank)
    }
}

/// Projects rows onto their top two principal components.
///
/// Each component is oriented so its largest-magnitude loading is positive
/// (first such loading on ties). Inputs without variance project to the
/// origin. The sample variance of each output column equals the matching
/// covariance eigenvalue.
pub fn project_2d(rows: &[Vec<f64>]) -> Result<Vec<[f64; 2]>, EmbeddingError> {
    let n = rows.len();
    let Some(first) = rows.first() else {
        return Ok(Vec::new());
    };
    let d = first.len();
    for r in rows {
        if r.len() != d {
            return Err(EmbeddingError::DimensionMismatch {
                expected: d,
                got: r.len(),
            });
        }
        if r.iter().any(|v| !v.is_finite()) {
            return Err(EmbeddingError::NonFinite);
        }
    }
    if n < 2 || d == 0 {
        log::warn!("projection of {n} point(s) in {d} dimension(s) is degenerate; using the origin");
        return Ok(vec![[0.0, 0.0]; n]);
    }

    let magnitude = rows.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut x = DMatrix::from_fn(n, d, |i, j| rows[i][j]);
    for j in 0..d {
        let mean = x.column(j).sum() / n as f64;
        x.column_mut(j).add_scalar_mut(-mean);
    }
    let denom = (n - 1) as f64;

    // Decompose whichever Gram form is smaller; both share nonzero eigenvalues.
    let components: Vec<(f64, DVector<f64>)> = if d <= n {
        let cov = x.transpose() * &x / denom;
        top_eigenpairs(cov, 2)
    } else {
        let gram = &x * x.transpose() / denom;
        top_eigenpairs(gram, 2)
            .into_iter()
            .map(|(lambda, v)| {
                let u = x.transpose() * v;
                let len = u.norm();
                let u = if len > 0.0 { u / len } else { u };
                (lambda, u)
            })
            .collect()
    };

    let total: f64 = (0..d).map(|j| x.column(j).norm_squared()).sum::<f64>() / denom;
    // Centering identical rows leaves rounding residue, not variance.
    if total <= magnitude * magnitude * 1e-24 {
        log::warn!("projection input has no variance; using the origin");
        return Ok(vec![[0.0, 0.0]; n]);
    }
    let tol = total * 1e-12;

    let mut out = vec![[0.0, 0.0]; n];
    for (slot, (lambda, mut u)) in components.into_iter().enumerate() {
        if lambda <= tol {
            continue;
        }
        orient(&mut u);
        let coords = &x * u;
        for i in 0..n {
            out[i][slot] = coords[i];
        }
    }
    Ok(out)
}

fn top_eigenpairs(m: DMatrix<f64>, k: usize) -> Vec<(f64, DVector<f64>)> {
    let eig = SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    order
        .into_iter()
        .take(k)
        .map(|i| (eig.eigenvalues[i].max(0.0), eig.eigenvectors.column(i).into_owned()))
        .collect()
}

fn orient(u: &mut DVector<f64>) {
    let mut best = 0;
    for i in 1..u.len() {
        if u[i].abs() > u[best].abs() {
            best = i;
        }
    }
    if u[best] < 0.0 {
        u.neg_mut();
    }
}

pub fn project_spans(spans: &[EmbeddedSpan]) -> Result<Vec<Projection2D>, EmbeddingError> {
    let rows: Vec<Vec<f64>> = spans.iter().map(EmbeddedSpan::to_f64).collect();
    Ok(spans
        .iter()
        .zip(project_2d(&rows)?)
        .map(|(s, [x, y])| Projection2D {
            dialogue_id: s.span_ref.dialogue_id.clone(),
            rank: s.span_ref.rank,
            x,
            y,
        })
        .collect())
}

pub fn write_coordinates<W: Write>(mut w: W, points: &[Projection2D]) -> Result<(), EmbeddingError> {
    for p in points {
        let line = serde_json::to_string(p).map_err(|e| EmbeddingError::Format(e.to_string()))?;
        writeln!(w, "{line}")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_coordinates<R: BufRead>(r: R) -> Result<BTreeMap<SpanRef, Projection2D>, EmbeddingError> {
    let mut out = BTreeMap::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let p: Projection2D = serde_json::from_str(&line)
            .map_err(|e| EmbeddingError::Format(format!("coordinates line {}: {e}", i + 1)))?;
        out.insert(p.span_ref(), p);
    }
    Ok(out)
}

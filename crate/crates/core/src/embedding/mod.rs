//! Sentence embeddings for valid spans, the cosine metric and a 2D
//! projection for review.
//!
//! Vectors are unit-normalized as they enter the pipeline and stored as
//! `f32`; all geometry downstream runs in `f64`.

mod mock;
mod projection;
mod remote;
mod vecfile;

use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::extraction::SpanRef;
use crate::http::HttpError;
use crate::validation::ValidatedSpan;

pub use mock::{FamilyRule, MockEmbedder};
pub use projection::{project_2d, project_spans, read_coordinates, write_coordinates, Projection2D};
pub use remote::HttpEmbedder;
pub use vecfile::{
    load_embeddings, read_refs, read_vectors, refs_sidecar_path, save_embeddings, write_refs, write_vectors,
    FileEmbedder, VECTOR_MAGIC,
};

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("embedding service failed: {0}")]
    Remote(#[from] HttpError),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("backend returned {got} vectors for {expected} texts")]
    Arity { expected: usize, got: usize },
    #[error("no vector for {} span(s): {}", .0.len(), join_refs(.0))]
    MissingVectors(Vec<SpanRef>),
    #[error("zero vector has no direction")]
    ZeroVector,
    #[error("non-finite value in vector")]
    NonFinite,
    #[error("need at least {needed} vectors, got {got}")]
    TooFewVectors { needed: usize, got: usize },
    #[error("vector file: {0}")]
    Format(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

fn join_refs(refs: &[SpanRef]) -> String {
    refs.iter().map(ToString::to_string).collect::<Vec<_>>().join(", ")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddedSpan {
    pub span_ref: SpanRef,
    pub vector: Vec<f32>,
    pub normalized: bool,
}

impl EmbeddedSpan {
    pub fn to_f64(&self) -> Vec<f64> {
        self.vector.iter().map(|&v| f64::from(v)).collect()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct EmbedItem<'a> {
    pub span_ref: &'a SpanRef,
    pub text: &'a str,
}

pub trait EmbeddingBackend: Send + Sync {
    fn id(&self) -> String;

    fn embed(&self, items: &[EmbedItem<'_>]) -> Result<Vec<Vec<f32>>, EmbeddingError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmbedOptions {
    pub batch_size: usize,
    pub max_in_flight: usize,
}

impl Default for EmbedOptions {
    fn default() -> Self {
        EmbedOptions {
            batch_size: 64,
            max_in_flight: 4,
        }
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Cosine distance with precomputed norms; clamped to `[0, 2]`.
#[inline]
pub(crate) fn cosine_distance_with_norms(a: &[f64], b: &[f64], norm_a: f64, norm_b: f64) -> f64 {
    (1.0 - dot(a, b) / (norm_a * norm_b)).clamp(0.0, 2.0)
}

pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64, EmbeddingError> {
    if a.len() != b.len() {
        return Err(EmbeddingError::DimensionMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    let (na, nb) = (norm(a), norm(b));
    if !na.is_finite() || !nb.is_finite() {
        return Err(EmbeddingError::NonFinite);
    }
    if na == 0.0 || nb == 0.0 {
        return Err(EmbeddingError::ZeroVector);
    }
    Ok(dot(a, b) / (na * nb))
}

/// `1 - cos(a, b)`, in `[0, 2]`.
pub fn cosine_distance(a: &[f64], b: &[f64]) -> Result<f64, EmbeddingError> {
    Ok((1.0 - cosine_similarity(a, b)?).clamp(0.0, 2.0))
}

/// Scales `v` to unit length, computing in `f64`.
pub fn normalize_f32(v: &[f32]) -> Result<Vec<f32>, EmbeddingError> {
    if v.iter().any(|x| !x.is_finite()) {
        return Err(EmbeddingError::NonFinite);
    }
    let n = v.iter().map(|&x| f64::from(x) * f64::from(x)).sum::<f64>().sqrt();
    if n == 0.0 {
        return Err(EmbeddingError::ZeroVector);
    }
    Ok(v.iter().map(|&x| (f64::from(x) / n) as f32).collect())
}

/// Embeds spans in order, batching requests and bounding parallelism.
pub fn embed_spans(
    spans: &[ValidatedSpan],
    backend: &dyn EmbeddingBackend,
    opts: EmbedOptions,
) -> Result<Vec<EmbeddedSpan>, EmbeddingError> {
    let refs: Vec<SpanRef> = spans.iter().map(ValidatedSpan::span_ref).collect();
    let items: Vec<EmbedItem<'_>> = spans
        .iter()
        .zip(&refs)
        .map(|(s, r)| EmbedItem {
            span_ref: r,
            text: s.text(),
        })
        .collect();

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.max_in_flight.max(1))
        .build()
        .map_err(|e| EmbeddingError::Format(e.to_string()))?;
    let batches: Vec<Result<Vec<Vec<f32>>, EmbeddingError>> = pool.install(|| {
        items
            .par_chunks(opts.batch_size.max(1))
            .map(|chunk| {
                let out = backend.embed(chunk)?;
                if out.len() != chunk.len() {
                    return Err(EmbeddingError::Arity {
                        expected: chunk.len(),
                        got: out.len(),
                    });
                }
                Ok(out)
            })
            .collect()
    });

    let mut missing = BTreeSet::new();
    let mut vectors = Vec::with_capacity(spans.len());
    let mut first_error = None;
    for batch in batches {
        match batch {
            Ok(vs) => vectors.extend(vs),
            Err(EmbeddingError::MissingVectors(refs)) => missing.extend(refs),
            Err(e) => {
                first_error.get_or_insert(e);
            }
        }
    }
    if !missing.is_empty() {
        return Err(EmbeddingError::MissingVectors(missing.into_iter().collect()));
    }
    if let Some(e) = first_error {
        return Err(e);
    }

    let dim = vectors.first().map_or(0, Vec::len);
    refs.into_iter()
        .zip(vectors)
        .map(|(span_ref, v)| {
            if v.len() != dim {
                return Err(EmbeddingError::DimensionMismatch {
                    expected: dim,
                    got: v.len(),
                });
            }
            Ok(EmbeddedSpan {
                span_ref,
                vector: normalize_f32(&v)?,
                normalized: true,
            })
        })
        .collect()
}

//! Binary vector files.
//!
//! Layout: the magic bytes `ILEM`, then `count` and `dim` as little-endian
//! `u32`, then `count * dim` little-endian `f32` values in row-major order.
//! Row `i` belongs to line `i` of a JSONL sidecar of span references.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use super::{EmbedItem, EmbeddedSpan, EmbeddingBackend, EmbeddingError};
use crate::extraction::SpanRef;

pub const VECTOR_MAGIC: &[u8; 4] = b"ILEM";

pub fn write_vectors<W: Write>(mut w: W, rows: &[Vec<f32>]) -> Result<(), EmbeddingError> {
    let dim = rows.first().map_or(0, Vec::len);
    if let Some(bad) = rows.iter().find(|r| r.len() != dim) {
        return Err(EmbeddingError::DimensionMismatch {
            expected: dim,
            got: bad.len(),
        });
    }
    let count = u32::try_from(rows.len()).map_err(|_| EmbeddingError::Format("too many rows".into()))?;
    let dim32 = u32::try_from(dim).map_err(|_| EmbeddingError::Format("dimension too large".into()))?;
    w.write_all(VECTOR_MAGIC)?;
    w.write_all(&count.to_le_bytes())?;
    w.write_all(&dim32.to_le_bytes())?;
    for row in rows {
        for v in row {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_vectors<R: Read>(mut r: R) -> Result<Vec<Vec<f32>>, EmbeddingError> {
    let mut header = [0u8; 12];
    r.read_exact(&mut header)
        .map_err(|_| EmbeddingError::Format("truncated header".into()))?;
    if &header[..4] != VECTOR_MAGIC {
        return Err(EmbeddingError::Format("bad magic".into()));
    }
    let count = u32::from_le_bytes(header[4..8].try_into().expect("4 bytes")) as usize;
    let dim = u32::from_le_bytes(header[8..12].try_into().expect("4 bytes")) as usize;
    let mut body = Vec::new();
    r.read_to_end(&mut body)?;
    let expected = count
        .checked_mul(dim)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| EmbeddingError::Format("header overflows".into()))?;
    if body.len() != expected {
        return Err(EmbeddingError::Format(format!(
            "expected {expected} bytes of data for {count}x{dim}, found {}",
            body.len()
        )));
    }
    let values: Vec<f32> = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect();
    if dim == 0 {
        return Ok(vec![Vec::new(); count]);
    }
    Ok(values.chunks_exact(dim).map(<[f32]>::to_vec).collect())
}

pub fn write_refs<W: Write>(mut w: W, refs: &[SpanRef]) -> Result<(), EmbeddingError> {
    for r in refs {
        let line = serde_json::to_string(r).map_err(|e| EmbeddingError::Format(e.to_string()))?;
        writeln!(w, "{line}")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_refs<R: BufRead>(r: R) -> Result<Vec<SpanRef>, EmbeddingError> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let span_ref: SpanRef = serde_json::from_str(&line)
            .map_err(|e| EmbeddingError::Format(format!("sidecar line {}: {e}", i + 1)))?;
        out.push(span_ref);
    }
    Ok(out)
}

/// `vectors.ilem` → `vectors.refs.jsonl`.
pub fn refs_sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("refs.jsonl")
}

pub fn save_embeddings(path: &Path, spans: &[EmbeddedSpan]) -> Result<(), EmbeddingError> {
    let rows: Vec<Vec<f32>> = spans.iter().map(|s| s.vector.clone()).collect();
    let refs: Vec<SpanRef> = spans.iter().map(|s| s.span_ref.clone()).collect();
    write_vectors(BufWriter::new(File::create(path)?), &rows)?;
    write_refs(BufWriter::new(File::create(refs_sidecar_path(path))?), &refs)
}

pub fn load_embeddings(path: &Path) -> Result<Vec<EmbeddedSpan>, EmbeddingError> {
    let rows = read_vectors(BufReader::new(File::open(path)?))?;
    let refs = read_refs(BufReader::new(File::open(refs_sidecar_path(path))?))?;
    if rows.len() != refs.len() {
        return Err(EmbeddingError::Format(format!(
            "{} vectors but {} span references",
            rows.len(),
            refs.len()
        )));
    }
    Ok(refs
        .into_iter()
        .zip(rows)
        .map(|(span_ref, vector)| EmbeddedSpan {
            span_ref,
            vector,
            normalized: false,
        })
        .collect())
}

/// Serves precomputed vectors by span reference.
#[derive(Debug, Clone, Default)]
pub struct FileEmbedder {
    vectors: HashMap<SpanRef, Vec<f32>>,
    label: String,
}

impl FileEmbedder {
    pub fn new(spans: Vec<EmbeddedSpan>, label: impl Into<String>) -> Self {
        FileEmbedder {
            vectors: spans.into_iter().map(|s| (s.span_ref, s.vector)).collect(),
            label: label.into(),
        }
    }

    pub fn open(path: &Path) -> Result<Self, EmbeddingError> {
        Ok(FileEmbedder::new(load_embeddings(path)?, path.display().to_string()))
    }
}

impl EmbeddingBackend for FileEmbedder {
    fn id(&self) -> String {
        format!("file:{}", self.label)
    }

    fn embed(&self, items: &[EmbedItem<'_>]) -> Result<Vec<Vec<f32>>, EmbeddingError> {
        let missing: Vec<SpanRef> = items
            .iter()
            .filter(|i| !self.vectors.contains_key(i.span_ref))
            .map(|i| i.span_ref.clone())
            .collect();
        if !missing.is_empty() {
            return Err(EmbeddingError::MissingVectors(missing));
        }
        Ok(items.iter().map(|i| self.vectors[i.span_ref].clone()).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_layout() {
        let mut buf = Vec::new();
        write_vectors(&mut buf, &[vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]]).unwrap();
        assert_eq!(&buf[..4], b"ILEM");
        assert_eq!(&buf[4..8], &3u32.to_le_bytes());
        assert_eq!(&buf[8..12], &2u32.to_le_bytes());
        assert_eq!(&buf[12..16], &1.0f32.to_le_bytes());
        assert_eq!(buf.len(), 12 + 6 * 4);
    }

    #[test]
    fn truncated_and_corrupt_files_fail() {
        let mut buf = Vec::new();
        write_vectors(&mut buf, &[vec![1.0, 2.0]]).unwrap();
        assert!(read_vectors(&buf[..buf.len() - 1]).is_err());
        assert!(read_vectors(&buf[..6]).is_err());
        buf[0] = b'X';
        assert!(read_vectors(&buf[..]).is_err());
    }

    #[test]
    fn ragged_rows_rejected() {
        assert!(write_vectors(Vec::new(), &[vec![1.0], vec![1.0, 2.0]]).is_err());
    }

    #[test]
    fn file_backend_lists_every_missing_ref() {
        let known = SpanRef::new("d1", 0);
        let backend = FileEmbedder::new(
            vec![EmbeddedSpan {
                span_ref: known.clone(),
                vector: vec![1.0, 0.0],
                normalized: true,
            }],
            "t",
        );
        let a = SpanRef::new("d2", 0);
        let b = SpanRef::new("d3", 1);
        let items = [
            EmbedItem {
                span_ref: &known,
                text: "x",
            },
            EmbedItem { span_ref: &a, text: "y" },
            EmbedItem { span_ref: &b, text: "z" },
        ];
        match backend.embed(&items) {
            Err(EmbeddingError::MissingVectors(refs)) => assert_eq!(refs, vec![a.clone(), b.clone()]),
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(backend.embed(&items[..1]).unwrap(), vec![vec![1.0, 0.0]]);
    }
}

//! Dialogue-level attachment to clusters, force assignment, the intent
//! mapping, volumes and scheme recall.

mod mapping;

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clustering::LowLevelClustering;
use crate::embedding::{cosine_distance, EmbeddingError};
use crate::extraction::SpanRef;
use crate::validation::ValidatedSpan;

pub use mapping::{IntentMapping, MappingEntry, MappingOp};

/// Reserved intent name for discovered clusters outside the scheme.
pub const OTHER: &str = "OTHER";

/// Conversational and system markers that are never head intents.
pub const DISCARDED_MARKERS: [&str; 7] = [
    "openinggreeting",
    "closinggreeting",
    "confirmation",
    "rejection",
    "contentonly",
    "thankyou",
    "outofdomain",
];

pub fn is_marker(intent: &str) -> bool {
    DISCARDED_MARKERS.iter().any(|m| m.eq_ignore_ascii_case(intent.trim()))
}

/// Force assignment is tuned within this distance band.
pub const FORCE_THRESHOLD_BAND: (f64, f64) = (0.2, 0.3);

#[derive(Debug, Error, PartialEq)]
pub enum LandscapeError {
    #[error("mapping op #{position} references unknown or merged cluster {id}")]
    UnknownCluster { position: usize, id: usize },
    #[error("mapping op #{position} merges cluster {id} into itself")]
    SelfMerge { position: usize, id: usize },
    #[error("mapping op #{position} sets an empty intent name")]
    EmptyIntent { position: usize },
    #[error("mapping entry {id} clears an intent set by the merge log")]
    Unnamed { id: usize },
    #[error("mapping references clusters that do not exist: {0:?}")]
    Dangling(Vec<usize>),
    #[error("top clusters without an intent: {0:?}")]
    Unmapped(Vec<usize>),
    #[error("intent scheme is empty")]
    EmptyScheme,
    #[error("intent scheme contains the marker {0:?}")]
    MarkerInScheme(String),
    #[error("no vector for valid span {0}")]
    MissingVector(SpanRef),
    #[error("force_cluster_threshold must lie in (0, 2), got {0}")]
    InvalidThreshold(f64),
    #[error("{0}")]
    Geometry(String),
}

impl From<EmbeddingError> for LandscapeError {
    fn from(e: EmbeddingError) -> Self {
        LandscapeError::Geometry(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AssignmentSource {
    Clustered,
    Forced,
    Unassigned,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnassignedReason {
    NoValidSpans,
    /// Representative span is noise; force assignment has not run yet.
    PendingForce,
    BeyondForceThreshold,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    pub low_cluster: Option<usize>,
    pub top_cluster: Option<usize>,
    pub source: AssignmentSource,
    /// The span that decided the assignment.
    pub span: Option<SpanRef>,
    /// Cosine distance to the chosen center, for forced assignments.
    pub distance: Option<f64>,
    pub reason: Option<UnassignedReason>,
}

impl Assignment {
    fn unassigned(reason: UnassignedReason, span: Option<SpanRef>) -> Self {
        Assignment {
            low_cluster: None,
            top_cluster: None,
            source: AssignmentSource::Unassigned,
            span,
            distance: None,
            reason: Some(reason),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForceParams {
    pub force_cluster_threshold: f64,
}

impl ForceParams {
    pub fn validate(&self) -> Result<(), LandscapeError> {
        let t = self.force_cluster_threshold;
        if !(t > 0.0 && t < 2.0) {
            return Err(LandscapeError::InvalidThreshold(t));
        }
        let (lo, hi) = FORCE_THRESHOLD_BAND;
        if !(lo..=hi).contains(&t) {
            log::warn!("force_cluster_threshold {t} is outside the usual {lo}-{hi} band");
        }
        Ok(())
    }
}

fn representative(spans: &[ValidatedSpan]) -> Option<&ValidatedSpan> {
    spans.iter().filter(|s| s.is_valid()).min_by_key(|s| s.candidate.rank)
}

/// Attaches each dialogue through its lowest-rank valid span.
///
/// `top_labels[c]` is the top-level cluster of low-level cluster `c`.
pub fn attach_dialogues<'a>(
    dialogue_ids: impl IntoIterator<Item = &'a str>,
    valid: &BTreeMap<String, Vec<ValidatedSpan>>,
    clustering: &LowLevelClustering,
    top_labels: &[usize],
) -> BTreeMap<String, Assignment> {
    let label_of: HashMap<&SpanRef, i64> = clustering.span_refs.iter().zip(clustering.labels.iter().copied()).collect();
    dialogue_ids
        .into_iter()
        .map(|id| {
            let rep = valid.get(id).and_then(|spans| representative(spans));
            let assignment = match rep {
                None => Assignment::unassigned(UnassignedReason::NoValidSpans, None),
                Some(span) => {
                    let r = span.span_ref();
                    match label_of.get(&r).copied() {
                        Some(label) if label >= 0 => {
                            let low = label as usize;
                            Assignment {
                                low_cluster: Some(low),
                                top_cluster: top_labels.get(low).copied(),
                                source: AssignmentSource::Clustered,
                                span: Some(r),
                                distance: None,
                                reason: None,
                            }
                        }
                        _ => Assignment::unassigned(UnassignedReason::PendingForce, Some(r)),
                    }
                }
            };
            (id.to_string(), assignment)
        })
        .collect()
}

/// Assigns pending dialogues to the center nearest to any of their valid
/// spans when that distance is below the threshold. Returns how many
/// dialogues were forced.
pub fn force_assign(
    assignments: &mut BTreeMap<String, Assignment>,
    valid: &BTreeMap<String, Vec<ValidatedSpan>>,
    vectors: &HashMap<SpanRef, Vec<f64>>,
    centers: &[Vec<f64>],
    top_labels: &[usize],
    params: ForceParams,
) -> Result<usize, LandscapeError> {
    params.validate()?;
    let pending: Vec<&String> = assignments
        .iter()
        .filter(|(_, a)| a.reason == Some(UnassignedReason::PendingForce))
        .map(|(id, _)| id)
        .collect();

    let decisions: Vec<(String, Option<(f64, usize, SpanRef)>)> = pending
        .par_iter()
        .map(|id| {
            let spans = valid.get(*id).map(Vec::as_slice).unwrap_or(&[]);
            let mut best: Option<(f64, usize, SpanRef)> = None;
            for span in spans.iter().filter(|s| s.is_valid()) {
                let r = span.span_ref();
                let v = vectors.get(&r).ok_or_else(|| LandscapeError::MissingVector(r.clone()))?;
                for (cluster, center) in centers.iter().enumerate() {
                    let d = cosine_distance(v, center)?;
                    let better = match &best {
                        None => true,
                        Some((bd, bc, _)) => d < *bd || (d == *bd && cluster < *bc),
                    };
                    if better {
                        best = Some((d, cluster, r.clone()));
                    }
                }
            }
            Ok(((*id).clone(), best))
        })
        .collect::<Result<_, LandscapeError>>()?;

    let mut forced = 0;
    for (id, best) in decisions {
        let a = assignments.get_mut(&id).expect("pending ids come from the map");
        match best {
            Some((d, cluster, span)) if d < params.force_cluster_threshold => {
                *a = Assignment {
                    low_cluster: Some(cluster),
                    top_cluster: top_labels.get(cluster).copied(),
                    source: AssignmentSource::Forced,
                    span: Some(span),
                    distance: Some(d),
                    reason: None,
                };
                forced += 1;
            }
            Some((d, _, _)) => {
                a.reason = Some(UnassignedReason::BeyondForceThreshold);
                a.distance = Some(d);
            }
            None => a.reason = Some(UnassignedReason::BeyondForceThreshold),
        }
    }
    Ok(forced)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceCounts {
    pub clustered: usize,
    pub forced: usize,
    pub unassigned: usize,
}

pub fn source_counts(assignments: &BTreeMap<String, Assignment>) -> SourceCounts {
    let mut c = SourceCounts::default();
    for a in assignments.values() {
        match a.source {
            AssignmentSource::Clustered => c.clustered += 1,
            AssignmentSource::Forced => c.forced += 1,
            AssignmentSource::Unassigned => c.unassigned += 1,
        }
    }
    c
}

/// Top-level representative texts.
///
/// For each top cluster, the member span closest to the unweighted mean of
/// its low-level centers; ties go to the lexicographically smallest text.
pub fn top_representatives(
    clustering: &LowLevelClustering,
    top_labels: &[usize],
    vectors: &HashMap<SpanRef, Vec<f64>>,
    texts: &HashMap<SpanRef, String>,
) -> Result<BTreeMap<usize, String>, LandscapeError> {
    let mut lows_of: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (low, &top) in top_labels.iter().enumerate() {
        lows_of.entry(top).or_default().push(low);
    }
    let mut out = BTreeMap::new();
    for (top, lows) in lows_of {
        let dim = clustering.clusters[lows[0]].center.len();
        let mut mean = vec![0.0; dim];
        for &l in &lows {
            for (m, c) in mean.iter_mut().zip(&clustering.clusters[l].center) {
                *m += c;
            }
        }
        for m in &mut mean {
            *m /= lows.len() as f64;
        }
        let mut best: Option<(f64, &str)> = None;
        for &l in &lows {
            for r in &clustering.clusters[l].members {
                let v = vectors.get(r).ok_or_else(|| LandscapeError::MissingVector(r.clone()))?;
                let text = texts.get(r).map(String::as_str).unwrap_or("");
                let d = cosine_distance(v, &mean)?;
                let better = match best {
                    None => true,
                    Some((bd, bt)) => d < bd || (d == bd && text < bt),
                };
                if better {
                    best = Some((d, text));
                }
            }
        }
        out.insert(top, best.map(|b| b.1.to_string()).unwrap_or_default());
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VolumeRow {
    pub top_cluster: usize,
    pub representative_span: String,
    pub intent: String,
    pub volume: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Volumes {
    /// Dialogues per intent; OTHER aggregated.
    pub per_intent: BTreeMap<String, usize>,
    /// One row per live top cluster, largest first.
    pub rows: Vec<VolumeRow>,
    pub unassigned: usize,
}

impl Volumes {
    pub fn total_assigned(&self) -> usize {
        self.per_intent.values().sum()
    }
}

/// Counts dialogues per mapped intent. Every live cluster must be named.
pub fn estimate_volumes(
    assignments: &BTreeMap<String, Assignment>,
    mapping: &IntentMapping,
) -> Result<Volumes, LandscapeError> {
    let unmapped = mapping.unmapped();
    if !unmapped.is_empty() {
        return Err(LandscapeError::Unmapped(unmapped));
    }
    let mut per_cluster: BTreeMap<usize, usize> = mapping.entries.keys().map(|&id| (id, 0)).collect();
    let mut unassigned = 0;
    let mut dangling = BTreeSet::new();
    for a in assignments.values() {
        match a.top_cluster {
            Some(top) if a.source != AssignmentSource::Unassigned => match mapping.resolve(top) {
                Some(live) => *per_cluster.get_mut(&live).expect("live entry") += 1,
                None => {
                    dangling.insert(top);
                }
            },
            _ => unassigned += 1,
        }
    }
    if !dangling.is_empty() {
        return Err(LandscapeError::Dangling(dangling.into_iter().collect()));
    }

    let mut per_intent: BTreeMap<String, usize> = BTreeMap::new();
    let mut rows = Vec::with_capacity(per_cluster.len());
    for (id, volume) in per_cluster {
        let entry = &mapping.entries[&id];
        let intent = entry.intent.clone().expect("checked complete");
        *per_intent.entry(intent.clone()).or_default() += volume;
        rows.push(VolumeRow {
            top_cluster: id,
            representative_span: entry.representative_span.clone(),
            intent,
            volume,
        });
    }
    rows.sort_by(|a, b| b.volume.cmp(&a.volume).then(a.top_cluster.cmp(&b.top_cluster)));
    Ok(Volumes {
        per_intent,
        rows,
        unassigned,
    })
}

/// Fraction of scheme intents carried by at least one live cluster.
pub fn scheme_recall<S: AsRef<str>>(mapping: &IntentMapping, scheme: &[S]) -> Result<f64, LandscapeError> {
    let scheme: BTreeSet<&str> = scheme.iter().map(AsRef::as_ref).collect();
    if scheme.is_empty() {
        return Err(LandscapeError::EmptyScheme);
    }
    if let Some(m) = scheme.iter().find(|s| is_marker(s)) {
        return Err(LandscapeError::MarkerInScheme((*m).to_string()));
    }
    let found = mapping.found_intents();
    let hits = scheme.iter().filter(|s| found.contains(*s)).count();
    Ok(hits as f64 / scheme.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clustering::LowLevelCluster;
    use crate::extraction::CandidateSpan;

    fn span(id: &str, rank: usize, valid: bool) -> ValidatedSpan {
        ValidatedSpan {
            candidate: CandidateSpan {
                dialogue_id: id.into(),
                rank,
                text: format!("text {id} {rank}"),
                score: 1.0,
                char_start: 0,
                char_end: 1,
                impossible: false,
            },
            pos_ok: valid,
            sentence_ok: true,
            channel_ok: true,
            source_turn: Some(0),
        }
    }

    fn clustering(entries: &[(&str, usize, i64)], centers: Vec<Vec<f64>>) -> LowLevelClustering {
        let span_refs: Vec<SpanRef> = entries.iter().map(|(d, r, _)| SpanRef::new(*d, *r)).collect();
        let labels: Vec<i64> = entries.iter().map(|e| e.2).collect();
        let clusters = centers
            .into_iter()
            .enumerate()
            .map(|(id, center)| LowLevelCluster {
                id,
                members: span_refs
                    .iter()
                    .zip(&labels)
                    .filter(|(_, &l)| l == id as i64)
                    .map(|(r, _)| r.clone())
                    .collect(),
                center,
            })
            .collect();
        LowLevelClustering {
            span_refs,
            labels,
            clusters,
        }
    }

    #[test]
    fn attachment_uses_lowest_rank_valid_span() {
        let valid: BTreeMap<String, Vec<ValidatedSpan>> = [
            ("a".to_string(), vec![span("a", 0, true), span("a", 1, true)]),
            ("b".to_string(), vec![span("b", 0, true), span("b", 2, true)]),
            ("c".to_string(), vec![span("c", 0, false), span("c", 3, true)]),
        ]
        .into_iter()
        .collect();
        let cl = clustering(
            &[("a", 0, 3), ("a", 1, 0), ("b", 0, -1), ("b", 2, 1), ("c", 3, 2)],
            vec![vec![1.0]; 4],
        );
        let top = [0, 0, 1, 1];
        let got = attach_dialogues(["a", "b", "c", "d"], &valid, &cl, &top);
        assert_eq!(got["a"].low_cluster, Some(3));
        assert_eq!(got["a"].top_cluster, Some(1));
        assert_eq!(got["b"].reason, Some(UnassignedReason::PendingForce));
        assert_eq!(got["c"].low_cluster, Some(2));
        assert_eq!(got["d"].reason, Some(UnassignedReason::NoValidSpans));
        assert_eq!(source_counts(&got), SourceCounts {
            clustered: 2,
            forced: 0,
            unassigned: 2
        });
    }

    fn force_case(span_vec: Vec<f64>, threshold: f64) -> Assignment {
        let valid: BTreeMap<String, Vec<ValidatedSpan>> =
            [("x".to_string(), vec![span("x", 0, true)])].into_iter().collect();
        let cl = clustering(&[("x", 0, -1)], vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]]);
        let mut a = attach_dialogues(["x"], &valid, &cl, &[0, 1]);
        let vectors: HashMap<SpanRef, Vec<f64>> = [(SpanRef::new("x", 0), span_vec)].into_iter().collect();
        force_assign(
            &mut a,
            &valid,
            &vectors,
            &cl.centers(),
            &[0, 1],
            ForceParams {
                force_cluster_threshold: threshold,
            },
        )
        .unwrap();
        a.remove("x").unwrap()
    }

    #[test]
    fn forcing_respects_the_threshold() {
        // cos = 0.85 → distance 0.15
        let v = vec![0.85, 0.0, (1.0f64 - 0.85 * 0.85).sqrt()];
        let a = force_case(v.clone(), 0.3);
        assert_eq!(a.source, AssignmentSource::Forced);
        assert_eq!(a.low_cluster, Some(0));
        assert!((a.distance.unwrap() - 0.15).abs() < 1e-12);

        // cos = 0.65 → distance 0.35
        let w = vec![0.65, 0.0, (1.0f64 - 0.65 * 0.65).sqrt()];
        let b = force_case(w, 0.3);
        assert_eq!(b.source, AssignmentSource::Unassigned);
        assert_eq!(b.reason, Some(UnassignedReason::BeyondForceThreshold));
    }

    #[test]
    fn force_ties_go_to_smallest_cluster() {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        assert_eq!(force_case(vec![s, s, 0.0], 0.5).low_cluster, Some(0));
    }

    #[test]
    fn volumes_follow_merges() {
        let mut assignments = BTreeMap::new();
        for (i, top) in [0usize, 0, 1, 2, 2, 2].iter().enumerate() {
            assignments.insert(format!("d{i}"), Assignment {
                low_cluster: Some(*top),
                top_cluster: Some(*top),
                source: AssignmentSource::Clustered,
                span: None,
                distance: None,
                reason: None,
            });
        }
        assignments.insert("u".into(), Assignment::unassigned(UnassignedReason::NoValidSpans, None));
        let m = IntentMapping::initial([(0, "x"), (1, "y"), (2, "z")]);
        assert_eq!(estimate_volumes(&assignments, &m).unwrap_err(), LandscapeError::Unmapped(vec![0, 1, 2]));
        let m = m
            .apply_ops(&[
                MappingOp::Rename {
                    id: 0,
                    intent: "a".into(),
                },
                MappingOp::Rename {
                    id: 1,
                    intent: "b".into(),
                },
                MappingOp::SetOther { id: 2 },
            ])
            .unwrap();
        let v = estimate_volumes(&assignments, &m).unwrap();
        assert_eq!(v.per_intent["a"], 2);
        assert_eq!(v.per_intent[OTHER], 3);
        assert_eq!(v.unassigned, 1);
        assert_eq!(v.rows[0].top_cluster, 2);

        let merged = m.apply_ops(&[MappingOp::Merge { into: 0, from: 1 }]).unwrap();
        let w = estimate_volumes(&assignments, &merged).unwrap();
        assert_eq!(w.per_intent["a"], 3);
        assert_eq!(w.total_assigned(), v.total_assigned());
    }

    #[test]
    fn recall_counts_scheme_hits() {
        let m = IntentMapping::initial([(0, "x"), (1, "y")])
            .apply_ops(&[
                MappingOp::Rename {
                    id: 0,
                    intent: "a".into(),
                },
                MappingOp::SetOther { id: 1 },
            ])
            .unwrap();
        assert_eq!(scheme_recall(&m, &["a", "b"]).unwrap(), 0.5);
        assert_eq!(scheme_recall(&IntentMapping::default(), &["a"]).unwrap(), 0.0);
        assert_eq!(scheme_recall::<&str>(&m, &[]).unwrap_err(), LandscapeError::EmptyScheme);
        assert!(matches!(scheme_recall(&m, &["thankyou"]), Err(LandscapeError::MarkerInScheme(_))));
    }
}

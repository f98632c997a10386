//! Zero-shot evaluation of the clustering against annotated dialogues.
//!
//! Each valid span is classified to its most similar low-level center,
//! traced to its top-level cluster and the analyst's intent name, and
//! compared with the gold label of the customer turn it came from.

use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, BufReader, Read};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::CorpusFormat;
use crate::embedding::{cosine_similarity, EmbeddingError};
use crate::extraction::SpanRef;
use crate::landscape::{is_marker, IntentMapping};
use crate::validation::ValidatedSpan;

/// Label of predictions below the similarity threshold.
pub const UNLABELED: &str = "UNLABELED";

#[derive(Debug, Error)]
pub enum EvaluationError {
    #[error("gold row {row}: {message}")]
    Record { row: usize, message: String },
    #[error("no cluster centers to classify against")]
    NoCenters,
    #[error("{0}")]
    Geometry(#[from] EmbeddingError),
    #[error("predicted top clusters have no intent: {0:?}")]
    Unmapped(Vec<usize>),
    #[error("low-level cluster {0} has no top-level cluster")]
    UnknownCluster(usize),
    #[error("invalid evaluation parameters: {0}")]
    InvalidParams(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalParams {
    pub unlabeled_threshold: f64,
    /// Rows need strictly more gold examples than this.
    pub min_support: usize,
}

impl Default for EvalParams {
    fn default() -> Self {
        EvalParams {
            unlabeled_threshold: 0.4,
            min_support: 10,
        }
    }
}

impl EvalParams {
    pub fn validate(&self) -> Result<(), EvaluationError> {
        if !(self.unlabeled_threshold > 0.0 && self.unlabeled_threshold < 1.0) {
            return Err(EvaluationError::InvalidParams(format!(
                "unlabeled_threshold must lie in (0, 1), got {}",
                self.unlabeled_threshold
            )));
        }
        if self.min_support < 1 {
            return Err(EvaluationError::InvalidParams("min_support must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldLabel {
    pub dialogue_id: String,
    pub turn_index: u32,
    pub intent: String,
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "camelCase")]
struct RawGold {
    conversation_id: String,
    turn_number: i64,
    intent: String,
}

/// Reads turn-level gold labels.
///
/// Several rows for one turn (sentence-level annotation) collapse to the
/// majority label; ties go to the label seen first. Markers are kept here
/// and dropped during alignment.
pub fn load_gold<R: Read>(source: R, format: CorpusFormat) -> Result<Vec<GoldLabel>, EvaluationError> {
    let mut raw: Vec<(usize, RawGold)> = Vec::new();
    match format {
        CorpusFormat::Jsonl => {
            for (idx, line) in BufReader::new(source).lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let row = serde_json::from_str(&line).map_err(|e| EvaluationError::Record {
                    row: idx + 1,
                    message: e.to_string(),
                })?;
                raw.push((idx + 1, row));
            }
        }
        CorpusFormat::Csv => {
            let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(source);
            for (idx, row) in reader.deserialize::<RawGold>().enumerate() {
                let row = row.map_err(|e| EvaluationError::Record {
                    row: idx + 2,
                    message: e.to_string(),
                })?;
                raw.push((idx + 2, row));
            }
        }
    }

    // (dialogue, turn) -> labels in file order
    let mut grouped: BTreeMap<(String, u32), Vec<String>> = BTreeMap::new();
    for (row, g) in raw {
        let turn = u32::try_from(g.turn_number).map_err(|_| EvaluationError::Record {
            row,
            message: format!("invalid turn number {}", g.turn_number),
        })?;
        let intent = g.intent.trim().to_string();
        if intent.is_empty() {
            return Err(EvaluationError::Record {
                row,
                message: "empty intent".into(),
            });
        }
        grouped.entry((g.conversation_id, turn)).or_default().push(intent);
    }
    Ok(grouped
        .into_iter()
        .map(|((dialogue_id, turn_index), labels)| GoldLabel {
            dialogue_id,
            turn_index,
            intent: majority(&labels),
        })
        .collect())
}

fn majority(labels: &[String]) -> String {
    let mut counts: Vec<(&str, usize)> = Vec::new();
    for l in labels {
        match counts.iter_mut().find(|(name, _)| name == l) {
            Some((_, c)) => *c += 1,
            None => counts.push((l, 1)),
        }
    }
    let best = counts.iter().map(|c| c.1).max().unwrap_or(0);
    counts
        .into_iter()
        .find(|c| c.1 == best)
        .map(|c| c.0.to_string())
        .unwrap_or_default()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Prediction {
    Cluster { id: usize, similarity: f64 },
    Unlabeled { best_similarity: f64 },
}

impl Prediction {
    pub fn cluster(&self) -> Option<usize> {
        match self {
            Prediction::Cluster { id, .. } => Some(*id),
            Prediction::Unlabeled { .. } => None,
        }
    }
}

/// Most similar center by cosine; ties go to the smallest id.
pub fn zero_shot_classify(span: &[f64], centers: &[Vec<f64>], params: &EvalParams) -> Result<Prediction, EvaluationError> {
    if centers.is_empty() {
        return Err(EvaluationError::NoCenters);
    }
    let mut best = (f64::NEG_INFINITY, 0);
    for (id, c) in centers.iter().enumerate() {
        let sim = cosine_similarity(span, c)?;
        if sim > best.0 {
            best = (sim, id);
        }
    }
    Ok(if best.0 < params.unlabeled_threshold {
        Prediction::Unlabeled { best_similarity: best.0 }
    } else {
        Prediction::Cluster {
            id: best.1,
            similarity: best.0,
        }
    })
}

pub fn classify_all(
    vectors: &[(SpanRef, Vec<f64>)],
    centers: &[Vec<f64>],
    params: &EvalParams,
) -> Result<BTreeMap<SpanRef, Prediction>, EvaluationError> {
    vectors
        .par_iter()
        .map(|(r, v)| Ok((r.clone(), zero_shot_classify(v, centers, params)?)))
        .collect()
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Alignment {
    pub pairs: Vec<(SpanRef, String)>,
    pub excluded_marker: usize,
    pub excluded_unlabeled_turn: usize,
    pub excluded_missing_dialogue: usize,
}

/// Pairs each valid span with the gold intent of its source turn.
pub fn align_gold(spans: &[ValidatedSpan], gold: &[GoldLabel]) -> Alignment {
    let mut by_turn: HashMap<(&str, u32), &str> = HashMap::new();
    let mut dialogues: HashMap<&str, ()> = HashMap::new();
    for g in gold {
        by_turn.insert((g.dialogue_id.as_str(), g.turn_index), g.intent.as_str());
        dialogues.insert(g.dialogue_id.as_str(), ());
    }
    let mut out = Alignment::default();
    for s in spans.iter().filter(|s| s.is_valid()) {
        let id = s.candidate.dialogue_id.as_str();
        if !dialogues.contains_key(id) {
            out.excluded_missing_dialogue += 1;
            continue;
        }
        match s.source_turn.and_then(|t| by_turn.get(&(id, t))) {
            None => out.excluded_unlabeled_turn += 1,
            Some(intent) if is_marker(intent) => out.excluded_marker += 1,
            Some(intent) => out.pairs.push((s.span_ref(), (*intent).to_string())),
        }
    }
    if out.excluded_missing_dialogue > 0 {
        log::warn!("{} span(s) come from dialogues without gold labels", out.excluded_missing_dialogue);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntentScore {
    pub intent: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    /// Intents with support above `min_support`, largest support first.
    pub rows: Vec<IntentScore>,
    /// Every gold intent, regardless of support.
    pub all_rows: Vec<IntentScore>,
    pub unlabeled_count: usize,
    pub evaluated_spans: usize,
    /// gold intent → predicted intent (or UNLABELED) → count
    pub confusion: BTreeMap<String, BTreeMap<String, usize>>,
    pub params: EvalParams,
}

pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// One-vs-rest scores per gold intent.
///
/// UNLABELED predictions count against recall and never towards any
/// intent's precision.
pub fn classification_report(
    pairs: &[(SpanRef, String)],
    predictions: &BTreeMap<SpanRef, Prediction>,
    mapping: &IntentMapping,
    top_labels: &[usize],
    params: &EvalParams,
) -> Result<EvaluationReport, EvaluationError> {
    params.validate()?;
    let mut unmapped = std::collections::BTreeSet::new();
    let mut predicted: Vec<Option<String>> = Vec::with_capacity(pairs.len());
    for (r, _) in pairs {
        let p = match predictions.get(r).and_then(Prediction::cluster) {
            None => None,
            Some(low) => {
                let top = *top_labels.get(low).ok_or(EvaluationError::UnknownCluster(low))?;
                match mapping.intent_of(top) {
                    Some(intent) => Some(intent.to_string()),
                    None => {
                        unmapped.insert(top);
                        None
                    }
                }
            }
        };
        predicted.push(p);
    }
    if !unmapped.is_empty() {
        return Err(EvaluationError::Unmapped(unmapped.into_iter().collect()));
    }

    let mut confusion: BTreeMap<String, BTreeMap<String, usize>> = BTreeMap::new();
    let mut tp: BTreeMap<&str, usize> = BTreeMap::new();
    let mut fp: BTreeMap<&str, usize> = BTreeMap::new();
    let mut support: BTreeMap<&str, usize> = BTreeMap::new();
    let mut unlabeled = 0;
    for ((_, gold), pred) in pairs.iter().zip(&predicted) {
        *support.entry(gold).or_default() += 1;
        let label = pred.as_deref().unwrap_or(UNLABELED);
        *confusion.entry(gold.clone()).or_default().entry(label.to_string()).or_default() += 1;
        match pred {
            None => unlabeled += 1,
            Some(p) if p == gold => *tp.entry(gold).or_default() += 1,
            Some(p) => *fp.entry(p.as_str()).or_default() += 1,
        }
    }

    let mut all_rows: Vec<IntentScore> = support
        .iter()
        .map(|(&intent, &sup)| {
            let t = tp.get(intent).copied().unwrap_or(0);
            let f = fp.get(intent).copied().unwrap_or(0);
            let precision = ratio(t, t + f);
            let recall = ratio(t, sup);
            IntentScore {
                intent: intent.to_string(),
                precision,
                recall,
                f1: f1_score(precision, recall),
                support: sup,
                true_positives: t,
                false_positives: f,
                false_negatives: sup - t,
            }
        })
        .collect();
    all_rows.sort_by(|a, b| b.support.cmp(&a.support).then_with(|| a.intent.cmp(&b.intent)));
    let rows = all_rows.iter().filter(|r| r.support > params.min_support).cloned().collect();

    Ok(EvaluationReport {
        rows,
        all_rows,
        unlabeled_count: unlabeled,
        evaluated_spans: pairs.len(),
        confusion,
        params: *params,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::landscape::MappingOp;

    #[test]
    fn classify_reference_cases() {
        let p = EvalParams::default();
        let centers = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        assert_eq!(zero_shot_classify(&[1.0, 0.0], &centers, &p).unwrap(), Prediction::Cluster {
            id: 0,
            similarity: 1.0
        });
        assert_eq!(zero_shot_classify(&[0.6, 0.8], &centers, &p).unwrap().cluster(), Some(1));
        let far = vec![vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]];
        assert!(matches!(
            zero_shot_classify(&[1.0, 0.0, 0.0], &far, &p).unwrap(),
            Prediction::Unlabeled { .. }
        ));
        assert!(zero_shot_classify(&[0.0, 0.0], &centers, &p).is_err());
        assert!(matches!(zero_shot_classify(&[1.0], &[], &p), Err(EvaluationError::NoCenters)));
    }

    #[test]
    fn ties_pick_the_smallest_center() {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let centers = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        assert_eq!(
            zero_shot_classify(&[s, s], &centers, &EvalParams::default()).unwrap().cluster(),
            Some(0)
        );
    }

    #[test]
    fn gold_majority_with_first_tie_break() {
        let csv = "conversationId,turnNumber,intent\nd1,2,bookflight\nd1,2,thankyou\nd1,2,thankyou\nd1,4,getseatinfo\nd1,4,bookflight\n";
        let g = load_gold(csv.as_bytes(), CorpusFormat::Csv).unwrap();
        assert_eq!(g.len(), 2);
        assert_eq!(g[0].intent, "thankyou");
        assert_eq!(g[1].intent, "getseatinfo");
        let jsonl = r#"{"conversationId":"d2","turnNumber":1,"intent":"x"}"#;
        assert_eq!(load_gold(jsonl.as_bytes(), CorpusFormat::Jsonl).unwrap()[0].turn_index, 1);
        assert!(load_gold("conversationId,turnNumber,intent\nd,-1,x\n".as_bytes(), CorpusFormat::Csv).is_err());
    }

    #[test]
    fn unlabeled_hurts_recall_only() {
        let pairs: Vec<(SpanRef, String)> = (0..4).map(|i| (SpanRef::new(format!("d{i}"), 0), "a".to_string())).collect();
        let mut preds = BTreeMap::new();
        preds.insert(pairs[0].0.clone(), Prediction::Cluster { id: 0, similarity: 0.9 });
        preds.insert(pairs[1].0.clone(), Prediction::Cluster { id: 0, similarity: 0.9 });
        preds.insert(pairs[2].0.clone(), Prediction::Unlabeled { best_similarity: 0.1 });
        preds.insert(pairs[3].0.clone(), Prediction::Unlabeled { best_similarity: 0.1 });
        let mapping = IntentMapping::initial([(0, "x")])
            .apply_ops(&[MappingOp::Rename {
                id: 0,
                intent: "a".into(),
            }])
            .unwrap();
        let params = EvalParams {
            min_support: 1,
            ..EvalParams::default()
        };
        let r = classification_report(&pairs, &preds, &mapping, &[0], &params).unwrap();
        assert_eq!(r.rows.len(), 1);
        assert_eq!(r.rows[0].precision, 1.0);
        assert_eq!(r.rows[0].recall, 0.5);
        assert!((r.rows[0].f1 - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(r.unlabeled_count, 2);
        assert_eq!(r.confusion["a"][UNLABELED], 2);
    }

    #[test]
    fn unmapped_prediction_is_fatal() {
        let pairs = vec![(SpanRef::new("d", 0), "a".to_string())];
        let preds: BTreeMap<_, _> = [(SpanRef::new("d", 0), Prediction::Cluster { id: 0, similarity: 1.0 })].into();
        let mapping = IntentMapping::initial([(0, "x")]);
        assert!(matches!(
            classification_report(&pairs, &preds, &mapping, &[0], &EvalParams::default()),
            Err(EvaluationError::Unmapped(ids)) if ids == vec![0]
        ));
    }

    #[test]
    fn support_threshold_is_strict() {
        let pairs: Vec<(SpanRef, String)> = (0..10).map(|i| (SpanRef::new(format!("d{i}"), 0), "a".to_string())).collect();
        let preds = BTreeMap::new();
        let r = classification_report(&pairs, &preds, &IntentMapping::default(), &[], &EvalParams::default()).unwrap();
        assert!(r.rows.is_empty());
        assert_eq!(r.all_rows[0].recall, 0.0);
        assert_eq!(r.all_rows[0].false_negatives, 10);
    }
}

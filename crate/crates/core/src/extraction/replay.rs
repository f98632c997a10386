use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Read, Write};

use serde::{Deserialize, Serialize};

use super::{CandidateSpan, ExtractionError, QaAnswer, QaBackend};
use crate::corpus::ContextDocument;

/// One line of a candidate file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateRecord {
    pub dialogue_id: String,
    pub rank: usize,
    pub text: String,
    pub score: f64,
    pub start: usize,
    pub end: usize,
}

impl From<&CandidateSpan> for CandidateRecord {
    fn from(c: &CandidateSpan) -> Self {
        CandidateRecord {
            dialogue_id: c.dialogue_id.clone(),
            rank: c.rank,
            text: c.text.clone(),
            score: c.score,
            start: c.char_start,
            end: c.char_end,
        }
    }
}

impl From<CandidateRecord> for CandidateSpan {
    fn from(r: CandidateRecord) -> Self {
        let impossible = r.text.is_empty();
        CandidateSpan {
            dialogue_id: r.dialogue_id,
            rank: r.rank,
            text: r.text,
            score: r.score,
            char_start: r.start,
            char_end: r.end,
            impossible,
        }
    }
}

pub fn write_candidates<'a, W: Write>(
    mut out: W,
    candidates: impl IntoIterator<Item = &'a CandidateSpan>,
) -> Result<(), ExtractionError> {
    for c in candidates {
        let line = serde_json::to_string(&CandidateRecord::from(c)).expect("candidate record serializes");
        writeln!(out, "{line}")?;
    }
    Ok(())
}

/// Reads a candidate file, grouping by dialogue and sorting by rank.
pub fn read_candidates<R: Read>(source: R) -> Result<BTreeMap<String, Vec<CandidateSpan>>, ExtractionError> {
    let mut grouped: BTreeMap<String, Vec<CandidateSpan>> = BTreeMap::new();
    for (idx, line) in BufReader::new(source).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: CandidateRecord = serde_json::from_str(&line).map_err(|e| ExtractionError::ReplayFormat {
            line: idx + 1,
            message: e.to_string(),
        })?;
        grouped
            .entry(record.dialogue_id.clone())
            .or_default()
            .push(record.into());
    }
    for (id, list) in grouped.iter_mut() {
        list.sort_by_key(|c| c.rank);
        if let Some(w) = list.windows(2).find(|w| w[0].rank == w[1].rank) {
            return Err(ExtractionError::ReplayFormat {
                line: 0,
                message: format!("dialogue {id} repeats rank {}", w[0].rank),
            });
        }
    }
    Ok(grouped)
}

/// Serves previously recorded answers instead of querying a model.
#[derive(Debug, Clone)]
pub struct ReplayBackend {
    candidates: BTreeMap<String, Vec<CandidateSpan>>,
    label: String,
}

impl ReplayBackend {
    pub fn new(candidates: BTreeMap<String, Vec<CandidateSpan>>, label: impl Into<String>) -> Self {
        ReplayBackend {
            candidates,
            label: label.into(),
        }
    }

    pub fn from_reader<R: Read>(source: R, label: impl Into<String>) -> Result<Self, ExtractionError> {
        Ok(Self::new(read_candidates(source)?, label))
    }
}

impl QaBackend for ReplayBackend {
    fn id(&self) -> String {
        format!("replay:{}", self.label)
    }

    fn answer(&self, _question: &str, ctx: &ContextDocument, _top_k: usize) -> Result<Vec<QaAnswer>, ExtractionError> {
        let list = self
            .candidates
            .get(&ctx.dialogue_id)
            .ok_or_else(|| ExtractionError::MissingReplay(ctx.dialogue_id.clone()))?;
        Ok(list
            .iter()
            .map(|c| QaAnswer {
                answer: c.text.clone(),
                score: c.score,
                start: c.char_start,
                end: c.char_end,
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{render_context, Channel, Dialogue, Utterance};
    use crate::extraction::{extract_candidates, ExtractionConfig};

    #[test]
    fn replayed_candidates_are_reemitted_identically() {
        let text = "i need to check my seat assignment please";
        let d = Dialogue::new(
            "d1",
            vec![Utterance {
                dialogue_id: "d1".into(),
                turn_index: 0,
                channel: Channel::Customer,
                text: text.into(),
            }],
        )
        .unwrap();
        let ctx = render_context(&d);
        let words: Vec<&str> = text.split(' ').collect();
        let prefix = "customer: ".len();
        let mut original = Vec::new();
        for rank in 0..10 {
            let take = words.len() - (rank % 4);
            let span = words[..take].join(" ");
            original.push(CandidateSpan {
                dialogue_id: "d1".into(),
                rank,
                score: 0.95 - rank as f64 * 0.05,
                char_start: prefix,
                char_end: prefix + span.chars().count(),
                text: span,
                impossible: false,
            });
        }
        let mut file = Vec::new();
        write_candidates(&mut file, &original).unwrap();
        let backend = ReplayBackend::from_reader(file.as_slice(), "fixture").unwrap();
        let replayed = extract_candidates(&ctx, &ExtractionConfig::default(), &backend).unwrap();
        assert_eq!(replayed, original);

        let mut rewritten = Vec::new();
        write_candidates(&mut rewritten, &replayed).unwrap();
        assert_eq!(rewritten, file);
    }

    #[test]
    fn unknown_dialogue_is_reported() {
        let backend = ReplayBackend::new(BTreeMap::new(), "empty");
        let ctx = ContextDocument {
            dialogue_id: "zz".into(),
            text: String::new(),
            segments: vec![],
        };
        assert!(matches!(
            backend.answer("q", &ctx, 10),
            Err(ExtractionError::MissingReplay(id)) if id == "zz"
        ));
    }

    #[test]
    fn duplicate_rank_rejected() {
        let line = r#"{"dialogue_id":"d","rank":0,"text":"a b","score":0.5,"start":0,"end":3}"#;
        let src = format!("{line}\n{line}\n");
        assert!(read_candidates(src.as_bytes()).is_err());
    }
}

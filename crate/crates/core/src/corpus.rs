//! Dialogue ingestion and QA context rendering.
//!
//! A [`Dialogue`] is rendered into a single context string of the form
//! `"customer: hello\nagent: Hi!\n"`. Every character of that string belongs
//! to exactly one [`Segment`], so any QA answer offset can be traced back to
//! the turn (and channel) it came from.
//!
//! All offsets are counted in Unicode scalar values, not bytes.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, BufReader, Read};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("row {row}: {message}")]
    Record { row: usize, message: String },
    #[error("duplicate turn {turn_index} in dialogue {dialogue_id}")]
    DuplicateTurn { dialogue_id: String, turn_index: u32 },
    #[error("dialogue {dialogue_id}: turn numbers are not contiguous from 0 (missing turn {missing})")]
    NonContiguousTurns { dialogue_id: String, missing: u32 },
    #[error("dialogue {0} has no customer utterance")]
    NoCustomerTurn(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Channel {
    Customer,
    Agent,
}

impl Channel {
    pub fn as_str(self) -> &'static str {
        match self {
            Channel::Customer => "customer",
            Channel::Agent => "agent",
        }
    }

    /// The exact prefix written in front of each utterance in a context.
    pub fn prefix(self) -> &'static str {
        match self {
            Channel::Customer => "customer: ",
            Channel::Agent => "agent: ",
        }
    }

    pub fn parse(label: &str) -> Option<Channel> {
        match label.trim().to_ascii_lowercase().as_str() {
            "customer" => Some(Channel::Customer),
            "agent" => Some(Channel::Agent),
            _ => None,
        }
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Utterance {
    pub dialogue_id: String,
    pub turn_index: u32,
    pub channel: Channel,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dialogue {
    pub id: String,
    pub utterances: Vec<Utterance>,
}

impl Dialogue {
    /// Builds a dialogue from utterances in any order, enforcing turn
    /// uniqueness, contiguity and the presence of a customer turn.
    pub fn new(id: impl Into<String>, mut utterances: Vec<Utterance>) -> Result<Self, CorpusError> {
        let id = id.into();
        utterances.sort_by_key(|u| u.turn_index);
        for (expected, utt) in utterances.iter().enumerate() {
            let expected = expected as u32;
            if utt.turn_index < expected {
                return Err(CorpusError::DuplicateTurn {
                    dialogue_id: id,
                    turn_index: utt.turn_index,
                });
            }
            if utt.turn_index > expected {
                return Err(CorpusError::NonContiguousTurns {
                    dialogue_id: id,
                    missing: expected,
                });
            }
        }
        if !utterances.iter().any(|u| u.channel == Channel::Customer) {
            return Err(CorpusError::NoCustomerTurn(id));
        }
        Ok(Dialogue { id, utterances })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SegmentKind {
    Prefix,
    Utterance,
    Newline,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub char_start: usize,
    pub char_end: usize,
    pub turn_index: u32,
    pub channel: Channel,
    pub kind: SegmentKind,
}

/// Where a character offset falls inside a rendered context.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OffsetLocation {
    Utterance { turn_index: u32, channel: Channel },
    NonUtterance,
    OutOfRange,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextDocument {
    pub dialogue_id: String,
    pub text: String,
    pub segments: Vec<Segment>,
}

impl ContextDocument {
    pub fn char_len(&self) -> usize {
        self.segments.last().map_or(0, |s| s.char_end)
    }

    /// Slices the context by character offsets. Returns `None` when the range
    /// is inverted or exceeds the text.
    pub fn slice_chars(&self, start: usize, end: usize) -> Option<&str> {
        slice_chars(&self.text, start, end)
    }

    fn segment_index_at(&self, offset: usize) -> Option<usize> {
        if offset >= self.char_len() {
            return None;
        }
        let idx = self.segments.partition_point(|s| s.char_end <= offset);
        Some(idx)
    }

    /// Binary search for the segment holding `offset`.
    pub fn locate(&self, offset: usize) -> OffsetLocation {
        match self.segment_index_at(offset) {
            None => OffsetLocation::OutOfRange,
            Some(idx) => {
                let seg = self.segments[idx];
                if seg.kind == SegmentKind::Utterance {
                    OffsetLocation::Utterance {
                        turn_index: seg.turn_index,
                        channel: seg.channel,
                    }
                } else {
                    OffsetLocation::NonUtterance
                }
            }
        }
    }

    /// The utterance segment that fully contains `[start, end)`, if any.
    pub fn enclosing_utterance(&self, start: usize, end: usize) -> Option<&Segment> {
        if start >= end {
            return None;
        }
        let idx = self.segment_index_at(start)?;
        let seg = &self.segments[idx];
        (seg.kind == SegmentKind::Utterance && end <= seg.char_end).then_some(seg)
    }
}

pub(crate) fn slice_chars(text: &str, start: usize, end: usize) -> Option<&str> {
    if start > end {
        return None;
    }
    let mut indices = text.char_indices().map(|(b, _)| b).chain(std::iter::once(text.len()));
    let begin = indices.nth(start)?;
    let finish = if end == start {
        begin
    } else {
        indices.nth(end - start - 1)?
    };
    Some(&text[begin..finish])
}

/// Renders a dialogue as `"<channel>: <utterance>\n"` per turn.
pub fn render_context(dialogue: &Dialogue) -> ContextDocument {
    let mut text = String::new();
    let mut segments = Vec::with_capacity(dialogue.utterances.len() * 3);
    let mut cursor = 0usize;
    for utt in &dialogue.utterances {
        let pieces = [
            (utt.channel.prefix(), SegmentKind::Prefix),
            (utt.text.as_str(), SegmentKind::Utterance),
            ("\n", SegmentKind::Newline),
        ];
        for (piece, kind) in pieces {
            let len = piece.chars().count();
            text.push_str(piece);
            segments.push(Segment {
                char_start: cursor,
                char_end: cursor + len,
                turn_index: utt.turn_index,
                channel: utt.channel,
                kind,
            });
            cursor += len;
        }
    }
    ContextDocument {
        dialogue_id: dialogue.id.clone(),
        text,
        segments,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorpusFormat {
    Jsonl,
    Csv,
}

impl CorpusFormat {
    /// Guesses the format from a file extension.
    pub fn from_path(path: &std::path::Path) -> Option<Self> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "jsonl" | "ndjson" => Some(CorpusFormat::Jsonl),
            "csv" => Some(CorpusFormat::Csv),
            _ => None,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "camelCase")]
struct RawRow {
    conversation_id: String,
    turn_number: i64,
    channel: String,
    utterance: String,
}

/// Replaces every newline (`\n`, `\r\n`, `\r`) with a single space.
pub fn normalize_newlines(text: &str) -> String {
    text.replace("\r\n", " ").replace(['\n', '\r'], " ")
}

fn row_to_utterance(row: RawRow, row_no: usize) -> Result<Utterance, CorpusError> {
    let record = |message: String| CorpusError::Record { row: row_no, message };
    let channel = Channel::parse(&row.channel)
        .ok_or_else(|| record(format!("unknown channel label {:?}", row.channel)))?;
    let turn_index = u32::try_from(row.turn_number)
        .map_err(|_| record(format!("invalid turn number {}", row.turn_number)))?;
    let text = normalize_newlines(&row.utterance);
    if text.trim().is_empty() {
        return Err(record("empty utterance".to_string()));
    }
    if row.conversation_id.is_empty() {
        return Err(record("empty conversation id".to_string()));
    }
    Ok(Utterance {
        dialogue_id: row.conversation_id,
        turn_index,
        channel,
        text,
    })
}

/// Parses a corpus into dialogues sorted by id, each with its utterances in
/// turn order.
pub fn parse_corpus<R: Read>(source: R, format: CorpusFormat) -> Result<Vec<Dialogue>, CorpusError> {
    let mut grouped: BTreeMap<String, Vec<Utterance>> = BTreeMap::new();
    let mut push = |utt: Utterance| -> Result<(), CorpusError> {
        let turns = grouped.entry(utt.dialogue_id.clone()).or_default();
        if turns.iter().any(|t| t.turn_index == utt.turn_index) {
            return Err(CorpusError::DuplicateTurn {
                dialogue_id: utt.dialogue_id,
                turn_index: utt.turn_index,
            });
        }
        turns.push(utt);
        Ok(())
    };

    match format {
        CorpusFormat::Jsonl => {
            for (idx, line) in BufReader::new(source).lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let row_no = idx + 1;
                let raw: RawRow = serde_json::from_str(&line).map_err(|e| CorpusError::Record {
                    row: row_no,
                    message: e.to_string(),
                })?;
                push(row_to_utterance(raw, row_no)?)?;
            }
        }
        CorpusFormat::Csv => {
            let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(source);
            for (idx, result) in reader.deserialize::<RawRow>().enumerate() {
                // header is row 1
                let row_no = idx + 2;
                let raw = result.map_err(|e| CorpusError::Record {
                    row: row_no,
                    message: e.to_string(),
                })?;
                push(row_to_utterance(raw, row_no)?)?;
            }
        }
    }

    grouped
        .into_iter()
        .map(|(id, utts)| Dialogue::new(id, utts))
        .collect()
}

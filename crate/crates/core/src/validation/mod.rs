//! Linguistic validation of candidate spans and the survival funnel.
//!
//! Four checks run in a fixed order:
//!
//! 1. impossible: a dialogue is dropped whole if any of its candidates is the
//!    empty "impossible" answer;
//! 2. part of speech: the span holds a lexical verb and a noun (or proper noun);
//! 3. sentence form: no rendered channel prefix, no newline, 2 to 12
//!    whitespace tokens;
//! 4. channel: the span lies inside a single customer utterance.
//!
//! A dialogue survives a stage while at least one of its candidates has
//! passed every stage so far. [`FunnelReport`] records the surviving counts.

mod tagger;

use std::collections::BTreeMap;
use std::ops::Add;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Channel, ContextDocument};
use crate::extraction::{CandidateSpan, SpanRef};

pub use tagger::{BaselineTagger, HttpTagger, Tag, TaggedToken, Tagger, TaggerError};

pub const MIN_SPAN_TOKENS: usize = 2;
pub const MAX_SPAN_TOKENS: usize = 12;

#[derive(Debug, Error)]
pub enum ValidationError {
    #[error("candidates reference dialogue {0} which has no context")]
    MissingContext(String),
    #[error("valid-span file line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImpossibleDecision {
    Keep,
    Drop,
    NoCandidates,
}

impl ImpossibleDecision {
    pub fn keeps(self) -> bool {
        self == ImpossibleDecision::Keep
    }
}

pub fn filter_impossible(candidates: &[CandidateSpan]) -> ImpossibleDecision {
    if candidates.is_empty() {
        ImpossibleDecision::NoCandidates
    } else if candidates.iter().any(|c| c.impossible) {
        ImpossibleDecision::Drop
    } else {
        ImpossibleDecision::Keep
    }
}

/// True when the tokens contain an action (VERB) and an object (NOUN/PROPN).
pub fn validate_pos(tokens: &[TaggedToken]) -> bool {
    let has_verb = tokens.iter().any(|t| t.tag == Tag::Verb);
    let has_object = tokens.iter().any(|t| matches!(t.tag, Tag::Noun | Tag::Propn));
    has_verb && has_object
}

pub fn validate_sentence(text: &str) -> bool {
    let artefact = [Channel::Customer.prefix(), Channel::Agent.prefix(), "\n"]
        .iter()
        .any(|a| text.contains(a));
    if artefact {
        return false;
    }
    let n = text.split_whitespace().count();
    (MIN_SPAN_TOKENS..=MAX_SPAN_TOKENS).contains(&n)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelRejection {
    AgentChannel,
    CrossTurn,
    Impossible,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChannelCheck {
    pub ok: bool,
    pub source_turn: Option<u32>,
    pub rejection: Option<ChannelRejection>,
}

pub fn validate_channel(span: &CandidateSpan, ctx: &ContextDocument) -> ChannelCheck {
    let reject = |rejection, source_turn| ChannelCheck {
        ok: false,
        source_turn,
        rejection: Some(rejection),
    };
    if span.impossible {
        return reject(ChannelRejection::Impossible, None);
    }
    match ctx.enclosing_utterance(span.char_start, span.char_end) {
        None => reject(ChannelRejection::CrossTurn, None),
        Some(seg) if seg.channel != Channel::Customer => reject(ChannelRejection::AgentChannel, Some(seg.turn_index)),
        Some(seg) => ChannelCheck {
            ok: true,
            source_turn: Some(seg.turn_index),
            rejection: None,
        },
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidatedSpan {
    pub candidate: CandidateSpan,
    pub pos_ok: bool,
    pub sentence_ok: bool,
    pub channel_ok: bool,
    pub source_turn: Option<u32>,
}

impl ValidatedSpan {
    pub fn is_valid(&self) -> bool {
        self.pos_ok && self.sentence_ok && self.channel_ok
    }

    pub fn span_ref(&self) -> SpanRef {
        self.candidate.span_ref()
    }

    pub fn text(&self) -> &str {
        &self.candidate.text
    }
}

/// Surviving dialogue counts after each validation stage.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FunnelCounts {
    pub initial_dialogues: usize,
    pub after_impossible: usize,
    pub after_pos: usize,
    pub after_sentence: usize,
    pub after_channel: usize,
    /// Dialogues dropped at the first stage because they had no candidates.
    pub no_candidates: usize,
}

impl Add for FunnelCounts {
    type Output = FunnelCounts;

    fn add(self, o: FunnelCounts) -> FunnelCounts {
        FunnelCounts {
            initial_dialogues: self.initial_dialogues + o.initial_dialogues,
            after_impossible: self.after_impossible + o.after_impossible,
            after_pos: self.after_pos + o.after_pos,
            after_sentence: self.after_sentence + o.after_sentence,
            after_channel: self.after_channel + o.after_channel,
            no_candidates: self.no_candidates + o.no_candidates,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunnelReport {
    pub initial_dialogues: usize,
    pub after_impossible: usize,
    pub after_pos: usize,
    pub after_sentence: usize,
    pub after_channel: usize,
    pub no_candidates: usize,
    /// Survival percentages after each of the four stages, relative to the
    /// initial dialogue count.
    pub percentages: [f64; 4],
}

impl From<FunnelCounts> for FunnelReport {
    fn from(c: FunnelCounts) -> Self {
        let pct = |n: usize| {
            if c.initial_dialogues == 0 {
                0.0
            } else {
                100.0 * n as f64 / c.initial_dialogues as f64
            }
        };
        FunnelReport {
            initial_dialogues: c.initial_dialogues,
            after_impossible: c.after_impossible,
            after_pos: c.after_pos,
            after_sentence: c.after_sentence,
            after_channel: c.after_channel,
            no_candidates: c.no_candidates,
            percentages: [
                pct(c.after_impossible),
                pct(c.after_pos),
                pct(c.after_sentence),
                pct(c.after_channel),
            ],
        }
    }
}

impl FunnelReport {
    pub fn counts(&self) -> FunnelCounts {
        FunnelCounts {
            initial_dialogues: self.initial_dialogues,
            after_impossible: self.after_impossible,
            after_pos: self.after_pos,
            after_sentence: self.after_sentence,
            after_channel: self.after_channel,
            no_candidates: self.no_candidates,
        }
    }

    /// Combines reports computed on disjoint shards.
    pub fn merge(&self, other: &FunnelReport) -> FunnelReport {
        (self.counts() + other.counts()).into()
    }

    pub fn final_percentage(&self) -> f64 {
        self.percentages[3]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FunnelOutcome {
    pub report: FunnelReport,
    /// Valid spans per surviving dialogue, in rank order.
    pub valid: BTreeMap<String, Vec<ValidatedSpan>>,
    /// Every candidate of dialogues that passed the impossible filter.
    pub checked: BTreeMap<String, Vec<ValidatedSpan>>,
}

fn tag_spans(tagger: &dyn Tagger, candidates: &[CandidateSpan]) -> Vec<Option<Vec<TaggedToken>>> {
    let texts: Vec<&str> = candidates.iter().map(|c| c.text.as_str()).collect();
    match tagger.tag_batch(&texts) {
        Ok(all) if all.len() == texts.len() => all.into_iter().map(Some).collect(),
        batch => {
            if let Err(e) = batch {
                log::warn!("batch tagging failed ({e}); tagging spans one by one");
            }
            texts
                .iter()
                .zip(candidates)
                .map(|(t, c)| match tagger.tag(t) {
                    Ok(tokens) => Some(tokens),
                    Err(e) => {
                        log::warn!("tagging failed for {}: {e}", c.span_ref());
                        None
                    }
                })
                .collect()
        }
    }
}

fn validate_dialogue(
    candidates: &[CandidateSpan],
    ctx: &ContextDocument,
    tagger: &dyn Tagger,
) -> (FunnelCounts, Vec<ValidatedSpan>) {
    let mut counts = FunnelCounts {
        initial_dialogues: 1,
        ..FunnelCounts::default()
    };
    match filter_impossible(candidates) {
        ImpossibleDecision::Keep => counts.after_impossible = 1,
        ImpossibleDecision::NoCandidates => {
            counts.no_candidates = 1;
            return (counts, Vec::new());
        }
        ImpossibleDecision::Drop => return (counts, Vec::new()),
    }

    let tags = tag_spans(tagger, candidates);
    let checked: Vec<ValidatedSpan> = candidates
        .iter()
        .zip(tags)
        .map(|(c, tokens)| {
            let channel = validate_channel(c, ctx);
            ValidatedSpan {
                candidate: c.clone(),
                pos_ok: tokens.is_some_and(|t| validate_pos(&t)),
                sentence_ok: validate_sentence(&c.text),
                channel_ok: channel.ok,
                source_turn: channel.source_turn,
            }
        })
        .collect();

    let survives = |stage: usize| {
        checked.iter().any(|s| {
            let passed = [s.pos_ok, s.sentence_ok, s.channel_ok];
            passed[..stage].iter().all(|&p| p)
        })
    };
    counts.after_pos = usize::from(survives(1));
    counts.after_sentence = usize::from(survives(2));
    counts.after_channel = usize::from(survives(3));
    (counts, checked)
}

/// Runs the four-stage validation over a corpus.
///
/// Every dialogue with a context counts towards the initial total, including
/// those for which the extractor produced no candidates.
pub fn run_funnel(
    corpus_candidates: &BTreeMap<String, Vec<CandidateSpan>>,
    ctxs: &BTreeMap<String, ContextDocument>,
    tagger: &dyn Tagger,
) -> Result<FunnelOutcome, ValidationError> {
    if let Some(orphan) = corpus_candidates.keys().find(|id| !ctxs.contains_key(*id)) {
        return Err(ValidationError::MissingContext(orphan.clone()));
    }
    let empty = Vec::new();
    let per_dialogue: Vec<(String, FunnelCounts, Vec<ValidatedSpan>)> = ctxs
        .par_iter()
        .map(|(id, ctx)| {
            let cands = corpus_candidates.get(id).unwrap_or(&empty);
            let (counts, checked) = validate_dialogue(cands, ctx, tagger);
            (id.clone(), counts, checked)
        })
        .collect();

    let mut total = FunnelCounts::default();
    let mut valid = BTreeMap::new();
    let mut checked_all = BTreeMap::new();
    for (id, counts, checked) in per_dialogue {
        total = total + counts;
        let good: Vec<ValidatedSpan> = checked.iter().filter(|s| s.is_valid()).cloned().collect();
        if !good.is_empty() {
            valid.insert(id.clone(), good);
        }
        if !checked.is_empty() {
            checked_all.insert(id, checked);
        }
    }
    Ok(FunnelOutcome {
        report: total.into(),
        valid,
        checked: checked_all,
    })
}

/// One line of the valid-span file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidSpanRecord {
    pub dialogue_id: String,
    pub rank: usize,
    pub text: String,
    pub score: f64,
    pub char_start: usize,
    pub char_end: usize,
    pub source_turn: u32,
}

impl ValidSpanRecord {
    pub fn from_span(s: &ValidatedSpan) -> Option<Self> {
        if !s.is_valid() {
            return None;
        }
        Some(ValidSpanRecord {
            dialogue_id: s.candidate.dialogue_id.clone(),
            rank: s.candidate.rank,
            text: s.candidate.text.clone(),
            score: s.candidate.score,
            char_start: s.candidate.char_start,
            char_end: s.candidate.char_end,
            source_turn: s.source_turn?,
        })
    }
}

impl From<ValidSpanRecord> for ValidatedSpan {
    fn from(r: ValidSpanRecord) -> Self {
        ValidatedSpan {
            candidate: CandidateSpan {
                dialogue_id: r.dialogue_id,
                rank: r.rank,
                text: r.text,
                score: r.score,
                char_start: r.char_start,
                char_end: r.char_end,
                impossible: false,
            },
            pos_ok: true,
            sentence_ok: true,
            channel_ok: true,
            source_turn: Some(r.source_turn),
        }
    }
}

/// Writes valid spans as JSONL in dialogue, then rank order. Invalid spans
/// are skipped.
pub fn write_valid_spans<W: std::io::Write>(
    mut out: W,
    valid: &BTreeMap<String, Vec<ValidatedSpan>>,
) -> std::io::Result<()> {
    for spans in valid.values() {
        for record in spans.iter().filter_map(ValidSpanRecord::from_span) {
            let line = serde_json::to_string(&record).expect("valid span record serializes");
            writeln!(out, "{line}")?;
        }
    }
    out.flush()
}

pub fn read_valid_spans<R: std::io::BufRead>(source: R) -> Result<BTreeMap<String, Vec<ValidatedSpan>>, ValidationError> {
    let mut out: BTreeMap<String, Vec<ValidatedSpan>> = BTreeMap::new();
    for (idx, line) in source.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: ValidSpanRecord = serde_json::from_str(&line).map_err(|e| ValidationError::Format {
            line: idx + 1,
            message: e.to_string(),
        })?;
        out.entry(record.dialogue_id.clone()).or_default().push(record.into());
    }
    for spans in out.values_mut() {
        spans.sort_by_key(|s| s.candidate.rank);
    }
    Ok(out)
}

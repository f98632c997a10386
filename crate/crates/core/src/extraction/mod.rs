//! Intent-span candidates from an extractive question-answering backend.
//!
//! The backend sees the rendered dialogue context and a prompting question
//! and answers with its top-k spans, including the empty "impossible" answer
//! when it judges the question unanswerable. Every answer must carry
//! character offsets; they are checked against the context before a
//! [`CandidateSpan`] is produced.

mod remote;
mod replay;

use std::collections::BTreeMap;
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::ContextDocument;
use crate::http::HttpError;

pub use remote::HttpQaBackend;
pub use replay::{read_candidates, write_candidates, CandidateRecord, ReplayBackend};

/// The three prompting questions, verbatim (including the original spelling
/// of "mentionned").
pub const QUESTIONS: [&str; 3] = [
    "What is the main reason of the call mentionned by the customer?",
    "What can the agent help the customer with?",
    "What is the customer's first intent?",
];

/// Spelling-corrected variant of the first question.
pub const Q1_CORRECTED: &str = "What is the main reason of the call mentioned by the customer?";

pub const DEFAULT_TOP_K: usize = 10;

pub fn default_questions() -> Vec<&'static str> {
    QUESTIONS.to_vec()
}

/// Resolves a question by index. Only index 0 has a corrected form.
pub fn question_by_index(index: usize, corrected: bool) -> Option<&'static str> {
    match (index, corrected) {
        (0, true) => Some(Q1_CORRECTED),
        (i, _) => QUESTIONS.get(i).copied(),
    }
}

#[derive(Debug, Error)]
pub enum ExtractionError {
    #[error("QA backend unavailable: {0}")]
    Transport(#[source] HttpError),
    #[error("QA backend protocol error: {0}")]
    Protocol(String),
    #[error("dialogue {dialogue_id}, rank {rank}: {message}")]
    DataIntegrity {
        dialogue_id: String,
        rank: usize,
        message: String,
    },
    #[error("replay file has no candidates for dialogue {0}")]
    MissingReplay(String),
    #[error("replay file line {line}: {message}")]
    ReplayFormat { line: usize, message: String },
    #[error("invalid extraction config: {0}")]
    Config(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl ExtractionError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, ExtractionError::Transport(e) if e.is_retryable())
    }
}

impl From<HttpError> for ExtractionError {
    fn from(e: HttpError) -> Self {
        match e {
            HttpError::Decode { .. } => ExtractionError::Protocol(e.to_string()),
            other => ExtractionError::Transport(other),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractionConfig {
    pub question: String,
    pub top_k: usize,
    pub handle_impossible: bool,
    /// Upper bound on concurrent backend requests.
    pub max_in_flight: usize,
}

impl Default for ExtractionConfig {
    fn default() -> Self {
        ExtractionConfig {
            question: QUESTIONS[0].to_string(),
            top_k: DEFAULT_TOP_K,
            handle_impossible: true,
            max_in_flight: 4,
        }
    }
}

impl ExtractionConfig {
    pub fn validate(&self) -> Result<(), ExtractionError> {
        if self.question.trim().is_empty() {
            return Err(ExtractionError::Config("question is empty".into()));
        }
        if self.top_k == 0 {
            return Err(ExtractionError::Config("top_k must be at least 1".into()));
        }
        Ok(())
    }
}

/// Identifies one candidate span across pipeline stages.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SpanRef {
    pub dialogue_id: String,
    pub rank: usize,
}

impl SpanRef {
    pub fn new(dialogue_id: impl Into<String>, rank: usize) -> Self {
        SpanRef {
            dialogue_id: dialogue_id.into(),
            rank,
        }
    }
}

impl fmt::Display for SpanRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}#{}", self.dialogue_id, self.rank)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateSpan {
    pub dialogue_id: String,
    pub rank: usize,
    pub text: String,
    pub score: f64,
    pub char_start: usize,
    pub char_end: usize,
    pub impossible: bool,
}

impl CandidateSpan {
    pub fn span_ref(&self) -> SpanRef {
        SpanRef {
            dialogue_id: self.dialogue_id.clone(),
            rank: self.rank,
        }
    }
}

/// One answer as reported by a QA backend.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QaAnswer {
    pub answer: String,
    pub score: f64,
    pub start: usize,
    pub end: usize,
}

impl QaAnswer {
    pub fn is_impossible(&self) -> bool {
        self.answer.is_empty()
    }
}

pub trait QaBackend: Send + Sync {
    /// Short identifier recorded in run metadata.
    fn id(&self) -> String;

    fn answer(&self, question: &str, ctx: &ContextDocument, top_k: usize) -> Result<Vec<QaAnswer>, ExtractionError>;
}

/// Turns one backend response into rank-ordered, offset-checked candidates.
pub fn candidates_from_answers(
    ctx: &ContextDocument,
    mut answers: Vec<QaAnswer>,
    top_k: usize,
) -> Result<Vec<CandidateSpan>, ExtractionError> {
    if let Some(bad) = answers.iter().position(|a| a.score.is_nan()) {
        return Err(ExtractionError::DataIntegrity {
            dialogue_id: ctx.dialogue_id.clone(),
            rank: bad,
            message: "score is NaN".into(),
        });
    }
    // stable: equal scores keep backend order
    answers.sort_by(|a, b| b.score.total_cmp(&a.score));
    answers.truncate(top_k);

    answers
        .into_iter()
        .enumerate()
        .map(|(rank, a)| {
            let score = a.score.clamp(0.0, 1.0);
            if a.is_impossible() {
                return Ok(CandidateSpan {
                    dialogue_id: ctx.dialogue_id.clone(),
                    rank,
                    text: String::new(),
                    score,
                    char_start: 0,
                    char_end: 0,
                    impossible: true,
                });
            }
            let integrity = |message: String| ExtractionError::DataIntegrity {
                dialogue_id: ctx.dialogue_id.clone(),
                rank,
                message,
            };
            match ctx.slice_chars(a.start, a.end) {
                Some(slice) if slice == a.answer => Ok(CandidateSpan {
                    dialogue_id: ctx.dialogue_id.clone(),
                    rank,
                    text: a.answer,
                    score,
                    char_start: a.start,
                    char_end: a.end,
                    impossible: false,
                }),
                Some(slice) => Err(integrity(format!(
                    "offsets [{}, {}) select {:?} but the answer is {:?}",
                    a.start, a.end, slice, a.answer
                ))),
                None => Err(integrity(format!(
                    "offsets [{}, {}) fall outside the context ({} chars)",
                    a.start,
                    a.end,
                    ctx.char_len()
                ))),
            }
        })
        .collect()
}

pub fn extract_candidates(
    ctx: &ContextDocument,
    cfg: &ExtractionConfig,
    backend: &dyn QaBackend,
) -> Result<Vec<CandidateSpan>, ExtractionError> {
    cfg.validate()?;
    let answers = backend.answer(&cfg.question, ctx, cfg.top_k)?;
    candidates_from_answers(ctx, answers, cfg.top_k)
}

/// Extracts candidates for every context with at most `cfg.max_in_flight`
/// requests outstanding. Results are keyed (and therefore ordered) by
/// dialogue id.
pub fn extract_corpus(
    ctxs: &[ContextDocument],
    cfg: &ExtractionConfig,
    backend: &dyn QaBackend,
) -> Result<BTreeMap<String, Vec<CandidateSpan>>, ExtractionError> {
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.max_in_flight.max(1))
        .build()
        .map_err(|e| ExtractionError::Config(e.to_string()))?;
    let results: Vec<Result<(String, Vec<CandidateSpan>), ExtractionError>> = pool.install(|| {
        ctxs.par_iter()
            .map(|ctx| extract_candidates(ctx, cfg, backend).map(|c| (ctx.dialogue_id.clone(), c)))
            .collect()
    });
    results.into_iter().collect()
}

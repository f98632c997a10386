//! Synthetic intent corpus for end-to-end runs without live backends.
//!
//! Generates dialogues with one head intent each, the QA candidates a model
//! would plausibly return for them (replay format), turn-level gold labels
//! and keyword family rules for the mock embedder.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::corpus::{render_context, Channel, ContextDocument, Dialogue, SegmentKind, Utterance};
use crate::embedding::FamilyRule;
use crate::evaluation::GoldLabel;
use crate::extraction::{write_candidates, CandidateSpan};

struct IntentTemplate {
    name: &'static str,
    keyword: &'static str,
    templates: [&'static str; 4],
}

const INTENTS: [IntentTemplate; 5] = [
    IntentTemplate {
        name: "checkbalance",
        keyword: "balance",
        templates: [
            "i want to check my account balance",
            "can you tell me my current balance",
            "i need to see the balance on my savings account",
            "please check the balance of my checking account",
        ],
    },
    IntentTemplate {
        name: "reportlostcard",
        keyword: "lost",
        templates: [
            "i lost my debit card yesterday",
            "i need to report a lost credit card",
            "i think i lost my card at the airport",
            "i want to report my lost card",
        ],
    },
    IntentTemplate {
        name: "transfermoney",
        keyword: "transfer",
        templates: [
            "i want to transfer money to my savings",
            "please transfer funds to my brother",
            "i need to make a transfer between accounts",
            "can you transfer five hundred dollars for me",
        ],
    },
    IntentTemplate {
        name: "orderchecks",
        keyword: "checkbook",
        templates: [
            "i need to order a new checkbook",
            "please send me a checkbook",
            "i want to order checkbook refills",
            "can i get a replacement checkbook",
        ],
    },
    IntentTemplate {
        name: "updateaddress",
        keyword: "address",
        templates: [
            "i need to update my mailing address",
            "i moved and want to change my address",
            "please update the address on my account",
            "can you change my home address",
        ],
    },
];

const TAILS: [&str; 4] = ["", " today", " please", " right now"];
const GREETINGS: [&str; 3] = ["hello", "hi there", "good morning"];
const AGENT_OPEN: &str = "Hello, thank you for calling. How can I help you today?";
const AGENT_ACK: &str = "Sure, I can help you with that.";
const AGENT_CLOSE: &str = "You are welcome, have a great day.";
const THANKS: &str = "thank you so much";

/// Every `IMPOSSIBLE_EVERY`-th dialogue gets an impossible answer among its
/// candidates, so the funnel has something to drop.
pub const IMPOSSIBLE_EVERY: usize = 20;

#[derive(Debug, Clone)]
pub struct SynthCorpus {
    pub dialogues: Vec<Dialogue>,
    pub candidates: BTreeMap<String, Vec<CandidateSpan>>,
    pub gold: Vec<GoldLabel>,
    pub families: Vec<FamilyRule>,
    pub intents: Vec<String>,
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct CorpusRow<'a> {
    conversation_id: &'a str,
    turn_number: u32,
    channel: Channel,
    utterance: &'a str,
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct GoldRow<'a> {
    conversation_id: &'a str,
    turn_number: u32,
    intent: &'a str,
}

/// Char offsets of `needle` inside the utterance of `turn`.
fn span_in_turn(ctx: &ContextDocument, turn: u32, needle: &str) -> (usize, usize) {
    let seg = ctx
        .segments
        .iter()
        .find(|s| s.kind == SegmentKind::Utterance && s.turn_index == turn)
        .expect("turn is rendered");
    let utt = ctx.slice_chars(seg.char_start, seg.char_end).expect("segment in range");
    let byte = utt.find(needle).expect("needle occurs in utterance");
    let start = seg.char_start + utt[..byte].chars().count();
    (start, start + needle.chars().count())
}

/// Builds `n` dialogues cycling through the five intents.
pub fn generate(n: usize, seed: u64) -> SynthCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..n).map(|i| i % INTENTS.len()).collect();
    order.shuffle(&mut rng);

    let mut out = SynthCorpus {
        dialogues: Vec::with_capacity(n),
        candidates: BTreeMap::new(),
        gold: Vec::new(),
        families: INTENTS
            .iter()
            .map(|s| FamilyRule {
                keyword: s.keyword.to_string(),
                family: s.name.to_string(),
            })
            .collect(),
        intents: INTENTS.iter().map(|s| s.name.to_string()).collect(),
    };

    for (i, &intent) in order.iter().enumerate() {
        let tpl = &INTENTS[intent];
        let id = format!("syn-{i:04}");
        let ask = format!(
            "{}{}",
            tpl.templates.choose(&mut rng).expect("templates"),
            TAILS.choose(&mut rng).expect("tails")
        );
        let greeting = *GREETINGS.choose(&mut rng).expect("greetings");
        let turns = [
            (Channel::Customer, greeting),
            (Channel::Agent, AGENT_OPEN),
            (Channel::Customer, ask.as_str()),
            (Channel::Agent, AGENT_ACK),
            (Channel::Customer, THANKS),
            (Channel::Agent, AGENT_CLOSE),
        ];
        let utterances = turns
            .iter()
            .enumerate()
            .map(|(t, (channel, text))| Utterance {
                dialogue_id: id.clone(),
                turn_index: t as u32,
                channel: *channel,
                text: (*text).to_string(),
            })
            .collect();
        let dialogue = Dialogue::new(id.clone(), utterances).expect("synthetic dialogue is well formed");
        let ctx = render_context(&dialogue);

        let mut cands = Vec::new();
        let mut push = |text: &str, turn: Option<u32>, score: f64| {
            let (char_start, char_end) = match turn {
                Some(t) => span_in_turn(&ctx, t, text),
                None => (0, 0),
            };
            cands.push(CandidateSpan {
                dialogue_id: id.clone(),
                rank: cands.len(),
                text: text.to_string(),
                score,
                char_start,
                char_end,
                impossible: turn.is_none(),
            });
        };
        push(&ask, Some(2), 0.92);
        push("How can I help you today?", Some(1), 0.41);
        push(THANKS, Some(4), 0.22);
        push(greeting, Some(0), 0.13);
        if i % IMPOSSIBLE_EVERY == IMPOSSIBLE_EVERY - 1 {
            push("", None, 0.05);
        }
        out.candidates.insert(id.clone(), cands);

        for (turn, label) in [(0, "openinggreeting"), (2, tpl.name), (4, "thankyou")] {
            out.gold.push(GoldLabel {
                dialogue_id: id.clone(),
                turn_index: turn,
                intent: label.to_string(),
            });
        }
        out.dialogues.push(dialogue);
    }
    out
}

impl SynthCorpus {
    pub fn write_corpus<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for d in &self.dialogues {
            for u in &d.utterances {
                let row = CorpusRow {
                    conversation_id: &u.dialogue_id,
                    turn_number: u.turn_index,
                    channel: u.channel,
                    utterance: &u.text,
                };
                writeln!(w, "{}", serde_json::to_string(&row)?)?;
            }
        }
        w.flush()
    }

    pub fn write_gold<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for g in &self.gold {
            let row = GoldRow {
                conversation_id: &g.dialogue_id,
                turn_number: g.turn_index,
                intent: &g.intent,
            };
            writeln!(w, "{}", serde_json::to_string(&row)?)?;
        }
        w.flush()
    }

    /// Writes `corpus.jsonl`, `candidates.jsonl`, `gold.jsonl` and
    /// `families.json` into `dir`.
    pub fn write_to(&self, dir: &Path) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        let mut corpus = Vec::new();
        self.write_corpus(&mut corpus)?;
        std::fs::write(dir.join("corpus.jsonl"), corpus)?;
        let mut cands = Vec::new();
        write_candidates(&mut cands, self.candidates.values().flatten()).map_err(std::io::Error::other)?;
        std::fs::write(dir.join("candidates.jsonl"), cands)?;
        let mut gold = Vec::new();
        self.write_gold(&mut gold)?;
        std::fs::write(dir.join("gold.jsonl"), gold)?;
        let families = serde_json::to_string_pretty(&self.families)? + "\n";
        std::fs::write(dir.join("families.json"), families)
    }
}

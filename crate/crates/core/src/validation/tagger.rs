//! Coarse part-of-speech tagging.
//!
//! Validation only needs to know whether a span holds a lexical verb and a
//! nominal object, so the tagset is deliberately coarse. [`BaselineTagger`]
//! is a deterministic lexicon + suffix tagger tuned for customer-service
//! English; [`HttpTagger`] delegates to an external service.

use std::collections::HashMap;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::http::{HttpError, JsonClient};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Tag {
    Verb,
    Noun,
    Propn,
    Aux,
    Pron,
    Other,
}

impl Tag {
    /// Maps any tag name onto the coarse set; unknown names become `Other`.
    pub fn from_label(label: &str) -> Tag {
        match label.trim().to_ascii_uppercase().as_str() {
            "VERB" => Tag::Verb,
            "NOUN" => Tag::Noun,
            "PROPN" => Tag::Propn,
            "AUX" => Tag::Aux,
            "PRON" => Tag::Pron,
            _ => Tag::Other,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaggedToken {
    pub surface: String,
    pub tag: Tag,
}

#[derive(Debug, Error)]
pub enum TaggerError {
    #[error("tagger service failed: {0}")]
    Remote(#[from] HttpError),
    #[error("tagger returned {got} tag lists for {expected} texts")]
    Arity { expected: usize, got: usize },
}

pub trait Tagger: Send + Sync {
    fn id(&self) -> String;

    fn tag_batch(&self, texts: &[&str]) -> Result<Vec<Vec<TaggedToken>>, TaggerError>;

    fn tag(&self, text: &str) -> Result<Vec<TaggedToken>, TaggerError> {
        let mut out = self.tag_batch(&[text])?;
        out.pop().ok_or(TaggerError::Arity { expected: 1, got: 0 })
    }
}

/// Lexical class before contextual disambiguation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Lex {
    Pron,
    Aux,
    /// do / have: auxiliary when another verb follows, lexical otherwise.
    AuxOrVerb,
    Det,
    Adp,
    To,
    Conj,
    Adv,
    Intj,
    Adj,
    Num,
    Verb,
    Noun,
    /// Words such as "check" or "order" that are verbs or nouns by position.
    VerbOrNoun,
    Other,
}

const PRONOUNS: &[&str] = &[
    "i", "me", "my", "mine", "myself", "you", "your", "yours", "yourself", "he", "him", "his", "she", "her", "hers",
    "it", "its", "we", "us", "our", "ours", "they", "them", "their", "theirs", "this", "that", "these", "those", "who",
    "whom", "whose", "what", "which", "someone", "anyone", "everyone", "something", "anything", "everything", "nothing",
    "somebody", "anybody", "nobody", "i'm", "im", "i've", "i'd", "i'll", "you're", "it's", "that's", "what's", "u",
    "ur", "ya",
];

const AUXILIARIES: &[&str] = &[
    "am", "is", "are", "was", "were", "be", "been", "being", "can", "could", "will", "would", "shall", "should", "may",
    "might", "must", "can't", "cannot", "couldn't", "won't", "wouldn't", "shouldn't", "isn't", "aren't", "wasn't",
    "weren't", "don't", "doesn't", "didn't", "haven't", "hasn't", "hadn't", "dont", "cant", "wont", "isnt", "'m", "'s",
    "'re",
];

const AUX_OR_VERB: &[&str] = &["do", "does", "did", "have", "has", "had", "having", "get", "got"];

const DETERMINERS: &[&str] = &[
    "a", "an", "the", "some", "any", "no", "every", "each", "all", "both", "another", "other", "such", "either",
    "neither", "few", "several", "many", "much", "more", "most", "less", "least", "enough",
];

const ADPOSITIONS: &[&str] = &[
    "of", "in", "on", "at", "for", "with", "from", "by", "about", "into", "onto", "over", "under", "between", "through",
    "during", "before", "after", "up", "down", "out", "off", "per", "via", "as", "than", "within", "without", "across",
    "around", "regarding", "towards", "toward", "against", "since", "until", "till", "upon",
];

const CONJUNCTIONS: &[&str] = &[
    "and", "or", "but", "so", "if", "because", "while", "when", "where", "whether", "though", "although", "then",
    "unless", "whereas", "nor", "&",
];

const ADVERBS: &[&str] = &[
    "not", "n't", "please", "pls", "plz", "also", "very", "too", "just", "already", "now", "today", "tomorrow",
    "yesterday", "again", "here", "there", "only", "really", "still", "yet", "soon", "how", "why", "ever", "never",
    "once", "twice", "always", "maybe", "perhaps", "kindly", "actually", "currently", "recently", "immediately",
    "asap", "even", "almost", "quite", "rather", "else", "instead", "anymore", "right", "away", "back", "later",
    "properly", "urgently",
];

const INTERJECTIONS: &[&str] = &[
    "hello", "hi", "hey", "thanks", "thank", "thankyou", "ok", "okay", "yes", "yeah", "yep", "yup", "nope", "bye",
    "goodbye", "sure", "alright", "great", "wow", "oh", "um", "uh", "hmm", "welcome", "cheers", "dear", "sorry",
];

const ADJECTIVES: &[&str] = &[
    "new", "old", "black", "white", "red", "blue", "good", "bad", "wrong", "right", "broken", "next", "last", "first",
    "second", "third", "same", "different", "available", "possible", "high", "low", "slow", "fast", "main", "current",
    "global", "basic", "own", "one-way", "big", "small", "large", "cheap", "expensive", "late", "early", "free",
    "full", "long", "short", "whole", "monthly", "yearly", "annual", "weekly", "daily", "recurring", "periodic",
    "middle", "upcoming", "lower", "higher", "extra", "additional", "damaged", "lost", "missing", "correct", "wrong",
    "urgent", "important", "unable", "able", "interested", "happy", "unhappy", "fine", "sure", "valid", "invalid",
    "online", "mobile", "wireless", "international", "domestic", "local", "direct", "premium", "personal", "private",
    "total", "previous", "original", "incorrect", "unauthorized", "fraudulent", "unknown",
];

const NUMBERS: &[&str] = &[
    "one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten", "eleven", "twelve", "twenty",
    "thirty", "fifty", "hundred", "thousand", "million",
];

const VERBS: &[&str] = &[
    "want", "wanna", "wanted", "wants", "wanting", "need", "needs", "needed", "like", "liked", "would", "buy",
    "bought", "purchase", "purchased", "book", "booked", "cancel", "cancelled", "canceled", "get", "send", "sent",
    "close", "closed", "open", "reorder", "install", "replace", "replaced", "know", "see", "make", "made",
    "reimburse", "sign", "set", "fix", "fixed", "find", "found", "give", "tell", "show", "start", "started", "stop",
    "stopped", "renew", "activate", "deactivate", "dispute", "add", "remove", "apply", "inquire", "enquire", "ask",
    "try", "go", "come", "take", "keep", "lose", "expire", "expired", "move", "switch", "subscribe", "unsubscribe",
    "submit", "summit", "track", "schedule", "reschedule", "confirm", "verify", "reset", "connect", "download",
    "upload", "print", "receive", "received", "debit", "debited", "broke", "meet", "met", "provide", "think", "let",
    "put", "bring", "hold", "look", "wait", "read", "write", "speak", "talk", "say", "said", "enroll", "register",
    "login", "access", "delete", "save", "freeze", "unlock", "withdraw", "borrow", "owe", "face", "facing", "knew",
    "assign", "reassign", "modify", "edit", "pick", "choose", "select", "prefer", "wish", "hope", "inform",
    "understand", "explain", "arrange", "reserve", "upgrade", "downgrade", "recharge", "activate", "terminate",
    "discontinue", "block", "send", "sending", "seem", "seems", "happen", "happened", "stolen", "steal", "forgot",
    "forget", "pay", "paid", "report", "reported", "update", "updated", "transfer", "transferred", "order",
    "ordered", "change", "changed", "check", "checked", "help", "helped", "keeps", "going", "cleared", "clear",
];

const NOUNS: &[&str] = &[
    "account", "balance", "card", "bill", "bills", "service", "services", "connection", "internet", "cable", "phone",
    "plan", "plans", "flight", "flights", "ticket", "tickets", "seat", "seats", "pass", "boarding", "assignment",
    "claim", "claims", "status", "insurance", "proof", "car", "screen", "address", "money", "routing", "number",
    "loan", "rates", "rate", "payment", "payments", "data", "usage", "software", "application", "app", "server",
    "servers", "expense", "expenses", "keyboard", "keyboards", "item", "items", "email", "window", "information",
    "info", "problem", "issue", "issues", "error", "errors", "message", "messages", "password", "refund", "charge",
    "charges", "amount", "subscription", "package", "device", "laptop", "computer", "bank", "credit", "debit",
    "statement", "policy", "coverage", "accident", "bumper", "deductible", "premium", "customer", "agent", "reason",
    "way", "time", "day", "week", "month", "year", "tv", "television", "channel", "channels", "bundle", "speed",
    "network", "signal", "checks", "cheque", "cheques", "order", "orders", "update", "updates", "report", "reports",
    "travel", "hotel", "food", "instrument", "instruments", "model", "version", "license", "office", "outlook",
    "skype", "whatsapp", "arrangement", "baggage", "luggage", "trip", "reservation", "destination", "airport",
    "airline", "fare", "price", "cost", "fee", "fees", "offer", "offers", "promotion", "promotions", "discount",
    "help", "support", "question", "request", "details", "detail", "name", "date", "transaction", "transactions",
    "deposit", "withdrawal", "limit", "interest", "mortgage", "savings", "checking", "branch", "atm", "pin",
    "vehicle", "home", "house", "property", "damage", "repair", "replacement", "quote", "smartphone", "screen",
    "battery", "camera", "a/c", "no", "procedure", "value", "dollar", "dollars", "item", "list", "pieces",
];

/// Words whose class depends on position: verbs by default, nouns after a
/// determiner, possessive, adjective or another verb.
const VERB_OR_NOUN: &[&str] = &[
    "check", "order", "book", "change", "call", "charge", "transfer", "report", "update", "upgrade", "help", "claim",
    "request", "pay", "return", "refund", "fix", "block", "lock", "deposit", "view", "use", "work", "plan",
    "purchase", "need", "cancel", "travel", "process", "access", "reset", "sign", "set", "start", "stop", "issue",
    "file", "move", "switch", "dispute", "review", "increase", "decrease", "balance", "complaint", "visit", "search",
    "register", "renew", "replace", "repair", "quote", "reply", "answer", "cover", "damage", "expense",
];

fn lexicon() -> &'static HashMap<&'static str, Lex> {
    static LEXICON: OnceLock<HashMap<&'static str, Lex>> = OnceLock::new();
    LEXICON.get_or_init(|| {
        let mut map = HashMap::new();
        // Later groups take precedence over earlier ones.
        let groups: [(&[&str], Lex); 13] = [
            (NOUNS, Lex::Noun),
            (VERBS, Lex::Verb),
            (VERB_OR_NOUN, Lex::VerbOrNoun),
            (ADJECTIVES, Lex::Adj),
            (NUMBERS, Lex::Num),
            (INTERJECTIONS, Lex::Intj),
            (ADVERBS, Lex::Adv),
            (CONJUNCTIONS, Lex::Conj),
            (ADPOSITIONS, Lex::Adp),
            (DETERMINERS, Lex::Det),
            (AUX_OR_VERB, Lex::AuxOrVerb),
            (AUXILIARIES, Lex::Aux),
            (PRONOUNS, Lex::Pron),
        ];
        for (words, lex) in groups {
            for w in words {
                map.insert(*w, lex);
            }
        }
        map.insert("to", Lex::To);
        map
    })
}

fn normalize(surface: &str) -> String {
    surface
        .trim_matches(|c: char| !(c.is_alphanumeric() || c == '\'' || c == '/' || c == '$' || c == '-'))
        .trim_matches(|c: char| c == '\'' || c == '-')
        .to_lowercase()
}

fn by_suffix(word: &str) -> Lex {
    let len = word.chars().count();
    let ends = |s: &str| word.ends_with(s) && len > s.len() + 2;
    if word.chars().any(|c| c.is_ascii_digit()) || word.starts_with('$') {
        return Lex::Num;
    }
    if ends("ly") {
        return Lex::Adv;
    }
    if ["ing", "ed", "ize", "ise", "ify", "ate"].iter().any(|s| ends(s)) {
        return Lex::Verb;
    }
    if ["tion", "sion", "ment", "ness", "ity", "ance", "ence", "ship", "age", "ery", "ism", "ist", "er", "or", "ure"]
        .iter()
        .any(|s| ends(s))
    {
        return Lex::Noun;
    }
    if ["ful", "ous", "ive", "able", "ible", "al", "ic", "less", "ish"].iter().any(|s| ends(s)) {
        return Lex::Adj;
    }
    Lex::Noun
}

fn classify(word: &str) -> Lex {
    if word.is_empty() {
        return Lex::Other;
    }
    lexicon().get(word).copied().unwrap_or_else(|| by_suffix(word))
}

/// Deterministic lexicon-and-suffix tagger.
#[derive(Debug, Clone, Copy, Default)]
pub struct BaselineTagger;

impl BaselineTagger {
    pub fn tag_text(&self, text: &str) -> Vec<TaggedToken> {
        let surfaces: Vec<&str> = text.split_whitespace().collect();
        let words: Vec<String> = surfaces.iter().map(|s| normalize(s)).collect();
        let lex: Vec<Lex> = words.iter().map(|w| classify(w)).collect();

        let mut tags: Vec<Tag> = Vec::with_capacity(surfaces.len());
        for i in 0..surfaces.len() {
            let prev_tag = tags.last().copied();
            let prev_lex = i.checked_sub(1).map(|p| lex[p]);
            let next_lex = lex.get(i + 1).copied();
            let tag = match lex[i] {
                Lex::Pron => Tag::Pron,
                Lex::Aux => Tag::Aux,
                Lex::AuxOrVerb => {
                    let verb_follows = matches!(next_lex, Some(Lex::Verb | Lex::VerbOrNoun | Lex::Aux))
                        || words.get(i + 1).is_some_and(|w| w == "not" || w == "n't");
                    if verb_follows {
                        Tag::Aux
                    } else {
                        Tag::Verb
                    }
                }
                Lex::Verb => Tag::Verb,
                Lex::Noun => Tag::Noun,
                Lex::VerbOrNoun => {
                    let nominal_context = matches!(prev_lex, Some(Lex::Det | Lex::Adj | Lex::Num | Lex::Adp | Lex::Noun))
                        || matches!(prev_tag, Some(Tag::Verb | Tag::Noun | Tag::Propn))
                        || (prev_lex == Some(Lex::Pron) && is_possessive(&words[i - 1]));
                    if nominal_context {
                        Tag::Noun
                    } else {
                        Tag::Verb
                    }
                }
                _ => Tag::Other,
            };
            let tag = if tag == Tag::Noun && i > 0 && !lexicon().contains_key(words[i].as_str()) && starts_upper(surfaces[i]) {
                Tag::Propn
            } else {
                tag
            };
            tags.push(tag);
        }

        surfaces
            .into_iter()
            .zip(tags)
            .map(|(s, tag)| TaggedToken {
                surface: s.to_string(),
                tag,
            })
            .collect()
    }
}

fn starts_upper(surface: &str) -> bool {
    surface.chars().find(|c| c.is_alphabetic()).is_some_and(char::is_uppercase)
}

fn is_possessive(word: &str) -> bool {
    matches!(word, "my" | "your" | "his" | "her" | "its" | "our" | "their" | "this" | "that" | "these" | "those")
}

impl Tagger for BaselineTagger {
    fn id(&self) -> String {
        "baseline-lexicon-v1".into()
    }

    fn tag_batch(&self, texts: &[&str]) -> Result<Vec<Vec<TaggedToken>>, TaggerError> {
        Ok(texts.iter().map(|t| self.tag_text(t)).collect())
    }
}

#[derive(Serialize)]
struct TagRequest<'a> {
    texts: &'a [&'a str],
}

#[derive(Deserialize)]
struct WireToken {
    token: String,
    tag: String,
}

#[derive(Deserialize)]
struct TagResponse {
    tags: Vec<Vec<WireToken>>,
}

/// Client for an external tagging service (`{"texts": [...]}` →
/// `{"tags": [[{"token", "tag"}]]}`).
#[derive(Debug, Clone)]
pub struct HttpTagger {
    client: JsonClient,
}

impl HttpTagger {
    pub fn new(url: impl Into<String>) -> Self {
        HttpTagger {
            client: JsonClient::new(url),
        }
    }
}

impl Tagger for HttpTagger {
    fn id(&self) -> String {
        format!("http:{}", self.client.url())
    }

    fn tag_batch(&self, texts: &[&str]) -> Result<Vec<Vec<TaggedToken>>, TaggerError> {
        let response: TagResponse = self.client.post(&TagRequest { texts })?;
        if response.tags.len() != texts.len() {
            return Err(TaggerError::Arity {
                expected: texts.len(),
                got: response.tags.len(),
            });
        }
        Ok(response
            .tags
            .into_iter()
            .map(|tokens| {
                tokens
                    .into_iter()
                    .map(|t| TaggedToken {
                        tag: Tag::from_label(&t.tag),
                        surface: t.token,
                    })
                    .collect()
            })
            .collect())
    }
}

//! Helpers shared by the integration test targets.

#![allow(dead_code)]

pub mod oracle;

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};

use intent_landscape::artifacts::{read_json, Workspace};
use intent_landscape::config::RunConfig;
use intent_landscape::corpus::{render_context, Channel, ContextDocument, Dialogue, SegmentKind, Utterance};
use intent_landscape::evaluation::GoldLabel;
use intent_landscape::extraction::CandidateSpan;
use intent_landscape::landscape::{IntentMapping, MappingOp};
use intent_landscape::pipeline::{self, ClustersArtifact, EmbedSource, QaSource};
use intent_landscape::synth::{self, SynthCorpus};
use intent_landscape::validation::read_valid_spans;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const SYNTH_DIALOGUES: usize = 200;
pub const SYNTH_SEED: u64 = 11;

pub struct SyntheticRun {
    pub ws: Workspace,
    pub input: PathBuf,
    pub corpus: SynthCorpus,
    pub cfg: RunConfig,
}

impl SyntheticRun {
    pub fn gold_path(&self) -> PathBuf {
        self.input.join("gold.jsonl")
    }
}

/// Runs every stage up to and including the first landscape pass.
pub fn run_to_landscape(root: &Path) -> SyntheticRun {
    let corpus = synth::generate(SYNTH_DIALOGUES, SYNTH_SEED);
    let input = root.join("input");
    corpus.write_to(&input).unwrap();
    let ws = pipeline::workspace(root.join("run"), false);
    let cfg = RunConfig::default();
    pipeline::ingest(&ws, &cfg, &input.join("corpus.jsonl"), None).unwrap();
    pipeline::extract(&ws, &cfg, &QaSource::Replay(input.join("candidates.jsonl"))).unwrap();
    pipeline::validate(&ws, &cfg).unwrap();
    pipeline::embed(
        &ws,
        &cfg,
        &EmbedSource::Mock {
            families: Some(input.join("families.json")),
        },
    )
    .unwrap();
    pipeline::cluster(&ws, &cfg).unwrap();
    pipeline::landscape(&ws, &cfg).unwrap();
    SyntheticRun { ws, input, corpus, cfg }
}

/// Stands in for the analyst: names every top cluster after the majority
/// gold intent of its member spans (ties to the smaller name).
pub fn analyst_mapping(ws: &Workspace, gold: &[GoldLabel]) -> IntentMapping {
    let taxonomy: IntentMapping = read_json(&ws.path(pipeline::TAXONOMY)).unwrap();
    let clusters: ClustersArtifact = read_json(&ws.path(pipeline::CLUSTERS)).unwrap();
    let valid = read_valid_spans(std::io::BufReader::new(
        std::fs::File::open(ws.path(pipeline::VALID_SPANS)).unwrap(),
    ))
    .unwrap();
    let turn_of: HashMap<_, _> = valid.values().flatten().map(|s| (s.span_ref(), s.source_turn.unwrap())).collect();
    let label: HashMap<(&str, u32), &str> =
        gold.iter().map(|g| ((g.dialogue_id.as_str(), g.turn_index), g.intent.as_str())).collect();

    let mut votes: BTreeMap<usize, BTreeMap<&str, usize>> = BTreeMap::new();
    for c in &clusters.clusters {
        let top = clusters.top_labels[c.id];
        for m in &c.members {
            if let Some(intent) = label.get(&(m.dialogue_id.as_str(), turn_of[m])) {
                *votes.entry(top).or_default().entry(intent).or_default() += 1;
            }
        }
    }
    let ops: Vec<MappingOp> = taxonomy
        .entries
        .keys()
        .map(|&id| match votes.get(&id).and_then(|v| v.iter().max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))) {
            Some((intent, _)) => MappingOp::Rename {
                id,
                intent: intent.to_string(),
            },
            None => MappingOp::SetOther { id },
        })
        .collect();
    taxonomy.apply_ops(&ops).unwrap()
}

/// Full run: stages, analyst mapping import and evaluation.
pub fn run_full(root: &Path) -> SyntheticRun {
    let run = run_to_landscape(root);
    let mapping = analyst_mapping(&run.ws, &run.corpus.gold);
    let edited = root.join("edited_mapping.json");
    std::fs::write(&edited, intent_landscape::artifacts::canonical_json(&mapping).unwrap()).unwrap();
    pipeline::import_mapping(&run.ws, &run.cfg, &edited).unwrap();
    pipeline::evaluate(&run.ws, &run.cfg, &run.gold_path(), Some(&run.corpus.intents)).unwrap();
    pipeline::export_review(&run.ws, &run.cfg, None).unwrap();
    run
}

/// Every file in a directory, by name.
pub fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect()
}

/// Locates `needle` in the utterance of `turn` and returns a candidate span
/// over it.
pub fn span_over(dialogue: &Dialogue, turn: u32, needle: &str, rank: usize) -> CandidateSpan {
    let ctx = render_context(dialogue);
    let seg = ctx
        .segments
        .iter()
        .find(|s| s.kind == SegmentKind::Utterance && s.turn_index == turn)
        .unwrap();
    let utt = ctx.slice_chars(seg.char_start, seg.char_end).unwrap();
    let byte = utt.find(needle).unwrap();
    let start = seg.char_start + utt[..byte].chars().count();
    CandidateSpan {
        dialogue_id: dialogue.id.clone(),
        rank,
        text: needle.to_string(),
        score: 1.0 / (rank + 1) as f64,
        char_start: start,
        char_end: start + needle.chars().count(),
        impossible: false,
    }
}

pub fn impossible(dialogue_id: &str, rank: usize) -> CandidateSpan {
    CandidateSpan {
        dialogue_id: dialogue_id.to_string(),
        rank,
        text: String::new(),
        score: 0.01,
        char_start: 0,
        char_end: 0,
        impossible: true,
    }
}

pub fn dialogue(id: &str, turns: &[(Channel, &str)]) -> Dialogue {
    let utterances = turns
        .iter()
        .enumerate()
        .map(|(t, (channel, text))| Utterance {
            dialogue_id: id.to_string(),
            turn_index: t as u32,
            channel: *channel,
            text: text.to_string(),
        })
        .collect();
    Dialogue::new(id, utterances).unwrap()
}

pub type FunnelInput = (BTreeMap<String, Vec<CandidateSpan>>, BTreeMap<String, ContextDocument>);

/// Four dialogues, each dropped at a different stage except the last:
/// an impossible candidate, only one-token candidates, only agent spans,
/// and a clean one.
pub fn hand_funnel_fixture() -> FunnelInput {
    use Channel::{Agent, Customer};
    let greet = "Hello, how may I help you today?";

    let d_imp = dialogue("d1-impossible", &[(Agent, greet), (Customer, "i want to cancel my phone plan")]);
    let d_short = dialogue("d2-short", &[(Agent, greet), (Customer, "hello"), (Customer, "thanks")]);
    let d_agent = dialogue(
        "d3-agent",
        &[(Agent, "i can update your billing address now"), (Customer, "ok")],
    );
    let d_clean = dialogue("d4-clean", &[(Agent, greet), (Customer, "i want to purchase new cable service")]);

    let candidates = BTreeMap::from([
        (
            d_imp.id.clone(),
            vec![span_over(&d_imp, 1, "i want to cancel my phone plan", 0), impossible(&d_imp.id, 1)],
        ),
        (
            d_short.id.clone(),
            vec![span_over(&d_short, 1, "hello", 0), span_over(&d_short, 2, "thanks", 1)],
        ),
        (
            d_agent.id.clone(),
            vec![
                span_over(&d_agent, 0, "i can update your billing address now", 0),
                span_over(&d_agent, 0, "update your billing address", 1),
            ],
        ),
        (
            d_clean.id.clone(),
            vec![span_over(&d_clean, 1, "i want to purchase new cable service", 0)],
        ),
    ]);
    let ctxs = [d_imp, d_short, d_agent, d_clean]
        .iter()
        .map(|d| (d.id.clone(), render_context(d)))
        .collect();
    (candidates, ctxs)
}

const WORDS: [&str; 16] = [
    "i", "want", "to", "check", "my", "balance", "please", "card", "lost", "the", "order", "new", "phone", "hello",
    "thanks", "address",
];

/// A random corpus: random utterances, candidates over random character
/// ranges (some straddling turns), random impossible markers and some
/// dialogues with no candidates at all.
pub fn random_funnel_corpus(seed: u64) -> FunnelInput {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut candidates = BTreeMap::new();
    let mut ctxs = BTreeMap::new();
    for d in 0..rng.random_range(1..25) {
        let id = format!("r{seed}-{d}");
        let turns: Vec<(Channel, String)> = (0..rng.random_range(1..6))
            .map(|t| {
                let channel = if t == 0 || rng.random_bool(0.5) { Channel::Customer } else { Channel::Agent };
                let n = rng.random_range(1..15);
                let text: Vec<&str> = (0..n).map(|_| WORDS[rng.random_range(0..WORDS.len())]).collect();
                (channel, text.join(" "))
            })
            .collect();
        let turn_refs: Vec<(Channel, &str)> = turns.iter().map(|(c, t)| (*c, t.as_str())).collect();
        let dlg = dialogue(&id, &turn_refs);
        let ctx = render_context(&dlg);
        let len = ctx.char_len();
        let mut cands = Vec::new();
        for rank in 0..rng.random_range(0..5) {
            if rng.random_bool(0.08) {
                cands.push(impossible(&id, rank));
                continue;
            }
            let a = rng.random_range(0..len);
            let b = rng.random_range(a + 1..=len.min(a + 80));
            cands.push(CandidateSpan {
                dialogue_id: id.clone(),
                rank,
                text: ctx.slice_chars(a, b).unwrap().to_string(),
                score: 1.0 / (rank + 1) as f64,
                char_start: a,
                char_end: b,
                impossible: false,
            });
        }
        candidates.insert(id.clone(), cands);
        ctxs.insert(id, ctx);
    }
    (candidates, ctxs)
}

fn naive_cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}

fn gaussian_vec(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    use rand_distr::{Distribution, StandardNormal};
    (0..d).map(|_| StandardNormal.sample(rng)).collect()
}

/// One seeded case of the nearest-center classifier properties: exact
/// centers classify to themselves with similarity 1, spans far from every
/// center are UNLABELED, and the prediction matches a naive argmax and
/// survives positive rescaling and center permutation.
pub fn classification_case(seed: u64) -> Result<(), String> {
    use intent_landscape::evaluation::{zero_shot_classify, EvalParams, Prediction};
    use rand::seq::SliceRandom;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = EvalParams::default();
    let d = rng.random_range(2..16);
    let k = rng.random_range(1..10);
    let centers: Vec<Vec<f64>> = (0..k).map(|_| gaussian_vec(&mut rng, d)).collect();
    let classify = |span: &[f64], centers: &[Vec<f64>]| zero_shot_classify(span, centers, &params).map_err(|e| e.to_string());

    // Exact center.
    let pick = rng.random_range(0..k);
    match classify(&centers[pick], &centers)? {
        Prediction::Cluster { id, similarity } => {
            if (similarity - 1.0).abs() > 1e-12 || (naive_cosine(&centers[id], &centers[pick]) - 1.0).abs() > 1e-12 {
                return Err(format!("center {pick} classified to {id} with similarity {similarity}"));
            }
        }
        p => return Err(format!("center {pick} came back {p:?}")),
    }

    // Far from every center: centers live off axis 0, the span mostly on it.
    let mut off_axis = centers.clone();
    for c in &mut off_axis {
        c[0] = 0.0;
    }
    let mut far = gaussian_vec(&mut rng, d);
    let norm = far.iter().map(|x| x * x).sum::<f64>().sqrt();
    let eps = rng.random_range(0.0..0.3);
    for x in &mut far {
        *x *= eps / norm;
    }
    far[0] = 1.0;
    match classify(&far, &off_axis)? {
        Prediction::Unlabeled { best_similarity } if best_similarity < params.unlabeled_threshold => {}
        p => return Err(format!("far span came back {p:?}")),
    }

    // Random span against the naive argmax.
    let span = gaussian_vec(&mut rng, d);
    let sims: Vec<f64> = centers.iter().map(|c| naive_cosine(&span, c)).collect();
    let (best_id, best) = sims
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, &s)| if s > acc.1 { (i, s) } else { acc });
    let got = classify(&span, &centers)?;
    let want = (best >= params.unlabeled_threshold).then_some(best_id);
    if got.cluster() != want {
        return Err(format!("span classified {got:?}, naive argmax {want:?} ({best})"));
    }

    let scale = 10f64.powf(rng.random_range(-3.0..3.0));
    let scaled: Vec<f64> = span.iter().map(|x| x * scale).collect();
    let again = classify(&scaled, &centers)?;
    if again.cluster() != got.cluster() {
        return Err(format!("rescaling by {scale} changed {got:?} into {again:?}"));
    }

    let mut perm: Vec<usize> = (0..k).collect();
    perm.shuffle(&mut rng);
    let permuted: Vec<Vec<f64>> = perm.iter().map(|&i| centers[i].clone()).collect();
    let p = classify(&span, &permuted)?;
    if p.cluster().map(|i| perm[i]) != got.cluster() {
        return Err(format!("permuting centers changed {got:?} into {p:?}"));
    }
    Ok(())
}

/// Recounts the funnel from the per-check functions, dialogue by dialogue.
pub fn recount_funnel(input: &FunnelInput) -> [usize; 5] {
    use intent_landscape::validation as v;
    use v::Tagger;

    let (candidates, ctxs) = input;
    let tagger = v::BaselineTagger;
    let mut counts = [0usize; 5];
    for (id, ctx) in ctxs {
        counts[0] += 1;
        let cands = candidates.get(id).cloned().unwrap_or_default();
        if !v::filter_impossible(&cands).keeps() {
            continue;
        }
        counts[1] += 1;
        let flags: Vec<[bool; 3]> = cands
            .iter()
            .map(|c| {
                let pos = v::validate_pos(&tagger.tag(&c.text).unwrap());
                [pos, v::validate_sentence(&c.text), v::validate_channel(c, ctx).ok]
            })
            .collect();
        for stage in 1..=3 {
            if flags.iter().any(|f| f[..stage].iter().all(|&ok| ok)) {
                counts[stage + 1] += 1;
            }
        }
    }
    counts
}

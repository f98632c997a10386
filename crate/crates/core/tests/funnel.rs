mod support;

use intent_landscape::validation::{run_funnel, BaselineTagger, FunnelReport};
use proptest::prelude::*;

use support::{hand_funnel_fixture, random_funnel_corpus, recount_funnel as recount};

#[test]
fn hand_traced_fixture() {
    let input = hand_funnel_fixture();
    let out = run_funnel(&input.0, &input.1, &BaselineTagger).unwrap();
    let r = &out.report;
    assert_eq!(
        [r.initial_dialogues, r.after_impossible, r.after_pos, r.after_sentence, r.after_channel],
        [4, 3, 2, 2, 1]
    );
    assert_eq!(r.percentages, [75.0, 50.0, 50.0, 25.0]);
    assert_eq!(out.valid.keys().collect::<Vec<_>>(), vec!["d4-clean"]);
    assert_eq!(recount(&input), [4, 3, 2, 2, 1]);
}

#[test]
fn all_valid_corpus_keeps_everything() {
    let (mut candidates, ctxs) = hand_funnel_fixture();
    candidates.retain(|id, _| id == "d4-clean");
    let ctxs = ctxs.into_iter().filter(|(id, _)| id == "d4-clean").collect();
    let r = run_funnel(&candidates, &ctxs, &BaselineTagger).unwrap().report;
    assert_eq!(r.percentages, [100.0; 4]);
}

fn check_monotone(seed: u64) -> Result<(), TestCaseError> {
    let input = random_funnel_corpus(seed);
    let out = run_funnel(&input.0, &input.1, &BaselineTagger).unwrap();
    let r: &FunnelReport = &out.report;
    let c = [r.initial_dialogues, r.after_impossible, r.after_pos, r.after_sentence, r.after_channel];
    prop_assert!(c.windows(2).all(|w| w[0] >= w[1]), "{c:?}");
    prop_assert_eq!(c, recount(&input));
    for (i, &n) in c[1..].iter().enumerate() {
        prop_assert_eq!(r.percentages[i], 100.0 * n as f64 / r.initial_dialogues as f64);
    }
    prop_assert_eq!(out.valid.len(), r.after_channel);
    // Shard-and-merge gives the same totals.
    let (cands, ctxs) = input;
    let (left, right): (Vec<_>, Vec<_>) = ctxs.into_iter().enumerate().partition(|(i, _)| i % 2 == 0);
    let shard = |part: Vec<(usize, (String, _))>| {
        let ctxs: std::collections::BTreeMap<_, _> = part.into_iter().map(|(_, kv)| kv).collect();
        let cands = cands.iter().filter(|(k, _)| ctxs.contains_key(*k)).map(|(k, v)| (k.clone(), v.clone())).collect();
        run_funnel(&cands, &ctxs, &BaselineTagger).unwrap().report
    };
    prop_assert_eq!(&shard(left).merge(&shard(right)), r);
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]
    #[test]
    fn funnel_is_monotone_on_random_corpora(seed in any::<u64>()) {
        check_monotone(seed)?;
    }
}

#[test]
fn random_corpora_exercise_every_stage() {
    // Guards against a generator that trivially drops everything early.
    let mut drops = [0usize; 4];
    for seed in 0..50 {
        let c = recount(&random_funnel_corpus(seed));
        for s in 0..4 {
            drops[s] += c[s] - c[s + 1];
        }
    }
    assert!(drops.iter().all(|&d| d > 0), "{drops:?}");
}

mod common;

use std::collections::{BTreeSet, HashMap};

use commlevels::corpus::{ParticipantIdx, TimeRange};
use commlevels::levels::{
    apply_all, distribution_aggregate, volume_aggregate, Histogram, LevelState, Selection,
};
use common::*;
use proptest::prelude::*;
use rand::Rng;

#[test]
fn conjunction_equals_intersection_of_single_levels() {
    for seed in 0..200 {
        let mut rng = rng(seed);
        let ctx = random_context(&mut rng, 6, 80);
        let states = random_levels(&mut rng, &ctx);
        let combined = apply_all(&ctx, &states).unwrap();
        let mut expected: BTreeSet<String> = ids_of(ctx.corpus(), Selection::all(ctx.corpus()).messages());
        for s in &states {
            let single = apply_all(&ctx, std::slice::from_ref(s)).unwrap();
            let ids = ids_of(ctx.corpus(), single.messages());
            expected = expected.intersection(&ids).cloned().collect();
        }
        assert_eq!(ids_of(ctx.corpus(), combined.messages()), expected, "seed {seed}: {states:?}");
    }
}

#[test]
fn adding_a_level_never_grows_the_selection() {
    for seed in 0..100 {
        let mut rng = rng(1_000 + seed);
        let ctx = random_context(&mut rng, 5, 60);
        let mut states = random_levels(&mut rng, &ctx);
        let Some(last) = states.pop() else { continue };
        let before = ids_of(ctx.corpus(), apply_all(&ctx, &states).unwrap().messages());
        states.push(last);
        let after = ids_of(ctx.corpus(), apply_all(&ctx, &states).unwrap().messages());
        assert!(after.is_subset(&before), "seed {seed}");
    }
}

#[test]
fn disabled_levels_change_nothing() {
    let mut rng = rng(7);
    let ctx = random_context(&mut rng, 5, 60);
    let disabled: Vec<LevelState> = (0..4).map(|k| random_level(&mut rng, &ctx, k).disabled()).collect();
    assert_eq!(apply_all(&ctx, &disabled).unwrap().len(), ctx.corpus().message_count());
}

proptest! {
    #[test]
    fn messages_between_matches_linear_scan(seed in 0u64..10_000, a in 0usize..5, b in 0usize..5,
                                            lo in 0i64..60_000, len in 0i64..60_000, ranged in any::<bool>()) {
        let mut rng = rng(seed);
        let corpus = random_corpus(&mut rng, 5, 120, 100_000);
        let (a, b) = (format!("p{a}"), format!("p{b}"));
        let range = ranged.then(|| TimeRange::new(lo, lo + len));
        let got: Vec<&str> = corpus.messages_between(&a, &b, range).unwrap().iter().map(|m| m.id.as_str()).collect();
        let expected: Vec<&str> = corpus
            .messages()
            .iter()
            .filter(|m| m.sender == a && m.receiver == b && range.is_none_or(|r| r.start <= m.timestamp && m.timestamp <= r.end))
            .map(|m| m.id.as_str())
            .collect();
        prop_assert_eq!(got, expected);
    }

    #[test]
    fn volume_matches_group_by(seed in 0u64..10_000) {
        let mut rng = rng(seed);
        let ctx = random_context(&mut rng, 6, 150);
        let states = random_levels(&mut rng, &ctx);
        let sel = apply_all(&ctx, &states).unwrap();
        let corpus = ctx.corpus();
        let mut expected: HashMap<(String, String), usize> = HashMap::new();
        for &m in sel.messages() {
            let msg = corpus.message(m);
            *expected.entry((msg.sender.clone(), msg.receiver.clone())).or_default() += 1;
        }
        let got: HashMap<(String, String), usize> = volume_aggregate(corpus, &sel)
            .into_iter()
            .map(|((s, r), n)| ((corpus.participant(s).id.clone(), corpus.participant(r).id.clone()), n))
            .collect();
        prop_assert_eq!(got, expected);
    }

    #[test]
    fn histogram_matches_direct_binning(seed in 0u64..10_000, bins in 1usize..40) {
        let mut rng = rng(seed);
        let corpus = random_corpus(&mut rng, 3, 200, 50_000);
        let sel = Selection::all(&corpus);
        let start = rng.random_range(0..20_000);
        let range = TimeRange::new(start, start + rng.random_range(0..30_000));
        let pair = (ParticipantIdx(0), ParticipantIdx(1));
        let h = distribution_aggregate(&corpus, &sel, pair, bins, range).unwrap();
        let width = (range.end - range.start + 1) as f64 / bins as f64;
        let mut expected = vec![0u64; bins];
        for m in corpus.messages() {
            if m.sender == "p0" && m.receiver == "p1" && range.contains(m.timestamp) {
                let k = (((m.timestamp - range.start) as f64) / width).floor() as usize;
                expected[k.min(bins - 1)] += 1;
            }
        }
        prop_assert_eq!(&h.counts, &expected);
        prop_assert_eq!(h.edges.len(), bins + 1);
        prop_assert_eq!(h.total(), expected.iter().sum::<u64>());
        prop_assert_eq!(Histogram::empty(range, bins).edges, h.edges);
    }
}

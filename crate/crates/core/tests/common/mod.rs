//! Seeded generators and brute-force oracles shared by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeSet;
use std::sync::Arc;

use commlevels::corpus::{Corpus, Message, MessageIdx, Participant, TimeRange};
use commlevels::dynamics::DynamicsParams;
use commlevels::levels::{AnalysisContext, LevelState, MatchMode, Role};
use commlevels::provenance::SessionState;
use commlevels::retrieval::{Label, LabeledExample};
use commlevels::thematic::{print_query, AnnotationIndex, Category, CategorySet, ConceptQuery, EntityAnnotation};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub const WORDS: [&str; 8] = ["alpha", "Beta", "gamma", "budget", "Budget", "meeting", "deal", "lunch"];
pub const TEST_CATEGORIES: [&str; 4] = ["PERSON", "ORG", "GPE", "LAW"];

pub fn participant_ids(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("p{i}")).collect()
}

/// `n` messages between `participants` people with uniform timestamps in
/// `[0, span]` and a few random words each.
pub fn random_corpus(rng: &mut ChaCha8Rng, participants: usize, n: usize, span: i64) -> Corpus {
    let ids = participant_ids(participants);
    let messages = (0..n)
        .map(|i| {
            let s = rng.random_range(0..participants);
            let r = rng.random_range(0..participants);
            let words: Vec<&str> = (0..rng.random_range(1..5)).map(|_| *WORDS.choose(rng).unwrap()).collect();
            Message::new(format!("m{i:04}"), &ids[s], &ids[r], rng.random_range(0..=span), words.join(" "))
        })
        .collect();
    Corpus::new(ids.iter().map(Participant::new).collect(), messages).unwrap()
}

pub fn random_annotations(rng: &mut ChaCha8Rng, max: usize) -> Vec<EntityAnnotation> {
    let mut anns: Vec<EntityAnnotation> = (0..rng.random_range(0..=max))
        .map(|_| {
            let start = rng.random_range(0..20);
            EntityAnnotation {
                start_word: start,
                end_word: start + rng.random_range(1..4),
                category: Category::new(TEST_CATEGORIES.choose(rng).unwrap()),
                surface: String::new(),
            }
        })
        .collect();
    anns.sort_by_key(|a| (a.start_word, a.end_word));
    anns
}

pub fn random_context(rng: &mut ChaCha8Rng, participants: usize, n: usize) -> AnalysisContext {
    let corpus = random_corpus(rng, participants, n, 100_000);
    let mut index = AnnotationIndex::empty_for(&corpus);
    for i in 0..corpus.message_count() {
        index.set(MessageIdx(i as u32), random_annotations(rng, 4));
    }
    AnalysisContext::new(Arc::new(corpus), index, CategorySet::default())
}

pub fn random_ast(rng: &mut ChaCha8Rng, depth: u32) -> ConceptQuery {
    let cat = |rng: &mut ChaCha8Rng| TEST_CATEGORIES.choose(rng).unwrap().to_string();
    let leaf = depth == 0 || rng.random_bool(0.3);
    if leaf {
        if rng.random_bool(0.5) {
            return ConceptQuery::atom(Category::new(&cat(rng)));
        }
        let k = rng.random_range(2..=4);
        let atoms: Vec<String> = (0..k).map(|_| cat(rng)).collect();
        let gaps: Vec<Option<u32>> = (1..k)
            .map(|_| rng.random_bool(0.6).then(|| rng.random_range(0..10)))
            .collect();
        return ConceptQuery::Seq {
            atoms: atoms.iter().map(|a| Category::new(a)).collect(),
            gaps,
        };
    }
    let l = random_ast(rng, depth - 1);
    let r = random_ast(rng, depth - 1);
    if rng.random_bool(0.5) {
        ConceptQuery::and(l, r)
    } else {
        ConceptQuery::or(l, r)
    }
}

/// Exhaustive evaluation: tries every increasing choice of annotations for a
/// sequence.
pub fn brute_force_matches(q: &ConceptQuery, anns: &[EntityAnnotation]) -> bool {
    match q {
        ConceptQuery::Atom { category } => anns.iter().any(|a| &a.category == category),
        ConceptQuery::Seq { atoms, gaps } => {
            fn extend(
                atoms: &[Category],
                gaps: &[Option<u32>],
                anns: &[EntityAnnotation],
                prev: Option<&EntityAnnotation>,
            ) -> bool {
                let Some((first, rest)) = atoms.split_first() else {
                    return true;
                };
                anns.iter().any(|a| {
                    let fits = match prev {
                        None => true,
                        Some(p) => {
                            a.start_word > p.start_word
                                && gaps[0].is_none_or(|g| a.start_word as i64 - p.end_word as i64 <= g as i64)
                        }
                    };
                    let gaps_rest = if prev.is_some() { &gaps[1..] } else { gaps };
                    &a.category == first && fits && extend(rest, gaps_rest, anns, Some(a))
                })
            }
            extend(atoms, gaps, anns, None)
        }
        ConceptQuery::And { left, right } => brute_force_matches(left, anns) && brute_force_matches(right, anns),
        ConceptQuery::Or { left, right } => brute_force_matches(left, anns) || brute_force_matches(right, anns),
    }
}

fn random_subset(rng: &mut ChaCha8Rng, ids: &[String], p: f64) -> Vec<String> {
    ids.iter().filter(|_| rng.random_bool(p)).cloned().collect()
}

/// One level state of a random kind; `kind` picks among the filtering levels.
pub fn random_level(rng: &mut ChaCha8Rng, ctx: &AnalysisContext, kind: usize) -> LevelState {
    let corpus = ctx.corpus();
    let ids: Vec<String> = corpus.participants().iter().map(|p| p.id.clone()).collect();
    match kind {
        0 => {
            let extent = corpus.time_extent().unwrap_or(TimeRange::new(0, 0));
            let a = rng.random_range(extent.start..=extent.end);
            let b = rng.random_range(extent.start..=extent.end);
            LevelState::timefilter(TimeRange::new(a.min(b), a.max(b)))
        }
        1 => {
            let include = random_subset(rng, &ids, 0.5);
            let exclude: Vec<String> = random_subset(rng, &ids, 0.2)
                .into_iter()
                .filter(|id| !include.contains(id))
                .collect();
            let role = *[Role::Sender, Role::Receiver, Role::Either].choose(rng).unwrap();
            LevelState::user_selection(include, exclude, role)
        }
        2 => {
            let terms: Vec<&str> = (0..rng.random_range(1..3)).map(|_| *WORDS.choose(rng).unwrap()).collect();
            let mode = if rng.random_bool(0.5) { MatchMode::Any } else { MatchMode::All };
            LevelState::keyword(terms, mode, rng.random_bool(0.5))
        }
        _ => LevelState::thematic(&print_query(&random_ast(rng, 2))),
    }
}

/// Up to four filtering levels of distinct kinds, in random order, some
/// disabled.
pub fn random_levels(rng: &mut ChaCha8Rng, ctx: &AnalysisContext) -> Vec<LevelState> {
    let mut kinds = vec![0, 1, 2, 3];
    kinds.shuffle(rng);
    kinds.truncate(rng.random_range(0..=4));
    kinds
        .into_iter()
        .map(|k| {
            let s = random_level(rng, ctx, k);
            if rng.random_bool(0.15) {
                s.disabled()
            } else {
                s
            }
        })
        .collect()
}

pub fn random_session_state(rng: &mut ChaCha8Rng, ctx: &AnalysisContext) -> SessionState {
    let mut state = SessionState::new(random_levels(rng, ctx));
    state.threshold = (rng.random_range(0..=10) as f64) / 10.0;
    state
}

/// Episode membership from a sampled density: grid points every `σh/20`
/// across the stream plus every message instant. Points with `f >= θ` form
/// runs; messages whose instant falls in the same run share an episode.
pub fn grid_oracle(times: &[i64], p: &DynamicsParams) -> Vec<Vec<usize>> {
    if times.is_empty() {
        return Vec::new();
    }
    let w = p.sigma * p.h;
    let centres: Vec<f64> = times.iter().map(|&t| t as f64 + p.mu).collect();
    let f = |t: f64| -> f64 {
        centres
            .iter()
            .map(|&c| (-(t - c) * (t - c) / (2.0 * w * w)).exp())
            .sum()
    };
    let lo = centres[0];
    let hi = *centres.last().unwrap();
    let step = w / 20.0;
    // (position, message index or usize::MAX for grid points)
    let mut points: Vec<(f64, usize)> = Vec::new();
    let n = ((hi - lo) / step).floor() as usize;
    for k in 0..=n {
        points.push((lo + step * k as f64, usize::MAX));
    }
    for (i, &c) in centres.iter().enumerate() {
        points.push((c, i));
    }
    points.sort_by(|a, b| a.0.total_cmp(&b.0).then(b.1.cmp(&a.1)));

    let mut runs: Vec<Vec<usize>> = Vec::new();
    let mut current: Vec<usize> = Vec::new();
    for (t, i) in points {
        if f(t) >= p.theta {
            if i != usize::MAX {
                current.push(i);
            }
        } else if !current.is_empty() {
            runs.push(std::mem::take(&mut current));
        }
    }
    if !current.is_empty() {
        runs.push(current);
    }
    for r in &mut runs {
        r.sort_unstable();
    }
    runs.retain(|r| r.len() >= p.min_messages);
    runs
}

/// Bursty timestamps for one pair: a few clusters of messages spaced around
/// the kernel width.
pub fn bursty_times(rng: &mut ChaCha8Rng, width: f64, max: usize) -> Vec<i64> {
    let mut times = Vec::new();
    let mut t = 0i64;
    while times.len() < max {
        t += rng.random_range((width * 2.0) as i64..(width * 12.0) as i64);
        let burst = rng.random_range(1..=6).min(max - times.len());
        let mut u = t;
        for _ in 0..burst {
            times.push(u);
            u += rng.random_range(0..(width * 2.5) as i64 + 1);
        }
        t = u;
        if rng.random_bool(0.1) {
            break;
        }
    }
    times
}

pub fn random_dynamics(rng: &mut ChaCha8Rng) -> DynamicsParams {
    DynamicsParams {
        mu: rng.random_range(-1800.0..1800.0_f64).round(),
        sigma: *[600.0, 3_600.0, 21_600.0].choose(rng).unwrap(),
        h: *[0.5, 1.0, 2.0].choose(rng).unwrap(),
        theta: *[0.3, 0.5, 0.8, 1.2, 1.7].choose(rng).unwrap(),
        min_messages: rng.random_range(1..=3),
    }
}

/// Two isotropic Gaussians in the plane, unit variance, means at ±1.5 on both
/// axes; alternating labels.
pub fn two_gaussians(rng: &mut ChaCha8Rng, n: usize, prefix: &str) -> Vec<LabeledExample> {
    let noise = Normal::new(0.0, 1.0).unwrap();
    (0..n)
        .map(|i| {
            let (label, mean) = if i % 2 == 0 { (Label::Relevant, 1.5) } else { (Label::Irrelevant, -1.5) };
            LabeledExample {
                target_id: format!("{prefix}{i:04}"),
                label,
                features: vec![mean + noise.sample(rng), mean + noise.sample(rng)],
            }
        })
        .collect()
}

pub fn ids_of(corpus: &Corpus, messages: &[MessageIdx]) -> BTreeSet<String> {
    messages.iter().map(|&m| corpus.message(m).id.clone()).collect()
}

mod common;

use std::sync::Arc;

use commlevels::levels::apply_all;
use commlevels::provenance::{replay, selection_digest, ProvenanceError, ProvenanceGraph, Report};
use commlevels::session::Session;
use common::*;
use rand::Rng;

/// Runs a random sequence of commits, jumps, stars and notes.
fn scripted_session(seed: u64) -> Session {
    let mut rng = rng(seed);
    let ctx = Arc::new(random_context(&mut rng, 6, 80));
    let mut session = Session::with_clock(ctx.clone(), Arc::new(|| 1_000_000));
    for _ in 0..rng.random_range(5..25) {
        let nodes = session.graph().nodes().len() as u64;
        match rng.random_range(0..10) {
            0..=5 => {
                session.commit(random_session_state(&mut rng, &ctx)).unwrap();
            }
            6 | 7 => {
                session.navigate(rng.random_range(0..nodes)).unwrap();
            }
            8 => session.set_starred(rng.random_range(0..nodes), true).unwrap(),
            _ => session
                .set_note(rng.random_range(0..nodes), Some(format!("note {seed}")))
                .unwrap(),
        }
    }
    session
}

#[test]
fn exported_sessions_replay() {
    for seed in 0..50 {
        let session = scripted_session(seed);
        let report = session.report();
        let parsed = Report::parse(&report.render()).unwrap();
        assert_eq!(parsed, report, "seed {seed}");
        ProvenanceGraph::check_structure(&parsed.nodes).unwrap();
        let checks = replay(session.context(), &parsed).unwrap();
        assert_eq!(checks.len(), parsed.nodes.len());
        assert!(checks.iter().all(|c| c.matches()), "seed {seed}");
    }
}

#[test]
fn digests_are_those_of_a_fresh_evaluation() {
    let session = scripted_session(77);
    let ctx = session.context();
    for node in session.graph().nodes() {
        let state = commlevels::provenance::SessionState::from_canonical(&node.state_snapshot).unwrap();
        let sel = apply_all(ctx, &state.levels).unwrap();
        assert_eq!(selection_digest(ctx.corpus(), &sel), node.selection_digest);
        assert_eq!(sel.len(), node.selection_size);
    }
}

#[test]
fn tampered_reports_are_caught() {
    let session = scripted_session(3);
    let mut report = session.report();
    let last = report.nodes.len() - 1;
    report.nodes[last].selection_digest = "0".repeat(64);
    let checks = replay(session.context(), &report).unwrap();
    assert!(!checks[last].matches());
    assert!(checks[..last].iter().all(|c| c.matches()));

    let mut other = session.report();
    other.corpus_hash = "f".repeat(64);
    assert!(matches!(
        replay(session.context(), &other),
        Err(ProvenanceError::CorpusMismatch { .. })
    ));
}

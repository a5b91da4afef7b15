//! Branch an analysis, annotate the history, export it and replay it.
//!
//! cargo run --example provenance_history

use std::error::Error;
use std::sync::Arc;

use commlevels::fixture::{FraudFixture, DEMO_SEED};
use commlevels::levels::{AnalysisContext, LevelState, MatchMode};
use commlevels::provenance::{replay, Report, SessionState};
use commlevels::session::Session;

fn main() -> Result<(), Box<dyn Error>> {
    let fixture = FraudFixture::generate(DEMO_SEED);
    let ctx = Arc::new(AnalysisContext::without_annotations(Arc::new(fixture.corpus()?)));
    let mut session = Session::new(ctx.clone());

    let window = LevelState::timefilter(fixture.truth.window);
    let a = session.commit(SessionState::new(vec![window.clone()]))?;
    let b = session.commit(SessionState::new(vec![
        window.clone(),
        LevelState::keyword(["california"], MatchMode::Any, true),
    ]))?;
    session.set_starred(b, true)?;
    session.set_note(b, Some("California traffic in the window".into()))?;

    // back up one step and try another branch
    session.navigate(a)?;
    let c = session.commit(SessionState::new(vec![
        window,
        LevelState::keyword(["texas"], MatchMode::Any, true),
    ]))?;
    println!("current node {c}");

    for node in session.graph().nodes() {
        println!(
            "node {} parent {:?} size {:>5}{}{}",
            node.node_id,
            node.parent,
            node.selection_size,
            if node.starred { " *" } else { "" },
            node.note.as_deref().map(|n| format!(" \"{n}\"")).unwrap_or_default()
        );
    }
    println!("leaves {:?}", session.graph().leaves());

    let text = session.report().render();
    println!("report is {} bytes", text.len());
    let report = Report::parse(&text)?;
    let checks = replay(&ctx, &report)?;
    let ok = checks.iter().filter(|c| c.matches()).count();
    println!("replayed {ok}/{} nodes with matching digests", checks.len());
    Ok(())
}

//! Label a few conversation episodes and let the forest rank the rest.
//!
//! cargo run --example relevance_feedback

use std::collections::HashSet;
use std::error::Error;
use std::sync::Arc;

use commlevels::fixture::{FraudFixture, DEMO_SEED};
use commlevels::levels::{AnalysisContext, LevelState};
use commlevels::provenance::SessionState;
use commlevels::retrieval::Label;
use commlevels::session::Session;
use commlevels::thematic::CategorySet;

fn main() -> Result<(), Box<dyn Error>> {
    let fixture = FraudFixture::generate(DEMO_SEED);
    let tagger = fixture.tagger(CategorySet::default())?;
    let corpus = Arc::new(fixture.corpus()?);
    let ctx = Arc::new(AnalysisContext::with_tagger(corpus.clone(), &tagger, CategorySet::default()));
    let mut session = Session::new(ctx);
    // entity counts feed the episode features
    session.commit(SessionState::new(vec![
        LevelState::timefilter(fixture.truth.window),
        LevelState::thematic_features(),
    ]))?;

    let planted: HashSet<_> = fixture
        .truth
        .planted
        .iter()
        .map(|id| corpus.message_idx(id).unwrap())
        .collect();
    let view = session.current_view();
    let episodes = session.episodes(&view);
    let is_planted = |id: &str| episodes.get(id).unwrap().messages.iter().any(|m| planted.contains(m));
    let (hits, misses): (Vec<_>, Vec<_>) =
        episodes.iter().map(|(id, _)| id.to_string()).partition(|id| is_planted(id));
    println!("{} episodes in the window, {} touch planted messages", episodes.len(), hits.len());

    // the analyst marks three of each kind
    for id in hits.iter().take(3) {
        session.label_episode(id, Label::Relevant)?;
    }
    let mut outcome = None;
    for id in misses.iter().take(3) {
        outcome = Some(session.label_episode(id, Label::Irrelevant)?);
    }
    let outcome = outcome.expect("some unplanted episodes");
    println!("{} labels, model trained: {}", outcome.labeled, outcome.model_trained);

    let relevant: HashSet<&str> = outcome.scores.iter().filter(|s| s.p >= 0.5).map(|s| s.episode_id.as_str()).collect();
    let found = hits.iter().filter(|id| relevant.contains(id.as_str())).count();
    println!("scored relevant: {}, of which planted: {found}/{}", relevant.len(), hits.len());

    println!("most ambiguous:");
    for (id, score) in session.ambiguous(5) {
        println!("  {id}  p={:.2} uncertainty={:.2} planted={}", score.p, score.uncertainty, is_planted(&id));
    }
    Ok(())
}

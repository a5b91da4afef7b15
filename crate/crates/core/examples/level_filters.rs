//! Compose filter levels and watch the selection shrink.
//!
//! cargo run --example level_filters

use std::error::Error;
use std::sync::Arc;

use commlevels::fixture::{FraudFixture, DEMO_SEED};
use commlevels::levels::{apply_all, volume_aggregate, AnalysisContext, LevelState, MatchMode, Role};

fn main() -> Result<(), Box<dyn Error>> {
    let fixture = FraudFixture::generate(DEMO_SEED);
    let ctx = AnalysisContext::without_annotations(Arc::new(fixture.corpus()?));
    let corpus = ctx.corpus();
    let truth = &fixture.truth;

    let steps = [
        ("time window", LevelState::timefilter(truth.window)),
        ("keyword", LevelState::keyword(["california"], MatchMode::Any, true)),
        (
            "receiver",
            LevelState::user_selection([truth.receiver.as_str()], Vec::<String>::new(), Role::Receiver),
        ),
    ];
    let mut states = Vec::new();
    println!("{:>12}  {:>7}", "all", corpus.message_count());
    for (name, state) in steps {
        states.push(state);
        let selection = apply_all(&ctx, &states)?;
        println!("{name:>12}  {:>7}", selection.len());
    }

    // disabling a level keeps it in the stack but stops it filtering
    states[1] = states[1].clone().disabled();
    let selection = apply_all(&ctx, &states)?;
    println!("keyword off   {:>7}", selection.len());

    let mut pairs: Vec<_> = volume_aggregate(corpus, &selection).into_iter().collect();
    pairs.sort_by(|a, b| b.1.cmp(&a.1));
    for ((s, r), n) in pairs.iter().take(5) {
        println!("{} -> {}: {n}", corpus.participant(*s).id, corpus.participant(*r).id);
    }
    Ok(())
}

//! The investigation walk-through: narrow by time and topic, spot the
//! receiver that stands out, restrict to it and read off the senders.
//!
//! cargo run --example fraud_investigation [seed]

use std::collections::{BTreeMap, BTreeSet};
use std::error::Error;
use std::sync::Arc;

use commlevels::fixture::{FraudFixture, DEMO_SEED};
use commlevels::levels::{volume_aggregate, AnalysisContext, LevelState, Role};
use commlevels::matrixview::{matrix, MatrixRequest, Order};
use commlevels::provenance::SessionState;
use commlevels::session::Session;
use commlevels::thematic::CategorySet;

fn main() -> Result<(), Box<dyn Error>> {
    let seed = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(DEMO_SEED);
    let fixture = FraudFixture::generate(seed);
    let truth = &fixture.truth;
    let tagger = fixture.tagger(CategorySet::default())?;
    let ctx = Arc::new(AnalysisContext::with_tagger(
        Arc::new(fixture.corpus()?),
        &tagger,
        CategorySet::default(),
    ));
    let corpus = ctx.corpus();
    let mut session = Session::new(ctx.clone());
    println!("{} messages between {} people", corpus.message_count(), corpus.participant_count());

    let mut states = vec![LevelState::timefilter(truth.window), LevelState::thematic(&truth.thematic_query)];
    session.commit(SessionState::new(states.clone()))?;
    let view = session.current_view();
    println!("window + `{}`: {} messages", truth.thematic_query, view.selection.len());

    let mut by_receiver: BTreeMap<&str, usize> = BTreeMap::new();
    for ((_, r), n) in volume_aggregate(corpus, &view.selection) {
        *by_receiver.entry(&corpus.participant(r).id).or_default() += n;
    }
    let (receiver, n) = by_receiver.iter().max_by_key(|(_, &n)| n).map(|(r, n)| (r.to_string(), *n)).unwrap();
    println!("column that stands out: {receiver} with {n} messages");

    states.push(LevelState::user_selection([receiver.as_str()], Vec::<String>::new(), Role::Receiver));
    session.commit(SessionState::new(states))?;
    let m = matrix(&session, &MatrixRequest { row_order: Order::VolumeDesc, ..Default::default() })?;
    let senders: BTreeSet<&str> = m.cells.iter().map(|c| c.row.as_str()).collect();
    for cell in &m.cells {
        println!("  {} -> {}: {}", cell.row, cell.col, cell.count);
    }

    let expected: BTreeSet<&str> = truth.senders.iter().map(String::as_str).collect();
    println!(
        "senders match the planted group: {}, receiver matches: {}",
        senders == expected,
        receiver == truth.receiver
    );
    Ok(())
}

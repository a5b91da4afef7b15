//! Request the adjacency matrix at several cell sizes and inspect one cell.
//!
//! cargo run --example semantic_zoom_matrix

use std::error::Error;
use std::sync::Arc;

use commlevels::fixture::{FraudFixture, DEMO_SEED};
use commlevels::levels::{AnalysisContext, LevelState};
use commlevels::matrixview::{cell_details, matrix, MatrixRequest, Order, Page};
use commlevels::provenance::SessionState;
use commlevels::session::Session;

fn main() -> Result<(), Box<dyn Error>> {
    let fixture = FraudFixture::generate(DEMO_SEED);
    let ctx = Arc::new(AnalysisContext::without_annotations(Arc::new(fixture.corpus()?)));
    let mut session = Session::new(ctx);
    session.commit(SessionState::new(vec![LevelState::timefilter(fixture.truth.window)]))?;

    for px in [12, 24, 48, 96, 160] {
        let request = MatrixRequest {
            cell_size: Some(px),
            row_order: Order::VolumeDesc,
            col_order: Order::VolumeDesc,
            ..Default::default()
        };
        let m = matrix(&session, &request)?;
        let glyphs: usize = m.cells.iter().filter_map(|c| c.episodes.as_ref()).map(Vec::len).sum();
        let bins = m.bin_edges.as_ref().map_or(0, |e| e.len().saturating_sub(1));
        println!(
            "{px:>3}px -> {:<16} {:>5} cells, max {:>3}, {bins:>2} bins, {glyphs} episode glyphs",
            m.view.as_str(),
            m.cells.len(),
            m.max_count
        );
    }

    // the busiest cell, as a tooltip would show it
    let m = matrix(&session, &MatrixRequest { cell_size: Some(160), ..Default::default() })?;
    let busiest = m.cells.iter().max_by_key(|c| c.count).expect("non-empty matrix");
    let details = cell_details(&session, None, &busiest.row, &busiest.col, m.view, Page { offset: 0, limit: Some(3) })?;
    println!("{} -> {}: {} messages, {} back", details.row, details.col, details.count, details.reverse_count);
    for r in &details.records {
        println!("  {} {} -> {}: {}", r.timestamp, r.sender, r.receiver, r.content);
    }
    if let Some(episodes) = &details.episodes {
        for e in episodes.iter().take(3) {
            println!("  episode {} with {} messages", e.episode_id, e.message_count);
        }
    }
    Ok(())
}

//! Ingest a CSV export, look at what was rejected, and round-trip the corpus
//! through the binary store.
//!
//! cargo run --example ingest_corpus [path.csv]

use std::error::Error;

use commlevels::corpus::{ingest, Corpus, SourceFormat};
use commlevels::fixture::{csv_schema, FraudFixture, DEMO_SEED};

fn main() -> Result<(), Box<dyn Error>> {
    let text = match std::env::args().nth(1) {
        Some(path) => std::fs::read_to_string(path)?,
        None => FraudFixture::generate(DEMO_SEED).csv,
    };
    // one bad row to show how rejects are reported
    let text = format!("{text}broken-1,,someone,2001-05-01T00:00:00Z,no sender\n");

    let report = ingest(text.as_bytes(), SourceFormat::Csv, &csv_schema())?;
    let corpus = report.corpus;
    println!("{} participants, {} messages", corpus.participant_count(), corpus.message_count());
    if let Some(extent) = corpus.time_extent() {
        println!("time extent {} .. {}", extent.start, extent.end);
    }
    for reject in &report.rejects {
        println!("rejected line {}: {}", reject.line, reject.reason);
    }

    let busiest = corpus
        .participants()
        .iter()
        .map(|p| {
            let idx = corpus.participant_idx(&p.id).unwrap();
            let sent: usize = corpus
                .participants()
                .iter()
                .map(|q| corpus.pair_messages(idx, corpus.participant_idx(&q.id).unwrap()).len())
                .sum();
            (sent, p.id.as_str())
        })
        .max()
        .unwrap_or_default();
    println!("busiest sender {} with {} messages", busiest.1, busiest.0);

    let bytes = corpus.to_bytes();
    let back = Corpus::read_from(bytes.as_slice())?;
    println!("store: {} bytes, identity {}", bytes.len(), corpus.identity_hash());
    assert_eq!(back.identity_hash(), corpus.identity_hash());
    Ok(())
}

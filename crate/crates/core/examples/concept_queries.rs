//! Parse concept queries, print them back in canonical form, and filter
//! messages by entity patterns.
//!
//! cargo run --example concept_queries ["QUERY"]

use std::error::Error;
use std::sync::Arc;

use commlevels::fixture::{FraudFixture, DEMO_SEED};
use commlevels::levels::{apply_all, AnalysisContext, LevelState};
use commlevels::thematic::{parse_query, print_query, CategorySet};

fn main() -> Result<(), Box<dyn Error>> {
    let categories = CategorySet::default();
    let examples = [
        "PERSON ~7 GPE",
        "person and (org or law)",
        "ORG LAW ~3 GPE",
        "PERSON ~ ",
        "PLANET",
    ];
    for text in examples {
        match parse_query(text, &categories) {
            Ok(q) => println!("{text:<26} => {}", print_query(&q)),
            Err(e) => println!("{text:<26} !! {e}"),
        }
    }

    let fixture = FraudFixture::generate(DEMO_SEED);
    let tagger = fixture.tagger(categories.clone())?;
    let ctx = AnalysisContext::with_tagger(Arc::new(fixture.corpus()?), &tagger, categories);
    println!("{} entity annotations", ctx.annotations().total());

    let mut queries = vec![fixture.truth.thematic_query.clone(), fixture.truth.proximity_query.clone()];
    queries.extend(std::env::args().skip(1));
    for query in queries {
        let selection = apply_all(&ctx, &[LevelState::thematic(&query)])?;
        println!("{query:<40} {:>5} messages", selection.len());
        if let Some(&first) = selection.messages().first() {
            println!("    e.g. {}", ctx.corpus().message(first).content);
        }
    }
    Ok(())
}

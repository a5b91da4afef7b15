//! Serve the matrix API over the investigation fixture.
//!
//! cargo run --example serve_matrix [addr]
//! curl 'http://127.0.0.1:8080/matrix?cellSize=40&rowOrder=volumeDesc'

use std::error::Error;
use std::net::SocketAddr;
use std::sync::Arc;

use commlevels::fixture::{FraudFixture, DEMO_SEED};
use commlevels::levels::AnalysisContext;
use commlevels::matrixview::serve;
use commlevels::session::Session;
use commlevels::thematic::CategorySet;
use parking_lot::RwLock;

fn main() -> Result<(), Box<dyn Error>> {
    let addr: SocketAddr = std::env::args().nth(1).unwrap_or_else(|| "127.0.0.1:8080".into()).parse()?;
    let fixture = FraudFixture::generate(DEMO_SEED);
    let tagger = fixture.tagger(CategorySet::default())?;
    let ctx = AnalysisContext::with_tagger(Arc::new(fixture.corpus()?), &tagger, CategorySet::default());
    let session = Arc::new(RwLock::new(Session::new(Arc::new(ctx))));

    println!("serving on http://{addr}");
    tokio::runtime::Runtime::new()?.block_on(serve(session, addr))?;
    Ok(())
}

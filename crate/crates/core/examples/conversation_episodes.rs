//! Split a pair's traffic into conversation episodes and see how the
//! threshold and the bandwidth change the result.
//!
//! cargo run --example conversation_episodes

use std::error::Error;

use commlevels::corpus::{Corpus, Message, Participant};
use commlevels::dynamics::{density, segment_episodes, DynamicsParams};

const HOUR: i64 = 3600;

fn main() -> Result<(), Box<dyn Error>> {
    // three bursts: a tight morning exchange, a slow afternoon trickle and a
    // lone message two days later
    let times = [0, 600, 1500, 2400, 9 * HOUR, 14 * HOUR, 20 * HOUR, 70 * HOUR];
    let messages: Vec<Message> = times
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            let (s, r) = if i % 2 == 0 { ("ann", "bob") } else { ("bob", "ann") };
            Message::new(format!("m{i}"), s, r, t, "")
        })
        .collect();
    let corpus = Corpus::new(vec![Participant::new("ann"), Participant::new("bob")], messages)?;

    let params = DynamicsParams::default();
    println!("density at each message (sigma {} h):", params.sigma / HOUR as f64);
    for &t in &times {
        println!("  t={:>5.2}h  {:.3}", t as f64 / HOUR as f64, density(&times, t as f64, &params));
    }

    for theta in [0.5, 1.5, 2.5] {
        for sigma_hours in [1.0, 6.0] {
            let params = DynamicsParams { theta, sigma: sigma_hours * HOUR as f64, ..Default::default() };
            let episodes = segment_episodes(&corpus, "ann", "bob", &params)?;
            let sizes: Vec<usize> = episodes.iter().map(|e| e.len()).collect();
            println!("theta {theta:.1}, sigma {sigma_hours:>3} h: episodes {sizes:?}");
        }
    }

    let episodes = segment_episodes(&corpus, "ann", "bob", &params)?;
    for ep in &episodes {
        println!(
            "{}: {} messages, {}h..{}h, peak {:.2}, started by {}",
            ep.id(&corpus),
            ep.len(),
            ep.start / HOUR,
            ep.end / HOUR,
            ep.peak_density,
            corpus.participant(ep.initiator).id
        );
    }
    Ok(())
}

//! Seeded synthetic corpora: a small investigation scenario with known ground
//! truth, and an Enron-shaped generator for load testing.

use std::io::Write;

use chrono::{TimeZone, Utc};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Zipf};
use serde::{Deserialize, Serialize};

use crate::corpus::{ingest, Corpus, CorpusError, Schema, SourceFormat, TimeRange, Timestamp};
use crate::thematic::{CategorySet, GazetteerError, GazetteerTagger};

pub const DEMO_SEED: u64 = 2001;
pub const ENRON_PARTICIPANTS: usize = 151;

const FIRST: [&str; 16] = [
    "alan", "beth", "carl", "dana", "eric", "fran", "gina", "hank", "ivan", "jill", "kurt",
    "lena", "mark", "nina", "owen", "paul",
];
const LAST: [&str; 12] = [
    "adler", "brook", "crane", "dorsey", "ellis", "foley", "grant", "hayes", "irwin", "jensen",
    "keller", "lowe",
];

const PEOPLE: [&str; 8] = [
    "Vince Marlow", "Greta Olsen", "Hugo Brandt", "Rita Sandoval", "Tom Whitaker",
    "Lucia Ferro", "Sam Okafor", "Irene Vasquez",
];
const ORGS: [&str; 6] = [
    "Enron", "Southern California Edison", "PG&E", "Dynegy", "Reliant", "Portland General",
];
const LAWS: [&str; 4] = ["FERC Order 888", "Section 206", "Clean Air Act", "Assembly Bill 1890"];
const OTHER_GPES: [&str; 4] = ["Texas", "Oregon", "Houston", "Nevada"];
const TARGET_GPE: &str = "California";

const FILLER: [&str; 24] = [
    "meeting", "schedule", "lunch", "review", "numbers", "draft", "call", "tomorrow", "update",
    "deck", "forecast", "please", "thanks", "attached", "comments", "budget", "desk", "trading",
    "curve", "model", "team", "notes", "friday", "quick",
];

/// Shared schema of every CSV this module writes.
pub fn csv_schema() -> Schema {
    Schema {
        id: Some("id".into()),
        ..Schema::default()
    }
}

fn utc(y: i32, m: u32, d: u32) -> Timestamp {
    Utc.with_ymd_and_hms(y, m, d, 0, 0, 0).unwrap().timestamp()
}

/// Participant ids `first.last@enron.com`, distinct and deterministic.
pub fn participant_ids(n: usize) -> Vec<String> {
    let mut ids = Vec::with_capacity(n);
    for k in 0.. {
        if ids.len() == n {
            break;
        }
        let first = FIRST[k % FIRST.len()];
        let last = LAST[(k / FIRST.len()) % LAST.len()];
        let round = k / (FIRST.len() * LAST.len());
        ids.push(if round == 0 {
            format!("{first}.{last}@enron.com")
        } else {
            format!("{first}.{last}{round}@enron.com")
        });
    }
    ids
}

/// What the investigation scenario plants and how to find it.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct FraudTruth {
    pub window: TimeRange,
    pub thematic_query: String,
    pub proximity_query: String,
    pub senders: Vec<String>,
    pub receiver: String,
    /// Message ids of the planted messages, sorted.
    pub planted: Vec<String>,
}

pub struct FraudFixture {
    pub csv: String,
    pub gazetteer: String,
    pub truth: FraudTruth,
}

struct Record {
    id: String,
    sender: String,
    receiver: String,
    time: Timestamp,
    content: String,
}

fn write_records(records: &[Record]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["id", "sender", "receiver", "time", "content"]).unwrap();
    for r in records {
        let time = Utc.timestamp_opt(r.time, 0).unwrap().to_rfc3339();
        w.write_record([&r.id, &r.sender, &r.receiver, &time, &r.content]).unwrap();
    }
    String::from_utf8(w.into_inner().unwrap()).unwrap()
}

impl FraudFixture {
    /// A 151-participant corpus spanning 2000 to mid 2002.
    ///
    /// Within January to September 2001 a handful of senders write to one
    /// receiver about a person, an organization, a regulation and California,
    /// with the person at most seven words before the place. Decoys miss in
    /// exactly one respect: outside the window, no regulation, a different
    /// receiver (spread thin), or the place named before the person.
    pub fn generate(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ids = participant_ids(ENRON_PARTICIPANTS);
        let window = TimeRange::new(utc(2001, 1, 1), utc(2001, 10, 1) - 1);
        let span = TimeRange::new(utc(2000, 1, 1), utc(2002, 7, 1) - 1);

        let mut shuffled = ids.clone();
        shuffled.shuffle(&mut rng);
        let receiver = shuffled[0].clone();
        let mut senders: Vec<String> = shuffled[1..6].to_vec();
        senders.sort();
        let others = &shuffled[6..];

        let mut records = Vec::new();
        let mut next_id = 0usize;
        let mut push = |records: &mut Vec<Record>, s: &str, r: &str, t: Timestamp, content: String| {
            next_id += 1;
            let id = format!("m{next_id:05}");
            records.push(Record { id: id.clone(), sender: s.into(), receiver: r.into(), time: t, content });
            id
        };
        let pick = |rng: &mut ChaCha8Rng, xs: &[&'static str]| *xs.choose(rng).unwrap();

        // planted: a short burst of messages per sender, Feb through Aug
        let mut planted = Vec::new();
        for s in &senders {
            let bursts = rng.random_range(2..=3);
            for _ in 0..bursts {
                let mut t = rng.random_range(utc(2001, 2, 1)..utc(2001, 9, 1));
                for _ in 0..rng.random_range(1..=3) {
                    let (p, o, l) = (pick(&mut rng, &PEOPLE), pick(&mut rng, &ORGS), pick(&mut rng, &LAWS));
                    let content = match rng.random_range(0..3) {
                        0 => format!("{p} moved the {TARGET_GPE} position under {l} with {o}"),
                        1 => format!("{p} says {TARGET_GPE} exposure is fine, {o} will cite {l}"),
                        _ => format!("Per {o}: {p} will handle {TARGET_GPE} before {l} hearing"),
                    };
                    planted.push(push(&mut records, s, &receiver, t, content));
                    t += rng.random_range(600..7_200);
                }
            }
        }

        let decoy = |rng: &mut ChaCha8Rng, gpe: &str| {
            let (p, o, l) = (pick(rng, &PEOPLE), pick(rng, &ORGS), pick(rng, &LAWS));
            format!("{gpe} desk update: {l} review with {o} requested by {p}")
        };
        // same parties and topic, wrong period
        for s in &senders {
            for period in [(utc(2000, 3, 1), utc(2000, 12, 1)), (utc(2001, 10, 15), utc(2002, 6, 1))] {
                let t = rng.random_range(period.0..period.1);
                let content = decoy(&mut rng, TARGET_GPE);
                push(&mut records, s, &receiver, t, content);
            }
        }
        // right period and receiver, no regulation
        for _ in 0..6 {
            let s = others.choose(&mut rng).unwrap();
            let t = rng.random_range(window.start..window.end);
            let content = format!("{} numbers from {} look fine says {}", TARGET_GPE, pick(&mut rng, &ORGS), pick(&mut rng, &PEOPLE));
            push(&mut records, s, &receiver, t, content);
        }
        // every category present, but one message each to many receivers
        for r in others.iter().take(12) {
            let s = shuffled[1 + rng.random_range(0..shuffled.len() - 1)].clone();
            if &s == r {
                continue;
            }
            let t = rng.random_range(window.start..window.end);
            let gpe = if rng.random_bool(0.5) { TARGET_GPE } else { pick(&mut rng, &OTHER_GPES) };
            let content = decoy(&mut rng, gpe);
            push(&mut records, &s, r, t, content);
        }

        // background chatter: never names a place, sometimes a person or firm
        for _ in 0..3_000 {
            let s = ids.choose(&mut rng).unwrap();
            let r = loop {
                let r = ids.choose(&mut rng).unwrap();
                if r != s {
                    break r;
                }
            };
            let t = rng.random_range(span.start..span.end);
            let mut words: Vec<String> = (0..rng.random_range(4..12))
                .map(|_| pick(&mut rng, &FILLER).to_string())
                .collect();
            match rng.random_range(0..6) {
                0 => words.insert(0, pick(&mut rng, &PEOPLE).to_string()),
                1 => words.push(pick(&mut rng, &ORGS).to_string()),
                2 => words.push(format!("${}", rng.random_range(1..900) * 1000)),
                _ => {}
            }
            push(&mut records, s, r, t, words.join(" "));
        }

        planted.sort();
        let mut gazetteer = String::from("# demo gazetteer: CATEGORY:surface form\n");
        for (cat, terms) in [
            ("PERSON", &PEOPLE[..]),
            ("ORG", &ORGS[..]),
            ("LAW", &LAWS[..]),
            ("GPE", &OTHER_GPES[..]),
            ("GPE", &[TARGET_GPE][..]),
        ] {
            for t in terms {
                gazetteer.push_str(&format!("{cat}:{t}\n"));
            }
        }

        FraudFixture {
            csv: write_records(&records),
            gazetteer,
            truth: FraudTruth {
                window,
                thematic_query: "PERSON AND ORG AND GPE AND LAW".into(),
                proximity_query: "PERSON ~7 GPE".into(),
                senders,
                receiver,
                planted,
            },
        }
    }

    pub fn corpus(&self) -> Result<Corpus, CorpusError> {
        Ok(ingest(self.csv.as_bytes(), SourceFormat::Csv, &csv_schema())?.corpus)
    }

    pub fn tagger(&self, categories: CategorySet) -> Result<GazetteerTagger, GazetteerError> {
        GazetteerTagger::parse(categories, &self.gazetteer)
    }
}

/// Writes an Enron-shaped CSV of `messages` single-recipient records between
/// `participants` people over 1999–2002. Pair activity is heavy-tailed and a
/// third of traffic comes in short reply bursts.
pub fn write_enron_shaped<W: Write>(
    out: W,
    participants: usize,
    messages: usize,
    seed: u64,
) -> Result<(), CorpusError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ids = participant_ids(participants);
    let start = utc(1999, 1, 1);
    let end = utc(2002, 12, 31);
    // heavy-tailed choice over ordered pairs; rank is shuffled so heavy
    // pairs are spread across the matrix
    let mut pairs: Vec<(usize, usize)> = (0..participants)
        .flat_map(|a| (0..participants).filter(move |&b| b != a).map(move |b| (a, b)))
        .collect();
    pairs.shuffle(&mut rng);
    let zipf = Zipf::new(pairs.len() as f64, 1.1).expect("valid zipf parameters");

    let mut w = csv::Writer::from_writer(out);
    w.write_record(["id", "sender", "receiver", "time", "content"])?;
    let mut written = 0usize;
    while written < messages {
        let (a, b) = pairs[zipf.sample(&mut rng) as usize - 1];
        let mut t = rng.random_range(start..end);
        let burst = if rng.random_bool(0.33) { rng.random_range(2..6) } else { 1 };
        for k in 0..burst.min(messages - written) {
            let (s, r) = if k % 2 == 0 { (a, b) } else { (b, a) };
            let n = rng.random_range(3..10);
            let content: Vec<&str> = (0..n).map(|_| *FILLER.choose(&mut rng).unwrap()).collect();
            w.write_record([
                format!("s{written}").as_str(),
                &ids[s],
                &ids[r],
                &t.to_string(),
                &content.join(" "),
            ])?;
            written += 1;
            t += rng.random_range(60..3_600);
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn participant_ids_are_distinct() {
        let ids = participant_ids(400);
        let set: std::collections::HashSet<_> = ids.iter().collect();
        assert_eq!(set.len(), 400);
        assert_eq!(ids[0], "alan.adler@enron.com");
    }

    #[test]
    fn fraud_fixture_is_deterministic() {
        let a = FraudFixture::generate(DEMO_SEED);
        let b = FraudFixture::generate(DEMO_SEED);
        assert_eq!(a.csv, b.csv);
        assert_eq!(a.truth, b.truth);
        let c = a.corpus().unwrap();
        assert_eq!(c.participant_count(), ENRON_PARTICIPANTS);
        for id in &a.truth.planted {
            let m = c.message(c.message_idx(id).unwrap());
            assert_eq!(m.receiver, a.truth.receiver);
            assert!(a.truth.window.contains(m.timestamp));
        }
    }

    #[test]
    fn enron_shaped_counts() {
        let mut buf = Vec::new();
        write_enron_shaped(&mut buf, 20, 500, 1).unwrap();
        let report = ingest(buf.as_slice(), SourceFormat::Csv, &csv_schema()).unwrap();
        assert!(report.rejects.is_empty());
        assert_eq!(report.corpus.message_count(), 500);
        assert!(report.corpus.participant_count() <= 20);
    }
}

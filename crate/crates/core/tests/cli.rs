use std::fs;
use std::path::Path;

use commlevels::cli::run;
use commlevels::fixture::{FraudTruth, DEMO_SEED};

fn cli(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("commlevels").chain(args.iter().copied());
    let code = run(argv, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn demo(dir: &Path) -> FraudTruth {
    let (code, _, err) = cli(&["demo", "--out", p(dir)]);
    assert_eq!(code, 0, "{err}");
    serde_json::from_str(&fs::read_to_string(dir.join("truth.json")).unwrap()).unwrap()
}

#[test]
fn demo_is_byte_identical_across_runs() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    demo(a.path());
    demo(b.path());
    for file in ["messages.csv", "gazetteer.txt", "corpus.json", "annotations.jsonl", "truth.json"] {
        assert_eq!(fs::read(a.path().join(file)).unwrap(), fs::read(b.path().join(file)).unwrap(), "{file}");
    }
    let (_, _, _) = cli(&["demo", "--out", p(&a.path().join("other")), "--seed", &(DEMO_SEED + 1).to_string()]);
    assert_ne!(
        fs::read(a.path().join("messages.csv")).unwrap(),
        fs::read(a.path().join("other/messages.csv")).unwrap()
    );
}

#[test]
fn proximity_query_returns_planted_messages() {
    let dir = tempfile::tempdir().unwrap();
    let truth = demo(dir.path());
    let corpus = dir.path().join("corpus.json");
    for source in [["--annotations", "annotations.jsonl"], ["--gazetteer", "gazetteer.txt"]] {
        let side = dir.path().join(source[1]);
        let (code, out, err) = cli(&["query", "--corpus", p(&corpus), source[0], p(&side), "--q", "PERSON ~7 GPE"]);
        assert_eq!(code, 0, "{err}");
        let mut ids: Vec<&str> = out.lines().collect();
        ids.sort();
        assert_eq!(ids, truth.planted);
    }
    let (code, _, err) = cli(&["query", "--corpus", p(&corpus), "--q", "PERSON ~ GPE"]);
    assert_eq!(code, 1);
    assert!(err.contains("query"), "{err}");
}

#[test]
fn ingest_reproduces_the_demo_corpus() {
    let dir = tempfile::tempdir().unwrap();
    demo(dir.path());
    let out = dir.path().join("again.json");
    let (code, text, err) = cli(&[
        "ingest",
        "--input",
        p(&dir.path().join("messages.csv")),
        "--schema",
        "sender=sender,receiver=receiver,time=time,content=content,id=id",
        "--out",
        p(&out),
    ]);
    assert_eq!(code, 0, "{err}");
    assert!(text.starts_with("3051 messages, 151 participants, 0 rejected"), "{text}");
    assert_eq!(fs::read(out).unwrap(), fs::read(dir.path().join("corpus.json")).unwrap());

    let (code, _, _) = cli(&["ingest", "--input", p(&dir.path().join("messages.csv")), "--schema", "from=x", "--out", "x"]);
    assert_eq!(code, 1);
    let (code, _, _) = cli(&["ingest", "--input", p(&dir.path().join("missing.csv")), "--out", p(&dir.path().join("x"))]);
    assert_eq!(code, 2);
}

#[test]
fn episodes_on_empty_corpus_print_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("empty.csv");
    fs::write(&csv, "sender,receiver,time,content\n").unwrap();
    let corpus = dir.path().join("empty.json");
    assert_eq!(cli(&["ingest", "--input", p(&csv), "--out", p(&corpus)]).0, 0);
    let (code, out, _) = cli(&["episodes", "--corpus", p(&corpus)]);
    assert_eq!((code, out.as_str()), (0, ""));
}

#[test]
fn episodes_honor_config_and_flags() {
    let dir = tempfile::tempdir().unwrap();
    let truth = demo(dir.path());
    let corpus = dir.path().join("corpus.json");
    let pair = format!("{},{}", truth.senders[0], truth.receiver);
    let (code, default_out, _) = cli(&["episodes", "--corpus", p(&corpus), "--pair", &pair]);
    assert_eq!(code, 0);
    let mut lines = default_out.lines();
    assert_eq!(lines.next(), Some("pair_a,pair_b,episode_id,start,end,count,balance,peak"));
    assert!(lines.count() >= 1);

    let config = dir.path().join("narrow.toml");
    fs::write(&config, "[dynamics]\nsigma = 1.0\ntheta = 0.99\nminMessages = 2\n").unwrap();
    let (code, narrow, err) = cli(&["--config", p(&config), "episodes", "--corpus", p(&corpus)]);
    assert_eq!(code, 0, "{err}");
    assert_eq!(narrow, "");
    let (code, widened, _) = cli(&["--config", p(&config), "episodes", "--corpus", p(&corpus), "--sigma", "21600", "--min-messages", "1"]);
    assert_eq!(code, 0);
    assert!(!widened.is_empty());

    assert_eq!(cli(&["episodes", "--corpus", p(&corpus), "--sigma", "-1"]).0, 1);
    assert_eq!(cli(&["episodes", "--corpus", p(&corpus), "--pair", "nobody,x"]).0, 2);
    fs::write(&config, "[dynamics]\nwidth = 3\n").unwrap();
    assert_eq!(cli(&["--config", p(&config), "episodes", "--corpus", p(&corpus)]).0, 2);
}

#[test]
fn train_then_score() {
    let dir = tempfile::tempdir().unwrap();
    let truth = demo(dir.path());
    let corpus = dir.path().join("corpus.json");
    let ann = dir.path().join("annotations.jsonl");
    let (_, episodes, _) = cli(&["episodes", "--corpus", p(&corpus)]);
    let mut labels = String::from("episode_id,label\n");
    let mut pos = 0;
    let mut neg = 0;
    for line in episodes.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        let planted = [f[0], f[1]].contains(&truth.receiver.as_str())
            && truth.senders.iter().any(|s| s == f[0] || s == f[1]);
        if planted && pos < 4 {
            labels.push_str(&format!("{},relevant\n", f[2]));
            pos += 1;
        } else if !planted && neg < 4 {
            labels.push_str(&format!("{},irrelevant\n", f[2]));
            neg += 1;
        }
    }
    let labels_path = dir.path().join("labels.csv");
    fs::write(&labels_path, labels).unwrap();
    let model = dir.path().join("model.json");
    let (code, out, err) = cli(&[
        "train", "--corpus", p(&corpus), "--annotations", p(&ann), "--labels", p(&labels_path),
        "--out", p(&model), "--trees", "25", "--seed", "4",
    ]);
    assert_eq!(code, 0, "{err}");
    assert_eq!(out.trim(), "trained 25 trees on 8 labels");

    let (code, scores, err) = cli(&["score", "--corpus", p(&corpus), "--annotations", p(&ann), "--model", p(&model)]);
    assert_eq!(code, 0, "{err}");
    assert_eq!(scores.lines().count(), episodes.lines().count());
    for line in scores.lines().skip(1) {
        let fade: f64 = line.rsplit(',').next().unwrap().parse().unwrap();
        assert!((0.15..=1.0).contains(&fade));
    }

    // a file that is not a model is rejected
    let (code, _, err) = cli(&["score", "--corpus", p(&corpus), "--model", p(&labels_path)]);
    assert_eq!(code, 2, "{err}");
}

#[test]
fn report_script_and_replay() {
    let dir = tempfile::tempdir().unwrap();
    let truth = demo(dir.path());
    let corpus = dir.path().join("corpus.json");
    let gaz = dir.path().join("gazetteer.txt");
    let before = fs::read(&corpus).unwrap();
    let state = serde_json::json!({
        "levels": [
            {"level": "timefilter", "enabled": true, "params": truth.window},
            {"level": "thematic", "enabled": true, "params": {"query": truth.thematic_query}}
        ]
    });
    let script = dir.path().join("script.jsonl");
    fs::write(
        &script,
        format!(
            "{}\n{}\n{}\n{}\n",
            serde_json::json!({"commit": state}),
            serde_json::json!({"star": 1}),
            serde_json::json!({"note": {"node": 1, "text": "Jan-Sep, all four categories"}}),
            serde_json::json!({"navigate": 0}),
        ),
    )
    .unwrap();
    let report = dir.path().join("report.md");
    let (code, _, err) = cli(&["report", "--corpus", p(&corpus), "--gazetteer", p(&gaz), "--script", p(&script), "--out", p(&report)]);
    assert_eq!(code, 0, "{err}");
    let text = fs::read_to_string(&report).unwrap();
    assert!(text.contains("Jan-Sep, all four categories"));

    let (code, out, err) = cli(&["report", "--corpus", p(&corpus), "--gazetteer", p(&gaz), "--replay", p(&report)]);
    assert_eq!(code, 0, "{err}");
    assert_eq!(out, "node 0: ok\nnode 1: ok\n");

    // without annotations the thematic node selects nothing, so it no longer replays
    let (code, out, _) = cli(&["report", "--corpus", p(&corpus), "--replay", p(&report)]);
    assert_eq!(code, 2);
    assert!(out.contains("node 1: MISMATCH"));

    fs::write(&script, "{\"navigate\": 5}\n").unwrap();
    assert_eq!(cli(&["report", "--corpus", p(&corpus), "--script", p(&script)]).0, 2);
    assert_eq!(cli(&["report", "--corpus", p(&corpus)]).0, 1);
    assert_eq!(fs::read(&corpus).unwrap(), before);
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(cli(&[]).0, 1);
    assert_eq!(cli(&["frobnicate"]).0, 1);
    assert_eq!(cli(&["query", "--q", "PERSON"]).0, 1);
    let (code, out, _) = cli(&["--help"]);
    assert_eq!(code, 0);
    assert!(out.contains("episodes"));
}

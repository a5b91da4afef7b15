//! Batch entry points. Exit codes: 0 success, 1 usage, 2 data error.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use parking_lot::RwLock;
use serde::Deserialize;

use crate::corpus::{ingest, Corpus, Schema, SourceFormat};
use crate::dynamics::DynamicsParams;
use crate::fixture::{csv_schema, FraudFixture, DEMO_SEED};
use crate::levels::{AnalysisContext, LevelState};
use crate::matrixview;
use crate::provenance::{replay, Report, SessionState};
use crate::retrieval::{fade_factor, train, ForestConfig, Label, LabeledExample, RelevanceModel};
use crate::session::Session;
use crate::thematic::{
    annotate, matches, parse_query, AnnotationIndex, CategorySet, GazetteerTagger,
};

#[derive(Parser, Debug)]
#[command(name = "commlevels", version, about = "Level-based analysis of communication corpora")]
struct Cli {
    /// TOML file overriding default categories, dynamics and forest settings.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Read CSV or JSONL records into a corpus file.
    Ingest {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value = "csv")]
        format: String,
        /// Field mapping, e.g. `sender=from,receiver=to,time=date,content=body`.
        #[arg(long)]
        schema: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Tag entities with a gazetteer and write the annotation index.
    Annotate {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        gazetteer: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print ids of messages matching a concept query.
    Query {
        #[command(flatten)]
        input: AnalysisInput,
        #[arg(long = "q")]
        query: String,
    },
    /// Print conversation episodes as CSV.
    Episodes {
        #[arg(long)]
        corpus: PathBuf,
        /// Restrict to one pair: `a,b`.
        #[arg(long)]
        pair: Option<String>,
        #[command(flatten)]
        dynamics: DynamicsArgs,
    },
    /// Train a relevance model from episode labels (`episode_id,label` CSV).
    Train {
        #[command(flatten)]
        input: AnalysisInput,
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        dynamics: DynamicsArgs,
        #[arg(long)]
        trees: Option<usize>,
        #[arg(long)]
        max_depth: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Score every episode with a trained model.
    Score {
        #[command(flatten)]
        input: AnalysisInput,
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value_t = 0.5)]
        threshold: f64,
        #[command(flatten)]
        dynamics: DynamicsArgs,
    },
    /// Build a provenance report from a session script, or replay one.
    Report {
        #[command(flatten)]
        input: AnalysisInput,
        /// JSON lines of `{"commit":state}`, `{"navigate":n}`, `{"star":n}`,
        /// `{"note":{"node":n,"text":".."}}`.
        #[arg(long, conflicts_with = "replay")]
        script: Option<PathBuf>,
        #[arg(long, requires = "script")]
        out: Option<PathBuf>,
        /// Recompute every node of an exported report and compare digests.
        #[arg(long)]
        replay: Option<PathBuf>,
    },
    /// Serve the matrix API.
    Serve {
        #[command(flatten)]
        input: AnalysisInput,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
    },
    /// Write the seeded investigation fixture into a directory.
    Demo {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = DEMO_SEED)]
        seed: u64,
    },
}

#[derive(Args, Debug)]
struct AnalysisInput {
    #[arg(long)]
    corpus: PathBuf,
    /// Annotation index written by `annotate`.
    #[arg(long, conflicts_with = "gazetteer")]
    annotations: Option<PathBuf>,
    /// Annotate on the fly with this gazetteer.
    #[arg(long)]
    gazetteer: Option<PathBuf>,
}

#[derive(Args, Debug, Default)]
struct DynamicsArgs {
    #[arg(long, allow_hyphen_values = true)]
    mu: Option<f64>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    h: Option<f64>,
    #[arg(long)]
    theta: Option<f64>,
    #[arg(long)]
    min_messages: Option<usize>,
}

/// Settings file. Every section is optional.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub categories: Option<Vec<String>>,
    pub dynamics: Option<DynamicsParams>,
    pub forest: Option<ForestConfig>,
}

impl Config {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }

    fn categories(&self) -> CategorySet {
        self.categories
            .as_ref()
            .map_or_else(CategorySet::default, |c| CategorySet::new(c.iter()))
    }

    fn dynamics(&self, args: &DynamicsArgs) -> anyhow::Result<DynamicsParams> {
        let mut p = self.dynamics.unwrap_or_default();
        if let Some(v) = args.mu {
            p.mu = v;
        }
        if let Some(v) = args.sigma {
            p.sigma = v;
        }
        if let Some(v) = args.h {
            p.h = v;
        }
        if let Some(v) = args.theta {
            p.theta = v;
        }
        if let Some(v) = args.min_messages {
            p.min_messages = v;
        }
        p.validate()?;
        Ok(p)
    }
}

enum Failure {
    Usage(String),
    Data(anyhow::Error),
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Data(e.into())
    }
}

/// Parses `args` (including the program name) and runs the subcommand.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let text = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{text}");
                    0
                }
                _ => {
                    let _ = write!(err, "{text}");
                    1
                }
            };
        }
    };
    match execute(cli, out) {
        Ok(()) => 0,
        Err(Failure::Usage(msg)) => {
            let _ = writeln!(err, "error: {msg}");
            1
        }
        // the reader went away, as with `| head`
        Err(Failure::Data(e))
            if e.chain().any(|c| {
                c.downcast_ref::<std::io::Error>()
                    .is_some_and(|io| io.kind() == std::io::ErrorKind::BrokenPipe)
            }) =>
        {
            0
        }
        Err(Failure::Data(e)) => {
            let _ = writeln!(err, "error: {e:#}");
            2
        }
    }
}

fn load_corpus(path: &Path) -> anyhow::Result<Corpus> {
    Corpus::load(path).with_context(|| format!("loading corpus {}", path.display()))
}

fn load_context(input: &AnalysisInput, config: &Config) -> anyhow::Result<AnalysisContext> {
    let corpus = Arc::new(load_corpus(&input.corpus)?);
    let categories = config.categories();
    let annotations = match (&input.annotations, &input.gazetteer) {
        (Some(path), _) => {
            let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
            AnnotationIndex::read_jsonl(&corpus, BufReader::new(file))
                .with_context(|| format!("reading annotations {}", path.display()))?
        }
        (None, Some(path)) => {
            let tagger = GazetteerTagger::load(categories.clone(), path)
                .with_context(|| format!("loading gazetteer {}", path.display()))?;
            annotate(&corpus, &tagger)
        }
        (None, None) => AnnotationIndex::empty_for(&corpus),
    };
    Ok(AnalysisContext::new(corpus, annotations, categories))
}

fn create(path: &Path) -> anyhow::Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

/// Session at an unfiltered root with the given dynamics parameters.
fn dynamics_session(ctx: AnalysisContext, params: DynamicsParams) -> anyhow::Result<Session> {
    let mut session = Session::new(Arc::new(ctx));
    if params != DynamicsParams::default() {
        session.commit(SessionState::new(vec![LevelState::dynamics(params)]))?;
    }
    Ok(session)
}

#[derive(Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
enum ScriptStep {
    Commit(SessionState),
    Navigate(u64),
    Star(u64),
    Note { node: u64, text: String },
}

fn execute(cli: Cli, out: &mut dyn Write) -> Result<(), Failure> {
    let config = match &cli.config {
        Some(path) => Config::load(path)?,
        None => Config::default(),
    };
    match cli.command {
        Command::Ingest { input, format, schema, out: dest } => {
            let format: SourceFormat = format.parse().map_err(|e| Failure::Usage(format!("{e}")))?;
            let schema = match schema {
                Some(s) => s.parse::<Schema>().map_err(|e| Failure::Usage(format!("{e}")))?,
                None => Schema::default(),
            };
            let file = File::open(&input).with_context(|| format!("opening {}", input.display()))?;
            let report = ingest(BufReader::new(file), format, &schema)?;
            report.corpus.save(&dest)?;
            writeln!(
                out,
                "{} messages, {} participants, {} rejected records",
                report.corpus.message_count(),
                report.corpus.participant_count(),
                report.rejects.len()
            )
            .context("writing output")?;
            for r in &report.rejects {
                writeln!(out, "rejected line {}: {}", r.line, r.reason).context("writing output")?;
            }
        }
        Command::Annotate { corpus, gazetteer, out: dest } => {
            let corpus = load_corpus(&corpus)?;
            let tagger = GazetteerTagger::load(config.categories(), &gazetteer)
                .with_context(|| format!("loading gazetteer {}", gazetteer.display()))?;
            let index = annotate(&corpus, &tagger);
            let mut w = create(&dest)?;
            index.write_jsonl(&corpus, &mut w)?;
            w.flush().context("writing annotations")?;
            writeln!(out, "{} annotations over {} messages", index.total(), corpus.message_count())
                .context("writing output")?;
        }
        Command::Query { input, query } => {
            let ctx = load_context(&input, &config)?;
            let q = parse_query(&query, ctx.categories())
                .map_err(|e| Failure::Usage(format!("query: {e}")))?;
            let corpus = ctx.corpus();
            for (i, m) in corpus.messages().iter().enumerate() {
                if matches(&q, ctx.annotations().get(crate::corpus::MessageIdx(i as u32))) {
                    writeln!(out, "{}", m.id).context("writing output")?;
                }
            }
        }
        Command::Episodes { corpus, pair, dynamics } => {
            let params = config.dynamics(&dynamics).map_err(|e| Failure::Usage(format!("{e:#}")))?;
            let corpus = load_corpus(&corpus)?;
            let only = match pair {
                Some(p) => {
                    let Some((a, b)) = p.split_once(',') else {
                        return Err(Failure::Usage("--pair expects `a,b`".into()));
                    };
                    let (a, b) = (corpus.participant_idx(a.trim()), corpus.participant_idx(b.trim()));
                    Some((a.map_err(anyhow::Error::from)?, b.map_err(anyhow::Error::from)?))
                }
                None => None,
            };
            let session = dynamics_session(AnalysisContext::without_annotations(Arc::new(corpus)), params)?;
            let view = session.current_view();
            let set = session.episodes(&view);
            let corpus = session.context().corpus();
            let mut header = false;
            for (id, ep) in set.iter() {
                if let Some((a, b)) = only {
                    if (ep.pair.0, ep.pair.1) != (a.min(b), a.max(b)) {
                        continue;
                    }
                }
                if !header {
                    writeln!(out, "pair_a,pair_b,episode_id,start,end,count,balance,peak")
                        .context("writing output")?;
                    header = true;
                }
                let f = crate::dynamics::episode_features(ep, corpus);
                writeln!(
                    out,
                    "{},{},{},{},{},{},{},{}",
                    corpus.participant(ep.pair.0).id,
                    corpus.participant(ep.pair.1).id,
                    id,
                    ep.start,
                    ep.end,
                    ep.len(),
                    f[2],
                    ep.peak_density
                )
                .context("writing output")?;
            }
        }
        Command::Train { input, labels, out: dest, dynamics, trees, max_depth, seed } => {
            let params = config.dynamics(&dynamics).map_err(|e| Failure::Usage(format!("{e:#}")))?;
            let mut forest = config.forest.unwrap_or_default();
            forest.tree_count = trees.unwrap_or(forest.tree_count);
            forest.max_depth = max_depth.unwrap_or(forest.max_depth);
            forest.seed = seed.unwrap_or(forest.seed);
            let session = dynamics_session(load_context(&input, &config)?, params)?;
            let view = session.current_view();
            let set = session.episodes(&view);
            let mut reader = csv::Reader::from_path(&labels)
                .with_context(|| format!("opening {}", labels.display()))?;
            let mut examples = Vec::new();
            for row in reader.records() {
                let row = row.context("reading labels")?;
                let (Some(id), Some(label)) = (row.get(0), row.get(1)) else {
                    return Err(anyhow::anyhow!("label rows need `episode_id,label`").into());
                };
                let label: Label = label.trim().parse().map_err(anyhow::Error::msg)?;
                let Some(ep) = set.get(id.trim()) else {
                    return Err(anyhow::anyhow!("unknown episode `{id}`").into());
                };
                examples.push(LabeledExample {
                    target_id: id.trim().to_string(),
                    label,
                    features: session.episode_features(&view, ep).values,
                });
            }
            let model = train(&examples, &forest).context("training")?;
            fs::write(&dest, model.to_json()).with_context(|| format!("writing {}", dest.display()))?;
            writeln!(out, "trained {} trees on {} labels", model.trees.len(), examples.len())
                .context("writing output")?;
        }
        Command::Score { input, model, threshold, dynamics } => {
            let params = config.dynamics(&dynamics).map_err(|e| Failure::Usage(format!("{e:#}")))?;
            let text = fs::read_to_string(&model).with_context(|| format!("reading {}", model.display()))?;
            let model = RelevanceModel::from_json(&text).context("parsing model")?;
            let session = dynamics_session(load_context(&input, &config)?, params)?;
            let view = session.current_view();
            let set = session.episodes(&view);
            writeln!(out, "episode_id,p,uncertainty,fade").context("writing output")?;
            for (id, ep) in set.iter() {
                let x = session.episode_features(&view, ep).values;
                if x.len() != model.feature_dim {
                    bail_data(format!(
                        "model expects {} features, episodes have {}",
                        model.feature_dim,
                        x.len()
                    ))?;
                }
                let s = model.score(&x);
                writeln!(out, "{id},{},{},{}", s.p, s.uncertainty, fade_factor(s.p, threshold))
                    .context("writing output")?;
            }
        }
        Command::Report { input, script, out: dest, replay: replay_path } => {
            let ctx = load_context(&input, &config)?;
            match (script, replay_path) {
                (Some(script), _) => {
                    let mut session = Session::new(Arc::new(ctx));
                    let file = File::open(&script).with_context(|| format!("opening {}", script.display()))?;
                    for (n, line) in BufReader::new(file).lines().enumerate() {
                        let line = line.context("reading script")?;
                        if line.trim().is_empty() {
                            continue;
                        }
                        let step: ScriptStep = serde_json::from_str(&line)
                            .with_context(|| format!("script line {}", n + 1))?;
                        let result = match step {
                            ScriptStep::Commit(state) => session.commit(state).map(drop),
                            ScriptStep::Navigate(id) => session.navigate(id).map(drop),
                            ScriptStep::Star(id) => session.set_starred(id, true),
                            ScriptStep::Note { node, text } => session.set_note(node, Some(text)),
                        };
                        result.with_context(|| format!("script line {}", n + 1))?;
                    }
                    let report = session.report();
                    match dest {
                        Some(path) => report.write(&path)?,
                        None => write!(out, "{}", report.render()).context("writing output")?,
                    }
                }
                (None, Some(path)) => {
                    let report = Report::read(&path)?;
                    let checks = replay(&ctx, &report)?;
                    let mut failed = 0;
                    for c in &checks {
                        let verdict = if c.matches() { "ok" } else { "MISMATCH" };
                        failed += usize::from(!c.matches());
                        writeln!(out, "node {}: {verdict}", c.node_id).context("writing output")?;
                    }
                    if failed > 0 {
                        bail_data(format!("{failed} of {} nodes did not replay", checks.len()))?;
                    }
                }
                (None, None) => return Err(Failure::Usage("give --script or --replay".into())),
            }
        }
        Command::Serve { input, port, host } => {
            let addr: SocketAddr = format!("{host}:{port}")
                .parse()
                .map_err(|e| Failure::Usage(format!("address: {e}")))?;
            let mut session = Session::new(Arc::new(load_context(&input, &config)?));
            if let Some(forest) = config.forest {
                session.set_forest_config(forest);
            }
            let runtime = tokio::runtime::Runtime::new().context("starting runtime")?;
            writeln!(out, "serving on http://{addr}").context("writing output")?;
            out.flush().context("writing output")?;
            runtime
                .block_on(matrixview::serve(Arc::new(RwLock::new(session)), addr))
                .context("serving")?;
        }
        Command::Demo { out: dir, seed } => {
            let fixture = FraudFixture::generate(seed);
            fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
            let corpus = fixture.corpus()?;
            let tagger = fixture.tagger(config.categories()).context("demo gazetteer")?;
            let index = annotate(&corpus, &tagger);
            fs::write(dir.join("messages.csv"), &fixture.csv).context("writing messages.csv")?;
            fs::write(dir.join("gazetteer.txt"), &fixture.gazetteer).context("writing gazetteer.txt")?;
            corpus.save(dir.join("corpus.json"))?;
            let mut w = create(&dir.join("annotations.jsonl"))?;
            index.write_jsonl(&corpus, &mut w)?;
            w.flush().context("writing annotations")?;
            let truth = serde_json::to_string_pretty(&fixture.truth).context("encoding truth")?;
            fs::write(dir.join("truth.json"), truth + "\n").context("writing truth.json")?;
            writeln!(
                out,
                "wrote {} messages between {} participants to {} (csv schema: {})",
                corpus.message_count(),
                corpus.participant_count(),
                dir.display(),
                csv_schema(),
            )
            .context("writing output")?;
        }
    }
    Ok(())
}

fn bail_data(msg: String) -> anyhow::Result<()> {
    bail!(msg)
}

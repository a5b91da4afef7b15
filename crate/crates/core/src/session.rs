//! One analyst session: filter history, per-node selections and episodes,
//! relevance labels and the current model.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::ops::Range;
use std::path::Path;
use std::sync::{Arc, OnceLock};

use parking_lot::Mutex;
use serde::Serialize;
use thiserror::Error;

use crate::corpus::{Corpus, MessageIdx, ParticipantIdx};
use crate::dynamics::{segment_stream_with, Episode, KernelTable};
use crate::levels::{
    apply_setup, feature_vector_for_setup, AnalysisContext, FeatureTarget, FeatureVector,
    LevelConfig, LevelError, LevelSetup, Selection,
};
use crate::provenance::{
    selection_digest, ProvenanceError, ProvenanceGraph, Report, SessionState,
};
use crate::retrieval::{
    fade_factor, rank_ambiguous, train, ForestConfig, Label, LabeledExample, RelevanceModel,
    Score, TrainError,
};

#[derive(Debug, Error)]
pub enum SessionError {
    #[error(transparent)]
    Level(#[from] LevelError),
    #[error(transparent)]
    Provenance(#[from] ProvenanceError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error("unknown episode `{0}`")]
    UnknownEpisode(String),
    #[error("invalid threshold {0}; expected a value in [0, 1]")]
    Threshold(f64),
}

/// An episode id handed out with glyphs. All ids of one episode set share
/// a single text buffer, so cloning one is a reference count bump.
#[derive(Clone)]
pub struct EpisodeId {
    text: Arc<str>,
    start: u32,
    end: u32,
}

impl EpisodeId {
    pub fn as_str(&self) -> &str {
        &self.text[self.start as usize..self.end as usize]
    }
}

impl std::ops::Deref for EpisodeId {
    type Target = str;

    fn deref(&self) -> &str {
        self.as_str()
    }
}

impl std::fmt::Display for EpisodeId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self)
    }
}

impl std::fmt::Debug for EpisodeId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        std::fmt::Debug::fmt(self.as_str(), f)
    }
}

impl PartialEq for EpisodeId {
    fn eq(&self, other: &Self) -> bool {
        self.as_str() == other.as_str()
    }
}

impl PartialEq<str> for EpisodeId {
    fn eq(&self, other: &str) -> bool {
        self.as_str() == other
    }
}

impl PartialEq<&str> for EpisodeId {
    fn eq(&self, other: &&str) -> bool {
        self.as_str() == *other
    }
}

impl Serialize for EpisodeId {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self)
    }
}

/// Episodes of every pair with selected traffic at one provenance node.
#[derive(Debug)]
pub struct EpisodeSet {
    corpus: Arc<Corpus>,
    /// Grouped by pair, by start within a pair.
    episodes: Vec<Episode>,
    /// Shared with the glyphs and scores handed out.
    ids: Vec<EpisodeId>,
    /// Episode ids name their first message.
    by_first: HashMap<MessageIdx, usize>,
    /// Keyed by `(min, max)` participant position.
    by_pair: HashMap<(ParticipantIdx, ParticipantIdx), Range<usize>>,
}

impl EpisodeSet {
    fn build(ctx: &AnalysisContext, setup: &LevelSetup, selection: &Selection) -> Self {
        let corpus = ctx.corpus();
        let params = setup.dynamics_params();
        let table = KernelTable::new(&params);
        let mut episodes = Vec::with_capacity(selection.len() / 4);
        let mut by_pair = HashMap::new();
        let (buffer, ranges) = pair_streams(corpus, selection);
        for (pair, range) in ranges {
            let first = episodes.len();
            episodes.extend(segment_stream_with(corpus, pair, &buffer[range], &params, &table));
            if episodes.len() > first {
                by_pair.insert(pair, first..episodes.len());
            }
        }
        let mut text = String::new();
        let mut ends = Vec::with_capacity(episodes.len());
        for ep in &episodes {
            text.push_str("ep:");
            text.push_str(&corpus.message(ep.messages[0]).id);
            ends.push(text.len() as u32);
        }
        let text: Arc<str> = Arc::from(text);
        let mut start = 0;
        let ids = ends
            .into_iter()
            .map(|end| {
                let id = EpisodeId { text: text.clone(), start, end };
                start = end;
                id
            })
            .collect();
        let by_first = episodes.iter().enumerate().map(|(i, ep)| (ep.messages[0], i)).collect();
        EpisodeSet { corpus: ctx.corpus_arc().clone(), episodes, ids, by_first, by_pair }
    }

    pub fn len(&self) -> usize {
        self.episodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.episodes.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&EpisodeId, &Episode)> {
        self.ids.iter().zip(&self.episodes)
    }

    pub fn get(&self, id: &str) -> Option<&Episode> {
        let first = self.corpus.message_idx(id.strip_prefix("ep:")?).ok()?;
        self.by_first.get(&first).map(|&i| &self.episodes[i])
    }

    /// Episodes between two participants in either order, by start.
    pub fn between(&self, a: ParticipantIdx, b: ParticipantIdx) -> impl Iterator<Item = (&EpisodeId, &Episode)> {
        self.by_pair
            .get(&(a.min(b), a.max(b)))
            .cloned()
            .into_iter()
            .flatten()
            .map(|i| (&self.ids[i], &self.episodes[i]))
    }
}

/// Selected messages grouped by unordered pair, each group chronological,
/// as one buffer plus a range per pair. Large selections are gathered from
/// the corpus pair index; small ones are sorted directly.
fn pair_streams(
    corpus: &Corpus,
    selection: &Selection,
) -> (Vec<MessageIdx>, Vec<((ParticipantIdx, ParticipantIdx), Range<usize>)>) {
    let mut buffer = Vec::with_capacity(selection.len());
    let mut ranges = Vec::new();
    if selection.len() * 8 < corpus.message_count() {
        let mut keyed: Vec<_> = selection
            .messages()
            .iter()
            .map(|&m| {
                let (s, r) = corpus.endpoints(m);
                ((s.min(r), s.max(r)), m)
            })
            .collect();
        keyed.sort_unstable();
        for chunk in keyed.chunk_by(|x, y| x.0 == y.0) {
            let start = buffer.len();
            buffer.extend(chunk.iter().map(|&(_, m)| m));
            ranges.push((chunk[0].0, start..buffer.len()));
        }
        return (buffer, ranges);
    }
    let everything = selection.len() == corpus.message_count();
    let mut selected = Vec::new();
    if !everything {
        selected = vec![false; corpus.message_count()];
        for &m in selection.messages() {
            selected[m.get()] = true;
        }
    }
    let keep = |m: &MessageIdx| everything || selected[m.get()];
    let mut pairs: Vec<_> = corpus
        .pair_buckets()
        .map(|((s, r), _)| (s.min(r), s.max(r)))
        .collect();
    pairs.sort_unstable();
    pairs.dedup();
    for (a, b) in pairs {
        let start = buffer.len();
        let forward = corpus.pair_messages(a, b);
        let backward = if a == b { &[][..] } else { corpus.pair_messages(b, a) };
        // both buckets are chronological; merge them
        let (mut i, mut j) = (0, 0);
        while i < forward.len() || j < backward.len() {
            let m = if j == backward.len() || (i < forward.len() && forward[i] < backward[j]) {
                i += 1;
                forward[i - 1]
            } else {
                j += 1;
                backward[j - 1]
            };
            if keep(&m) {
                buffer.push(m);
            }
        }
        if buffer.len() > start {
            ranges.push(((a, b), start..buffer.len()));
        }
    }
    (buffer, ranges)
}

/// A provenance node's state, evaluated.
#[derive(Debug)]
pub struct NodeView {
    pub node_id: u64,
    pub state: SessionState,
    pub setup: LevelSetup,
    pub selection: Selection,
    episodes: OnceLock<Arc<EpisodeSet>>,
}

#[derive(Clone, Debug, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct EpisodeScore {
    pub episode_id: String,
    pub p: f64,
    pub uncertainty: f64,
    pub fade: f64,
}

#[derive(Clone, Debug, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct LabelOutcome {
    pub target_id: String,
    pub label: Label,
    pub labeled: usize,
    pub model_trained: bool,
    pub scores: Vec<EpisodeScore>,
}

pub type Clock = Arc<dyn Fn() -> i64 + Send + Sync>;

pub fn system_clock() -> Clock {
    Arc::new(|| chrono::Utc::now().timestamp())
}

pub struct Session {
    ctx: Arc<AnalysisContext>,
    corpus_hash: String,
    graph: ProvenanceGraph,
    clock: Clock,
    views: Mutex<HashMap<u64, Arc<NodeView>>>,
    labels: BTreeMap<String, LabeledExample>,
    model: Option<RelevanceModel>,
    forest: ForestConfig,
}

impl Session {
    pub fn new(ctx: Arc<AnalysisContext>) -> Self {
        Self::with_clock(ctx, system_clock())
    }

    /// Starts at an unfiltered root node.
    pub fn with_clock(ctx: Arc<AnalysisContext>, clock: Clock) -> Self {
        let root = SessionState::default();
        let selection = Selection::all(ctx.corpus());
        let graph = ProvenanceGraph::new(
            root.canonical(),
            selection_digest(ctx.corpus(), &selection),
            selection.len(),
            clock(),
        );
        let view = Arc::new(NodeView {
            node_id: 0,
            state: root,
            setup: LevelSetup::default(),
            selection,
            episodes: OnceLock::new(),
        });
        Self {
            corpus_hash: ctx.corpus().identity_hash(),
            ctx,
            graph,
            clock,
            views: Mutex::new(HashMap::from([(0, view)])),
            labels: BTreeMap::new(),
            model: None,
            forest: ForestConfig::default(),
        }
    }

    pub fn set_forest_config(&mut self, config: ForestConfig) {
        self.forest = config;
    }

    pub fn context(&self) -> &Arc<AnalysisContext> {
        &self.ctx
    }

    pub fn corpus_hash(&self) -> &str {
        &self.corpus_hash
    }

    pub fn graph(&self) -> &ProvenanceGraph {
        &self.graph
    }

    pub fn model(&self) -> Option<&RelevanceModel> {
        self.model.as_ref()
    }

    pub fn labels(&self) -> impl Iterator<Item = &LabeledExample> {
        self.labels.values()
    }

    fn evaluate(&self, node_id: u64, state: SessionState) -> Result<NodeView, SessionError> {
        if !(0.0..=1.0).contains(&state.threshold) {
            return Err(SessionError::Threshold(state.threshold));
        }
        let setup = LevelSetup::validate(&self.ctx, &state.levels)?;
        let selection = apply_setup(&self.ctx, &setup);
        Ok(NodeView {
            node_id,
            state,
            setup,
            selection,
            episodes: OnceLock::new(),
        })
    }

    /// Records `state` as a child of the current node and moves there.
    /// Re-committing the current state returns the current node unchanged.
    pub fn commit(&mut self, state: SessionState) -> Result<u64, SessionError> {
        let next_id = self.graph.nodes().len() as u64;
        let view = self.evaluate(next_id, state)?;
        let digest = selection_digest(self.ctx.corpus(), &view.selection);
        let id = self.graph.commit(
            view.state.canonical(),
            digest,
            view.selection.len(),
            (self.clock)(),
        );
        if id == next_id {
            self.views.lock().insert(id, Arc::new(view));
        }
        Ok(id)
    }

    /// Evaluated view of a node, computed on first use.
    pub fn view(&self, node_id: u64) -> Result<Arc<NodeView>, SessionError> {
        if let Some(v) = self.views.lock().get(&node_id) {
            return Ok(v.clone());
        }
        let node = self.graph.node(node_id)?;
        let state = SessionState::from_canonical(&node.state_snapshot).map_err(ProvenanceError::from)?;
        let view = Arc::new(self.evaluate(node_id, state)?);
        self.views.lock().insert(node_id, view.clone());
        Ok(view)
    }

    pub fn current_view(&self) -> Arc<NodeView> {
        self.view(self.graph.current())
            .expect("current node was evaluated when committed")
    }

    /// Moves to `node_id`, recomputing its selection from the stored state and
    /// checking it against the recorded digest.
    pub fn navigate(&mut self, node_id: u64) -> Result<Arc<NodeView>, SessionError> {
        let node = self.graph.node(node_id)?.clone();
        let state = SessionState::from_canonical(&node.state_snapshot).map_err(ProvenanceError::from)?;
        let view = self.evaluate(node_id, state)?;
        let actual = selection_digest(self.ctx.corpus(), &view.selection);
        if actual != node.selection_digest {
            return Err(ProvenanceError::DigestMismatch {
                node: node_id,
                expected: node.selection_digest,
                actual,
            }
            .into());
        }
        let view = Arc::new(view);
        self.views.lock().insert(node_id, view.clone());
        self.graph.move_to(node_id)?;
        Ok(view)
    }

    pub fn set_starred(&mut self, node_id: u64, starred: bool) -> Result<(), SessionError> {
        Ok(self.graph.set_starred(node_id, starred)?)
    }

    pub fn set_note(&mut self, node_id: u64, note: Option<String>) -> Result<(), SessionError> {
        Ok(self.graph.set_note(node_id, note)?)
    }

    pub fn report(&self) -> Report {
        Report::from_graph(&self.graph, self.corpus_hash.clone())
    }

    /// Writes the report; the session is untouched either way.
    pub fn export_report(&self, path: impl AsRef<Path>) -> Result<Report, SessionError> {
        let report = self.report();
        report.write(path)?;
        Ok(report)
    }

    pub fn episodes(&self, view: &NodeView) -> Arc<EpisodeSet> {
        view.episodes
            .get_or_init(|| Arc::new(EpisodeSet::build(&self.ctx, &view.setup, &view.selection)))
            .clone()
    }

    /// Feature layout used for relevance labels: entity counts followed by
    /// episode dynamics, independent of which filters are active.
    pub fn feature_setup(&self, view: &NodeView) -> LevelSetup {
        LevelSetup {
            configs: vec![
                (LevelConfig::Thematic(None), true),
                (LevelConfig::Dynamics(view.setup.dynamics_params()), true),
            ],
        }
    }

    pub fn episode_features(&self, view: &NodeView, episode: &Episode) -> FeatureVector {
        feature_vector_for_setup(&self.ctx, FeatureTarget::Episode(episode), &self.feature_setup(view))
            .expect("episode targets always resolve")
    }

    pub fn score_episode(&self, view: &NodeView, episode: &Episode) -> Option<Score> {
        let model = self.model.as_ref()?;
        Some(model.score(&self.episode_features(view, episode).values))
    }

    /// Scores and fades for every episode at the current node.
    pub fn episode_scores(&self) -> Vec<EpisodeScore> {
        let view = self.current_view();
        let set = self.episodes(&view);
        set.iter()
            .map(|(id, ep)| {
                let score = self.score_episode(&view, ep);
                EpisodeScore {
                    episode_id: id.to_string(),
                    p: score.map_or(1.0, |s| s.p),
                    uncertainty: score.map_or(0.0, |s| s.uncertainty),
                    fade: score.map_or(1.0, |s| fade_factor(s.p, view.state.threshold)),
                }
            })
            .collect()
    }

    /// Labels an episode of the current node and retrains once both classes
    /// are present. Labeling the same episode again replaces its label.
    pub fn label_episode(&mut self, episode_id: &str, label: Label) -> Result<LabelOutcome, SessionError> {
        let view = self.current_view();
        let set = self.episodes(&view);
        let episode = set
            .get(episode_id)
            .ok_or_else(|| SessionError::UnknownEpisode(episode_id.to_string()))?;
        let features = self.episode_features(&view, episode).values;
        self.labels.insert(
            episode_id.to_string(),
            LabeledExample {
                target_id: episode_id.to_string(),
                label,
                features,
            },
        );
        self.retrain()?;
        Ok(LabelOutcome {
            target_id: episode_id.to_string(),
            label,
            labeled: self.labels.len(),
            model_trained: self.model.is_some(),
            scores: self.episode_scores(),
        })
    }

    fn retrain(&mut self) -> Result<(), SessionError> {
        let examples: Vec<LabeledExample> = self.labels.values().cloned().collect();
        let classes: HashSet<Label> = examples.iter().map(|e| e.label).collect();
        self.model = if classes.len() == 2 {
            Some(train(&examples, &self.forest)?)
        } else {
            None
        };
        Ok(())
    }

    /// The `k` unlabeled episodes at the current node the model is least
    /// sure about. Empty until a model exists.
    pub fn ambiguous(&self, k: usize) -> Vec<(String, Score)> {
        let Some(model) = &self.model else {
            return Vec::new();
        };
        let view = self.current_view();
        let set = self.episodes(&view);
        let targets: Vec<(String, Vec<f64>)> = set
            .iter()
            .map(|(id, ep)| (id.to_string(), self.episode_features(&view, ep).values))
            .collect();
        let labeled: HashSet<String> = self.labels.keys().cloned().collect();
        let features: HashMap<&str, &Vec<f64>> =
            targets.iter().map(|(id, x)| (id.as_str(), x)).collect();
        rank_ambiguous(model, &targets, &labeled, k)
            .into_iter()
            .map(|id| {
                let score = model.score(features[id.as_str()]);
                (id, score)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Corpus, Message, Participant, TimeRange};
    use crate::levels::{LevelState, MatchMode};

    fn session() -> Session {
        let participants = ["a", "b", "c"].into_iter().map(Participant::new).collect();
        let messages = vec![
            Message::new("1", "a", "b", 0, "budget"),
            Message::new("2", "b", "a", 600, "budget again"),
            Message::new("3", "a", "c", 100_000, "party"),
            Message::new("4", "c", "a", 100_300, "party time"),
        ];
        let corpus = Arc::new(Corpus::new(participants, messages).unwrap());
        let ctx = Arc::new(AnalysisContext::without_annotations(corpus));
        Session::with_clock(ctx, Arc::new(|| 1_000))
    }

    fn keyword(term: &str) -> SessionState {
        SessionState::new(vec![LevelState::keyword([term], MatchMode::Any, true)])
    }

    #[test]
    fn root_selects_everything() {
        let s = session();
        assert_eq!(s.graph().nodes().len(), 1);
        assert_eq!(s.current_view().selection.len(), 4);
    }

    #[test]
    fn commit_navigate_round_trip() {
        let mut s = session();
        let n1 = s.commit(keyword("budget")).unwrap();
        assert_eq!(s.current_view().selection.len(), 2);
        let n2 = s.commit(keyword("party")).unwrap();
        assert_eq!(s.commit(keyword("party")).unwrap(), n2);
        let back = s.navigate(n1).unwrap();
        assert_eq!(back.state, keyword("budget"));
        assert_eq!(s.navigate(0).unwrap().selection.len(), 4);
        let n3 = s.commit(SessionState::new(vec![LevelState::timefilter(TimeRange::new(0, 10))])).unwrap();
        assert_eq!(s.graph().node(n3).unwrap().parent, Some(0));
        assert_eq!(s.graph().leaves(), [2, 3]);
    }

    #[test]
    fn invalid_state_leaves_history_alone() {
        let mut s = session();
        let bad = SessionState::new(vec![LevelState::timefilter(TimeRange::new(5, 1))]);
        assert!(s.commit(bad).is_err());
        let mut out_of_range = SessionState::default();
        out_of_range.threshold = 1.5;
        assert!(matches!(s.commit(out_of_range), Err(SessionError::Threshold(_))));
        assert_eq!(s.graph().nodes().len(), 1);
    }

    #[test]
    fn labeling_flow() {
        let mut s = session();
        let view = s.current_view();
        let ids: Vec<String> = s.episodes(&view).iter().map(|(id, _)| id.to_string()).collect();
        assert_eq!(ids, ["ep:1", "ep:3"]);

        let first = s.label_episode("ep:1", Label::Relevant).unwrap();
        assert!(!first.model_trained);
        assert!(first.scores.iter().all(|e| e.fade == 1.0));
        assert!(s.ambiguous(5).is_empty());

        let again = s.label_episode("ep:1", Label::Relevant).unwrap();
        assert_eq!(again.labeled, 1);

        let second = s.label_episode("ep:3", Label::Irrelevant).unwrap();
        assert!(second.model_trained);
        assert_eq!(second.labeled, 2);
        let fade: HashMap<_, _> = second.scores.iter().map(|e| (e.episode_id.as_str(), e.fade)).collect();
        assert_eq!(fade["ep:1"], 1.0);
        assert!(fade["ep:3"] < 1.0 && fade["ep:3"] >= 0.15);

        assert!(matches!(
            s.label_episode("ep:nope", Label::Relevant),
            Err(SessionError::UnknownEpisode(_))
        ));
    }
}

//! Analysis levels.
//!
//! Each level is an operator over the corpus. Filtering levels contribute a
//! message predicate; the global selection is the conjunction of every enabled
//! level's predicate (disabled levels pass everything). Feature-emitting
//! levels contribute named values to a feature vector, always in registration
//! order.
//!
//! Level states travel as a small JSON document per level:
//!
//! ```json
//! {"level": "timefilter", "enabled": true, "params": {"start": 0, "end": 99}}
//! ```
//!
//! | level           | params                                                                   |
//! |-----------------|--------------------------------------------------------------------------|
//! | `timefilter`    | `start`, `end` (epoch seconds, inclusive)                                |
//! | `userselection` | `include`, `exclude` (participant ids), `role` (`sender`/`receiver`/`either`) |
//! | `keyword`       | `terms`, `mode` (`any`/`all`, default `any`), `caseFold` (default `true`) |
//! | `thematic`      | `query` (concept query text, optional)                                   |
//! | `volume`        | none                                                                     |
//! | `distribution`  | none                                                                     |
//! | `dynamics`      | `mu`, `sigma`, `h`, `theta`, `minMessages` (all defaulted)               |

mod aggregate;
mod filters;

pub use aggregate::{distribution_aggregate, volume_aggregate, Histogram};
pub use filters::{
    keyword_search, timefilter, user_selection, KeywordFilter, MatchMode, Role, TimeFilter,
    UserSelectionFilter,
};

use std::collections::{BTreeSet, HashSet};
use std::sync::Arc;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Corpus, CorpusError, MessageIdx, ParticipantIdx, TimeRange};
use crate::dynamics::{
    density, episode_features, merged_pair_stream, segment_stream, DynamicsParams, Episode,
    EPISODE_FEATURE_NAMES,
};
use crate::thematic::{
    parse_query, thematic_predicate, AnnotationIndex, CategorySet, ConceptQuery, Tagger,
    ThematicFilter,
};

#[derive(Debug, Error)]
pub enum LevelError {
    #[error("level `{level}`: invalid `{field}`: {reason}")]
    InvalidParams {
        level: String,
        field: String,
        reason: String,
    },
    #[error("unknown level `{0}`")]
    UnknownLevel(String),
    #[error("level `{0}` appears more than once")]
    DuplicateLevel(String),
    #[error("histogram needs at least one bin")]
    ZeroBins,
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

impl LevelError {
    fn invalid(level: &str, field: &str, reason: impl Into<String>) -> Self {
        LevelError::InvalidParams {
            level: level.to_string(),
            field: field.to_string(),
            reason: reason.into(),
        }
    }
}

/// Decides per message whether it passes a level.
pub trait MessageFilter {
    fn accepts(&self, corpus: &Corpus, idx: MessageIdx) -> bool;
}

pub const TIMEFILTER: &str = "timefilter";
pub const USER_SELECTION: &str = "userselection";
pub const KEYWORD: &str = "keyword";
pub const THEMATIC: &str = "thematic";
pub const VOLUME: &str = "volume";
pub const DISTRIBUTION: &str = "distribution";
pub const DYNAMICS: &str = "dynamics";

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct LevelDescriptor {
    pub level_id: &'static str,
    pub has_view: bool,
    pub has_properties: bool,
    pub feature_names: Vec<String>,
}

/// The compiled-in levels in their fixed registration order.
#[derive(Clone, Debug)]
pub struct LevelRegistry {
    descriptors: Vec<LevelDescriptor>,
}

impl LevelRegistry {
    pub fn standard(categories: &CategorySet) -> Self {
        let d = |level_id, has_view, has_properties, feature_names| LevelDescriptor {
            level_id,
            has_view,
            has_properties,
            feature_names,
        };
        Self {
            descriptors: vec![
                d(TIMEFILTER, false, true, vec![]),
                d(USER_SELECTION, false, true, vec![]),
                d(KEYWORD, false, true, vec![]),
                d(
                    THEMATIC,
                    false,
                    true,
                    categories.iter().map(|c| format!("thematic.{c}")).collect(),
                ),
                d(VOLUME, true, false, vec![]),
                d(DISTRIBUTION, true, false, vec![]),
                d(
                    DYNAMICS,
                    true,
                    true,
                    EPISODE_FEATURE_NAMES
                        .iter()
                        .map(|n| format!("dynamics.{n}"))
                        .collect(),
                ),
            ],
        }
    }

    pub fn descriptors(&self) -> &[LevelDescriptor] {
        &self.descriptors
    }

    pub fn get(&self, level_id: &str) -> Option<&LevelDescriptor> {
        self.descriptors.iter().find(|d| d.level_id == level_id)
    }
}

/// Serialized state of one level: its id, whether it is active, and its
/// level-specific parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LevelState {
    pub level: String,
    pub enabled: bool,
    #[serde(default = "empty_params")]
    pub params: serde_json::Value,
}

fn empty_params() -> serde_json::Value {
    serde_json::Value::Object(Default::default())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeFilterParams {
    pub start: i64,
    pub end: i64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UserSelectionParams {
    #[serde(default)]
    pub include: BTreeSet<String>,
    #[serde(default)]
    pub exclude: BTreeSet<String>,
    #[serde(default)]
    pub role: Role,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct KeywordParams {
    pub terms: Vec<String>,
    #[serde(default)]
    pub mode: MatchMode,
    #[serde(default = "yes")]
    pub case_fold: bool,
}

fn yes() -> bool {
    true
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThematicParams {
    #[serde(default)]
    pub query: Option<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoParams {}

/// A validated level state.
#[derive(Clone, Debug, PartialEq)]
pub enum LevelConfig {
    TimeFilter(TimeRange),
    UserSelection(UserSelectionParams),
    Keyword(KeywordParams),
    Thematic(Option<ConceptQuery>),
    Volume,
    Distribution,
    Dynamics(DynamicsParams),
}

impl LevelState {
    fn with<P: Serialize>(level: &str, params: P) -> Self {
        Self {
            level: level.to_string(),
            enabled: true,
            params: serde_json::to_value(params).expect("params serialize"),
        }
    }

    pub fn timefilter(range: TimeRange) -> Self {
        Self::with(
            TIMEFILTER,
            TimeFilterParams {
                start: range.start,
                end: range.end,
            },
        )
    }

    pub fn user_selection<I, E, S, T>(include: I, exclude: E, role: Role) -> Self
    where
        I: IntoIterator<Item = S>,
        E: IntoIterator<Item = T>,
        S: Into<String>,
        T: Into<String>,
    {
        Self::with(
            USER_SELECTION,
            UserSelectionParams {
                include: include.into_iter().map(Into::into).collect(),
                exclude: exclude.into_iter().map(Into::into).collect(),
                role,
            },
        )
    }

    pub fn keyword<I, S>(terms: I, mode: MatchMode, case_fold: bool) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self::with(
            KEYWORD,
            KeywordParams {
                terms: terms.into_iter().map(Into::into).collect(),
                mode,
                case_fold,
            },
        )
    }

    pub fn thematic(query: &str) -> Self {
        Self::with(
            THEMATIC,
            ThematicParams {
                query: Some(query.to_string()),
            },
        )
    }

    /// Thematic level that only emits entity features.
    pub fn thematic_features() -> Self {
        Self::with(THEMATIC, ThematicParams::default())
    }

    pub fn volume() -> Self {
        Self::with(VOLUME, NoParams {})
    }

    pub fn distribution() -> Self {
        Self::with(DISTRIBUTION, NoParams {})
    }

    pub fn dynamics(params: DynamicsParams) -> Self {
        Self::with(DYNAMICS, params)
    }

    pub fn disabled(mut self) -> Self {
        self.enabled = false;
        self
    }

    /// Checks the parameters against the level's schema and semantic rules.
    pub fn validate(&self, ctx: &AnalysisContext) -> Result<LevelConfig, LevelError> {
        let level = self.level.as_str();
        match level {
            TIMEFILTER => {
                let p: TimeFilterParams = decode(level, &self.params)?;
                timefilter(ctx.corpus(), TimeRange::new(p.start, p.end))?;
                Ok(LevelConfig::TimeFilter(TimeRange::new(p.start, p.end)))
            }
            USER_SELECTION => {
                let p: UserSelectionParams = decode(level, &self.params)?;
                user_selection(ctx.corpus(), &p.include, &p.exclude, p.role)?;
                Ok(LevelConfig::UserSelection(p))
            }
            KEYWORD => {
                let p: KeywordParams = decode(level, &self.params)?;
                keyword_search(ctx.corpus(), &p.terms, p.mode, p.case_fold)?;
                Ok(LevelConfig::Keyword(p))
            }
            THEMATIC => {
                let p: ThematicParams = decode(level, &self.params)?;
                let query = p
                    .query
                    .as_deref()
                    .filter(|q| !q.trim().is_empty())
                    .map(|q| parse_query(q, ctx.categories()))
                    .transpose()
                    .map_err(|e| LevelError::invalid(level, "query", e.to_string()))?;
                Ok(LevelConfig::Thematic(query))
            }
            VOLUME => decode::<NoParams>(level, &self.params).map(|_| LevelConfig::Volume),
            DISTRIBUTION => {
                decode::<NoParams>(level, &self.params).map(|_| LevelConfig::Distribution)
            }
            DYNAMICS => {
                let p: DynamicsParams = decode(level, &self.params)?;
                p.validate()
                    .map_err(|e| LevelError::invalid(level, e.field, e.reason))?;
                Ok(LevelConfig::Dynamics(p))
            }
            other => Err(LevelError::UnknownLevel(other.to_string())),
        }
    }
}

fn decode<P: DeserializeOwned>(level: &str, params: &serde_json::Value) -> Result<P, LevelError> {
    serde_path_to_error::deserialize(params).map_err(|err| {
        let path = err.path().to_string();
        let inner = err.into_inner().to_string();
        let field = if path == "." {
            // serde reports missing/unknown fields at the root; pull the name
            // out of the message
            inner
                .split('`')
                .nth(1)
                .map(str::to_string)
                .unwrap_or_else(|| "params".into())
        } else {
            path
        };
        LevelError::invalid(level, &field, inner)
    })
}

/// Canonical text of a state list: compact JSON with sorted object keys.
pub fn canonical_states(states: &[LevelState]) -> String {
    serde_json::to_string(states).expect("states serialize")
}

/// Everything a level needs besides its own parameters.
pub struct AnalysisContext {
    corpus: Arc<Corpus>,
    annotations: AnnotationIndex,
    categories: CategorySet,
    registry: LevelRegistry,
}

impl AnalysisContext {
    pub fn new(corpus: Arc<Corpus>, annotations: AnnotationIndex, categories: CategorySet) -> Self {
        let registry = LevelRegistry::standard(&categories);
        Self {
            corpus,
            annotations,
            categories,
            registry,
        }
    }

    /// Annotates the corpus with `tagger` using its own category set.
    pub fn with_tagger(corpus: Arc<Corpus>, tagger: &dyn Tagger, categories: CategorySet) -> Self {
        let annotations = crate::thematic::annotate(&corpus, tagger);
        Self::new(corpus, annotations, categories)
    }

    /// No annotations; thematic queries select nothing.
    pub fn without_annotations(corpus: Arc<Corpus>) -> Self {
        let annotations = AnnotationIndex::empty_for(&corpus);
        Self::new(corpus, annotations, CategorySet::default())
    }

    pub fn corpus(&self) -> &Corpus {
        &self.corpus
    }

    pub fn corpus_arc(&self) -> &Arc<Corpus> {
        &self.corpus
    }

    pub fn annotations(&self) -> &AnnotationIndex {
        &self.annotations
    }

    pub fn categories(&self) -> &CategorySet {
        &self.categories
    }

    pub fn registry(&self) -> &LevelRegistry {
        &self.registry
    }
}

/// Validated configuration of a whole state list.
#[derive(Clone, Debug, Default)]
pub struct LevelSetup {
    pub configs: Vec<(LevelConfig, bool)>,
}

impl LevelSetup {
    /// Validates every state (enabled or not) and rejects repeated levels.
    pub fn validate(ctx: &AnalysisContext, states: &[LevelState]) -> Result<Self, LevelError> {
        let mut seen = HashSet::new();
        let mut configs = Vec::with_capacity(states.len());
        for s in states {
            if !seen.insert(s.level.as_str()) {
                return Err(LevelError::DuplicateLevel(s.level.clone()));
            }
            configs.push((s.validate(ctx)?, s.enabled));
        }
        Ok(Self { configs })
    }

    fn enabled(&self) -> impl Iterator<Item = &LevelConfig> {
        self.configs.iter().filter(|(_, on)| *on).map(|(c, _)| c)
    }

    /// Time range of the enabled timefilter, if any.
    pub fn time_range(&self) -> Option<TimeRange> {
        self.enabled().find_map(|c| match c {
            LevelConfig::TimeFilter(r) => Some(*r),
            _ => None,
        })
    }

    /// Dynamics parameters of the dynamics level (enabled or not), else
    /// defaults.
    pub fn dynamics_params(&self) -> DynamicsParams {
        self.configs
            .iter()
            .find_map(|(c, _)| match c {
                LevelConfig::Dynamics(p) => Some(*p),
                _ => None,
            })
            .unwrap_or_default()
    }

    pub fn is_enabled(&self, level_id: &str) -> bool {
        self.enabled().any(|c| config_level(c) == level_id)
    }
}

fn config_level(c: &LevelConfig) -> &'static str {
    match c {
        LevelConfig::TimeFilter(_) => TIMEFILTER,
        LevelConfig::UserSelection(_) => USER_SELECTION,
        LevelConfig::Keyword(_) => KEYWORD,
        LevelConfig::Thematic(_) => THEMATIC,
        LevelConfig::Volume => VOLUME,
        LevelConfig::Distribution => DISTRIBUTION,
        LevelConfig::Dynamics(_) => DYNAMICS,
    }
}

enum CompiledFilter<'a> {
    User(UserSelectionFilter),
    Keyword(KeywordFilter),
    Thematic(ThematicFilter<'a>),
}

impl MessageFilter for CompiledFilter<'_> {
    fn accepts(&self, corpus: &Corpus, idx: MessageIdx) -> bool {
        match self {
            CompiledFilter::User(f) => f.accepts(corpus, idx),
            CompiledFilter::Keyword(f) => f.accepts(corpus, idx),
            CompiledFilter::Thematic(f) => f.accepts(corpus, idx),
        }
    }
}

/// Messages and participants left after all enabled filters.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Selection {
    messages: Vec<MessageIdx>,
    participants: Vec<ParticipantIdx>,
}

impl Selection {
    /// Both lists are sorted and deduplicated.
    pub fn new(mut messages: Vec<MessageIdx>, mut participants: Vec<ParticipantIdx>) -> Self {
        messages.sort_unstable();
        messages.dedup();
        participants.sort_unstable();
        participants.dedup();
        Self {
            messages,
            participants,
        }
    }

    pub fn all(corpus: &Corpus) -> Self {
        Self {
            messages: (0..corpus.message_count() as u32).map(MessageIdx).collect(),
            participants: (0..corpus.participant_count() as u32)
                .map(ParticipantIdx)
                .collect(),
        }
    }

    pub fn messages(&self) -> &[MessageIdx] {
        &self.messages
    }

    pub fn participants(&self) -> &[ParticipantIdx] {
        &self.participants
    }

    pub fn len(&self) -> usize {
        self.messages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.messages.is_empty()
    }

    pub fn contains(&self, idx: MessageIdx) -> bool {
        self.messages.binary_search(&idx).is_ok()
    }

    pub fn message_ids<'c>(&self, corpus: &'c Corpus) -> Vec<&'c str> {
        self.messages
            .iter()
            .map(|&i| corpus.message(i).id.as_str())
            .collect()
    }

    pub fn intersect(&self, other: &Selection) -> Selection {
        let keep = |a: &[MessageIdx], b: &[MessageIdx]| -> Vec<MessageIdx> {
            a.iter().copied().filter(|x| b.binary_search(x).is_ok()).collect()
        };
        let parts: Vec<ParticipantIdx> = self
            .participants
            .iter()
            .copied()
            .filter(|p| other.participants.binary_search(p).is_ok())
            .collect();
        Selection {
            messages: keep(&self.messages, &other.messages),
            participants: parts,
        }
    }
}

/// Applies every enabled level and intersects their predicates.
pub fn apply_all(ctx: &AnalysisContext, states: &[LevelState]) -> Result<Selection, LevelError> {
    let setup = LevelSetup::validate(ctx, states)?;
    Ok(apply_setup(ctx, &setup))
}

/// [`apply_all`] for an already validated setup.
pub fn apply_setup(ctx: &AnalysisContext, setup: &LevelSetup) -> Selection {
    let corpus = ctx.corpus();
    let mut filters: Vec<CompiledFilter<'_>> = Vec::new();
    let mut excluded: HashSet<ParticipantIdx> = HashSet::new();
    let mut window = 0..corpus.message_count();

    for config in setup.enabled() {
        match config {
            LevelConfig::TimeFilter(range) => {
                // messages are time-sorted, so the filter is a slice
                let msgs = corpus.messages();
                let lo = msgs.partition_point(|m| m.timestamp < range.start);
                let hi = msgs.partition_point(|m| m.timestamp <= range.end).max(lo);
                window = window.start.max(lo)..window.end.min(hi);
            }
            LevelConfig::UserSelection(p) => {
                let f = user_selection(corpus, &p.include, &p.exclude, p.role)
                    .expect("validated");
                excluded.extend(f.excluded());
                filters.push(CompiledFilter::User(f));
            }
            LevelConfig::Keyword(p) => filters.push(CompiledFilter::Keyword(
                keyword_search(corpus, &p.terms, p.mode, p.case_fold).expect("validated"),
            )),
            LevelConfig::Thematic(Some(q)) => filters.push(CompiledFilter::Thematic(
                thematic_predicate(corpus, ctx.annotations(), q),
            )),
            LevelConfig::Thematic(None)
            | LevelConfig::Volume
            | LevelConfig::Distribution
            | LevelConfig::Dynamics(_) => {}
        }
    }

    let window = if window.start > window.end {
        0..0
    } else {
        window
    };
    let messages = window
        .map(|i| MessageIdx(i as u32))
        .filter(|&idx| filters.iter().all(|f| f.accepts(corpus, idx)))
        .collect();
    let participants = (0..corpus.participant_count() as u32)
        .map(ParticipantIdx)
        .filter(|p| !excluded.contains(p))
        .collect();
    Selection {
        messages,
        participants,
    }
}

/// What a feature vector describes.
#[derive(Clone, Copy, Debug)]
pub enum FeatureTarget<'a> {
    Message(&'a str),
    Episode(&'a Episode),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub names: Vec<String>,
    pub values: Vec<f64>,
}

impl FeatureVector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Concatenates the features of every enabled feature-emitting level in
/// registration order.
///
/// For a message target the dynamics features describe the episode holding
/// that message in its pair's full traffic, or a one-message episode when
/// the message falls in no episode.
pub fn feature_vector(
    ctx: &AnalysisContext,
    target: FeatureTarget<'_>,
    states: &[LevelState],
) -> Result<FeatureVector, LevelError> {
    let setup = LevelSetup::validate(ctx, states)?;
    feature_vector_for_setup(ctx, target, &setup)
}

pub fn feature_vector_for_setup(
    ctx: &AnalysisContext,
    target: FeatureTarget<'_>,
    setup: &LevelSetup,
) -> Result<FeatureVector, LevelError> {
    let corpus = ctx.corpus();
    let target_messages: Vec<MessageIdx> = match target {
        FeatureTarget::Message(id) => vec![corpus.message_idx(id)?],
        FeatureTarget::Episode(ep) => ep.messages.clone(),
    };

    let mut names = Vec::new();
    let mut values = Vec::new();
    for desc in ctx.registry().descriptors() {
        if desc.feature_names.is_empty() || !setup.is_enabled(desc.level_id) {
            continue;
        }
        names.extend(desc.feature_names.iter().cloned());
        match desc.level_id {
            THEMATIC => {
                let mut counts = vec![0.0; ctx.categories().len()];
                for &m in &target_messages {
                    for a in ctx.annotations().get(m) {
                        if let Some(pos) = ctx.categories().position(&a.category) {
                            counts[pos] += 1.0;
                        }
                    }
                }
                values.extend(counts);
            }
            DYNAMICS => {
                let params = setup.dynamics_params();
                let features = match target {
                    FeatureTarget::Episode(ep) => episode_features(ep, corpus),
                    FeatureTarget::Message(_) => {
                        let ep = containing_episode(corpus, target_messages[0], &params);
                        episode_features(&ep, corpus)
                    }
                };
                values.extend(features);
            }
            other => unreachable!("level `{other}` declares no features"),
        }
    }
    Ok(FeatureVector { names, values })
}

fn containing_episode(corpus: &Corpus, msg: MessageIdx, params: &DynamicsParams) -> Episode {
    let (sender, receiver) = corpus.endpoints(msg);
    let stream = merged_pair_stream(corpus, sender, receiver, |_| true);
    let episodes = segment_stream(corpus, (sender, receiver), &stream, params);
    if let Some(ep) = episodes.into_iter().find(|e| e.messages.contains(&msg)) {
        return ep;
    }
    let times: Vec<i64> = stream.iter().map(|&m| corpus.timestamp(m)).collect();
    let t = corpus.timestamp(msg);
    Episode {
        pair: (sender, receiver),
        messages: vec![msg],
        start: t,
        end: t,
        initiator: sender,
        peak_density: density(&times, t as f64 + params.mu, params),
    }
}

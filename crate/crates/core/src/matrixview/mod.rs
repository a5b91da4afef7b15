//! Zoom-dependent matrix aggregates and details-on-demand, computed against
//! one provenance node of a [`Session`].

mod http;

pub use http::{router, serve, SharedSession};

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{CorpusError, MessageIdx, ParticipantIdx, TimeRange};
use crate::levels::Histogram;
use crate::retrieval::fade_factor;
use crate::session::{EpisodeId, NodeView, Session, SessionError};

/// Cell size at which the first view switch happens; every doubling above it
/// switches again.
pub const BASE_CELL_PX: u32 = 16;
pub const COARSE_BINS: usize = 8;
pub const FINE_BINS: usize = 32;
pub const DEFAULT_PAGE: usize = 50;
pub const MAX_PAGE: usize = 500;

#[derive(Debug, Error)]
pub enum MatrixError {
    #[error(transparent)]
    Session(#[from] SessionError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("invalid request: {0}")]
    BadRequest(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ZoomView {
    Volume,
    Distribution,
    #[serde(rename = "Distribution+")]
    DistributionFine,
    Dynamics,
}

impl ZoomView {
    pub const ALL: [ZoomView; 4] = [
        ZoomView::Volume,
        ZoomView::Distribution,
        ZoomView::DistributionFine,
        ZoomView::Dynamics,
    ];

    /// Histogram bin count, for views that draw one.
    pub fn bins(self) -> Option<usize> {
        match self {
            ZoomView::Distribution => Some(COARSE_BINS),
            ZoomView::DistributionFine => Some(FINE_BINS),
            ZoomView::Volume | ZoomView::Dynamics => None,
        }
    }

    /// Smallest cell size rendered with this view.
    pub fn min_cell_size(self) -> u32 {
        match self {
            ZoomView::Volume => 0,
            ZoomView::Distribution => BASE_CELL_PX * 2,
            ZoomView::DistributionFine => BASE_CELL_PX * 4,
            ZoomView::Dynamics => BASE_CELL_PX * 8,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ZoomView::Volume => "Volume",
            ZoomView::Distribution => "Distribution",
            ZoomView::DistributionFine => "Distribution+",
            ZoomView::Dynamics => "Dynamics",
        }
    }
}

impl fmt::Display for ZoomView {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ZoomView {
    type Err = MatrixError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ZoomView::ALL
            .into_iter()
            .find(|v| v.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| MatrixError::BadRequest(format!("unknown view `{s}`")))
    }
}

/// The view drawn inside cells of `px` pixels. Below the base size cells are
/// too small for anything but color, so they stay on Volume.
pub fn view_for_cell_size(px: u32) -> ZoomView {
    ZoomView::ALL
        .into_iter()
        .rev()
        .find(|v| px >= v.min_cell_size())
        .unwrap_or(ZoomView::Volume)
}

/// Axis ordering. Serialized as `"alphabetical"`, `"volumeDesc"` or a list
/// of participant ids.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "OrderRepr", into = "OrderRepr")]
pub enum Order {
    #[default]
    Alphabetical,
    VolumeDesc,
    Manual(Vec<String>),
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum OrderRepr {
    Named(NamedOrder),
    Manual(Vec<String>),
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
enum NamedOrder {
    Alphabetical,
    VolumeDesc,
}

impl From<OrderRepr> for Order {
    fn from(r: OrderRepr) -> Self {
        match r {
            OrderRepr::Named(NamedOrder::Alphabetical) => Order::Alphabetical,
            OrderRepr::Named(NamedOrder::VolumeDesc) => Order::VolumeDesc,
            OrderRepr::Manual(ids) => Order::Manual(ids),
        }
    }
}

impl From<Order> for OrderRepr {
    fn from(o: Order) -> Self {
        match o {
            Order::Alphabetical => OrderRepr::Named(NamedOrder::Alphabetical),
            Order::VolumeDesc => OrderRepr::Named(NamedOrder::VolumeDesc),
            Order::Manual(ids) => OrderRepr::Manual(ids),
        }
    }
}

impl FromStr for Order {
    type Err = MatrixError;

    /// `alphabetical`, `volumeDesc`, or `manual:id1,id2,...`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "alphabetical" => Ok(Order::Alphabetical),
            "volumeDesc" => Ok(Order::VolumeDesc),
            _ => match s.strip_prefix("manual:") {
                Some(list) => Ok(Order::Manual(
                    list.split(',').filter(|s| !s.is_empty()).map(str::to_string).collect(),
                )),
                None => Err(MatrixError::BadRequest(format!("unknown order `{s}`"))),
            },
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default, deny_unknown_fields)]
pub struct MatrixRequest {
    pub view: Option<ZoomView>,
    pub cell_size: Option<u32>,
    pub row_order: Order,
    pub col_order: Order,
    /// Defaults to the session's current node.
    pub node: Option<u64>,
}

impl MatrixRequest {
    pub fn resolved_view(&self) -> Result<ZoomView, MatrixError> {
        match (self.view, self.cell_size) {
            (Some(_), Some(_)) => Err(MatrixError::BadRequest(
                "give either a view or a cell size, not both".into(),
            )),
            (Some(v), None) => Ok(v),
            (None, Some(0)) => Err(MatrixError::BadRequest("cell size must be positive".into())),
            (None, Some(px)) => Ok(view_for_cell_size(px)),
            (None, None) => Ok(ZoomView::Volume),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct EpisodeGlyph {
    pub episode_id: EpisodeId,
    pub start: i64,
    pub end: i64,
    pub message_count: usize,
    pub fade_factor: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct CellAggregate {
    pub row: String,
    pub col: String,
    pub count: usize,
    pub normalized_count: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub histogram: Option<Vec<u64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub episodes: Option<Vec<EpisodeGlyph>>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct MatrixResponse {
    pub node: u64,
    pub view: ZoomView,
    pub rows: Vec<String>,
    pub cols: Vec<String>,
    pub max_count: usize,
    pub total_count: usize,
    /// Shared by every cell histogram; absent outside the distribution views.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bin_edges: Option<Vec<f64>>,
    pub model_active: bool,
    pub cells: Vec<CellAggregate>,
}

/// Time span histograms cover: the active time filter, else the corpus extent.
fn histogram_range(session: &Session, view: &NodeView) -> TimeRange {
    view.setup
        .time_range()
        .or_else(|| session.context().corpus().time_extent())
        .unwrap_or(TimeRange::new(0, 0))
}

fn order_axis(
    session: &Session,
    axis: &[ParticipantIdx],
    order: &Order,
    marginal: &HashMap<ParticipantIdx, usize>,
) -> Result<Vec<ParticipantIdx>, MatrixError> {
    let corpus = session.context().corpus();
    let id = |p: ParticipantIdx| corpus.participant(p).id.as_str();
    let mut out = axis.to_vec();
    match order {
        Order::Alphabetical => out.sort_by(|&a, &b| id(a).cmp(id(b))),
        Order::VolumeDesc => {
            let m = |p| marginal.get(&p).copied().unwrap_or(0);
            out.sort_by(|&a, &b| m(b).cmp(&m(a)).then_with(|| id(a).cmp(id(b))));
        }
        Order::Manual(ids) => {
            if ids.len() != corpus.participant_count() {
                return Err(MatrixError::BadRequest(format!(
                    "manual order lists {} participants; the corpus has {}",
                    ids.len(),
                    corpus.participant_count()
                )));
            }
            let mut seen = HashSet::new();
            let mut rank = HashMap::new();
            for (i, pid) in ids.iter().enumerate() {
                let p = corpus.participant_idx(pid)?;
                if !seen.insert(p) {
                    return Err(MatrixError::BadRequest(format!(
                        "participant `{pid}` appears twice in manual order"
                    )));
                }
                rank.insert(p, i);
            }
            out.sort_by_key(|p| rank[p]);
        }
    }
    Ok(out)
}

fn glyph(session: &Session, view: &NodeView, id: &EpisodeId, ep: &crate::dynamics::Episode) -> EpisodeGlyph {
    let fade = session
        .score_episode(view, ep)
        .map_or(1.0, |s| fade_factor(s.p, view.state.threshold));
    EpisodeGlyph {
        episode_id: id.clone(),
        start: ep.start,
        end: ep.end,
        message_count: ep.len(),
        fade_factor: fade,
    }
}

/// Sparse matrix for a node: one cell per directed pair with selected traffic.
pub fn matrix(session: &Session, request: &MatrixRequest) -> Result<MatrixResponse, MatrixError> {
    let zoom = request.resolved_view()?;
    let node = request.node.unwrap_or(session.graph().current());
    let view = session.view(node)?;
    let corpus = session.context().corpus();

    let bins = zoom.bins();
    let range = histogram_range(session, &view);
    let mut directed: Vec<((ParticipantIdx, ParticipantIdx), MessageIdx)> = view
        .selection
        .messages()
        .iter()
        .map(|&m| (corpus.endpoints(m), m))
        .collect();
    directed.sort_unstable_by_key(|&(pair, _)| pair);
    let cells: Vec<((ParticipantIdx, ParticipantIdx), (usize, Vec<u64>))> = directed
        .chunk_by(|x, y| x.0 == y.0)
        .map(|chunk| {
            let mut hist = vec![0; bins.unwrap_or(0)];
            if let Some(b) = bins {
                for &(_, m) in chunk {
                    if let Some(k) = Histogram::bin_of(range, b, corpus.timestamp(m)) {
                        hist[k] += 1;
                    }
                }
            }
            (chunk[0].0, (chunk.len(), hist))
        })
        .collect();

    let mut row_marginal: HashMap<ParticipantIdx, usize> = HashMap::new();
    let mut col_marginal: HashMap<ParticipantIdx, usize> = HashMap::new();
    for &((s, r), (n, _)) in &cells {
        *row_marginal.entry(s).or_default() += n;
        *col_marginal.entry(r).or_default() += n;
    }
    let axis = view.selection.participants();
    let rows = order_axis(session, axis, &request.row_order, &row_marginal)?;
    let cols = order_axis(session, axis, &request.col_order, &col_marginal)?;
    let positions = |order: &[ParticipantIdx]| {
        let mut pos = vec![usize::MAX; corpus.participant_count()];
        for (i, p) in order.iter().enumerate() {
            pos[p.get()] = i;
        }
        pos
    };
    let (row_pos, col_pos) = (positions(&rows), positions(&cols));

    let max_count = cells.iter().map(|(_, c)| c.0).max().unwrap_or(0);
    let episodes = (zoom == ZoomView::Dynamics).then(|| session.episodes(&view));

    let mut keyed = cells;
    keyed.sort_unstable_by_key(|((s, r), _)| (row_pos[s.get()], col_pos[r.get()]));
    let cells = keyed
        .into_iter()
        .map(|((s, r), (count, hist))| CellAggregate {
            row: corpus.participant(s).id.clone(),
            col: corpus.participant(r).id.clone(),
            count,
            normalized_count: if max_count == 0 { 0.0 } else { count as f64 / max_count as f64 },
            histogram: bins.map(|_| hist),
            episodes: episodes.as_ref().map(|set| {
                set.between(s, r).map(|(id, ep)| glyph(session, &view, id, ep)).collect()
            }),
        })
        .collect();

    let id = |p: &ParticipantIdx| corpus.participant(*p).id.clone();
    Ok(MatrixResponse {
        node,
        view: zoom,
        rows: rows.iter().map(id).collect(),
        cols: cols.iter().map(id).collect(),
        max_count,
        total_count: view.selection.len(),
        bin_edges: bins.map(|b| Histogram::empty(range, b).edges),
        model_active: session.model().is_some(),
        cells,
    })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct EntityTally {
    pub category: String,
    pub count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct RawRecord {
    pub id: String,
    pub sender: String,
    pub receiver: String,
    pub timestamp: i64,
    pub channel: String,
    pub content: String,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Deserialize)]
#[serde(default)]
pub struct Page {
    pub offset: usize,
    pub limit: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct CellDetails {
    pub node: u64,
    pub view: ZoomView,
    pub row: String,
    pub col: String,
    /// Selected messages row→col.
    pub count: usize,
    /// Selected messages col→row.
    pub reverse_count: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bin_edges: Option<Vec<f64>>,
    /// Per-bin counts row→col.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub histogram: Option<Vec<u64>>,
    /// Per-bin counts col→row.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reverse_histogram: Option<Vec<u64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub episodes: Option<Vec<EpisodeGlyph>>,
    /// Entity categories over both directions, most frequent first.
    pub entities: Vec<EntityTally>,
    pub total_records: usize,
    pub offset: usize,
    pub limit: usize,
    /// Both directions, chronological, paginated.
    pub records: Vec<RawRecord>,
}

/// Tooltip payload for one cell. What is included beyond the raw records and
/// entity tallies depends on the view.
pub fn cell_details(
    session: &Session,
    node: Option<u64>,
    row: &str,
    col: &str,
    zoom: ZoomView,
    page: Page,
) -> Result<CellDetails, MatrixError> {
    let node = node.unwrap_or(session.graph().current());
    let view = session.view(node)?;
    let corpus = session.context().corpus();
    let (r, c) = (corpus.participant_idx(row)?, corpus.participant_idx(col)?);
    let range = view.setup.time_range();

    let selected = |a, b| -> Vec<MessageIdx> {
        corpus
            .slice_pair(a, b, range)
            .iter()
            .copied()
            .filter(|&m| view.selection.contains(m))
            .collect()
    };
    let forward = selected(r, c);
    let backward = if r == c { Vec::new() } else { selected(c, r) };
    let mut both: Vec<MessageIdx> = forward.iter().chain(&backward).copied().collect();
    both.sort_unstable();

    let mut tallies: BTreeMap<String, usize> = BTreeMap::new();
    for &m in &both {
        for a in session.context().annotations().get(m) {
            *tallies.entry(a.category.to_string()).or_default() += 1;
        }
    }
    let mut entities: Vec<EntityTally> = tallies
        .into_iter()
        .map(|(category, count)| EntityTally { category, count })
        .collect();
    entities.sort_by(|a, b| b.count.cmp(&a.count).then_with(|| a.category.cmp(&b.category)));

    let hist_range = histogram_range(session, &view);
    let histogram = |ms: &[MessageIdx], bins: usize| {
        let mut h = Histogram::empty(hist_range, bins);
        for &m in ms {
            if let Some(k) = Histogram::bin_of(hist_range, bins, corpus.timestamp(m)) {
                h.counts[k] += 1;
            }
        }
        h
    };
    let bins = zoom.bins();
    let episodes = (zoom == ZoomView::Dynamics).then(|| {
        let set = session.episodes(&view);
        let glyphs: Vec<_> = set.between(r, c).map(|(id, ep)| glyph(session, &view, id, ep)).collect();
        glyphs
    });

    let limit = page.limit.unwrap_or(DEFAULT_PAGE).min(MAX_PAGE);
    let records = both
        .iter()
        .skip(page.offset)
        .take(limit)
        .map(|&m| {
            let msg = corpus.message(m);
            RawRecord {
                id: msg.id.clone(),
                sender: msg.sender.clone(),
                receiver: msg.receiver.clone(),
                timestamp: msg.timestamp,
                channel: msg.channel.clone(),
                content: msg.content.clone(),
            }
        })
        .collect();

    Ok(CellDetails {
        node,
        view: zoom,
        row: row.to_string(),
        col: col.to_string(),
        count: forward.len(),
        reverse_count: backward.len(),
        bin_edges: bins.map(|b| Histogram::empty(hist_range, b).edges),
        histogram: bins.map(|b| histogram(&forward, b).counts),
        reverse_histogram: bins.map(|b| histogram(&backward, b).counts),
        episodes,
        entities,
        total_records: both.len(),
        offset: page.offset,
        limit,
        records,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct ChatRecord {
    pub message_id: String,
    pub sender_side: Side,
    pub timestamp: i64,
    pub content: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct Transcript {
    pub episode_id: String,
    pub left: String,
    pub right: String,
    pub start: i64,
    pub end: i64,
    pub peak_density: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub uncertainty: Option<f64>,
    pub fade_factor: f64,
    pub records: Vec<ChatRecord>,
}

/// Chat-style transcript of an episode at a node. The episode's first
/// participant is always on the left.
pub fn episode_transcript(
    session: &Session,
    node: Option<u64>,
    episode_id: &str,
) -> Result<Transcript, MatrixError> {
    let node = node.unwrap_or(session.graph().current());
    let view = session.view(node)?;
    let set = session.episodes(&view);
    let ep = set
        .get(episode_id)
        .ok_or_else(|| SessionError::UnknownEpisode(episode_id.to_string()))?;
    let corpus = session.context().corpus();
    let records = ep
        .messages
        .iter()
        .map(|&m| {
            let msg = corpus.message(m);
            let (s, _) = corpus.endpoints(m);
            ChatRecord {
                message_id: msg.id.clone(),
                sender_side: if s == ep.pair.0 { Side::Left } else { Side::Right },
                timestamp: msg.timestamp,
                content: msg.content.clone(),
            }
        })
        .collect();
    let score = session.score_episode(&view, ep);
    Ok(Transcript {
        episode_id: episode_id.to_string(),
        left: corpus.participant(ep.pair.0).id.clone(),
        right: corpus.participant(ep.pair.1).id.clone(),
        start: ep.start,
        end: ep.end,
        peak_density: ep.peak_density,
        p: score.map(|s| s.p),
        uncertainty: score.map(|s| s.uncertainty),
        fade_factor: score.map_or(1.0, |s| fade_factor(s.p, view.state.threshold)),
        records,
    })
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::corpus::{Corpus, Message, Participant};
    use crate::levels::{AnalysisContext, LevelState};
    use crate::provenance::SessionState;

    fn session() -> Session {
        let participants = ["b", "a", "c"].into_iter().map(Participant::new).collect();
        let messages = vec![
            Message::new("1", "a", "b", 0, "x"),
            Message::new("2", "b", "a", 60, "y"),
            Message::new("3", "a", "b", 120, "z"),
            Message::new("4", "c", "a", 900_000, "w"),
        ];
        let corpus = Arc::new(Corpus::new(participants, messages).unwrap());
        Session::with_clock(Arc::new(AnalysisContext::without_annotations(corpus)), Arc::new(|| 0))
    }

    #[test]
    fn cell_size_ladder() {
        let table = [
            (1, ZoomView::Volume),
            (15, ZoomView::Volume),
            (16, ZoomView::Volume),
            (31, ZoomView::Volume),
            (32, ZoomView::Distribution),
            (63, ZoomView::Distribution),
            (64, ZoomView::DistributionFine),
            (127, ZoomView::DistributionFine),
            (128, ZoomView::Dynamics),
            (4096, ZoomView::Dynamics),
        ];
        for (px, v) in table {
            assert_eq!(view_for_cell_size(px), v, "{px}px");
        }
    }

    #[test]
    fn view_and_order_parsing() {
        assert_eq!("distribution+".parse::<ZoomView>().unwrap(), ZoomView::DistributionFine);
        assert!("heatmap".parse::<ZoomView>().is_err());
        assert_eq!(serde_json::to_string(&ZoomView::DistributionFine).unwrap(), "\"Distribution+\"");
        assert_eq!("manual:a,b".parse::<Order>().unwrap(), Order::Manual(vec!["a".into(), "b".into()]));
        let req: MatrixRequest =
            serde_json::from_str(r#"{"rowOrder":"volumeDesc","colOrder":["a","b","c"],"cellSize":40}"#).unwrap();
        assert_eq!(req.row_order, Order::VolumeDesc);
        assert_eq!(req.resolved_view().unwrap(), ZoomView::Distribution);
        let both = MatrixRequest { view: Some(ZoomView::Volume), cell_size: Some(20), ..Default::default() };
        assert!(both.resolved_view().is_err());
    }

    #[test]
    fn volume_matrix() {
        let s = session();
        let m = matrix(&s, &MatrixRequest::default()).unwrap();
        assert_eq!(m.rows, ["a", "b", "c"]);
        assert_eq!(m.max_count, 2);
        let cells: Vec<_> = m.cells.iter().map(|c| (c.row.as_str(), c.col.as_str(), c.count)).collect();
        assert_eq!(cells, [("a", "b", 2), ("b", "a", 1), ("c", "a", 1)]);
        assert_eq!(m.cells[1].normalized_count, 0.5);
        assert!(m.cells.iter().all(|c| c.histogram.is_none() && c.episodes.is_none()));
        assert_eq!(m.cells.iter().map(|c| c.count).sum::<usize>(), m.total_count);
    }

    #[test]
    fn orders() {
        let s = session();
        let req = MatrixRequest {
            row_order: Order::VolumeDesc,
            col_order: Order::Manual(vec!["c".into(), "b".into(), "a".into()]),
            ..Default::default()
        };
        let m = matrix(&s, &req).unwrap();
        assert_eq!(m.rows, ["a", "b", "c"]);
        assert_eq!(m.cols, ["c", "b", "a"]);
        let bad = MatrixRequest { row_order: Order::Manual(vec!["a".into(), "a".into(), "b".into()]), ..Default::default() };
        assert!(matches!(matrix(&s, &bad), Err(MatrixError::BadRequest(_))));
    }

    #[test]
    fn distribution_and_dynamics_views() {
        let s = session();
        let m = matrix(&s, &MatrixRequest { view: Some(ZoomView::Distribution), ..Default::default() }).unwrap();
        let edges = m.bin_edges.as_ref().unwrap();
        assert_eq!(edges.len(), COARSE_BINS + 1);
        assert_eq!(m.cells[0].histogram.as_ref().unwrap()[0], 2);

        let d = matrix(&s, &MatrixRequest { cell_size: Some(128), ..Default::default() }).unwrap();
        let eps = d.cells[0].episodes.as_ref().unwrap();
        assert_eq!(eps.len(), 1);
        assert_eq!(eps[0].episode_id, "ep:1");
        assert_eq!(eps[0].message_count, 3);
        assert_eq!(eps[0].fade_factor, 1.0);
    }

    #[test]
    fn empty_selection_has_no_cells() {
        let mut s = session();
        let node = s
            .commit(SessionState::new(vec![LevelState::timefilter(TimeRange::new(200, 300))]))
            .unwrap();
        let m = matrix(&s, &MatrixRequest { node: Some(node), ..Default::default() }).unwrap();
        assert!(m.cells.is_empty());
        assert_eq!(m.max_count, 0);
        let d = cell_details(&s, None, "a", "b", ZoomView::Distribution, Page::default()).unwrap();
        assert_eq!(d.total_records, 0);
        assert!(d.entities.is_empty());
        assert_eq!(d.histogram.unwrap().iter().sum::<u64>(), 0);
        assert!(matches!(
            matrix(&s, &MatrixRequest { node: Some(99), ..Default::default() }),
            Err(MatrixError::Session(_))
        ));
    }

    #[test]
    fn details_and_transcript() {
        let s = session();
        let d = cell_details(&s, None, "a", "b", ZoomView::Volume, Page { offset: 1, limit: Some(1) }).unwrap();
        assert_eq!((d.count, d.reverse_count, d.total_records), (2, 1, 3));
        assert_eq!(d.records.len(), 1);
        assert_eq!(d.records[0].id, "2");
        assert!(d.histogram.is_none());

        let t = episode_transcript(&s, None, "ep:1").unwrap();
        assert_eq!((t.left.as_str(), t.right.as_str()), ("a", "b"));
        let sides: Vec<_> = t.records.iter().map(|r| r.sender_side).collect();
        assert_eq!(sides, [Side::Left, Side::Right, Side::Left]);
        assert!(episode_transcript(&s, None, "ep:9").is_err());
    }
}

//! Analytical provenance.
//!
//! Every filter-state change becomes a node in a branching history. Nodes
//! store the complete canonical state, never a diff, so any node can be
//! restored or replayed on its own. Going back and changing something starts
//! a new branch; nothing is ever removed.

use std::fmt::Write as _;
use std::path::Path;

use chrono::DateTime;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::corpus::Corpus;
use crate::levels::{apply_all, AnalysisContext, LevelError, LevelState, Selection};

pub const REPORT_FORMAT: &str = "commlevels-report";
pub const REPORT_VERSION: u32 = 1;
const MACHINE_HEADING: &str = "## Machine-readable record";

#[derive(Debug, Error)]
pub enum ProvenanceError {
    #[error("unknown provenance node {0}")]
    UnknownNode(u64),
    #[error("node {node}: selection digest {actual} does not match recorded {expected}")]
    DigestMismatch {
        node: u64,
        expected: String,
        actual: String,
    },
    #[error("report was made for corpus {expected}, not {actual}")]
    CorpusMismatch { expected: String, actual: String },
    #[error("malformed report: {0}")]
    MalformedReport(String),
    #[error("invalid state snapshot: {0}")]
    Snapshot(#[from] serde_json::Error),
    #[error(transparent)]
    Level(#[from] LevelError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Everything that determines what the analyst sees.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionState {
    #[serde(default)]
    pub levels: Vec<LevelState>,
    /// Classifier fade threshold.
    #[serde(default = "default_threshold")]
    pub threshold: f64,
}

fn default_threshold() -> f64 {
    0.5
}

impl Default for SessionState {
    fn default() -> Self {
        Self {
            levels: Vec::new(),
            threshold: default_threshold(),
        }
    }
}

impl SessionState {
    pub fn new(levels: Vec<LevelState>) -> Self {
        Self {
            levels,
            ..Self::default()
        }
    }

    /// Compact JSON with sorted object keys.
    pub fn canonical(&self) -> String {
        let value = serde_json::to_value(self).expect("state serializes");
        serde_json::to_string(&value).expect("value serializes")
    }

    pub fn from_canonical(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

/// SHA-256 over the selected message ids, sorted and newline-joined.
pub fn selection_digest(corpus: &Corpus, selection: &Selection) -> String {
    let mut ids = selection.message_ids(corpus);
    ids.sort_unstable();
    let mut hasher = Sha256::new();
    for (i, id) in ids.iter().enumerate() {
        if i > 0 {
            hasher.update(b"\n");
        }
        hasher.update(id.as_bytes());
    }
    hex::encode(hasher.finalize())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ProvenanceNode {
    pub node_id: u64,
    pub parent: Option<u64>,
    /// Canonical [`SessionState`] text.
    pub state_snapshot: String,
    pub starred: bool,
    pub note: Option<String>,
    pub created_at: i64,
    pub selection_digest: String,
    pub selection_size: usize,
}

/// Branching history with a current position. Node ids equal their index,
/// so parents always precede children.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ProvenanceGraph {
    nodes: Vec<ProvenanceNode>,
    current: u64,
}

impl ProvenanceGraph {
    pub fn new(snapshot: String, digest: String, size: usize, created_at: i64) -> Self {
        Self {
            nodes: vec![ProvenanceNode {
                node_id: 0,
                parent: None,
                state_snapshot: snapshot,
                starred: false,
                note: None,
                created_at,
                selection_digest: digest,
                selection_size: size,
            }],
            current: 0,
        }
    }

    pub fn nodes(&self) -> &[ProvenanceNode] {
        &self.nodes
    }

    pub fn current(&self) -> u64 {
        self.current
    }

    pub fn current_node(&self) -> &ProvenanceNode {
        &self.nodes[self.current as usize]
    }

    pub fn node(&self, id: u64) -> Result<&ProvenanceNode, ProvenanceError> {
        self.nodes
            .get(id as usize)
            .ok_or(ProvenanceError::UnknownNode(id))
    }

    /// Appends a child of the current node and moves there. Committing the
    /// current snapshot again changes nothing.
    pub fn commit(&mut self, snapshot: String, digest: String, size: usize, created_at: i64) -> u64 {
        if self.current_node().state_snapshot == snapshot {
            return self.current;
        }
        let id = self.nodes.len() as u64;
        self.nodes.push(ProvenanceNode {
            node_id: id,
            parent: Some(self.current),
            state_snapshot: snapshot,
            starred: false,
            note: None,
            created_at,
            selection_digest: digest,
            selection_size: size,
        });
        self.current = id;
        id
    }

    pub fn move_to(&mut self, id: u64) -> Result<&ProvenanceNode, ProvenanceError> {
        self.node(id)?;
        self.current = id;
        Ok(&self.nodes[id as usize])
    }

    pub fn set_starred(&mut self, id: u64, starred: bool) -> Result<(), ProvenanceError> {
        self.node(id)?;
        self.nodes[id as usize].starred = starred;
        Ok(())
    }

    pub fn set_note(&mut self, id: u64, note: Option<String>) -> Result<(), ProvenanceError> {
        self.node(id)?;
        self.nodes[id as usize].note = note.filter(|n| !n.trim().is_empty());
        Ok(())
    }

    pub fn children(&self, id: u64) -> impl Iterator<Item = &ProvenanceNode> {
        self.nodes.iter().filter(move |n| n.parent == Some(id))
    }

    pub fn leaves(&self) -> Vec<u64> {
        self.nodes
            .iter()
            .filter(|n| self.children(n.node_id).next().is_none())
            .map(|n| n.node_id)
            .collect()
    }

    /// Single root at id 0, ids equal positions, every parent older than its
    /// child. Together these imply acyclicity and connectedness.
    pub fn check_structure(nodes: &[ProvenanceNode]) -> Result<(), String> {
        if nodes.is_empty() {
            return Err("no nodes".into());
        }
        for (i, n) in nodes.iter().enumerate() {
            if n.node_id != i as u64 {
                return Err(format!("node at position {i} has id {}", n.node_id));
            }
            match (i, n.parent) {
                (0, None) => {}
                (0, Some(_)) => return Err("root has a parent".into()),
                (_, None) => return Err(format!("node {i} is a second root")),
                (_, Some(p)) if p >= i as u64 => {
                    return Err(format!("node {i} has parent {p} created after it"))
                }
                _ => {}
            }
        }
        Ok(())
    }
}

/// Exported history: nodes, stars, notes and digests bound to one corpus.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Report {
    pub format: String,
    pub version: u32,
    pub corpus_hash: String,
    pub current: u64,
    pub nodes: Vec<ProvenanceNode>,
}

impl Report {
    pub fn from_graph(graph: &ProvenanceGraph, corpus_hash: String) -> Self {
        Self {
            format: REPORT_FORMAT.into(),
            version: REPORT_VERSION,
            corpus_hash,
            current: graph.current(),
            nodes: graph.nodes().to_vec(),
        }
    }

    /// Markdown for people, followed by the JSON record replay reads.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let when = |t: i64| {
            DateTime::from_timestamp(t, 0)
                .map(|d| d.format("%Y-%m-%d %H:%M:%S UTC").to_string())
                .unwrap_or_else(|| t.to_string())
        };
        let _ = writeln!(out, "# Analysis report\n");
        let _ = writeln!(out, "- Corpus: `{}`", self.corpus_hash);
        let _ = writeln!(out, "- States recorded: {}", self.nodes.len());
        let _ = writeln!(out, "- Current state: node {}\n", self.current);

        let _ = writeln!(out, "## Starred states\n");
        let starred: Vec<_> = self.nodes.iter().filter(|n| n.starred).collect();
        if starred.is_empty() {
            let _ = writeln!(out, "_none_");
        }
        for n in starred {
            let _ = writeln!(
                out,
                "- node {} ({}, {} messages){}",
                n.node_id,
                when(n.created_at),
                n.selection_size,
                n.note.as_deref().map(|t| format!(": {t}")).unwrap_or_default()
            );
        }

        let _ = writeln!(out, "\n## Steps\n");
        for n in &self.nodes {
            let _ = writeln!(
                out,
                "### Node {}{}{}\n",
                n.node_id,
                if n.starred { " ★" } else { "" },
                if n.node_id == self.current { " (current)" } else { "" }
            );
            let _ = writeln!(out, "- Created: {}", when(n.created_at));
            match n.parent {
                Some(p) => {
                    let _ = writeln!(out, "- Parent: node {p}");
                }
                None => {
                    let _ = writeln!(out, "- Parent: none (start)");
                }
            }
            let _ = writeln!(out, "- Selected messages: {}", n.selection_size);
            let _ = writeln!(out, "- Digest: `{}`", n.selection_digest);
            if let Some(note) = &n.note {
                let _ = writeln!(out, "- Note: {note}");
            }
            let _ = writeln!(out, "- State: `{}`\n", n.state_snapshot);
        }

        let _ = writeln!(out, "{MACHINE_HEADING}\n");
        let _ = writeln!(out, "```json");
        let _ = writeln!(out, "{}", serde_json::to_string_pretty(self).expect("report serializes"));
        let _ = writeln!(out, "```");
        out
    }

    pub fn parse(text: &str) -> Result<Self, ProvenanceError> {
        let tail = text
            .rsplit_once(MACHINE_HEADING)
            .map(|(_, t)| t)
            .ok_or_else(|| ProvenanceError::MalformedReport("missing machine-readable record".into()))?;
        let body = tail
            .split_once("```json")
            .and_then(|(_, rest)| rest.split_once("```"))
            .map(|(json, _)| json)
            .ok_or_else(|| ProvenanceError::MalformedReport("missing JSON block".into()))?;
        let report: Report = serde_json::from_str(body)?;
        if report.format != REPORT_FORMAT || report.version != REPORT_VERSION {
            return Err(ProvenanceError::MalformedReport(format!(
                "unsupported report `{}` v{}",
                report.format, report.version
            )));
        }
        ProvenanceGraph::check_structure(&report.nodes).map_err(ProvenanceError::MalformedReport)?;
        Ok(report)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<(), ProvenanceError> {
        std::fs::write(path, self.render())?;
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self, ProvenanceError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct ReplayCheck {
    pub node_id: u64,
    pub expected: String,
    pub actual: String,
}

impl ReplayCheck {
    pub fn matches(&self) -> bool {
        self.expected == self.actual
    }
}

/// Recomputes every node's selection against `ctx` and pairs recorded with
/// recomputed digests.
pub fn replay(ctx: &AnalysisContext, report: &Report) -> Result<Vec<ReplayCheck>, ProvenanceError> {
    let actual_hash = ctx.corpus().identity_hash();
    if actual_hash != report.corpus_hash {
        return Err(ProvenanceError::CorpusMismatch {
            expected: report.corpus_hash.clone(),
            actual: actual_hash,
        });
    }
    report
        .nodes
        .iter()
        .map(|n| {
            let state = SessionState::from_canonical(&n.state_snapshot)?;
            let selection = apply_all(ctx, &state.levels)?;
            Ok(ReplayCheck {
                node_id: n.node_id,
                expected: n.selection_digest.clone(),
                actual: selection_digest(ctx.corpus(), &selection),
            })
        })
        .collect()
}

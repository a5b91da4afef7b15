//! Conversational dynamics between two participants.
//!
//! Traffic in both directions of a pair is treated as one stream and turned
//! into a continuous density
//!
//! ```text
//! f(t) = Σ_i exp(-(t - t_i - μ)² / (2 (σ·h)²))
//! ```
//!
//! Each kernel peaks at 1, so `theta` reads as "this many simultaneous
//! messages". Episodes are the maximal intervals with `f(t) >= theta`.

use std::cell::OnceCell;
use std::ops::Range;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Corpus, CorpusError, MessageIdx, ParticipantIdx, Timestamp};

/// Kernels further than this many widths away are below `exp(-50)` and are
/// left out of sums.
const KERNEL_REACH: f64 = 10.0;

/// Gap subintervals narrower than `width / GAP_SAMPLES_PER_WIDTH` are not
/// split further.
const GAP_SAMPLES_PER_WIDTH: f64 = 32.0;

#[derive(Debug, Error, PartialEq)]
#[error("invalid dynamics parameter `{field}`: {reason}")]
pub struct DynamicsParamError {
    pub field: &'static str,
    pub reason: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct DynamicsParams {
    /// Kernel centre shift in seconds.
    #[serde(default)]
    pub mu: f64,
    /// Temporal influence width in seconds.
    #[serde(default = "default_sigma")]
    pub sigma: f64,
    /// Bandwidth scale.
    #[serde(default = "default_h")]
    pub h: f64,
    #[serde(default = "default_theta")]
    pub theta: f64,
    #[serde(default = "default_min_messages")]
    pub min_messages: usize,
}

fn default_sigma() -> f64 {
    6.0 * 3600.0
}
fn default_h() -> f64 {
    1.0
}
fn default_theta() -> f64 {
    0.5
}
fn default_min_messages() -> usize {
    1
}

impl Default for DynamicsParams {
    fn default() -> Self {
        Self {
            mu: 0.0,
            sigma: default_sigma(),
            h: default_h(),
            theta: default_theta(),
            min_messages: default_min_messages(),
        }
    }
}

impl DynamicsParams {
    pub fn validate(&self) -> Result<(), DynamicsParamError> {
        let positive = |field, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(DynamicsParamError {
                    field,
                    reason: format!("must be finite and > 0, got {v}"),
                })
            }
        };
        if !self.mu.is_finite() {
            return Err(DynamicsParamError {
                field: "mu",
                reason: "must be finite".into(),
            });
        }
        positive("sigma", self.sigma)?;
        positive("h", self.h)?;
        positive("theta", self.theta)?;
        if self.min_messages == 0 {
            return Err(DynamicsParamError {
                field: "minMessages",
                reason: "must be at least 1".into(),
            });
        }
        Ok(())
    }

    /// Effective kernel width `σ·h`.
    pub fn width(&self) -> f64 {
        self.sigma * self.h
    }
}

fn kernel(distance: f64, width: f64) -> f64 {
    (-(distance * distance) / (2.0 * width * width)).exp()
}

/// Density at `t` of a message stream with the given timestamps.
pub fn density(timestamps: &[Timestamp], t: f64, params: &DynamicsParams) -> f64 {
    let width = params.width();
    timestamps
        .iter()
        .map(|&ti| kernel(t - ti as f64 - params.mu, width))
        .sum()
}

/// Kernel values at whole-second distances out to the reach. Built once per
/// parameter set and shared by every stream segmented with it; kernels
/// between two messages always sit at a whole-second distance.
#[derive(Clone, Debug)]
pub struct KernelTable {
    width: f64,
    values: Vec<f64>,
}

impl KernelTable {
    /// Entries beyond this are computed on demand instead.
    const MAX_LEN: f64 = (1 << 21) as f64;

    pub fn new(params: &DynamicsParams) -> Self {
        let width = params.width();
        let len = (KERNEL_REACH * width).floor() + 1.0;
        let values = if len <= Self::MAX_LEN {
            (0..len as usize).map(|d| kernel(d as f64, width)).collect()
        } else {
            Vec::new()
        };
        Self { width, values }
    }

    /// No precomputed entries; for one-off streams.
    pub fn lazy(params: &DynamicsParams) -> Self {
        Self { width: params.width(), values: Vec::new() }
    }

    fn at(&self, distance: i64) -> f64 {
        match self.values.get(distance as usize) {
            Some(&k) => k,
            None => kernel(distance as f64, self.width),
        }
    }

    /// For each message, the summed kernels of the messages before it and of
    /// the messages after it, each kernel computed once.
    fn neighbour_sums(&self, times: &[Timestamp]) -> (Vec<f64>, Vec<f64>) {
        let reach = KERNEL_REACH * self.width;
        let n = times.len();
        let (mut before, mut after) = (vec![0.0; n], vec![0.0; n]);
        for i in 0..n {
            for j in i + 1..n {
                let d = times[j] - times[i];
                if d as f64 > reach {
                    break;
                }
                let k = self.at(d);
                after[i] += k;
                before[j] += k;
            }
        }
        (before, after)
    }
}

/// Density over sorted kernel centres with windowed evaluation.
struct DensityField {
    centres: Vec<f64>,
    width: f64,
}

impl DensityField {
    fn new(centres: Vec<f64>, width: f64) -> Self {
        debug_assert!(centres.windows(2).all(|w| w[0] <= w[1]));
        Self { centres, width }
    }

    fn eval(&self, t: f64) -> f64 {
        let reach = KERNEL_REACH * self.width;
        let lo = self.centres.partition_point(|&c| c < t - reach);
        let hi = self.centres.partition_point(|&c| c <= t + reach);
        self.centres[lo..hi]
            .iter()
            .map(|&c| kernel(t - c, self.width))
            .sum()
    }

    /// Lower bound for the density on `[a, b]`: each kernel is smallest at
    /// whichever endpoint is further from its centre.
    fn lower_bound_on(&self, a: f64, b: f64) -> f64 {
        let reach = KERNEL_REACH * self.width;
        let lo = self.centres.partition_point(|&c| c < a - reach);
        let hi = self.centres.partition_point(|&c| c <= b + reach);
        self.centres[lo..hi]
            .iter()
            .map(|&c| kernel((a - c).abs().max((b - c).abs()), self.width))
            .sum()
    }

    /// Cheap test between consecutive centres `i < j`: nothing lies strictly
    /// between them, so every kernel is at least half the gap away from the
    /// midpoint. `false` means the density there is below `floor`.
    fn gap_may_stay_above(&self, i: usize, j: usize, floor: f64) -> bool {
        let (a, b) = (self.centres[i], self.centres[j]);
        let m = 0.5 * (a + b);
        let reach = KERNEL_REACH * self.width;
        let lo = self.centres.partition_point(|&c| c < m - reach);
        let hi = self.centres.partition_point(|&c| c <= m + reach);
        (hi - lo) as f64 * kernel(0.5 * (b - a), self.width) >= floor
    }

    /// Whether the density stays at or above `floor` on all of `[a, b]`.
    /// Subintervals are split until a midpoint falls below `floor`, their
    /// lower bound clears it, or they shrink to the sampling resolution,
    /// where the local minimum is polished by golden-section search.
    fn stays_above(&self, a: f64, b: f64, floor: f64) -> bool {
        let resolution = self.width / GAP_SAMPLES_PER_WIDTH;
        let mut pending = vec![(a, b)];
        while let Some((x, y)) = pending.pop() {
            let m = 0.5 * (x + y);
            if self.eval(m) < floor {
                return false;
            }
            if self.lower_bound_on(x, y) >= floor {
                continue;
            }
            if y - x <= resolution {
                if self.golden_min(x, y) < floor {
                    return false;
                }
                continue;
            }
            pending.push((m, y));
            pending.push((x, m));
        }
        true
    }

    fn golden_min(&self, mut a: f64, mut b: f64) -> f64 {
        const INV_PHI: f64 = 0.618_033_988_749_894_9;
        let mut c = b - INV_PHI * (b - a);
        let mut d = a + INV_PHI * (b - a);
        let mut fc = self.eval(c);
        let mut fd = self.eval(d);
        for _ in 0..60 {
            if (b - a) <= 1e-9 * self.width {
                break;
            }
            if fc < fd {
                b = d;
                d = c;
                fd = fc;
                c = b - INV_PHI * (b - a);
                fc = self.eval(c);
            } else {
                a = c;
                c = d;
                fc = fd;
                d = a + INV_PHI * (b - a);
                fd = self.eval(d);
            }
        }
        fc.min(fd)
    }
}

/// A maximal run of high-density traffic between two participants.
#[derive(Clone, Debug, PartialEq)]
pub struct Episode {
    /// `(a, b)`; direction balance and initiator flags are relative to `a`.
    pub pair: (ParticipantIdx, ParticipantIdx),
    /// Chronological, both directions.
    pub messages: Vec<MessageIdx>,
    pub start: Timestamp,
    pub end: Timestamp,
    pub initiator: ParticipantIdx,
    /// Density maximum over the episode's message instants.
    pub peak_density: f64,
}

impl Episode {
    /// Stable identifier: a message belongs to at most one episode, so the
    /// first message names it.
    pub fn id(&self, corpus: &Corpus) -> String {
        format!("ep:{}", corpus.message(self.messages[0]).id)
    }

    pub fn len(&self) -> usize {
        self.messages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.messages.is_empty()
    }
}

/// Segments all corpus traffic between `a` and `b` (both directions).
pub fn segment_episodes(
    corpus: &Corpus,
    a: &str,
    b: &str,
    params: &DynamicsParams,
) -> Result<Vec<Episode>, CorpusError> {
    let a = corpus.participant_idx(a)?;
    let b = corpus.participant_idx(b)?;
    let stream = merged_pair_stream(corpus, a, b, |_| true);
    Ok(segment_stream(corpus, (a, b), &stream, params))
}

/// Both directions of a pair merged into corpus order, keeping only messages
/// accepted by `keep`.
pub fn merged_pair_stream(
    corpus: &Corpus,
    a: ParticipantIdx,
    b: ParticipantIdx,
    keep: impl Fn(MessageIdx) -> bool,
) -> Vec<MessageIdx> {
    let forward = corpus.pair_messages(a, b);
    let backward = if a == b { &[][..] } else { corpus.pair_messages(b, a) };
    let mut out: Vec<MessageIdx> = forward
        .iter()
        .chain(backward)
        .copied()
        .filter(|&m| keep(m))
        .collect();
    out.sort_unstable();
    out
}

/// Segments a chronological message stream of one pair into episodes.
///
/// Consecutive messages share an episode when the density stays at or above
/// `theta` on the whole segment between their shifted instants. Messages
/// whose own density is below `theta` belong to no episode; runs shorter than
/// `min_messages` are dropped.
pub fn segment_stream(
    corpus: &Corpus,
    pair: (ParticipantIdx, ParticipantIdx),
    stream: &[MessageIdx],
    params: &DynamicsParams,
) -> Vec<Episode> {
    segment_stream_with(corpus, pair, stream, params, &KernelTable::lazy(params))
}

/// [`segment_stream`] with kernels looked up in a shared table built from
/// the same `params`.
pub fn segment_stream_with(
    corpus: &Corpus,
    pair: (ParticipantIdx, ParticipantIdx),
    stream: &[MessageIdx],
    params: &DynamicsParams,
    table: &KernelTable,
) -> Vec<Episode> {
    let n = stream.len();
    if n == 0 {
        return Vec::new();
    }
    if n == 1 {
        // a lone message has density exactly 1
        let keep = 1.0 >= params.theta && params.min_messages <= 1;
        return if keep { vec![build_episode(corpus, pair, stream, |_| 1.0, 0..1)] } else { Vec::new() };
    }
    let times: Vec<Timestamp> = stream.iter().map(|&m| corpus.timestamp(m)).collect();
    let (before, after) = table.neighbour_sums(&times);
    let at = |i: usize| 1.0 + before[i] + after[i];
    // only needed when a gap is not settled by its bounds
    let field = OnceCell::new();
    let field = || {
        field.get_or_init(|| {
            DensityField::new(times.iter().map(|&t| t as f64 + params.mu).collect(), params.width())
        })
    };

    let mut episodes = Vec::new();
    let close = |run: Range<usize>, episodes: &mut Vec<Episode>| {
        if run.len() >= params.min_messages {
            episodes.push(build_episode(corpus, pair, stream, at, run));
        }
    };
    // runs are contiguous, so the open one is tracked by its start
    let mut open: Option<usize> = None;
    for i in 0..n {
        if at(i) < params.theta {
            if let Some(start) = open.take() {
                close(start..i, &mut episodes);
            }
            continue;
        }
        let Some(start) = open else {
            open = Some(i);
            continue;
        };
        let prev = i - 1;
        // Every kernel is unimodal and takes its minimum over the gap at an
        // endpoint: centres up to `prev` are smallest at `i`, the rest at
        // `prev`. Their sum bounds the density on the gap from below.
        let bound = before[i] + after[prev];
        let connected = bound >= params.theta || {
            let f = field();
            f.gap_may_stay_above(prev, i, params.theta)
                && f.stays_above(f.centres[prev], f.centres[i], params.theta)
        };
        if !connected {
            close(start..i, &mut episodes);
            open = Some(i);
        }
    }
    if let Some(start) = open {
        close(start..n, &mut episodes);
    }
    episodes
}

fn build_episode(
    corpus: &Corpus,
    pair: (ParticipantIdx, ParticipantIdx),
    stream: &[MessageIdx],
    at: impl Fn(usize) -> f64,
    run: Range<usize>,
) -> Episode {
    let messages = stream[run.clone()].to_vec();
    Episode {
        pair,
        start: corpus.timestamp(messages[0]),
        end: corpus.timestamp(*messages.last().unwrap()),
        initiator: corpus.endpoints(messages[0]).0,
        peak_density: run.map(at).fold(f64::MIN, f64::max),
        messages,
    }
}

pub const EPISODE_FEATURE_NAMES: [&str; 6] = [
    "durationSeconds",
    "messageCount",
    "directionBalance",
    "initiatorIsRowParticipant",
    "meanInterMessageGap",
    "peakDensity",
];

/// Feature fragment of an episode, in [`EPISODE_FEATURE_NAMES`] order.
pub fn episode_features(episode: &Episode, corpus: &Corpus) -> [f64; 6] {
    let count = episode.messages.len() as f64;
    let (a, _) = episode.pair;
    let outgoing = episode
        .messages
        .iter()
        .filter(|&&m| corpus.endpoints(m).0 == a)
        .count() as f64;
    let balance = if count > 0.0 {
        (outgoing - (count - outgoing)) / count
    } else {
        0.0
    };
    let duration = (episode.end - episode.start) as f64;
    let mean_gap = if episode.messages.len() > 1 {
        duration / (count - 1.0)
    } else {
        0.0
    };
    [
        duration,
        count,
        balance,
        if episode.initiator == a { 1.0 } else { 0.0 },
        mean_gap,
        episode.peak_density,
    ]
}

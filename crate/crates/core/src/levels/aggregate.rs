use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::{LevelError, Selection};
use crate::corpus::{Corpus, ParticipantIdx, TimeRange};

/// Directed message counts per `(sender, receiver)` over a selection.
pub fn volume_aggregate(
    corpus: &Corpus,
    selection: &Selection,
) -> BTreeMap<(ParticipantIdx, ParticipantIdx), usize> {
    let mut counts: HashMap<(ParticipantIdx, ParticipantIdx), usize> = HashMap::new();
    for &m in selection.messages() {
        *counts.entry(corpus.endpoints(m)).or_default() += 1;
    }
    counts.into_iter().collect()
}

/// Uniform time histogram. Bin `k` covers `[edges[k], edges[k + 1])`; the
/// whole histogram covers `[range.start, range.end + 1)` in seconds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
}

impl Histogram {
    pub fn empty(range: TimeRange, bins: usize) -> Self {
        let span = (range.end - range.start + 1) as f64;
        Self {
            edges: (0..=bins)
                .map(|k| range.start as f64 + span * k as f64 / bins as f64)
                .collect(),
            counts: vec![0; bins],
        }
    }

    /// Bin index of `t`, or `None` outside the range.
    pub fn bin_of(range: TimeRange, bins: usize, t: i64) -> Option<usize> {
        if !range.contains(t) {
            return None;
        }
        let span = (range.end - range.start + 1) as i128;
        let k = ((t - range.start) as i128 * bins as i128) / span;
        Some(k as usize)
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

/// Time histogram of the selected messages sent from `pair.0` to `pair.1`.
/// Messages outside `range` are not counted.
pub fn distribution_aggregate(
    corpus: &Corpus,
    selection: &Selection,
    pair: (ParticipantIdx, ParticipantIdx),
    bins: usize,
    range: TimeRange,
) -> Result<Histogram, LevelError> {
    if bins == 0 {
        return Err(LevelError::ZeroBins);
    }
    let mut hist = Histogram::empty(range, bins);
    for &m in corpus.slice_pair(pair.0, pair.1, Some(range)) {
        if selection.contains(m) {
            let k = Histogram::bin_of(range, bins, corpus.timestamp(m))
                .expect("slice is within range");
            hist.counts[k] += 1;
        }
    }
    Ok(hist)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Message, Participant};

    fn corpus() -> Corpus {
        Corpus::new(
            ["a", "b"].into_iter().map(Participant::new).collect(),
            vec![
                Message::new("1", "a", "b", 0, ""),
                Message::new("2", "a", "b", 49, ""),
                Message::new("3", "a", "b", 50, ""),
                Message::new("4", "a", "b", 99, ""),
                Message::new("5", "b", "a", 10, ""),
            ],
        )
        .unwrap()
    }

    #[test]
    fn volume_counts_sum_to_selection() {
        let c = corpus();
        let all = Selection::all(&c);
        let v = volume_aggregate(&c, &all);
        assert_eq!(v[&(ParticipantIdx(0), ParticipantIdx(1))], 4);
        assert_eq!(v[&(ParticipantIdx(1), ParticipantIdx(0))], 1);
        assert_eq!(v.values().sum::<usize>(), all.len());
        assert!(volume_aggregate(&c, &Selection::default()).is_empty());
    }

    #[test]
    fn histogram_bins_partition_range() {
        let c = corpus();
        let all = Selection::all(&c);
        let pair = (ParticipantIdx(0), ParticipantIdx(1));
        let h = distribution_aggregate(&c, &all, pair, 2, TimeRange::new(0, 99)).unwrap();
        assert_eq!(h.counts, [2, 2]);
        assert_eq!(h.edges, [0.0, 50.0, 100.0]);
        let one = distribution_aggregate(&c, &all, pair, 1, TimeRange::new(0, 99)).unwrap();
        assert_eq!(one.counts, [4]);
        assert!(matches!(
            distribution_aggregate(&c, &all, pair, 0, TimeRange::new(0, 99)),
            Err(LevelError::ZeroBins)
        ));
    }

    #[test]
    fn single_message_single_bin() {
        let c = corpus();
        let all = Selection::all(&c);
        let pair = (ParticipantIdx(1), ParticipantIdx(0));
        let h = distribution_aggregate(&c, &all, pair, 10, TimeRange::new(0, 99)).unwrap();
        let nonzero: Vec<_> = h.counts.iter().enumerate().filter(|(_, &n)| n > 0).collect();
        assert_eq!(nonzero, [(1, &1)]);
        assert!(h.edges[1] <= 10.0 && 10.0 < h.edges[2]);
    }
}

use std::collections::{BTreeSet, HashSet};

use serde::{Deserialize, Serialize};
use unicode_segmentation::UnicodeSegmentation;

use super::{LevelError, MessageFilter, KEYWORD, TIMEFILTER, USER_SELECTION};
use crate::corpus::{Corpus, MessageIdx, ParticipantIdx, TimeRange};

#[derive(Clone, Debug)]
pub struct TimeFilter {
    range: TimeRange,
}

impl MessageFilter for TimeFilter {
    fn accepts(&self, corpus: &Corpus, idx: MessageIdx) -> bool {
        self.range.contains(corpus.timestamp(idx))
    }
}

/// Passes messages stamped within `range` (inclusive).
pub fn timefilter(_corpus: &Corpus, range: TimeRange) -> Result<TimeFilter, LevelError> {
    if range.start > range.end {
        return Err(LevelError::invalid(
            TIMEFILTER,
            "start",
            format!("start {} is after end {}", range.start, range.end),
        ));
    }
    Ok(TimeFilter { range })
}

/// Which endpoint of a message a participant filter looks at.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Sender,
    Receiver,
    #[default]
    Either,
}

#[derive(Clone, Debug)]
pub struct UserSelectionFilter {
    include: HashSet<ParticipantIdx>,
    exclude: HashSet<ParticipantIdx>,
    role: Role,
}

impl UserSelectionFilter {
    pub(crate) fn excluded(&self) -> impl Iterator<Item = ParticipantIdx> + '_ {
        self.exclude.iter().copied()
    }
}

impl MessageFilter for UserSelectionFilter {
    fn accepts(&self, corpus: &Corpus, idx: MessageIdx) -> bool {
        let (s, r) = corpus.endpoints(idx);
        let included = |p| self.include.is_empty() || self.include.contains(&p);
        match self.role {
            Role::Sender => included(s) && !self.exclude.contains(&s),
            Role::Receiver => included(r) && !self.exclude.contains(&r),
            Role::Either => {
                (included(s) || included(r))
                    && !self.exclude.contains(&s)
                    && !self.exclude.contains(&r)
            }
        }
    }
}

/// Restricts messages by the participant on the `role` side.
///
/// With `Role::Either` a message passes when either endpoint is included and
/// neither endpoint is excluded.
pub fn user_selection(
    corpus: &Corpus,
    include: &BTreeSet<String>,
    exclude: &BTreeSet<String>,
    role: Role,
) -> Result<UserSelectionFilter, LevelError> {
    if let Some(both) = include.intersection(exclude).next() {
        return Err(LevelError::invalid(
            USER_SELECTION,
            "exclude",
            format!("`{both}` is both included and excluded"),
        ));
    }
    let resolve = |ids: &BTreeSet<String>, field: &str| {
        ids.iter()
            .map(|id| {
                corpus
                    .participant_idx(id)
                    .map_err(|e| LevelError::invalid(USER_SELECTION, field, e.to_string()))
            })
            .collect::<Result<HashSet<_>, _>>()
    };
    Ok(UserSelectionFilter {
        include: resolve(include, "include")?,
        exclude: resolve(exclude, "exclude")?,
        role,
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatchMode {
    #[default]
    Any,
    All,
}

#[derive(Clone, Debug)]
pub struct KeywordFilter {
    /// Each term as a word sequence; multi-word terms match as phrases.
    terms: Vec<Vec<String>>,
    mode: MatchMode,
    case_fold: bool,
}

impl KeywordFilter {
    pub fn matches_text(&self, text: &str) -> bool {
        let words: Vec<String> = text
            .unicode_words()
            .map(|w| self.normalize(w))
            .collect();
        let present = |term: &Vec<String>| words.windows(term.len()).any(|w| w == term.as_slice());
        match self.mode {
            MatchMode::Any => self.terms.iter().any(present),
            MatchMode::All => self.terms.iter().all(present),
        }
    }

    fn normalize(&self, w: &str) -> String {
        if self.case_fold {
            w.to_lowercase()
        } else {
            w.to_string()
        }
    }
}

impl MessageFilter for KeywordFilter {
    fn accepts(&self, corpus: &Corpus, idx: MessageIdx) -> bool {
        self.matches_text(&corpus.message(idx).content)
    }
}

/// Token-level term search over message content, split at Unicode word
/// boundaries.
pub fn keyword_search(
    _corpus: &Corpus,
    terms: &[String],
    mode: MatchMode,
    case_fold: bool,
) -> Result<KeywordFilter, LevelError> {
    if terms.is_empty() {
        return Err(LevelError::invalid(KEYWORD, "terms", "at least one term is required"));
    }
    let mut filter = KeywordFilter {
        terms: Vec::with_capacity(terms.len()),
        mode,
        case_fold,
    };
    for term in terms {
        let words: Vec<String> = term.unicode_words().map(|w| filter.normalize(w)).collect();
        if words.is_empty() {
            return Err(LevelError::invalid(
                KEYWORD,
                "terms",
                format!("term `{term}` contains no words"),
            ));
        }
        filter.terms.push(words);
    }
    Ok(filter)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Message, Participant};

    fn corpus() -> Corpus {
        Corpus::new(
            ["a", "b", "c"].into_iter().map(Participant::new).collect(),
            vec![
                Message::new("1", "a", "b", 10, "Enron's legal team, again."),
                Message::new("2", "b", "c", 20, "federal power act"),
                Message::new("3", "c", "a", 30, "nothing"),
            ],
        )
        .unwrap()
    }

    fn passing(c: &Corpus, f: &dyn MessageFilter) -> Vec<String> {
        (0..c.message_count() as u32)
            .map(MessageIdx)
            .filter(|&i| f.accepts(c, i))
            .map(|i| c.message(i).id.clone())
            .collect()
    }

    fn set(ids: &[&str]) -> BTreeSet<String> {
        ids.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn time_range_is_inclusive() {
        let c = corpus();
        let f = timefilter(&c, TimeRange::new(10, 20)).unwrap();
        assert_eq!(passing(&c, &f), ["1", "2"]);
        let before = timefilter(&c, TimeRange::new(0, 5)).unwrap();
        assert!(passing(&c, &before).is_empty());
        assert!(timefilter(&c, TimeRange::new(5, 0)).is_err());
    }

    #[test]
    fn user_selection_roles() {
        let c = corpus();
        let none = user_selection(&c, &set(&[]), &set(&[]), Role::Either).unwrap();
        assert_eq!(passing(&c, &none).len(), 3);
        let no_a = user_selection(&c, &set(&[]), &set(&["a"]), Role::Sender).unwrap();
        assert_eq!(passing(&c, &no_a), ["2", "3"]);
        let to_a = user_selection(&c, &set(&["a"]), &set(&[]), Role::Receiver).unwrap();
        assert_eq!(passing(&c, &to_a), ["3"]);
        let touching_a = user_selection(&c, &set(&["a"]), &set(&[]), Role::Either).unwrap();
        assert_eq!(passing(&c, &touching_a), ["1", "3"]);
        assert!(user_selection(&c, &set(&["a"]), &set(&["a"]), Role::Either).is_err());
        let err = user_selection(&c, &set(&["zed"]), &set(&[]), Role::Either).unwrap_err();
        assert!(err.to_string().contains("zed"));
    }

    #[test]
    fn keyword_tokens_and_case() {
        let c = corpus();
        let terms = |t: &[&str]| t.iter().map(|s| s.to_string()).collect::<Vec<_>>();
        let folded = keyword_search(&c, &terms(&["enron's"]), MatchMode::Any, true).unwrap();
        assert_eq!(passing(&c, &folded), ["1"]);
        let exact = keyword_search(&c, &terms(&["enron's"]), MatchMode::Any, false).unwrap();
        assert!(passing(&c, &exact).is_empty());
        let verbatim = keyword_search(&c, &terms(&["legal"]), MatchMode::Any, false).unwrap();
        assert_eq!(passing(&c, &verbatim), ["1"]);
        // "leg" is not a token
        let partial = keyword_search(&c, &terms(&["leg"]), MatchMode::Any, true).unwrap();
        assert!(passing(&c, &partial).is_empty());
        let all = keyword_search(&c, &terms(&["legal", "again"]), MatchMode::All, true).unwrap();
        assert_eq!(passing(&c, &all), ["1"]);
        let phrase = keyword_search(&c, &terms(&["power act"]), MatchMode::Any, true).unwrap();
        assert_eq!(passing(&c, &phrase), ["2"]);
        assert!(keyword_search(&c, &[], MatchMode::Any, true).is_err());
        assert!(keyword_search(&c, &terms(&["  ,"]), MatchMode::Any, true).is_err());
    }
}

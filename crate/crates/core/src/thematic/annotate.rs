use std::collections::HashMap;
use std::io::{BufRead, Write};
use std::path::Path;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Category, CategorySet};
use crate::corpus::{Corpus, CorpusError, MessageIdx};

/// An entity mention covering words `[start_word, end_word)` of the tagger's
/// tokenization.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct EntityAnnotation {
    pub start_word: usize,
    pub end_word: usize,
    pub category: Category,
    pub surface: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Token {
    pub text: String,
}

/// Turns one message's content into entity annotations.
///
/// Implementations must be deterministic: the same text always yields the
/// same annotations.
pub trait Tagger: Send + Sync {
    fn tokenize(&self, text: &str) -> Vec<Token>;

    fn tag(&self, tokens: &[Token]) -> Vec<EntityAnnotation>;

    /// Annotations sorted by `(start_word, end_word)`.
    fn annotate_text(&self, text: &str) -> Vec<EntityAnnotation> {
        let tokens = self.tokenize(text);
        let mut out = self.tag(&tokens);
        out.sort_by(|a, b| {
            (a.start_word, a.end_word, &a.category).cmp(&(b.start_word, b.end_word, &b.category))
        });
        out
    }
}

#[derive(Debug, Error)]
pub enum GazetteerError {
    #[error("gazetteer line {line}: {reason}")]
    Line { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Longest-match gazetteer over word lists, with pattern rules for
/// dates, times, percentages, money amounts and cardinals.
///
/// Matching is case-insensitive. At each position the longest gazetteer term
/// wins; a pattern rule only applies to a single token no term starts at.
/// Spans never overlap.
#[derive(Clone, Debug)]
pub struct GazetteerTagger {
    categories: CategorySet,
    /// First lower-cased word → candidate terms, longest first.
    terms: HashMap<String, Vec<(Vec<String>, Category)>>,
    patterns: Vec<(Category, Regex)>,
}

const PATTERN_RULES: [(&str, &str); 5] = [
    ("MONEY", r"^\$\d[\d,]*(\.\d+)?[kKmMbB]?$"),
    ("PERCENT", r"^\d+(\.\d+)?%$"),
    ("TIME", r"(?i)^\d{1,2}:\d{2}(:\d{2})?([ap]m)?$"),
    ("DATE", r"^(\d{4}-\d{2}-\d{2}|\d{1,2}/\d{1,2}/\d{2,4})$"),
    ("CARDINAL", r"^\d[\d,]*(\.\d+)?$"),
];

impl GazetteerTagger {
    /// Builds a tagger from `(category, term)` entries. Unknown categories are
    /// rejected; a term listed twice keeps its first category.
    pub fn new<I, C, T>(categories: CategorySet, entries: I) -> Result<Self, GazetteerError>
    where
        I: IntoIterator<Item = (C, T)>,
        C: AsRef<str>,
        T: AsRef<str>,
    {
        let mut tagger = Self::empty(categories);
        for (n, (cat, term)) in entries.into_iter().enumerate() {
            tagger
                .add(cat.as_ref(), term.as_ref())
                .map_err(|reason| GazetteerError::Line { line: n + 1, reason })?;
        }
        Ok(tagger)
    }

    /// Tagger with pattern rules only.
    pub fn empty(categories: CategorySet) -> Self {
        let patterns = PATTERN_RULES
            .iter()
            .filter_map(|(name, re)| {
                let cat = categories.resolve(name)?;
                Some((cat, Regex::new(re).expect("static pattern")))
            })
            .collect();
        Self {
            categories,
            terms: HashMap::new(),
            patterns,
        }
    }

    /// Parses `CATEGORY:term` lines; blank lines and `#` comments are skipped.
    pub fn parse(categories: CategorySet, text: &str) -> Result<Self, GazetteerError> {
        let mut tagger = Self::empty(categories);
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (cat, term) = line.split_once(':').ok_or_else(|| GazetteerError::Line {
                line: n + 1,
                reason: "expected CATEGORY:term".into(),
            })?;
            tagger
                .add(cat, term)
                .map_err(|reason| GazetteerError::Line { line: n + 1, reason })?;
        }
        Ok(tagger)
    }

    pub fn load(categories: CategorySet, path: impl AsRef<Path>) -> Result<Self, GazetteerError> {
        Self::parse(categories, &std::fs::read_to_string(path)?)
    }

    pub fn categories(&self) -> &CategorySet {
        &self.categories
    }

    fn add(&mut self, category: &str, term: &str) -> Result<(), String> {
        let cat = self
            .categories
            .resolve(category)
            .ok_or_else(|| format!("unknown category `{}`", category.trim()))?;
        let words: Vec<String> = self
            .tokenize(term)
            .into_iter()
            .map(|t| t.text.to_lowercase())
            .collect();
        if words.is_empty() {
            return Err("empty term".into());
        }
        let bucket = self.terms.entry(words[0].clone()).or_default();
        if bucket.iter().any(|(w, _)| *w == words) {
            return Ok(());
        }
        bucket.push((words, cat));
        // stable: equal lengths keep insertion order
        bucket.sort_by(|a, b| b.0.len().cmp(&a.0.len()));
        Ok(())
    }

    fn longest_term(&self, lowered: &[String], at: usize) -> Option<(usize, &Category)> {
        self.terms.get(&lowered[at])?.iter().find_map(|(words, cat)| {
            let end = at + words.len();
            (end <= lowered.len() && lowered[at..end] == words[..]).then_some((words.len(), cat))
        })
    }
}

fn trim_token(raw: &str) -> &str {
    raw.trim_start_matches(|c: char| !c.is_alphanumeric() && c != '$')
        .trim_end_matches(|c: char| !c.is_alphanumeric() && c != '%')
}

impl Tagger for GazetteerTagger {
    /// Whitespace-separated words with surrounding punctuation stripped
    /// (a leading `$` and trailing `%` are kept).
    fn tokenize(&self, text: &str) -> Vec<Token> {
        text.split_whitespace()
            .map(trim_token)
            .filter(|t| !t.is_empty())
            .map(|t| Token {
                text: t.to_string(),
            })
            .collect()
    }

    fn tag(&self, tokens: &[Token]) -> Vec<EntityAnnotation> {
        let lowered: Vec<String> = tokens.iter().map(|t| t.text.to_lowercase()).collect();
        let mut out = Vec::new();
        let mut i = 0;
        while i < tokens.len() {
            if let Some((len, cat)) = self.longest_term(&lowered, i) {
                let surface = tokens[i..i + len]
                    .iter()
                    .map(|t| t.text.as_str())
                    .collect::<Vec<_>>()
                    .join(" ");
                out.push(EntityAnnotation {
                    start_word: i,
                    end_word: i + len,
                    category: cat.clone(),
                    surface,
                });
                i += len;
                continue;
            }
            if let Some((cat, _)) = self.patterns.iter().find(|(_, re)| re.is_match(&tokens[i].text)) {
                out.push(EntityAnnotation {
                    start_word: i,
                    end_word: i + 1,
                    category: cat.clone(),
                    surface: tokens[i].text.clone(),
                });
            }
            i += 1;
        }
        out
    }
}

/// Per-message annotations, indexed by corpus position.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct AnnotationIndex {
    by_message: Vec<Vec<EntityAnnotation>>,
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
struct AnnotationRecord {
    message_id: String,
    annotations: Vec<EntityAnnotation>,
}

impl AnnotationIndex {
    pub fn empty_for(corpus: &Corpus) -> Self {
        Self {
            by_message: vec![Vec::new(); corpus.message_count()],
        }
    }

    pub fn get(&self, idx: MessageIdx) -> &[EntityAnnotation] {
        self.by_message
            .get(idx.get())
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    pub fn set(&mut self, idx: MessageIdx, annotations: Vec<EntityAnnotation>) {
        self.by_message[idx.get()] = annotations;
    }

    pub fn total(&self) -> usize {
        self.by_message.iter().map(Vec::len).sum()
    }

    /// One JSON record per annotated message, in corpus order.
    pub fn write_jsonl<W: Write>(&self, corpus: &Corpus, mut out: W) -> Result<(), CorpusError> {
        for (i, anns) in self.by_message.iter().enumerate() {
            if anns.is_empty() {
                continue;
            }
            let rec = AnnotationRecord {
                message_id: corpus.message(MessageIdx(i as u32)).id.clone(),
                annotations: anns.clone(),
            };
            serde_json::to_writer(&mut out, &rec)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(corpus: &Corpus, input: R) -> Result<Self, CorpusError> {
        let mut index = Self::empty_for(corpus);
        for line in input.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: AnnotationRecord = serde_json::from_str(&line)?;
            let idx = corpus.message_idx(&rec.message_id)?;
            index.set(idx, rec.annotations);
        }
        Ok(index)
    }
}

/// Annotates every message of the corpus.
pub fn annotate(corpus: &Corpus, tagger: &dyn Tagger) -> AnnotationIndex {
    AnnotationIndex {
        by_message: corpus
            .messages()
            .iter()
            .map(|m| {
                if m.content.is_empty() {
                    Vec::new()
                } else {
                    tagger.annotate_text(&m.content)
                }
            })
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tagger() -> GazetteerTagger {
        GazetteerTagger::parse(
            CategorySet::default(),
            "# demo\nPERSON:Alice\nORG:Enron\nGPE:California\nORG:Southern California Edison\nLAW:Federal Power Act\n",
        )
        .unwrap()
    }

    fn cats(anns: &[EntityAnnotation]) -> Vec<(&str, usize, usize)> {
        anns.iter()
            .map(|a| (a.category.as_str(), a.start_word, a.end_word))
            .collect()
    }

    #[test]
    fn no_entities_no_annotations() {
        assert!(tagger().annotate_text("nothing to see here").is_empty());
        assert!(tagger().annotate_text("").is_empty());
    }

    #[test]
    fn gazetteer_applied_in_order() {
        let anns = tagger().annotate_text("Alice met Enron in California");
        assert_eq!(
            cats(&anns),
            [("PERSON", 0, 1), ("ORG", 2, 3), ("GPE", 4, 5)]
        );
        assert_eq!(anns[2].surface, "California");
    }

    #[test]
    fn longest_match_wins_and_spans_do_not_overlap() {
        let anns = tagger().annotate_text("Southern California Edison, unlike California, cites the federal power act.");
        assert_eq!(
            cats(&anns),
            [("ORG", 0, 3), ("GPE", 4, 5), ("LAW", 7, 10)]
        );
        assert!(anns.windows(2).all(|w| w[0].end_word <= w[1].start_word));
    }

    #[test]
    fn pattern_rules() {
        let anns = tagger().annotate_text("Pay $1,200 (15%) by 2001-05-01 at 10:30am, 3 times");
        assert_eq!(
            cats(&anns),
            [
                ("MONEY", 1, 2),
                ("PERCENT", 2, 3),
                ("DATE", 4, 5),
                ("TIME", 6, 7),
                ("CARDINAL", 7, 8)
            ]
        );
    }

    #[test]
    fn unknown_category_reports_line() {
        let err = GazetteerTagger::parse(CategorySet::default(), "PERSON:Bob\nPLANET:Mars\n").unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
    }
}

//! Entity annotation of message content and concept co-occurrence queries.

mod annotate;
mod query;

pub use annotate::{
    annotate, AnnotationIndex, EntityAnnotation, GazetteerError, GazetteerTagger, Tagger, Token,
};
pub use query::{matches, parse_query, print_query, ConceptQuery, QueryError, QueryErrorKind};

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, MessageIdx};
use crate::levels::MessageFilter;

/// Entity category label, stored upper-case.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Category(String);

impl Category {
    pub fn new(name: &str) -> Self {
        Category(name.trim().to_ascii_uppercase())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

pub const DEFAULT_CATEGORIES: [&str; 18] = [
    "PERSON",
    "NORP",
    "FAC",
    "ORG",
    "GPE",
    "LOC",
    "PRODUCT",
    "EVENT",
    "WORK_OF_ART",
    "LAW",
    "LANGUAGE",
    "DATE",
    "TIME",
    "PERCENT",
    "MONEY",
    "QUANTITY",
    "ORDINAL",
    "CARDINAL",
];

/// The configured set of entity categories, in declaration order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CategorySet(Vec<Category>);

impl Default for CategorySet {
    fn default() -> Self {
        Self::new(DEFAULT_CATEGORIES)
    }
}

impl CategorySet {
    /// Names are upper-cased; duplicates keep their first position.
    pub fn new<I, S>(names: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut out: Vec<Category> = Vec::new();
        for n in names {
            let c = Category::new(n.as_ref());
            if !c.0.is_empty() && !out.contains(&c) {
                out.push(c);
            }
        }
        CategorySet(out)
    }

    /// Case-insensitive lookup.
    pub fn resolve(&self, name: &str) -> Option<Category> {
        self.0
            .iter()
            .find(|c| c.0.eq_ignore_ascii_case(name.trim()))
            .cloned()
    }

    pub fn contains(&self, c: &Category) -> bool {
        self.0.contains(c)
    }

    pub fn position(&self, c: &Category) -> Option<usize> {
        self.0.iter().position(|x| x == c)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Category> {
        self.0.iter()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Message filter for a concept query over a prebuilt annotation index.
#[derive(Clone, Debug)]
pub struct ThematicFilter<'a> {
    query: ConceptQuery,
    index: &'a AnnotationIndex,
}

impl MessageFilter for ThematicFilter<'_> {
    fn accepts(&self, _corpus: &Corpus, idx: MessageIdx) -> bool {
        matches(&self.query, self.index.get(idx))
    }
}

/// A message passes iff the query matches its annotations.
pub fn thematic_predicate<'a>(
    _corpus: &Corpus,
    index: &'a AnnotationIndex,
    query: &ConceptQuery,
) -> ThematicFilter<'a> {
    ThematicFilter {
        query: query.clone(),
        index,
    }
}

//! Concept query language.
//!
//! ```text
//! query := or
//! or    := and ("OR" and)*
//! and   := seq ("AND" seq)*
//! seq   := atom ( ("~" INT)? atom )*
//! atom  := CATEGORY | "(" or ")"
//! ```
//!
//! Sequence binds tighter than `AND`, which binds tighter than `OR`; both
//! Boolean operators associate to the left. Keywords and categories are
//! case-insensitive. Adjacent atoms without `~n` must occur in order with any
//! number of words between them; `~n` allows at most `n` words strictly
//! between the two spans. Only plain categories may appear in a sequence.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Category, CategorySet, EntityAnnotation};

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "camelCase")]
pub enum ConceptQuery {
    Atom {
        category: Category,
    },
    /// `gaps[i]` bounds the words between `atoms[i]` and `atoms[i + 1]`.
    Seq {
        atoms: Vec<Category>,
        gaps: Vec<Option<u32>>,
    },
    And {
        left: Box<ConceptQuery>,
        right: Box<ConceptQuery>,
    },
    Or {
        left: Box<ConceptQuery>,
        right: Box<ConceptQuery>,
    },
}

impl ConceptQuery {
    pub fn atom(category: Category) -> Self {
        ConceptQuery::Atom { category }
    }

    /// A one-element sequence collapses to an atom.
    ///
    /// # Panics
    /// If `atoms` is empty or `gaps.len() != atoms.len() - 1`.
    pub fn seq(atoms: Vec<Category>, gaps: Vec<Option<u32>>) -> Self {
        assert!(!atoms.is_empty(), "sequence needs at least one atom");
        assert_eq!(gaps.len(), atoms.len() - 1, "one gap per adjacent atom pair");
        if atoms.len() == 1 {
            return ConceptQuery::atom(atoms.into_iter().next().unwrap());
        }
        ConceptQuery::Seq { atoms, gaps }
    }

    pub fn and(left: ConceptQuery, right: ConceptQuery) -> Self {
        ConceptQuery::And {
            left: Box::new(left),
            right: Box::new(right),
        }
    }

    pub fn or(left: ConceptQuery, right: ConceptQuery) -> Self {
        ConceptQuery::Or {
            left: Box::new(left),
            right: Box::new(right),
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            ConceptQuery::Or { .. } => 1,
            ConceptQuery::And { .. } => 2,
            ConceptQuery::Atom { .. } | ConceptQuery::Seq { .. } => 3,
        }
    }
}

impl fmt::Display for ConceptQuery {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&print_query(self))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum QueryErrorKind {
    Empty,
    UnknownCategory(String),
    DanglingTilde,
    UnbalancedParens,
    UnexpectedToken(String),
    UnexpectedEnd,
    BadDistance(String),
    GroupInSequence,
}

impl fmt::Display for QueryErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            QueryErrorKind::Empty => write!(f, "empty query"),
            QueryErrorKind::UnknownCategory(c) => write!(f, "unknown category `{c}`"),
            QueryErrorKind::DanglingTilde => write!(f, "`~` must be followed by a distance and a category"),
            QueryErrorKind::UnbalancedParens => write!(f, "unbalanced parentheses"),
            QueryErrorKind::UnexpectedToken(t) => write!(f, "unexpected `{t}`"),
            QueryErrorKind::UnexpectedEnd => write!(f, "unexpected end of query"),
            QueryErrorKind::BadDistance(d) => write!(f, "invalid distance `{d}`"),
            QueryErrorKind::GroupInSequence => {
                write!(f, "only categories can be chained into a sequence")
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
#[error("{kind} at position {position}")]
pub struct QueryError {
    /// Byte offset into the query text.
    pub position: usize,
    pub kind: QueryErrorKind,
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Word(String),
    Int(String),
    Tilde,
    LParen,
    RParen,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Word(w) | Tok::Int(w) => f.write_str(w),
            Tok::Tilde => f.write_str("~"),
            Tok::LParen => f.write_str("("),
            Tok::RParen => f.write_str(")"),
        }
    }
}

fn lex(text: &str) -> Result<Vec<(usize, Tok)>, QueryError> {
    let mut out = Vec::new();
    let mut chars = text.char_indices().peekable();
    while let Some(&(pos, c)) = chars.peek() {
        if c.is_whitespace() {
            chars.next();
        } else if c == '~' {
            chars.next();
            out.push((pos, Tok::Tilde));
        } else if c == '(' {
            chars.next();
            out.push((pos, Tok::LParen));
        } else if c == ')' {
            chars.next();
            out.push((pos, Tok::RParen));
        } else if c.is_ascii_digit() {
            let mut s = String::new();
            while let Some(&(_, d)) = chars.peek() {
                if !d.is_ascii_digit() {
                    break;
                }
                s.push(d);
                chars.next();
            }
            out.push((pos, Tok::Int(s)));
        } else if c.is_alphabetic() || c == '_' {
            let mut s = String::new();
            while let Some(&(_, d)) = chars.peek() {
                if !(d.is_alphanumeric() || d == '_') {
                    break;
                }
                s.push(d);
                chars.next();
            }
            out.push((pos, Tok::Word(s)));
        } else {
            return Err(QueryError {
                position: pos,
                kind: QueryErrorKind::UnexpectedToken(c.to_string()),
            });
        }
    }
    Ok(out)
}

fn is_keyword(w: &str, kw: &str) -> bool {
    w.eq_ignore_ascii_case(kw)
}

enum SeqItem {
    Category(Category),
    Group(ConceptQuery, usize),
}

struct Parser<'a> {
    tokens: Vec<(usize, Tok)>,
    cursor: usize,
    end: usize,
    categories: &'a CategorySet,
}

impl Parser<'_> {
    fn peek(&self) -> Option<&Tok> {
        self.tokens.get(self.cursor).map(|(_, t)| t)
    }

    fn position(&self) -> usize {
        self.tokens
            .get(self.cursor)
            .map(|(p, _)| *p)
            .unwrap_or(self.end)
    }

    fn error(&self, kind: QueryErrorKind) -> QueryError {
        QueryError {
            position: self.position(),
            kind,
        }
    }

    fn peek_keyword(&self, kw: &str) -> bool {
        matches!(self.peek(), Some(Tok::Word(w)) if is_keyword(w, kw))
    }

    fn starts_atom(&self) -> bool {
        match self.peek() {
            Some(Tok::LParen) => true,
            Some(Tok::Word(w)) => !is_keyword(w, "AND") && !is_keyword(w, "OR"),
            _ => false,
        }
    }

    fn parse_or(&mut self) -> Result<ConceptQuery, QueryError> {
        let mut left = self.parse_and()?;
        while self.peek_keyword("OR") {
            self.cursor += 1;
            let right = self.parse_and()?;
            left = ConceptQuery::or(left, right);
        }
        Ok(left)
    }

    fn parse_and(&mut self) -> Result<ConceptQuery, QueryError> {
        let mut left = self.parse_seq()?;
        while self.peek_keyword("AND") {
            self.cursor += 1;
            let right = self.parse_seq()?;
            left = ConceptQuery::and(left, right);
        }
        Ok(left)
    }

    fn parse_seq(&mut self) -> Result<ConceptQuery, QueryError> {
        let mut items = vec![self.parse_atom()?];
        let mut gaps = Vec::new();
        loop {
            if matches!(self.peek(), Some(Tok::Tilde)) {
                let tilde_at = self.position();
                self.cursor += 1;
                let gap = match self.peek() {
                    Some(Tok::Int(digits)) => {
                        let gap = digits.parse::<u32>().map_err(|_| {
                            self.error(QueryErrorKind::BadDistance(digits.clone()))
                        })?;
                        self.cursor += 1;
                        gap
                    }
                    _ => {
                        return Err(QueryError {
                            position: tilde_at,
                            kind: QueryErrorKind::DanglingTilde,
                        })
                    }
                };
                if !self.starts_atom() {
                    return Err(QueryError {
                        position: tilde_at,
                        kind: QueryErrorKind::DanglingTilde,
                    });
                }
                gaps.push(Some(gap));
                items.push(self.parse_atom()?);
            } else if self.starts_atom() {
                gaps.push(None);
                items.push(self.parse_atom()?);
            } else {
                break;
            }
        }
        if items.len() == 1 {
            return Ok(match items.pop().unwrap() {
                SeqItem::Category(c) => ConceptQuery::atom(c),
                SeqItem::Group(q, _) => q,
            });
        }
        let mut atoms = Vec::with_capacity(items.len());
        for item in items {
            match item {
                SeqItem::Category(c) => atoms.push(c),
                SeqItem::Group(_, at) => {
                    return Err(QueryError {
                        position: at,
                        kind: QueryErrorKind::GroupInSequence,
                    })
                }
            }
        }
        Ok(ConceptQuery::seq(atoms, gaps))
    }

    fn parse_atom(&mut self) -> Result<SeqItem, QueryError> {
        let at = self.position();
        match self.peek().cloned() {
            Some(Tok::Word(w)) if is_keyword(&w, "AND") || is_keyword(&w, "OR") => {
                Err(self.error(QueryErrorKind::UnexpectedToken(w)))
            }
            Some(Tok::Word(w)) => {
                let cat = self
                    .categories
                    .resolve(&w)
                    .ok_or_else(|| self.error(QueryErrorKind::UnknownCategory(w.clone())))?;
                self.cursor += 1;
                Ok(SeqItem::Category(cat))
            }
            Some(Tok::LParen) => {
                self.cursor += 1;
                let inner = self.parse_or()?;
                match self.peek() {
                    Some(Tok::RParen) => {
                        self.cursor += 1;
                        Ok(SeqItem::Group(inner, at))
                    }
                    None => Err(QueryError {
                        position: at,
                        kind: QueryErrorKind::UnbalancedParens,
                    }),
                    Some(t) => Err(self.error(QueryErrorKind::UnexpectedToken(t.to_string()))),
                }
            }
            Some(Tok::RParen) => Err(self.error(QueryErrorKind::UnbalancedParens)),
            Some(Tok::Tilde) => Err(self.error(QueryErrorKind::DanglingTilde)),
            Some(t @ Tok::Int(_)) => Err(self.error(QueryErrorKind::UnexpectedToken(t.to_string()))),
            None => Err(self.error(QueryErrorKind::UnexpectedEnd)),
        }
    }
}

/// Parses query text against a category set.
pub fn parse_query(text: &str, categories: &CategorySet) -> Result<ConceptQuery, QueryError> {
    let tokens = lex(text)?;
    if tokens.is_empty() {
        return Err(QueryError {
            position: 0,
            kind: QueryErrorKind::Empty,
        });
    }
    let mut parser = Parser {
        tokens,
        cursor: 0,
        end: text.len(),
        categories,
    };
    let query = parser.parse_or()?;
    match parser.peek() {
        None => Ok(query),
        Some(Tok::RParen) => Err(parser.error(QueryErrorKind::UnbalancedParens)),
        Some(t) => Err(parser.error(QueryErrorKind::UnexpectedToken(t.to_string()))),
    }
}

/// Canonical text form. Parentheses appear only where the tree shape differs
/// from what precedence and left associativity would produce.
pub fn print_query(query: &ConceptQuery) -> String {
    let mut out = String::new();
    write_query(query, 0, &mut out);
    out
}

fn write_query(q: &ConceptQuery, min_prec: u8, out: &mut String) {
    let wrap = q.precedence() < min_prec;
    if wrap {
        out.push('(');
    }
    match q {
        ConceptQuery::Atom { category } => out.push_str(category.as_str()),
        ConceptQuery::Seq { atoms, gaps } => {
            out.push_str(atoms[0].as_str());
            for (atom, gap) in atoms[1..].iter().zip(gaps) {
                if let Some(n) = gap {
                    out.push_str(&format!(" ~{n}"));
                }
                out.push(' ');
                out.push_str(atom.as_str());
            }
        }
        ConceptQuery::And { left, right } => {
            write_query(left, 2, out);
            out.push_str(" AND ");
            write_query(right, 3, out);
        }
        ConceptQuery::Or { left, right } => {
            write_query(left, 1, out);
            out.push_str(" OR ");
            write_query(right, 2, out);
        }
    }
    if wrap {
        out.push(')');
    }
}

/// Evaluates a query on one message's annotations.
///
/// A sequence matches when annotations with the listed categories occur with
/// strictly increasing start words and every bounded gap
/// (`next.start_word - prev.end_word`) is within its limit.
pub fn matches(query: &ConceptQuery, annotations: &[EntityAnnotation]) -> bool {
    match query {
        ConceptQuery::Atom { category } => annotations.iter().any(|a| a.category == *category),
        ConceptQuery::Seq { atoms, gaps } => sequence_matches(atoms, gaps, annotations),
        ConceptQuery::And { left, right } => {
            matches(left, annotations) && matches(right, annotations)
        }
        ConceptQuery::Or { left, right } => matches(left, annotations) || matches(right, annotations),
    }
}

fn sequence_matches(atoms: &[Category], gaps: &[Option<u32>], anns: &[EntityAnnotation]) -> bool {
    // reachable[j]: some chain for atoms[..=k] ends at annotation j
    let mut reachable: Vec<bool> = anns.iter().map(|a| a.category == atoms[0]).collect();
    for (k, atom) in atoms.iter().enumerate().skip(1) {
        let gap = gaps[k - 1];
        let next: Vec<bool> = anns
            .iter()
            .map(|cur| {
                cur.category == *atom
                    && anns.iter().zip(&reachable).any(|(prev, &ok)| {
                        ok && prev.start_word < cur.start_word
                            && gap.is_none_or(|g| {
                                cur.start_word as i64 - prev.end_word as i64 <= g as i64
                            })
                    })
            })
            .collect();
        if !next.iter().any(|&b| b) {
            return false;
        }
        reachable = next;
    }
    reachable.iter().any(|&b| b)
}

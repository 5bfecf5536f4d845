//! Sentence pool, label sequences and corpus I/O.
//!
//! A [`Pool`] is the unit everything else operates on: an ordered list of
//! pre-tagged sentences with dense ids. Gold annotations, when the input file
//! carries them, are kept as typed spans so that a multi-class corpus can be
//! narrowed to a single entity class with [`Pool::restrict_to_class`].

mod conll;
mod persist;

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use conll::{
    load_corpus, load_corpus_with, parse_corpus, write_conll2003, CorpusFormat, PosColumn,
    ReaderOptions, TagScheme,
};
pub use persist::{load_session, save_session, SESSION_VERSION};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub surface: String,
    pub pos: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lemma: Option<String>,
    /// 1-based index of the governing token, `0` for the root.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub head: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub deprel: Option<String>,
}

impl Token {
    pub fn new(surface: impl Into<String>, pos: impl Into<String>) -> Self {
        Token {
            surface: surface.into(),
            pos: pos.into(),
            lemma: None,
            head: None,
            deprel: None,
        }
    }

    pub fn with_dependency(mut self, head: usize, deprel: impl Into<String>) -> Self {
        self.head = Some(head);
        self.deprel = Some(deprel.into());
        self
    }
}

/// Single-class BIO tag. The derived ordering (`B < I < O`) is the
/// tie-breaking order used by the decoder.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Label {
    B,
    I,
    O,
}

impl Label {
    pub const ALL: [Label; 3] = [Label::B, Label::I, Label::O];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(idx: usize) -> Label {
        Label::ALL[idx]
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Label::B => "B",
            Label::I => "I",
            Label::O => "O",
        };
        f.write_str(s)
    }
}

/// A valid BIO sequence: `I` never opens a sentence and never follows `O`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<Label>", into = "Vec<Label>")]
pub struct LabelSeq(Vec<Label>);

impl LabelSeq {
    pub fn new(labels: Vec<Label>) -> Result<Self> {
        let mut prev = Label::O;
        for (i, &l) in labels.iter().enumerate() {
            if l == Label::I && prev == Label::O {
                return Err(Error::InvalidLabels(format!(
                    "I at position {i} does not continue an entity"
                )));
            }
            prev = l;
        }
        Ok(LabelSeq(labels))
    }

    /// Builds a valid sequence from raw decoder output by turning every
    /// orphaned `I` into `B`.
    pub fn repaired(mut labels: Vec<Label>) -> Self {
        let mut prev = Label::O;
        for l in labels.iter_mut() {
            if *l == Label::I && prev == Label::O {
                *l = Label::B;
            }
            prev = *l;
        }
        LabelSeq(labels)
    }

    pub fn outside(len: usize) -> Self {
        LabelSeq(vec![Label::O; len])
    }

    /// Encodes half-open `(start, end)` spans. Spans must be in bounds,
    /// non-empty and non-overlapping.
    pub fn from_spans(len: usize, spans: &[(usize, usize)]) -> Result<Self> {
        let mut labels = vec![Label::O; len];
        for &(start, end) in spans {
            if start >= end || end > len {
                return Err(Error::InvalidLabels(format!(
                    "span {start}..{end} out of bounds for {len} tokens"
                )));
            }
            if labels[start..end].iter().any(|&l| l != Label::O) {
                return Err(Error::InvalidLabels(format!(
                    "span {start}..{end} overlaps another span"
                )));
            }
            labels[start] = Label::B;
            for l in &mut labels[start + 1..end] {
                *l = Label::I;
            }
        }
        Ok(LabelSeq(labels))
    }

    pub fn labels(&self) -> &[Label] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn spans(&self) -> Vec<(usize, usize)> {
        spans_of(&self.0)
    }

    pub fn entity_count(&self) -> usize {
        self.0.iter().filter(|&&l| l == Label::B).count()
    }

    /// IO view of the sequence (every entity token becomes `I`).
    pub fn to_io(&self) -> Vec<Label> {
        self.0
            .iter()
            .map(|&l| if l == Label::O { Label::O } else { Label::I })
            .collect()
    }
}

impl TryFrom<Vec<Label>> for LabelSeq {
    type Error = Error;

    fn try_from(labels: Vec<Label>) -> Result<Self> {
        LabelSeq::new(labels)
    }
}

impl From<LabelSeq> for Vec<Label> {
    fn from(seq: LabelSeq) -> Self {
        seq.0
    }
}

/// Entity spans of a raw label vector, reading an orphaned `I` as the start
/// of a new entity.
pub fn spans_of(labels: &[Label]) -> Vec<(usize, usize)> {
    let mut spans = Vec::new();
    let mut open: Option<usize> = None;
    for (i, &l) in labels.iter().enumerate() {
        match l {
            Label::B => {
                if let Some(s) = open.take() {
                    spans.push((s, i));
                }
                open = Some(i);
            }
            Label::I => {
                if open.is_none() {
                    open = Some(i);
                }
            }
            Label::O => {
                if let Some(s) = open.take() {
                    spans.push((s, i));
                }
            }
        }
    }
    if let Some(s) = open {
        spans.push((s, labels.len()));
    }
    spans
}

/// Typed gold span as read from a multi-class corpus.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EntitySpan {
    pub start: usize,
    pub end: usize,
    pub class: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SentenceState {
    Unlabeled,
    HumanLabeled,
    AutoLabeled,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sentence {
    pub id: usize,
    pub tokens: Vec<Token>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold: Option<Vec<EntitySpan>>,
    pub state: SentenceState,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub working: Option<LabelSeq>,
}

impl Sentence {
    pub fn new(id: usize, tokens: Vec<Token>) -> Self {
        Sentence {
            id,
            tokens,
            gold: None,
            state: SentenceState::Unlabeled,
            working: None,
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn is_labeled(&self) -> bool {
        self.state != SentenceState::Unlabeled
    }

    pub fn surfaces(&self) -> impl Iterator<Item = &str> {
        self.tokens.iter().map(|t| t.surface.as_str())
    }

    /// Gold spans as a single-class BIO sequence. Every gold span counts,
    /// so the pool should be restricted to one class first.
    pub fn gold_labels(&self) -> Option<LabelSeq> {
        let gold = self.gold.as_ref()?;
        let spans: Vec<(usize, usize)> = gold.iter().map(|s| (s.start, s.end)).collect();
        LabelSeq::from_spans(self.len(), &spans).ok()
    }

    pub(crate) fn set_working(&mut self, labels: LabelSeq, state: SentenceState) {
        debug_assert_ne!(state, SentenceState::Unlabeled);
        self.working = Some(labels);
        self.state = state;
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Pool {
    pub sentences: Vec<Sentence>,
    pub entity_class: String,
}

impl Pool {
    /// Builds a pool, renumbering sentence ids densely from zero.
    pub fn new(mut sentences: Vec<Sentence>, entity_class: impl Into<String>) -> Self {
        for (i, s) in sentences.iter_mut().enumerate() {
            s.id = i;
        }
        Pool {
            sentences,
            entity_class: entity_class.into(),
        }
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    pub fn get(&self, id: usize) -> Option<&Sentence> {
        self.sentences.get(id)
    }

    pub fn has_gold(&self) -> bool {
        !self.sentences.is_empty() && self.sentences.iter().all(|s| s.gold.is_some())
    }

    /// Copy of the pool with every gold annotation removed.
    pub fn without_gold(&self) -> Pool {
        let mut pool = self.clone();
        for s in &mut pool.sentences {
            s.gold = None;
        }
        pool
    }

    /// Keeps only gold spans of `class`; all other spans become `O`.
    pub fn restrict_to_class(&self, class: &str) -> Pool {
        let mut pool = self.clone();
        for s in &mut pool.sentences {
            if let Some(gold) = s.gold.as_mut() {
                gold.retain(|span| span.class == class);
            }
        }
        pool.entity_class = class.to_string();
        pool
    }

    /// Distinct gold entity surfaces (space-joined tokens).
    pub fn gold_surfaces(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        for s in &self.sentences {
            for span in s.gold.iter().flatten() {
                out.insert(join_surface(&s.tokens[span.start..span.end]));
            }
        }
        out
    }
}

pub(crate) fn join_surface(tokens: &[Token]) -> String {
    let mut out = String::new();
    for (i, t) in tokens.iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        out.push_str(&t.surface);
    }
    out
}

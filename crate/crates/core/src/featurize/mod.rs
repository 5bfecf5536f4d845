//! Coarse feature families for candidate noun phrases.
//!
//! Every family turns an occurrence of a noun phrase into one or more
//! [`Feature`]s; [`featurize_all`] sums the incidences into
//! `(np, feature, count)` rows that become the edges of the bipartite
//! NP/feature graph.

mod embed;
mod lexicon;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::corpus::{Pool, Sentence};
use crate::error::{Error, Result};
use crate::npex::{NounPhrase, NpConfig, NpSpan};

pub use embed::{train_embeddings, Embeddings};
pub use lexicon::SenseLexicon;

pub const SENTENCE_START: &str = "⟨S⟩";
pub const SENTENCE_END: &str = "⟨/S⟩";

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Family {
    /// Orthographic form (character class and case class).
    #[serde(rename = "LF_OF")]
    LfOf,
    /// Long and short word shapes.
    #[serde(rename = "LF_WS")]
    LfWs,
    /// Lexico-syntactic pattern `prev_NP_next`.
    #[serde(rename = "LS")]
    Ls,
    /// Dependency roles of the phrase head.
    #[serde(rename = "SF")]
    Sf,
    /// Sense classes from a lexicon.
    #[serde(rename = "SeF")]
    Sef,
    /// Bucketed distributional embedding dimensions.
    #[serde(rename = "CF")]
    Cf,
}

impl Family {
    pub const ALL: [Family; 6] = [
        Family::LfOf,
        Family::LfWs,
        Family::Ls,
        Family::Sf,
        Family::Sef,
        Family::Cf,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Family::LfOf => "LF_OF",
            Family::LfWs => "LF_WS",
            Family::Ls => "LS",
            Family::Sf => "SF",
            Family::Sef => "SeF",
            Family::Cf => "CF",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Feature {
    family: Family,
    value: String,
}

impl Feature {
    pub fn new(family: Family, value: impl Into<String>) -> Self {
        let value = value.into();
        assert!(!value.is_empty(), "feature value must be non-empty");
        Feature { family, value }
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn value(&self) -> &str {
        &self.value
    }
}

impl fmt::Display for Feature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.family, self.value)
    }
}

/// `count` incidences of `feature` on the noun phrase at index `np`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureCooc {
    pub np: usize,
    pub feature: Feature,
    pub count: u32,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct CfConfig {
    pub dims: usize,
    pub buckets: usize,
    pub window: usize,
    pub seed: u64,
}

impl Default for CfConfig {
    fn default() -> Self {
        CfConfig {
            dims: 50,
            buckets: 10,
            window: 2,
            seed: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeaturizeConfig {
    pub cf: CfConfig,
    pub np: NpConfig,
}

fn char_class(word: &str) -> &'static str {
    let letters = word.chars().any(char::is_alphabetic);
    let digits = word.chars().any(|c| c.is_ascii_digit());
    let only_alnum = word.chars().all(|c| c.is_alphabetic() || c.is_ascii_digit());
    match (only_alnum, letters, digits) {
        (true, false, true) => "numeric",
        (true, true, false) => "alpha",
        (true, true, true) => "alphanumeric",
        _ => "other",
    }
}

fn case_class(word: &str) -> Option<&'static str> {
    let letters: Vec<char> = word.chars().filter(|c| c.is_alphabetic()).collect();
    if letters.is_empty() {
        return None;
    }
    if letters.iter().all(|c| c.is_uppercase()) {
        return Some("all-upper");
    }
    if letters.iter().all(|c| c.is_lowercase()) {
        return Some("all-lower");
    }
    let mut chars = word.chars();
    let first = chars.next()?;
    if first.is_uppercase() && chars.filter(|c| c.is_alphabetic()).all(char::is_lowercase) {
        return Some("title");
    }
    Some("mixed")
}

/// Character class plus case class. Words without letters carry no case
/// class, so digit-only words yield a single feature.
pub fn orthographic_form(word: &str) -> Vec<Feature> {
    let mut out = vec![Feature::new(Family::LfOf, format!("char={}", char_class(word)))];
    if let Some(case) = case_class(word) {
        out.push(Feature::new(Family::LfOf, format!("case={case}")));
    }
    out
}

/// Letters become `L`, digits `D`, everything else is kept.
pub fn long_shape(word: &str) -> String {
    word.chars()
        .map(|c| {
            if c.is_alphabetic() {
                'L'
            } else if c.is_numeric() {
                'D'
            } else {
                c
            }
        })
        .collect()
}

/// Long shape with runs of the same symbol collapsed.
pub fn short_shape(word: &str) -> String {
    let mut out = String::new();
    let mut last = None;
    for c in long_shape(word).chars() {
        if last != Some(c) {
            out.push(c);
            last = Some(c);
        }
    }
    out
}

pub fn word_shape(word: &str) -> Vec<Feature> {
    vec![
        Feature::new(Family::LfWs, format!("lws={}", long_shape(word))),
        Feature::new(Family::LfWs, format!("sws={}", short_shape(word))),
    ]
}

pub fn lexico_syntactic(np: &NpSpan, sentence: &Sentence) -> Feature {
    let prev = if np.start == 0 {
        SENTENCE_START
    } else {
        sentence.tokens[np.start - 1].surface.as_str()
    };
    let next = sentence
        .tokens
        .get(np.end)
        .map_or(SENTENCE_END, |t| t.surface.as_str());
    Feature::new(Family::Ls, format!("{prev}_NP_{next}"))
}

/// Governor and dependent roles of the phrase head (its last token).
/// Empty when the sentence carries no dependency annotation.
pub fn syntactic(np: &NpSpan, sentence: &Sentence) -> Vec<Feature> {
    let head_idx = np.end - 1;
    let head = &sentence.tokens[head_idx];
    let Some(deprel) = head.deprel.as_deref() else {
        return Vec::new();
    };
    let mut out = Vec::new();
    let mut seen = std::collections::BTreeSet::new();
    for child in &sentence.tokens {
        if child.head == Some(head_idx + 1) {
            if let Some(rel) = child.deprel.as_deref() {
                if seen.insert(rel) {
                    out.push(Feature::new(Family::Sf, format!("gov:{rel}")));
                }
            }
        }
    }
    out.push(Feature::new(Family::Sf, format!("dep:{deprel}")));
    out
}

/// One `sense:<class>` feature per sense class of the phrase head.
pub fn semantic(np: &NounPhrase, lexicon: &SenseLexicon) -> Vec<Feature> {
    let head = np.surface.rsplit(' ').next().unwrap_or_default().to_lowercase();
    lexicon
        .senses(&head)
        .map(|class| Feature::new(Family::Sef, format!("sense:{class}")))
        .collect()
}

/// Contextual features: phrase vectors averaged from count-based token
/// embeddings, each dimension cut into quantile buckets.
pub fn contextual(pool: &Pool, nps: &[NounPhrase], config: CfConfig) -> Result<Vec<FeatureCooc>> {
    if config.dims == 0 {
        return Err(Error::Config("cf.dims must be at least 1".into()));
    }
    if config.buckets < 2 {
        return Err(Error::Config("cf.buckets must be at least 2".into()));
    }
    if pool.len() < 2 {
        log::warn!("pool has fewer than 2 sentences; skipping contextual features");
        return Ok(Vec::new());
    }
    if nps.is_empty() {
        return Ok(Vec::new());
    }
    let embeddings = train_embeddings(pool, config.dims, config.window, config.seed);
    let vectors: Vec<Vec<f64>> = nps
        .iter()
        .map(|np| embeddings.phrase_vector(&np.surface))
        .collect();
    let dims = embeddings.dims();
    let n = nps.len();
    let mut out = Vec::with_capacity(n * dims);
    let mut bins = vec![vec![0usize; dims]; n];
    for d in 0..dims {
        let mut column: Vec<f64> = vectors.iter().map(|v| v[d]).collect();
        column.sort_by(f64::total_cmp);
        for (i, v) in vectors.iter().enumerate() {
            let below = column.partition_point(|&x| x < v[d]);
            bins[i][d] = (below * config.buckets / n).min(config.buckets - 1);
        }
    }
    for (i, np) in nps.iter().enumerate() {
        for (d, bin) in bins[i].iter().enumerate() {
            out.push(FeatureCooc {
                np: i,
                feature: Feature::new(Family::Cf, format!("cf:{d}:{bin}")),
                count: np.count as u32,
            });
        }
    }
    Ok(out)
}

/// Every family over every occurrence of every phrase, summed per
/// `(np, feature)` and sorted.
pub fn featurize_all(
    pool: &Pool,
    nps: &[NounPhrase],
    lexicon: &SenseLexicon,
    config: &FeaturizeConfig,
) -> Result<Vec<FeatureCooc>> {
    let mut counts: BTreeMap<(usize, Feature), u32> = BTreeMap::new();
    let mut add = |np: usize, f: Feature, c: u32| *counts.entry((np, f)).or_insert(0) += c;

    for (idx, np) in nps.iter().enumerate() {
        let senses = semantic(np, lexicon);
        for occ in &np.occurrences {
            let sentence = &pool.sentences[occ.sentence_id];
            for token in &sentence.tokens[occ.start..occ.end] {
                for f in orthographic_form(&token.surface) {
                    add(idx, f, 1);
                }
                for f in word_shape(&token.surface) {
                    add(idx, f, 1);
                }
            }
            for f in orthographic_form(&occ.surface)
                .into_iter()
                .chain(word_shape(&occ.surface))
            {
                add(idx, Feature::new(f.family, format!("np:{}", f.value)), 1);
            }
            add(idx, lexico_syntactic(occ, sentence), 1);
            for f in syntactic(occ, sentence) {
                add(idx, f, 1);
            }
            for f in &senses {
                add(idx, f.clone(), 1);
            }
        }
    }
    for cooc in contextual(pool, nps, config.cf)? {
        add(cooc.np, cooc.feature, cooc.count);
    }
    Ok(counts
        .into_iter()
        .map(|((np, feature), count)| FeatureCooc { np, feature, count })
        .collect())
}

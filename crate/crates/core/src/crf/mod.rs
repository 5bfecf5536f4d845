//! Linear-chain CRF over the labels `B`, `I`, `O`.
//!
//! Parameters are laid out as `[state weights (attribute × label), start
//! weights (label), transition weights (previous × current)]`. Transitions
//! are learned rather than hard-constrained, so raw decodes may contain an
//! `I` after `O`; [`SequenceModel::decode`] repairs such sequences.

mod features;
mod lattice;
mod train;

use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

pub use features::{token_attributes, Template, TemplateSet};
pub use train::{train, train_with_history, Example, Objective};

use crate::corpus::{spans_of, Label, LabelSeq, Token};
use crate::error::{Error, Result};
use lattice::{log_sum_exp, Chain, Scores, L};

pub const MODEL_VERSION: u64 = 1;
const MODEL_FORMAT: &str = "annoloop-crf";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, rename_all = "camelCase")]
pub struct CrfConfig {
    pub templates: TemplateSet,
    pub l2sigma: f64,
    pub max_iter: u64,
    pub tol: f64,
}

impl Default for CrfConfig {
    fn default() -> Self {
        CrfConfig {
            templates: TemplateSet::default(),
            l2sigma: 1.0,
            max_iter: 200,
            tol: 1e-5,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct Layout {
    attrs: usize,
}

impl Layout {
    pub(crate) fn new(attrs: usize) -> Self {
        Layout { attrs }
    }

    pub(crate) fn dim(self) -> usize {
        self.attrs * L + L + L * L
    }

    pub(crate) fn state(self, attr: usize, label: usize) -> usize {
        attr * L + label
    }

    pub(crate) fn start(self, label: usize) -> usize {
        self.attrs * L + label
    }

    pub(crate) fn trans(self, prev: usize, cur: usize) -> usize {
        self.attrs * L + L + prev * L + cur
    }

    pub(crate) fn emissions(self, theta: &[f64], attrs: &[Vec<u32>]) -> Vec<Scores> {
        attrs
            .iter()
            .map(|tok| {
                let mut e = [0.0; L];
                for &a in tok {
                    let base = self.state(a as usize, 0);
                    for (y, v) in e.iter_mut().enumerate() {
                        *v += theta[base + y];
                    }
                }
                e
            })
            .collect()
    }

    pub(crate) fn chain_weights(self, theta: &[f64]) -> (Scores, [Scores; L]) {
        let start = std::array::from_fn(|y| theta[self.start(y)]);
        let trans = std::array::from_fn(|p| std::array::from_fn(|c| theta[self.trans(p, c)]));
        (start, trans)
    }
}

/// Top-`n` label sequences of one sentence with their conditional
/// probabilities, best first.
#[derive(Clone, Debug, PartialEq)]
pub struct NBest {
    pub sequences: Vec<Vec<Label>>,
    pub probs: Vec<f64>,
    pub log_probs: Vec<f64>,
}

impl NBest {
    pub fn len(&self) -> usize {
        self.sequences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequences.is_empty()
    }

    /// Entropy of the renormalized list divided by the log of its length.
    pub fn normalized_entropy(&self) -> f64 {
        normalized_entropy_log(&self.log_probs)
    }

    /// Self-information `-ln p` of the sequence at 1-based `rank`.
    pub fn self_info(&self, rank: usize) -> Result<f64> {
        match rank.checked_sub(1).and_then(|i| self.log_probs.get(i)) {
            Some(lp) => Ok((-lp).max(0.0)),
            None => Err(Error::RankOutOfRange {
                rank,
                available: self.len(),
            }),
        }
    }

    /// Probability-weighted entity count over the listed sequences.
    pub fn expected_entities(&self) -> f64 {
        self.sequences
            .iter()
            .zip(&self.probs)
            .map(|(seq, p)| p * spans_of(seq).len() as f64)
            .sum()
    }
}

/// Normalized entropy of a list of (possibly unnormalized) probabilities:
/// the list is rescaled to sum to one and its entropy divided by
/// `ln(len)`. A single-element list has entropy 0.
pub fn normalized_entropy(probs: &[f64]) -> f64 {
    let logs: Vec<f64> = probs.iter().map(|p| p.ln()).collect();
    normalized_entropy_log(&logs)
}

fn normalized_entropy_log(log_probs: &[f64]) -> f64 {
    if log_probs.len() < 2 {
        return 0.0;
    }
    let log_total = log_sum_exp(log_probs);
    let h: f64 = log_probs
        .iter()
        .map(|lp| {
            let lq = lp - log_total;
            let q = lq.exp();
            if q > 0.0 {
                -q * lq
            } else {
                0.0
            }
        })
        .sum();
    (h / (log_probs.len() as f64).ln()).clamp(0.0, 1.0)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct SequenceModel {
    labels: [Label; L],
    config: CrfConfig,
    lexicon: BTreeSet<String>,
    attributes: Vec<String>,
    theta: Vec<f64>,
    #[serde(skip)]
    index: HashMap<String, u32>,
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase")]
struct ModelRepr {
    labels: [Label; L],
    config: CrfConfig,
    lexicon: BTreeSet<String>,
    attributes: Vec<String>,
    theta: Vec<f64>,
}

impl<'de> Deserialize<'de> for SequenceModel {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        let repr = ModelRepr::deserialize(de)?;
        if repr.labels != Label::ALL {
            return Err(serde::de::Error::custom("label set must be [B, I, O]"));
        }
        SequenceModel::new(repr.config, repr.lexicon, repr.attributes, repr.theta)
            .map_err(serde::de::Error::custom)
    }
}

#[derive(Serialize)]
struct ModelEnvelope<'a> {
    format: &'static str,
    version: u64,
    model: &'a SequenceModel,
}

impl SequenceModel {
    pub fn new(
        config: CrfConfig,
        lexicon: BTreeSet<String>,
        attributes: Vec<String>,
        theta: Vec<f64>,
    ) -> Result<Self> {
        let layout = Layout::new(attributes.len());
        if theta.len() != layout.dim() {
            return Err(Error::Config(format!(
                "weight vector has {} entries, expected {}",
                theta.len(),
                layout.dim()
            )));
        }
        if theta.iter().any(|w| !w.is_finite()) {
            return Err(Error::Config("weight vector contains non-finite values".into()));
        }
        let mut index = HashMap::with_capacity(attributes.len());
        for (i, a) in attributes.iter().enumerate() {
            if index.insert(a.clone(), i as u32).is_some() {
                return Err(Error::Config(format!("duplicate attribute `{a}`")));
            }
        }
        Ok(SequenceModel {
            labels: Label::ALL,
            config,
            lexicon,
            attributes,
            theta,
            index,
        })
    }

    fn layout(&self) -> Layout {
        Layout::new(self.attributes.len())
    }

    pub fn config(&self) -> &CrfConfig {
        &self.config
    }

    pub fn lexicon(&self) -> &BTreeSet<String> {
        &self.lexicon
    }

    pub fn attributes(&self) -> &[String] {
        &self.attributes
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    /// Weight of an observation attribute for a label; 0 for attributes
    /// never seen in training.
    pub fn state_weight(&self, attr: &str, label: Label) -> f64 {
        self.index
            .get(attr)
            .map_or(0.0, |&a| self.theta[self.layout().state(a as usize, label.index())])
    }

    pub fn start_weight(&self, label: Label) -> f64 {
        self.theta[self.layout().start(label.index())]
    }

    pub fn transition(&self, prev: Label, cur: Label) -> f64 {
        self.theta[self.layout().trans(prev.index(), cur.index())]
    }

    pub fn token_attributes(&self, tokens: &[Token]) -> Vec<Vec<String>> {
        token_attributes(tokens, &self.config.templates, &self.lexicon)
    }

    fn emissions(&self, tokens: &[Token]) -> Vec<Scores> {
        let attrs: Vec<Vec<u32>> = self
            .token_attributes(tokens)
            .iter()
            .map(|tok| tok.iter().filter_map(|a| self.index.get(a).copied()).collect())
            .collect();
        self.layout().emissions(&self.theta, &attrs)
    }

    fn with_chain<R>(&self, tokens: &[Token], f: impl FnOnce(Chain<'_>) -> R) -> R {
        let emissions = self.emissions(tokens);
        let (start, trans) = self.layout().chain_weights(&self.theta);
        f(Chain {
            emissions: &emissions,
            start: &start,
            trans: &trans,
        })
    }

    pub fn log_partition(&self, tokens: &[Token]) -> f64 {
        self.with_chain(tokens, |chain| chain.forward().1)
    }

    /// Exact top-`n` sequences. Fewer are returned when fewer than `n`
    /// label sequences exist.
    pub fn nbest(&self, tokens: &[Token], n: usize) -> NBest {
        let n = n.max(1);
        self.with_chain(tokens, |chain| {
            let log_z = chain.forward().1;
            let paths = chain.nbest(n);
            let mut out = NBest {
                sequences: Vec::with_capacity(paths.len()),
                probs: Vec::with_capacity(paths.len()),
                log_probs: Vec::with_capacity(paths.len()),
            };
            for (score, path) in paths {
                let lp = (score - log_z).min(0.0);
                out.sequences
                    .push(path.iter().map(|&y| Label::from_index(y as usize)).collect());
                out.log_probs.push(lp);
                out.probs.push(lp.exp());
            }
            out
        })
    }

    /// Most probable labeling, with orphan `I` labels turned into `B`.
    pub fn decode(&self, tokens: &[Token]) -> LabelSeq {
        let best = self.nbest(tokens, 1);
        LabelSeq::repaired(best.sequences.into_iter().next().unwrap_or_default())
    }

    /// N-best sequence entropy, normalized to [0, 1].
    pub fn sequence_entropy(&self, tokens: &[Token], n: usize) -> f64 {
        if n == 1 {
            log::warn!("sequence entropy with n = 1 is always 0");
            return 0.0;
        }
        self.nbest(tokens, n).normalized_entropy()
    }

    /// Self-information of the sequence at 1-based `rank` in the n-best list.
    pub fn sequence_self_info(&self, tokens: &[Token], rank: usize, n: usize) -> Result<f64> {
        self.nbest(tokens, n.max(rank)).self_info(rank)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&ModelEnvelope {
            format: MODEL_FORMAT,
            version: MODEL_VERSION,
            model: self,
        })?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let mut doc: Value = serde_json::from_str(text)?;
        if doc.get("format").and_then(Value::as_str) != Some(MODEL_FORMAT) {
            return Err(Error::Config("not a model file".into()));
        }
        let version = doc.get("version").and_then(Value::as_u64).unwrap_or(0);
        if version != MODEL_VERSION {
            return Err(Error::VersionMismatch {
                found: version,
                expected: MODEL_VERSION,
            });
        }
        let model = doc
            .get_mut("model")
            .map(Value::take)
            .ok_or_else(|| Error::Config("model file lacks `model`".into()))?;
        Ok(serde_json::from_value(model)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

//! Session controller: batch sampling, bootstrap from confirmed seed
//! entities, thresholded auto-annotation, confidence (σ) and estimated
//! coverage.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{LabelSeq, Pool, SentenceState};
use crate::crf::{self, CrfConfig, Example, SequenceModel};
use crate::error::{Error, Result};
use crate::npex::NounPhrase;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mode {
    #[serde(rename = "AR")]
    Ar,
    #[serde(rename = "EAL")]
    Eal,
    #[serde(rename = "FA")]
    Fa,
    #[serde(rename = "HFA")]
    Hfa,
    #[serde(rename = "UFA")]
    Ufa,
}

impl Mode {
    pub const ALL: [Mode; 5] = [Mode::Ar, Mode::Eal, Mode::Fa, Mode::Hfa, Mode::Ufa];

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Ar => "AR",
            Mode::Eal => "EAL",
            Mode::Fa => "FA",
            Mode::Hfa => "HFA",
            Mode::Ufa => "UFA",
        }
    }

    pub fn auto_annotates(self) -> bool {
        matches!(self, Mode::Fa | Mode::Hfa | Mode::Ufa)
    }

    /// Acceptance threshold on `SE₁/SE₂` for the auto-annotating modes.
    pub fn default_threshold(self) -> Option<f64> {
        match self {
            Mode::Fa => Some(0.10),
            Mode::Hfa => Some(0.15),
            Mode::Ufa => Some(0.20),
            Mode::Ar | Mode::Eal => None,
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Mode::ALL
            .into_iter()
            .find(|m| m.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown mode `{s}` (expected AR, EAL, FA, HFA or UFA)")))
    }
}

/// Sentences over which σ is averaged.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum SigmaScope {
    #[default]
    Unlabeled,
    Pool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, rename_all = "camelCase")]
pub struct SessionConfig {
    pub mode: Mode,
    pub batch_size: usize,
    pub n: usize,
    pub threshold: Option<f64>,
    pub sigma_scope: SigmaScope,
    pub seed: u64,
    pub crf: CrfConfig,
}

impl Default for SessionConfig {
    fn default() -> Self {
        SessionConfig::for_mode(Mode::Eal)
    }
}

impl SessionConfig {
    pub fn for_mode(mode: Mode) -> Self {
        SessionConfig {
            mode,
            batch_size: 100,
            n: 10,
            threshold: mode.default_threshold(),
            sigma_scope: SigmaScope::Unlabeled,
            seed: 0,
            crf: CrfConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        if self.n == 0 {
            return Err(Error::Config("n-best size must be at least 1".into()));
        }
        match (self.mode.auto_annotates(), self.threshold) {
            (true, Some(t)) if t.is_finite() && t >= 0.0 => Ok(()),
            (true, _) => Err(Error::Config(format!("mode {} needs a non-negative threshold", self.mode))),
            (false, Some(_)) => Err(Error::Config(format!("mode {} takes no threshold", self.mode))),
            (false, None) => Ok(()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct MetricPoint {
    pub iteration: usize,
    pub labeled_count: usize,
    pub auto_count: usize,
    pub sigma: f64,
    pub estimated_coverage: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f_score: Option<f64>,
}

/// Plot-ready history: `iteration,labeled,auto,sigma,ec[,f]`.
pub fn history_csv(history: &[MetricPoint]) -> String {
    let with_f = history.iter().any(|m| m.f_score.is_some());
    let mut out = String::from("iteration,labeled,auto,sigma,ec");
    if with_f {
        out.push_str(",f");
    }
    out.push('\n');
    for m in history {
        out.push_str(&format!(
            "{},{},{},{:.6},{:.6}",
            m.iteration, m.labeled_count, m.auto_count, m.sigma, m.estimated_coverage
        ));
        if with_f {
            match m.f_score {
                Some(f) => out.push_str(&format!(",{f:.6}")),
                None => out.push(','),
            }
        }
        out.push('\n');
    }
    out
}

/// Auto-annotation rule on the self-information of the two best sequences.
pub fn accepts(se1: f64, se2: f64, threshold: f64) -> bool {
    if se2 <= 0.0 {
        return false;
    }
    se1 / se2 <= threshold
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SessionState {
    pub pool: Pool,
    pub model: Option<SequenceModel>,
    pub config: SessionConfig,
    pub confirmed_entities: BTreeSet<String>,
    pub history: Vec<MetricPoint>,
    /// Sentences handed out for human labeling and not yet returned.
    pub pending: Vec<usize>,
    pub iteration: usize,
    pub revision: u64,
}

impl SessionState {
    /// Starts a session. Gold annotations are stripped from the pool.
    pub fn new(pool: &Pool, config: SessionConfig) -> Result<Self> {
        config.validate()?;
        let mut pool = pool.without_gold();
        for s in &mut pool.sentences {
            s.state = SentenceState::Unlabeled;
            s.working = None;
        }
        Ok(SessionState {
            pool,
            model: None,
            config,
            confirmed_entities: BTreeSet::new(),
            history: Vec::new(),
            pending: Vec::new(),
            iteration: 0,
            revision: 0,
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        for (i, s) in self.pool.sentences.iter().enumerate() {
            if s.id != i {
                return Err(Error::CorruptSession(format!("sentence ids not dense at {i}")));
            }
            match (&s.working, s.state) {
                (None, SentenceState::Unlabeled) => {}
                (Some(w), st) if st != SentenceState::Unlabeled && w.len() == s.len() => {}
                _ => {
                    return Err(Error::CorruptSession(format!(
                        "sentence {i}: working labels inconsistent with state"
                    )))
                }
            }
        }
        let mut seen = BTreeSet::new();
        for &id in &self.pending {
            let ok = self.pool.get(id).is_some_and(|s| !s.is_labeled()) && seen.insert(id);
            if !ok {
                return Err(Error::CorruptSession(format!("invalid pending sentence {id}")));
            }
        }
        Ok(())
    }

    pub fn unlabeled(&self) -> Vec<usize> {
        self.pool
            .sentences
            .iter()
            .filter(|s| !s.is_labeled())
            .map(|s| s.id)
            .collect()
    }

    pub fn human_count(&self) -> usize {
        self.count(SentenceState::HumanLabeled)
    }

    pub fn auto_count(&self) -> usize {
        self.count(SentenceState::AutoLabeled)
    }

    fn count(&self, state: SentenceState) -> usize {
        self.pool.sentences.iter().filter(|s| s.state == state).count()
    }

    fn model(&self) -> Result<&SequenceModel> {
        self.model.as_ref().ok_or(Error::NoModel)
    }

    /// Model labeling of a sentence, if a model exists.
    pub fn suggest(&self, id: usize) -> Option<LabelSeq> {
        let model = self.model.as_ref()?;
        let s = self.pool.get(id)?;
        Some(model.decode(&s.tokens))
    }

    /// Normalized n-best entropy of each listed sentence, in input order.
    pub fn entropies(&self, ids: &[usize]) -> Result<Vec<f64>> {
        let model = self.model()?;
        let n = self.config.n;
        Ok(ids
            .par_iter()
            .map(|&id| model.nbest(&self.pool.sentences[id].tokens, n).normalized_entropy())
            .collect())
    }

    /// Chooses the next batch for human labeling and records it as pending.
    pub fn sample_batch(&mut self) -> Result<Vec<usize>> {
        let mut unlabeled = self.unlabeled();
        if unlabeled.is_empty() {
            return Err(Error::PoolExhausted);
        }
        let b = self.config.batch_size;
        let batch = if self.config.mode == Mode::Ar {
            let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
            rng.set_stream(self.iteration as u64 + 1);
            let (chosen, _) = unlabeled.partial_shuffle(&mut rng, b);
            chosen.to_vec()
        } else {
            let nse = self.entropies(&unlabeled)?;
            let mut order: Vec<usize> = (0..unlabeled.len()).collect();
            order.sort_by(|&a, &b| nse[b].total_cmp(&nse[a]).then(unlabeled[a].cmp(&unlabeled[b])));
            order.into_iter().take(b).map(|i| unlabeled[i]).collect()
        };
        self.pending = batch.clone();
        self.revision += 1;
        Ok(batch)
    }

    /// Records confirmed seed entities and hands out the unlabeled sentences
    /// containing their occurrences, most occurrences first, up to `b`.
    pub fn bootstrap_from_ese(&mut self, confirmed: &[NounPhrase]) -> Result<Vec<usize>> {
        if confirmed.is_empty() {
            return Err(Error::Empty("confirmed entities"));
        }
        let mut coverage: BTreeMap<usize, usize> = BTreeMap::new();
        for np in confirmed {
            self.confirmed_entities.insert(np.surface.clone());
            for occ in &np.occurrences {
                if self.pool.get(occ.sentence_id).is_some_and(|s| !s.is_labeled()) {
                    *coverage.entry(occ.sentence_id).or_insert(0) += 1;
                }
            }
        }
        let mut ids: Vec<(usize, usize)> = coverage.into_iter().collect();
        ids.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        let batch: Vec<usize> = ids.into_iter().take(self.config.batch_size).map(|(id, _)| id).collect();
        self.pending = batch.clone();
        self.revision += 1;
        Ok(batch)
    }

    /// Labels every unlabeled, non-pending sentence whose best sequence
    /// dominates the second one under the mode threshold.
    pub fn auto_annotate(&mut self) -> Result<Vec<usize>> {
        let threshold = match (self.config.mode.auto_annotates(), self.config.threshold) {
            (true, Some(t)) => t,
            _ => return Err(Error::Config(format!("mode {} does not auto-annotate", self.config.mode))),
        };
        let accepted = self.auto_candidates(threshold)?;
        for (id, labels) in &accepted {
            self.pool.sentences[*id].set_working(labels.clone(), SentenceState::AutoLabeled);
        }
        if !accepted.is_empty() {
            self.revision += 1;
        }
        Ok(accepted.into_iter().map(|(id, _)| id).collect())
    }

    /// Sentences that would be auto-labeled at `threshold`, with their labels.
    pub fn auto_candidates(&self, threshold: f64) -> Result<Vec<(usize, LabelSeq)>> {
        let model = self.model()?;
        let pending: BTreeSet<usize> = self.pending.iter().copied().collect();
        let ids: Vec<usize> = self.unlabeled().into_iter().filter(|id| !pending.contains(id)).collect();
        let n = self.config.n.max(2);
        Ok(ids
            .par_iter()
            .filter_map(|&id| {
                let nb = model.nbest(&self.pool.sentences[id].tokens, n);
                let (se1, se2) = (nb.self_info(1).ok()?, nb.self_info(2).ok()?);
                accepts(se1, se2, threshold)
                    .then(|| (id, LabelSeq::repaired(nb.sequences[0].clone())))
            })
            .collect())
    }

    /// σ: one minus the mean normalized entropy over the configured scope.
    pub fn sigma(&self) -> Result<f64> {
        let ids = match self.config.sigma_scope {
            SigmaScope::Unlabeled => self.unlabeled(),
            SigmaScope::Pool => (0..self.pool.len()).collect(),
        };
        self.model()?;
        if ids.is_empty() {
            log::warn!("σ evaluation set is empty; reporting 1.0");
            return Ok(1.0);
        }
        let nse = self.entropies(&ids)?;
        Ok((1.0 - nse.iter().sum::<f64>() / nse.len() as f64).clamp(0.0, 1.0))
    }

    /// Annotated entities over annotated plus expected unannotated entities.
    pub fn estimated_coverage(&self) -> Result<f64> {
        let model = self.model()?;
        let unlabeled = self.unlabeled();
        if unlabeled.is_empty() {
            return Ok(1.0);
        }
        let annotated: usize = self
            .pool
            .sentences
            .iter()
            .filter_map(|s| s.working.as_ref())
            .map(LabelSeq::entity_count)
            .sum();
        let n = self.config.n;
        let expected: f64 = unlabeled
            .par_iter()
            .map(|&id| model.nbest(&self.pool.sentences[id].tokens, n).expected_entities())
            .collect::<Vec<f64>>()
            .iter()
            .sum();
        let total = annotated as f64 + expected;
        Ok(if total == 0.0 { 0.0 } else { annotated as f64 / total })
    }

    /// Retrains from scratch on every human- and auto-labeled sentence.
    pub fn retrain(&mut self) -> Result<()> {
        let examples: Vec<Example<'_>> = self
            .pool
            .sentences
            .iter()
            .filter_map(|s| {
                s.working.as_ref().map(|w| Example {
                    tokens: &s.tokens,
                    labels: w.labels(),
                })
            })
            .collect();
        let model = crf::train(&examples, &self.confirmed_entities, &self.config.crf)?;
        self.model = Some(model);
        Ok(())
    }

    /// Merges human labels for the pending batch, retrains, auto-annotates
    /// and retrains again in the auto-annotating modes, then records a
    /// metric point. Returns `None` when there was nothing to do.
    pub fn step(&mut self, labels: Vec<(usize, LabelSeq)>) -> Result<Option<MetricPoint>> {
        if self.pending.is_empty() && labels.is_empty() {
            log::warn!("no pending batch; step is a no-op");
            return Ok(None);
        }
        self.check_submission(&labels)?;
        for (id, seq) in labels {
            self.pool.sentences[id].set_working(seq, SentenceState::HumanLabeled);
        }
        self.pending.clear();
        self.retrain()?;
        if self.config.mode.auto_annotates() && !self.auto_annotate()?.is_empty() {
            self.retrain()?;
        }
        self.iteration += 1;
        let point = MetricPoint {
            iteration: self.iteration,
            labeled_count: self.human_count(),
            auto_count: self.auto_count(),
            sigma: self.sigma()?,
            estimated_coverage: self.estimated_coverage()?,
            f_score: None,
        };
        self.history.push(point.clone());
        self.revision += 1;
        Ok(Some(point))
    }

    fn check_submission(&self, labels: &[(usize, LabelSeq)]) -> Result<()> {
        let pending: BTreeSet<usize> = self.pending.iter().copied().collect();
        let mut given = BTreeSet::new();
        for (id, seq) in labels {
            if !pending.contains(id) {
                return Err(Error::Rejected(format!("sentence {id} was not in the sampled batch")));
            }
            if !given.insert(*id) {
                return Err(Error::Rejected(format!("sentence {id} labeled twice")));
            }
            let len = self.pool.sentences[*id].len();
            if seq.len() != len {
                return Err(Error::Rejected(format!(
                    "sentence {id} has {len} tokens but {} labels",
                    seq.len()
                )));
            }
        }
        if given.len() != pending.len() {
            return Err(Error::Rejected(format!(
                "labels cover {} of {} sampled sentences",
                given.len(),
                pending.len()
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Label, Sentence, Token};

    fn pool(n: usize) -> Pool {
        let sentences = (0..n)
            .map(|i| {
                let words = if i % 3 == 0 {
                    vec!["in", "Paris", "today"]
                } else {
                    vec!["the", "cat", "sat"]
                };
                Sentence::new(i, words.into_iter().map(|w| Token::new(w, "NN")).collect())
            })
            .collect();
        Pool::new(sentences, "LOC")
    }

    fn gold(state: &SessionState, id: usize) -> LabelSeq {
        let s = &state.pool.sentences[id];
        let labels = s
            .tokens
            .iter()
            .map(|t| if t.surface == "Paris" { Label::B } else { Label::O })
            .collect();
        LabelSeq::new(labels).unwrap()
    }

    fn fast_config(mode: Mode) -> SessionConfig {
        let mut c = SessionConfig::for_mode(mode);
        c.batch_size = 4;
        c.crf.max_iter = 30;
        c
    }

    #[test]
    fn threshold_rules() {
        assert!(accepts(0.05, 1.0, 0.10));
        assert!(!accepts(1.0, 1.0, 0.20));
        assert!(!accepts(0.0, 0.0, 0.20));
        assert!(accepts(0.0, 0.5, 0.10));
        let (p1, p2) = (0.99f64, 0.005f64);
        assert!(accepts(-p1.ln(), -p2.ln(), 0.10));
    }

    #[test]
    fn config_validation() {
        let mut c = SessionConfig::for_mode(Mode::Eal);
        c.threshold = Some(0.1);
        assert!(c.validate().is_err());
        let mut c = SessionConfig::for_mode(Mode::Fa);
        c.threshold = None;
        assert!(c.validate().is_err());
        c.threshold = Some(0.1);
        c.batch_size = 0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn entropy_modes_need_model() {
        let mut state = SessionState::new(&pool(6), fast_config(Mode::Eal)).unwrap();
        assert!(matches!(state.sample_batch(), Err(Error::NoModel)));
    }

    #[test]
    fn ar_sampling_is_reproducible() {
        let p = pool(30);
        let mut a = SessionState::new(&p, fast_config(Mode::Ar)).unwrap();
        let mut b = SessionState::new(&p, fast_config(Mode::Ar)).unwrap();
        assert_eq!(a.sample_batch().unwrap(), b.sample_batch().unwrap());
        assert_eq!(a.pending.len(), 4);
    }

    #[test]
    fn step_rejects_unsampled_and_keeps_state() {
        let mut state = SessionState::new(&pool(9), fast_config(Mode::Ar)).unwrap();
        let batch = state.sample_batch().unwrap();
        let outside = (0..9).find(|i| !batch.contains(i)).unwrap();
        let before = state.clone();
        let bad = vec![(outside, gold(&state, outside))];
        assert!(matches!(state.step(bad), Err(Error::Rejected(_))));
        assert_eq!(state, before);
    }

    #[test]
    fn step_trains_and_records_metrics() {
        let mut state = SessionState::new(&pool(12), fast_config(Mode::Ar)).unwrap();
        let batch = state.sample_batch().unwrap();
        let labels = batch.iter().map(|&id| (id, gold(&state, id))).collect();
        let point = state.step(labels).unwrap().unwrap();
        assert_eq!(point.labeled_count, 4);
        assert!(state.model.is_some());
        assert!((0.0..=1.0).contains(&point.sigma));
        assert!((0.0..=1.0).contains(&point.estimated_coverage));
        assert!(state.step(vec![]).unwrap().is_none());
    }

    #[test]
    fn coverage_is_one_without_unlabeled() {
        let mut c = fast_config(Mode::Ar);
        c.batch_size = 100;
        let mut state = SessionState::new(&pool(5), c).unwrap();
        let batch = state.sample_batch().unwrap();
        let labels = batch.iter().map(|&id| (id, gold(&state, id))).collect();
        let point = state.step(labels).unwrap().unwrap();
        assert_eq!(point.estimated_coverage, 1.0);
        assert_eq!(point.sigma, 1.0);
        assert!(matches!(state.sample_batch(), Err(Error::PoolExhausted)));
    }

    #[test]
    fn csv_header_follows_f_presence() {
        let mut m = MetricPoint {
            iteration: 1,
            labeled_count: 2,
            auto_count: 0,
            sigma: 0.5,
            estimated_coverage: 0.25,
            f_score: None,
        };
        assert!(history_csv(std::slice::from_ref(&m)).starts_with("iteration,labeled,auto,sigma,ec\n"));
        m.f_score = Some(1.0);
        assert_eq!(
            history_csv(&[m]),
            "iteration,labeled,auto,sigma,ec,f\n1,2,0,0.500000,0.250000,1.000000\n"
        );
    }
}

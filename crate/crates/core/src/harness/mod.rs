//! Offline experiments with an emulated annotator that answers from gold
//! annotations.

pub mod fixture;

use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::active::{MetricPoint, Mode, SessionConfig, SessionState, SigmaScope};
use crate::corpus::{LabelSeq, Pool};
use crate::crf::{CrfConfig, SequenceModel};
use crate::error::{Error, Result};
use crate::esegraph::{self, precision_at_k, ExpandConfig, RankedList};
use crate::featurize::{featurize_all, FeatureCooc, FeaturizeConfig, SenseLexicon};
use crate::npex::{collect_nps, NounPhrase};

/// Answers labeling and filtering queries from a gold pool.
pub struct Emulator<'a> {
    gold: &'a Pool,
    surfaces: BTreeSet<String>,
}

impl<'a> Emulator<'a> {
    pub fn new(gold: &'a Pool) -> Self {
        Emulator {
            gold,
            surfaces: gold.gold_surfaces(),
        }
    }

    pub fn emulate_label(&self, ids: &[usize]) -> Result<Vec<(usize, LabelSeq)>> {
        ids.iter()
            .map(|&id| {
                let labels = self
                    .gold
                    .get(id)
                    .and_then(|s| s.gold_labels())
                    .ok_or(Error::MissingGold(id))?;
                Ok((id, labels))
            })
            .collect()
    }

    /// Keeps ranked phrases whose surface is a gold entity surface, once each.
    pub fn emulate_filter(&self, ranked: &RankedList, nps: &[NounPhrase]) -> Vec<NounPhrase> {
        let mut seen = BTreeSet::new();
        ranked
            .surfaces()
            .filter(|s| self.surfaces.contains(*s) && seen.insert(s.to_string()))
            .filter_map(|s| nps.iter().find(|np| np.surface == s).cloned())
            .collect()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f: f64,
}

/// Exact-span precision, recall and F over aligned sentences.
pub fn f_score(predicted: &[LabelSeq], gold: &[LabelSeq]) -> Result<Prf> {
    if predicted.len() != gold.len() {
        return Err(Error::InvalidLabels(format!(
            "{} predicted sequences for {} gold sequences",
            predicted.len(),
            gold.len()
        )));
    }
    let (mut tp, mut n_pred, mut n_gold) = (0usize, 0usize, 0usize);
    for (p, g) in predicted.iter().zip(gold) {
        if p.len() != g.len() {
            return Err(Error::InvalidLabels(format!("lengths {} and {} differ", p.len(), g.len())));
        }
        let gs: BTreeSet<(usize, usize)> = g.spans().into_iter().collect();
        let ps = p.spans();
        tp += ps.iter().filter(|s| gs.contains(s)).count();
        n_pred += ps.len();
        n_gold += gs.len();
    }
    let precision = if n_pred == 0 { 0.0 } else { tp as f64 / n_pred as f64 };
    let recall = if n_gold == 0 { 0.0 } else { tp as f64 / n_gold as f64 };
    let f = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Ok(Prf { precision, recall, f })
}

/// Scores the model's decoding of every sentence against gold.
pub fn model_f_score(model: &SequenceModel, gold: &Pool) -> Result<Prf> {
    let pairs: Vec<(LabelSeq, LabelSeq)> = gold
        .sentences
        .par_iter()
        .map(|s| {
            let g = s.gold_labels().ok_or(Error::MissingGold(s.id))?;
            Ok((model.decode(&s.tokens), g))
        })
        .collect::<Result<_>>()?;
    let (pred, gold): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
    f_score(&pred, &gold)
}

/// Jensen-Shannon divergence (natural log) between two non-negative curves,
/// each rescaled to sum to one.
pub fn js_divergence(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || a.len() != b.len() {
        return Err(Error::Config(format!(
            "curves must have equal non-zero length, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    let normalize = |c: &[f64]| -> Result<Vec<f64>> {
        if c.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
            return Err(Error::Config("curve values must be finite and non-negative".into()));
        }
        let sum: f64 = c.iter().sum();
        if sum == 0.0 {
            return Err(Error::Config("zero-sum curve".into()));
        }
        Ok(c.iter().map(|x| x / sum).collect())
    };
    let (p, q) = (normalize(a)?, normalize(b)?);
    let kl_to_mid = |x: &[f64], y: &[f64]| -> f64 {
        x.iter()
            .zip(y)
            .filter(|(xi, _)| **xi > 0.0)
            .map(|(xi, yi)| xi * (2.0 * xi / (xi + yi)).ln())
            .sum()
    };
    Ok((0.5 * kl_to_mid(&p, &q) + 0.5 * kl_to_mid(&q, &p)).max(0.0))
}

/// Pads every curve with its last value to the longest length, then
/// averages point-wise.
pub fn mean_curve(curves: &[Vec<f64>]) -> Vec<f64> {
    let len = curves.iter().map(Vec::len).max().unwrap_or(0);
    (0..len)
        .map(|i| {
            let sum: f64 = curves
                .iter()
                .map(|c| c.get(i).or(c.last()).copied().unwrap_or(0.0))
                .sum();
            sum / curves.len() as f64
        })
        .collect()
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum StopAt {
    #[default]
    FullF,
    PoolExhausted,
    SigmaTarget(f64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, rename_all = "camelCase")]
pub struct ExperimentConfig {
    pub mode: Mode,
    pub batch_size: usize,
    pub n: usize,
    /// Defaults to the mode's threshold in the auto-annotating modes.
    pub threshold: Option<f64>,
    /// Defaults to the most frequent gold surface among the noun phrases.
    pub seed_entity: Option<String>,
    pub rng_seed: u64,
    pub stop_at: StopAt,
    pub max_iterations: Option<usize>,
    pub sigma_scope: SigmaScope,
    pub crf: CrfConfig,
    pub expand: ExpandConfig,
    pub featurize: FeaturizeConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig::for_mode(Mode::Eal)
    }
}

impl ExperimentConfig {
    pub fn for_mode(mode: Mode) -> Self {
        ExperimentConfig {
            mode,
            batch_size: 100,
            n: 10,
            threshold: None,
            seed_entity: None,
            rng_seed: 0,
            stop_at: StopAt::FullF,
            max_iterations: None,
            sigma_scope: SigmaScope::Unlabeled,
            crf: CrfConfig::default(),
            expand: ExpandConfig::default(),
            featurize: FeaturizeConfig::default(),
        }
    }

    pub fn session_config(&self) -> SessionConfig {
        let threshold = if self.mode.auto_annotates() {
            self.threshold.or(self.mode.default_threshold())
        } else {
            None
        };
        SessionConfig {
            mode: self.mode,
            batch_size: self.batch_size,
            n: self.n,
            threshold,
            sigma_scope: self.sigma_scope,
            seed: self.rng_seed,
            crf: self.crf.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ExperimentResult {
    pub mode: Mode,
    pub rng_seed: u64,
    pub seed_entity: Option<String>,
    pub precision_at_k: Option<f64>,
    pub history: Vec<MetricPoint>,
    /// One minus the human-labeled fraction of the pool at the stop.
    pub percentage_cut: f64,
    pub final_f: f64,
}

impl ExperimentResult {
    pub fn f_curve(&self) -> Vec<f64> {
        self.history.iter().map(|m| m.f_score.unwrap_or(0.0)).collect()
    }

    pub fn sigma_curve(&self) -> Vec<f64> {
        self.history.iter().map(|m| m.sigma).collect()
    }

    pub fn coverage_curve(&self) -> Vec<f64> {
        self.history.iter().map(|m| m.estimated_coverage).collect()
    }
}

/// Candidate phrases and their feature co-occurrences for a pool.
pub fn candidates(pool: &Pool, config: &FeaturizeConfig) -> Result<(Vec<NounPhrase>, Vec<FeatureCooc>)> {
    let nps = collect_nps(pool, config.np);
    let coocs = featurize_all(pool, &nps, &SenseLexicon::default(), config)?;
    Ok((nps, coocs))
}

fn resolve_seed(config: &ExperimentConfig, gold: &Pool, nps: &[NounPhrase]) -> Result<NounPhrase> {
    if let Some(surface) = &config.seed_entity {
        let i = esegraph::find_np(nps, surface)?;
        return Ok(nps[i].clone());
    }
    let surfaces = gold.gold_surfaces();
    // `nps` is sorted by descending count, so the first hit is the most frequent.
    nps.iter()
        .find(|np| surfaces.contains(&np.surface))
        .cloned()
        .ok_or(Error::Empty("gold entity among noun phrases"))
}

struct Run<'a> {
    config: &'a ExperimentConfig,
    gold: &'a Pool,
    emulator: Emulator<'a>,
    state: SessionState,
}

impl<'a> Run<'a> {
    fn new(config: &'a ExperimentConfig, gold: &'a Pool) -> Result<Self> {
        if let Some(s) = gold.sentences.iter().find(|s| s.gold.is_none()) {
            return Err(Error::MissingGold(s.id));
        }
        Ok(Run {
            config,
            gold,
            emulator: Emulator::new(gold),
            state: SessionState::new(gold, config.session_config())?,
        })
    }

    /// Seed expansion, emulated confirmation and the bootstrap batch.
    fn bootstrap(&mut self) -> Result<(NounPhrase, f64, Vec<usize>)> {
        let (nps, coocs) = candidates(&self.state.pool, &self.config.featurize)?;
        let seed = resolve_seed(self.config, self.gold, &nps)?;
        let ranked = esegraph::expand(&[seed.surface.as_str()], &nps, &coocs, &self.config.expand)?;
        let p = precision_at_k(&ranked, &self.gold.gold_surfaces());
        let mut confirmed = vec![seed.clone()];
        confirmed.extend(self.emulator.emulate_filter(&ranked, &nps));
        let batch = self.state.bootstrap_from_ese(&confirmed)?;
        if batch.is_empty() {
            return Err(Error::Empty("bootstrap batch"));
        }
        Ok((seed, p, batch))
    }

    /// Labels the pending batch, steps the session and scores the model.
    fn label_and_step(&mut self, batch: &[usize]) -> Result<f64> {
        let labels = self.emulator.emulate_label(batch)?;
        self.state.step(labels)?;
        let model = self.state.model.as_ref().ok_or(Error::NoModel)?;
        let f = model_f_score(model, self.gold)?.f;
        if let Some(point) = self.state.history.last_mut() {
            point.f_score = Some(f);
        }
        Ok(f)
    }

    fn stop(&self, f: f64) -> bool {
        let last = self.state.history.last();
        match self.config.stop_at {
            StopAt::FullF => f >= 1.0,
            StopAt::SigmaTarget(target) => last.is_some_and(|m| m.sigma >= target),
            StopAt::PoolExhausted => false,
        }
    }
}

/// Runs one annotation path with the emulated annotator until the stop
/// condition or until no unlabeled sentence remains. AR samples at random
/// from the start; every other mode first bootstraps from seed expansion.
pub fn run_experiment(config: &ExperimentConfig, gold: &Pool) -> Result<ExperimentResult> {
    let mut run = Run::new(config, gold)?;
    let (mut seed_entity, mut p_at_k) = (None, None);
    let mut f = 0.0;
    if config.mode != Mode::Ar {
        let (seed, p, batch) = run.bootstrap()?;
        seed_entity = Some(seed.surface);
        p_at_k = Some(p);
        f = run.label_and_step(&batch)?;
    }
    loop {
        if !run.state.history.is_empty() && run.stop(f) {
            break;
        }
        if config.max_iterations.is_some_and(|m| run.state.iteration >= m) {
            break;
        }
        let batch = match run.state.sample_batch() {
            Err(Error::PoolExhausted) => break,
            other => other?,
        };
        f = run.label_and_step(&batch)?;
    }
    let pool_size = run.state.pool.len().max(1);
    Ok(ExperimentResult {
        mode: config.mode,
        rng_seed: config.rng_seed,
        seed_entity,
        precision_at_k: p_at_k,
        percentage_cut: 1.0 - run.state.human_count() as f64 / pool_size as f64,
        final_f: f,
        history: run.state.history,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct BootstrapLift {
    pub batch_size: usize,
    pub ese_f: f64,
    pub random_f: f64,
}

/// F of the base model trained on the seed-expansion bootstrap batch versus
/// one trained on a random batch of the same size.
pub fn bootstrap_lift(config: &ExperimentConfig, gold: &Pool) -> Result<BootstrapLift> {
    let mut ese_config = config.clone();
    ese_config.mode = Mode::Eal;
    let mut ese = Run::new(&ese_config, gold)?;
    let (_, _, batch) = ese.bootstrap()?;
    let ese_f = ese.label_and_step(&batch)?;

    let mut random_config = config.clone();
    random_config.mode = Mode::Ar;
    random_config.batch_size = batch.len();
    let mut random = Run::new(&random_config, gold)?;
    let sample = random.state.sample_batch()?;
    let random_f = random.label_and_step(&sample)?;
    Ok(BootstrapLift {
        batch_size: batch.len(),
        ese_f,
        random_f,
    })
}

/// One row per iteration of every run:
/// `mode,rng_seed,iteration,labeled,auto,sigma,ec,f`.
pub fn curves_csv(results: &[ExperimentResult]) -> String {
    let mut out = String::from("mode,rng_seed,iteration,labeled,auto,sigma,ec,f\n");
    for r in results {
        for m in &r.history {
            out.push_str(&format!(
                "{},{},{},{},{},{:.6},{:.6},{:.6}\n",
                r.mode,
                r.rng_seed,
                m.iteration,
                m.labeled_count,
                m.auto_count,
                m.sigma,
                m.estimated_coverage,
                m.f_score.unwrap_or(0.0)
            ));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{EntitySpan, Label, Sentence, Token};
    use crate::esegraph::RankedEntry;

    fn seq(labels: &[Label]) -> LabelSeq {
        LabelSeq::new(labels.to_vec()).unwrap()
    }

    #[test]
    fn f_score_worked_examples() {
        use Label::*;
        let gold = vec![seq(&[B, O, B, I])];
        assert_eq!(f_score(&gold, &gold).unwrap().f, 1.0);
        assert_eq!(f_score(&[seq(&[O, O, O, O])], &gold).unwrap().f, 0.0);
        let pred = vec![seq(&[B, O, B, O])];
        let prf = f_score(&pred, &gold).unwrap();
        assert_eq!((prf.precision, prf.recall, prf.f), (0.5, 0.5, 0.5));
        assert!(f_score(&pred, &[]).is_err());
    }

    #[test]
    fn jsd_worked_examples() {
        assert_eq!(js_divergence(&[0.2, 0.5, 0.3], &[0.2, 0.5, 0.3]).unwrap(), 0.0);
        assert!((js_divergence(&[1.0, 0.0], &[0.0, 1.0]).unwrap() - 2f64.ln()).abs() < 1e-12);
        let (a, b) = ([0.1, 0.7, 0.9], [0.5, 0.5, 0.2]);
        assert_eq!(js_divergence(&a, &b).unwrap(), js_divergence(&b, &a).unwrap());
        assert!(js_divergence(&[0.0, 0.0], &[1.0, 1.0]).is_err());
        assert!(js_divergence(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn mean_curve_pads_with_last() {
        assert_eq!(mean_curve(&[vec![0.5, 1.0], vec![0.1, 0.3, 0.5]]), vec![0.3, 0.65, 0.75]);
    }

    fn gold_pool() -> Pool {
        let mut s = Sentence::new(0, vec![Token::new("in", "IN"), Token::new("Paris", "NNP")]);
        s.gold = Some(vec![EntitySpan { start: 1, end: 2, class: "LOC".into() }]);
        let t = Sentence::new(1, vec![Token::new("hi", "UH")]);
        Pool::new(vec![s, t], "LOC")
    }

    #[test]
    fn emulator_labels_and_filters() {
        let pool = gold_pool();
        let em = Emulator::new(&pool);
        assert_eq!(em.emulate_label(&[0]).unwrap()[0].1.labels(), &[Label::O, Label::B]);
        assert!(em.emulate_label(&[]).unwrap().is_empty());
        assert!(matches!(em.emulate_label(&[1]), Err(Error::MissingGold(1))));
        let nps = collect_nps(&pool, Default::default());
        let entry = |s: &str| RankedEntry { surface: s.into(), count: 1, score: 1.0 };
        let ranked = RankedList { entries: vec![entry("Paris"), entry("Rome"), entry("Paris")], k: 30 };
        let kept = em.emulate_filter(&ranked, &nps);
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].surface, "Paris");
    }
}

//! Bipartite noun-phrase/feature graph, edge weighting, similarity and
//! seed-based ranking.
//!
//! Edges carry one of three weights: the raw co-occurrence count, a TF-IDF
//! with document frequency `|N|_f` (distinct phrases touching the feature),
//! or a TF-IDF whose IDF uses the summed co-occurrence count of the feature.
//! Ranking can be plain (one graph) or an ensemble that ranks on every
//! leave-one-family-out subgraph and merges the sublists by mean reciprocal
//! rank.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::featurize::{Family, Feature, FeatureCooc};
use crate::npex::NounPhrase;

/// Output size used by the evaluation protocol.
pub const DEFAULT_K: usize = 30;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Scheme {
    Count,
    Tfidf,
    TfidfSum,
}

impl Scheme {
    pub fn as_str(self) -> &'static str {
        match self {
            Scheme::Count => "count",
            Scheme::Tfidf => "tfidf",
            Scheme::TfidfSum => "tfidfSum",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "count" => Ok(Scheme::Count),
            "tfidf" => Ok(Scheme::Tfidf),
            "tfidfsum" | "tfidf-sum" => Ok(Scheme::TfidfSum),
            other => Err(Error::Config(format!("unknown weighting scheme `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Similarity {
    Cosine,
    Context,
}

impl FromStr for Similarity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cosine" => Ok(Similarity::Cosine),
            "context" => Ok(Similarity::Context),
            other => Err(Error::Config(format!("unknown similarity `{other}`"))),
        }
    }
}

/// How feature families are grouped into coarse families for the ensemble.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum FamilyGrouping {
    /// Orthographic form and word shape are separate families.
    #[default]
    Six,
    /// Orthographic form and word shape form one lexical family.
    Five,
}

impl FamilyGrouping {
    fn coarse(self, family: Family) -> Family {
        match (self, family) {
            (FamilyGrouping::Five, Family::LfWs) => Family::LfOf,
            (_, f) => f,
        }
    }
}

#[derive(Clone, Debug)]
pub struct FeatureGraph {
    nps: Vec<NounPhrase>,
    features: Vec<Feature>,
    /// Per phrase, `(feature id, weight)` sorted by feature id.
    edges: Vec<Vec<(usize, f64)>>,
    scheme: Scheme,
}

/// Builds the weighted graph. `nps` fixes `|N|`; `coocs` index into it.
pub fn build_graph(nps: &[NounPhrase], coocs: &[FeatureCooc], scheme: Scheme) -> Result<FeatureGraph> {
    if coocs.is_empty() {
        return Err(Error::Empty("feature co-occurrences"));
    }
    let n = nps.len();
    if scheme != Scheme::Count && n < 2 {
        return Err(Error::DegenerateIdf {
            scheme: scheme.as_str(),
            found: n,
        });
    }
    let mut feature_ids: BTreeMap<&Feature, usize> = BTreeMap::new();
    for c in coocs {
        feature_ids.entry(&c.feature).or_insert(0);
    }
    for (i, id) in feature_ids.values_mut().enumerate() {
        *id = i;
    }
    let features: Vec<Feature> = feature_ids.keys().map(|f| (*f).clone()).collect();

    let mut counts: Vec<BTreeMap<usize, u64>> = vec![BTreeMap::new(); n];
    for c in coocs.iter().filter(|c| c.count > 0) {
        assert!(c.np < n, "co-occurrence refers to phrase {} of {n}", c.np);
        *counts[c.np].entry(feature_ids[&c.feature]).or_insert(0) += u64::from(c.count);
    }
    let mut df = vec![0u64; features.len()];
    let mut total = vec![0u64; features.len()];
    for row in &counts {
        for (&f, &c) in row {
            df[f] += 1;
            total[f] += c;
        }
    }
    let log_n = (n as f64).ln();
    let edges = counts
        .into_iter()
        .map(|row| {
            row.into_iter()
                .map(|(f, c)| {
                    let c = c as f64;
                    let w = match scheme {
                        Scheme::Count => c,
                        Scheme::Tfidf => (1.0 + c).ln() * (log_n - (df[f] as f64).ln()),
                        // The summed count can exceed |N|; clamp to keep weights non-negative.
                        Scheme::TfidfSum => ((1.0 + c).ln() * (log_n - (total[f] as f64).ln())).max(0.0),
                    };
                    (f, w)
                })
                .collect()
        })
        .collect();
    Ok(FeatureGraph {
        nps: nps.to_vec(),
        features,
        edges,
        scheme,
    })
}

impl FeatureGraph {
    pub fn nps(&self) -> &[NounPhrase] {
        &self.nps
    }

    pub fn features(&self) -> &[Feature] {
        &self.features
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn edges(&self, np: usize) -> &[(usize, f64)] {
        &self.edges[np]
    }

    pub fn weight(&self, np: usize, feature: &Feature) -> f64 {
        let Ok(fid) = self.features.binary_search(feature) else {
            return 0.0;
        };
        self.edges[np]
            .binary_search_by_key(&fid, |&(f, _)| f)
            .map_or(0.0, |i| self.edges[np][i].1)
    }

    pub fn index_of(&self, surface: &str) -> Result<usize> {
        find_np(&self.nps, surface)
    }

    pub fn similarity(&self, sim: Similarity, a: usize, b: usize) -> f64 {
        match sim {
            Similarity::Cosine => self.sim_cosine(a, b),
            Similarity::Context => self.sim_context(a, b),
        }
    }

    /// Cosine of the two edge-weight vectors; 0 when either is all-zero.
    pub fn sim_cosine(&self, a: usize, b: usize) -> f64 {
        let (ea, eb) = (&self.edges[a], &self.edges[b]);
        let norm = |e: &[(usize, f64)]| e.iter().map(|(_, w)| w * w).sum::<f64>().sqrt();
        let (na, nb) = (norm(ea), norm(eb));
        if na == 0.0 || nb == 0.0 {
            return 0.0;
        }
        let mut dot = 0.0;
        merge(ea, eb, |wa, wb| dot += wa * wb);
        (dot / (na * nb)).clamp(0.0, 1.0)
    }

    /// Sum of element-wise minima over sum of element-wise maxima.
    pub fn sim_context(&self, a: usize, b: usize) -> f64 {
        let (mut lo, mut hi) = (0.0, 0.0);
        merge(&self.edges[a], &self.edges[b], |wa, wb| {
            lo += wa.min(wb);
            hi += wa.max(wb);
        });
        if hi == 0.0 {
            0.0
        } else {
            lo / hi
        }
    }

    /// Similarity of every phrase to `seed` (the seed itself scores 0).
    fn scores(&self, seed: usize, sim: Similarity) -> Vec<f64> {
        (0..self.nps.len())
            .map(|i| if i == seed { 0.0 } else { self.similarity(sim, seed, i) })
            .collect()
    }
}

/// Walks the union of two sorted sparse vectors; absent entries are 0.
fn merge(a: &[(usize, f64)], b: &[(usize, f64)], mut f: impl FnMut(f64, f64)) {
    let (mut i, mut j) = (0, 0);
    while i < a.len() || j < b.len() {
        match (a.get(i), b.get(j)) {
            (Some(&(fa, wa)), Some(&(fb, wb))) if fa == fb => {
                f(wa, wb);
                i += 1;
                j += 1;
            }
            (Some(&(fa, wa)), Some(&(fb, _))) if fa < fb => {
                f(wa, 0.0);
                i += 1;
            }
            (Some(_), Some(&(_, wb))) => {
                f(0.0, wb);
                j += 1;
            }
            (Some(&(_, wa)), None) => {
                f(wa, 0.0);
                i += 1;
            }
            (None, Some(&(_, wb))) => {
                f(0.0, wb);
                j += 1;
            }
            (None, None) => unreachable!(),
        }
    }
}

/// Index of the phrase with exactly this surface, or an error listing the
/// nearest surfaces.
pub fn find_np(nps: &[NounPhrase], surface: &str) -> Result<usize> {
    if let Some(i) = nps.iter().position(|np| np.surface == surface) {
        return Ok(i);
    }
    let lower = surface.to_lowercase();
    let mut scored: Vec<(f64, &str)> = nps
        .iter()
        .map(|np| {
            (
                strsim::normalized_levenshtein(&lower, &np.surface.to_lowercase()),
                np.surface.as_str(),
            )
        })
        .collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(b.1)));
    Err(Error::SeedNotFound {
        surface: surface.to_string(),
        nearest: scored.into_iter().take(5).map(|(_, s)| s.to_string()).collect(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankedEntry {
    pub surface: String,
    pub count: usize,
    pub score: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankedList {
    pub entries: Vec<RankedEntry>,
    pub k: usize,
}

impl RankedList {
    pub fn surfaces(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.surface.as_str())
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::from("rank\tsurface\tscore\n");
        for (i, e) in self.entries.iter().enumerate() {
            out.push_str(&format!("{}\t{}\t{:.6}\n", i + 1, e.surface, e.score));
        }
        out
    }
}

/// Sorts phrase indices by score (descending), then count (descending),
/// then surface; drops zero scores and the excluded indices.
fn top_k(nps: &[NounPhrase], scores: &[f64], exclude: &BTreeSet<usize>, k: usize) -> RankedList {
    let mut idx: Vec<usize> = (0..nps.len())
        .filter(|i| scores[*i] > 0.0 && !exclude.contains(i))
        .collect();
    idx.sort_by(|&a, &b| {
        scores[b]
            .total_cmp(&scores[a])
            .then_with(|| nps[b].count.cmp(&nps[a].count))
            .then_with(|| nps[a].surface.cmp(&nps[b].surface))
    });
    idx.truncate(k);
    RankedList {
        entries: idx
            .into_iter()
            .map(|i| RankedEntry {
                surface: nps[i].surface.clone(),
                count: nps[i].count,
                score: scores[i],
            })
            .collect(),
        k,
    }
}

/// Top-`k` phrases by similarity to `seed`, seed excluded. Phrases with
/// zero similarity are not ranked.
pub fn rank_plain(seed: &str, graph: &FeatureGraph, sim: Similarity, k: usize) -> Result<RankedList> {
    let s = graph.index_of(seed)?;
    Ok(top_k(&graph.nps, &graph.scores(s, sim), &BTreeSet::from([s]), k))
}

/// Graphs needed to score a seed: either the full graph, or one graph per
/// leave-one-family-out subset.
enum Scorer {
    Plain(FeatureGraph),
    Ensemble(Vec<FeatureGraph>),
}

impl Scorer {
    fn new(
        nps: &[NounPhrase],
        coocs: &[FeatureCooc],
        scheme: Scheme,
        ensemble: bool,
        grouping: FamilyGrouping,
    ) -> Result<Scorer> {
        if !ensemble {
            return Ok(Scorer::Plain(build_graph(nps, coocs, scheme)?));
        }
        let families: BTreeSet<Family> = coocs
            .iter()
            .map(|c| grouping.coarse(c.feature.family()))
            .collect();
        if families.len() < 2 {
            log::warn!("only {} coarse feature family present; ranking without ensemble", families.len());
            return Ok(Scorer::Plain(build_graph(nps, coocs, scheme)?));
        }
        let graphs = families
            .iter()
            .map(|&left_out| {
                let subset: Vec<FeatureCooc> = coocs
                    .iter()
                    .filter(|c| grouping.coarse(c.feature.family()) != left_out)
                    .cloned()
                    .collect();
                build_graph(nps, &subset, scheme)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Scorer::Ensemble(graphs))
    }

    /// Per-phrase score for one seed: similarity for plain ranking, mean
    /// reciprocal rank over the sublists for the ensemble. A phrase outside
    /// a sublist's top-`k` contributes 0 for that sublist.
    fn scores(&self, nps: &[NounPhrase], seed: usize, sim: Similarity, k: usize) -> Vec<f64> {
        match self {
            Scorer::Plain(g) => g.scores(seed, sim),
            Scorer::Ensemble(graphs) => {
                let mut acc = vec![0.0; nps.len()];
                let exclude = BTreeSet::from([seed]);
                for g in graphs {
                    let ranked = top_k(nps, &g.scores(seed, sim), &exclude, k);
                    for (rank, entry) in ranked.entries.iter().enumerate() {
                        let i = find_np(nps, &entry.surface).expect("ranked phrase exists");
                        acc[i] += 1.0 / (rank + 1) as f64;
                    }
                }
                let q = graphs.len() as f64;
                acc.iter_mut().for_each(|a| *a /= q);
                acc
            }
        }
    }
}

/// Mean-reciprocal-rank ensemble over leave-one-family-out subgraphs.
/// Falls back to [`rank_plain`] when fewer than two coarse families exist.
pub fn rank_ensemble(
    seed: &str,
    nps: &[NounPhrase],
    coocs: &[FeatureCooc],
    scheme: Scheme,
    sim: Similarity,
    k: usize,
    grouping: FamilyGrouping,
) -> Result<RankedList> {
    let config = ExpandConfig {
        scheme,
        sim,
        ensemble: true,
        grouping,
        k,
    };
    expand(&[seed], nps, coocs, &config)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExpandConfig {
    pub scheme: Scheme,
    pub sim: Similarity,
    pub ensemble: bool,
    pub grouping: FamilyGrouping,
    pub k: usize,
}

impl Default for ExpandConfig {
    fn default() -> Self {
        ExpandConfig {
            scheme: Scheme::Tfidf,
            sim: Similarity::Context,
            ensemble: true,
            grouping: FamilyGrouping::Six,
            k: DEFAULT_K,
        }
    }
}

/// Expands a set of seeds. Each phrase scores the mean of its single-seed
/// scores; seeds never appear in the output.
pub fn expand(
    seeds: &[&str],
    nps: &[NounPhrase],
    coocs: &[FeatureCooc],
    config: &ExpandConfig,
) -> Result<RankedList> {
    if seeds.is_empty() {
        return Err(Error::Empty("seed set"));
    }
    let seed_idx = seeds
        .iter()
        .map(|s| find_np(nps, s))
        .collect::<Result<BTreeSet<usize>>>()?;
    let scorer = Scorer::new(nps, coocs, config.scheme, config.ensemble, config.grouping)?;
    let mut total = vec![0.0; nps.len()];
    for &s in &seed_idx {
        for (t, x) in total.iter_mut().zip(scorer.scores(nps, s, config.sim, config.k)) {
            *t += x;
        }
    }
    let q = seed_idx.len() as f64;
    total.iter_mut().for_each(|t| *t /= q);
    Ok(top_k(nps, &total, &seed_idx, config.k))
}

/// Fraction of the `k` slots filled by gold surfaces.
pub fn precision_at_k(ranked: &RankedList, gold: &BTreeSet<String>) -> f64 {
    if ranked.k == 0 {
        return 0.0;
    }
    let hits = ranked.surfaces().filter(|s| gold.contains(*s)).count();
    hits as f64 / ranked.k as f64
}

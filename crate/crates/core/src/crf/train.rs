use std::collections::{BTreeMap, BTreeSet};
use std::sync::{Arc, Mutex};

use argmin::core::observers::{Observe, ObserverMode};
use argmin::core::{CostFunction, Error as ArgminError, Executor, Gradient, IterState, KV};
use argmin::solver::linesearch::MoreThuenteLineSearch;
use argmin::solver::quasinewton::LBFGS;
use rayon::prelude::*;

use super::features::{token_attributes, TemplateSet};
use super::lattice::{Chain, Scores, L};
use super::{CrfConfig, Layout, SequenceModel};
use crate::corpus::{Label, Token};
use crate::error::{Error, Result};

const CHUNKS: usize = 8;
const LBFGS_MEMORY: usize = 7;

/// One training sentence: tokens with one label per token.
#[derive(Clone, Copy, Debug)]
pub struct Example<'a> {
    pub tokens: &'a [Token],
    pub labels: &'a [Label],
}

struct Encoded {
    attrs: Vec<Vec<u32>>,
    labels: Vec<u8>,
}

type Evaluation = (Vec<f64>, f64, Vec<f64>);

/// L2-regularized negative conditional log-likelihood of a training set.
pub struct Objective {
    attributes: Vec<String>,
    data: Vec<Encoded>,
    layout: Layout,
    sigma2: f64,
    last: Mutex<Option<Arc<Evaluation>>>,
    best: Mutex<Option<(f64, Vec<f64>)>>,
}

impl Objective {
    pub fn new(
        examples: &[Example<'_>],
        templates: &TemplateSet,
        lexicon: &BTreeSet<String>,
        l2sigma: f64,
    ) -> Result<Self> {
        if !(l2sigma > 0.0 && l2sigma.is_finite()) {
            return Err(Error::Config(format!("l2sigma must be positive, got {l2sigma}")));
        }
        let raw: Vec<Vec<Vec<String>>> = examples
            .iter()
            .map(|ex| {
                if ex.tokens.len() != ex.labels.len() {
                    return Err(Error::InvalidLabels(format!(
                        "{} labels for {} tokens",
                        ex.labels.len(),
                        ex.tokens.len()
                    )));
                }
                Ok(token_attributes(ex.tokens, templates, lexicon))
            })
            .collect::<Result<_>>()?;
        let mut index: BTreeMap<&str, u32> = BTreeMap::new();
        for attr in raw.iter().flatten().flatten() {
            index.entry(attr.as_str()).or_insert(0);
        }
        for (i, id) in index.values_mut().enumerate() {
            *id = i as u32;
        }
        let data = raw
            .iter()
            .zip(examples)
            .map(|(sent, ex)| Encoded {
                attrs: sent
                    .iter()
                    .map(|tok| tok.iter().map(|a| index[a.as_str()]).collect())
                    .collect(),
                labels: ex.labels.iter().map(|l| l.index() as u8).collect(),
            })
            .collect();
        let attributes: Vec<String> = index.keys().map(|s| s.to_string()).collect();
        Ok(Objective {
            layout: Layout::new(attributes.len()),
            attributes,
            data,
            sigma2: l2sigma * l2sigma,
            last: Mutex::new(None),
            best: Mutex::new(None),
        })
    }

    pub fn dim(&self) -> usize {
        self.layout.dim()
    }

    pub fn attributes(&self) -> &[String] {
        &self.attributes
    }

    pub(crate) fn into_attributes(self) -> Vec<String> {
        self.attributes
    }

    /// Objective value and gradient. Sentences are summed in fixed chunks
    /// in a fixed order, so the result does not depend on thread count.
    pub fn evaluate(&self, theta: &[f64]) -> (f64, Vec<f64>) {
        assert_eq!(theta.len(), self.dim());
        let chunk = self.data.len().div_ceil(CHUNKS).max(1);
        let partial: Vec<(f64, Vec<f64>)> = self
            .data
            .par_chunks(chunk)
            .map(|sents| {
                let mut grad = vec![0.0; theta.len()];
                let mut nll = 0.0;
                for s in sents {
                    nll += self.accumulate(theta, s, &mut grad);
                }
                (nll, grad)
            })
            .collect();
        let mut value = 0.0;
        let mut grad: Vec<f64> = theta.iter().map(|w| w / self.sigma2).collect();
        for (nll, g) in partial {
            value += nll;
            for (a, b) in grad.iter_mut().zip(g) {
                *a += b;
            }
        }
        value += theta.iter().map(|w| w * w).sum::<f64>() / (2.0 * self.sigma2);
        (value, grad)
    }

    /// Adds one sentence's gradient contribution; returns its negative
    /// log-likelihood.
    fn accumulate(&self, theta: &[f64], s: &Encoded, grad: &mut [f64]) -> f64 {
        if s.labels.is_empty() {
            return 0.0;
        }
        let layout = self.layout;
        let emissions = layout.emissions(theta, &s.attrs);
        let (start, trans) = layout.chain_weights(theta);
        let chain = Chain {
            emissions: &emissions,
            start: &start,
            trans: &trans,
        };
        let (alpha, log_z) = chain.forward();
        let beta = chain.backward();
        for (t, attrs) in s.attrs.iter().enumerate() {
            let gold = s.labels[t] as usize;
            let marginal: Scores = std::array::from_fn(|y| (alpha[t][y] + beta[t][y] - log_z).exp());
            for &a in attrs {
                for (y, p) in marginal.iter().enumerate() {
                    grad[layout.state(a as usize, y)] += p;
                }
                grad[layout.state(a as usize, gold)] -= 1.0;
            }
            if t == 0 {
                for (y, p) in marginal.iter().enumerate() {
                    grad[layout.start(y)] += p;
                }
                grad[layout.start(gold)] -= 1.0;
            } else {
                for p in 0..L {
                    for c in 0..L {
                        let lp = alpha[t - 1][p] + trans[p][c] + emissions[t][c] + beta[t][c] - log_z;
                        grad[layout.trans(p, c)] += lp.exp();
                    }
                }
                grad[layout.trans(s.labels[t - 1] as usize, gold)] -= 1.0;
            }
        }
        log_z - chain.path_score(&s.labels)
    }

    fn cached(&self, theta: &[f64]) -> Arc<Evaluation> {
        if let Some(hit) = self.last.lock().expect("cache lock").as_ref() {
            if hit.0.as_slice() == theta {
                return Arc::clone(hit);
            }
        }
        let (value, grad) = self.evaluate(theta);
        let eval = Arc::new((theta.to_vec(), value, grad));
        *self.last.lock().expect("cache lock") = Some(Arc::clone(&eval));
        let mut best = self.best.lock().expect("best lock");
        if best.as_ref().is_none_or(|(v, _)| value < *v) {
            *best = Some((value, theta.to_vec()));
        }
        eval
    }
}

struct Problem<'a>(&'a Objective);

impl CostFunction for Problem<'_> {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, param: &Vec<f64>) -> std::result::Result<f64, ArgminError> {
        Ok(self.0.cached(param).1)
    }
}

impl Gradient for Problem<'_> {
    type Param = Vec<f64>;
    type Gradient = Vec<f64>;

    fn gradient(&self, param: &Vec<f64>) -> std::result::Result<Vec<f64>, ArgminError> {
        Ok(self.0.cached(param).2.clone())
    }
}

type State = IterState<Vec<f64>, Vec<f64>, (), (), (), f64>;

struct CostHistory(Arc<Mutex<Vec<f64>>>);

impl Observe<State> for CostHistory {
    fn observe_init(&mut self, _name: &str, state: &State, _kv: &KV) -> std::result::Result<(), ArgminError> {
        self.0.lock().expect("history lock").push(state.get_cost());
        Ok(())
    }

    fn observe_iter(&mut self, state: &State, _kv: &KV) -> std::result::Result<(), ArgminError> {
        self.0.lock().expect("history lock").push(state.get_cost());
        Ok(())
    }
}

/// Trains a model and also returns the objective value after every
/// optimizer iteration.
pub fn train_with_history(
    examples: &[Example<'_>],
    lexicon: &BTreeSet<String>,
    config: &CrfConfig,
) -> Result<(SequenceModel, Vec<f64>)> {
    if examples.is_empty() {
        return Err(Error::Empty("training sentences"));
    }
    if examples.iter().all(|ex| ex.labels.iter().all(|l| *l == Label::O)) {
        log::warn!("every training label is O; the model will predict no entities");
    }
    let objective = Objective::new(examples, &config.templates, lexicon, config.l2sigma)?;
    let init = vec![0.0; objective.dim()];
    let solver = LBFGS::new(MoreThuenteLineSearch::new(), LBFGS_MEMORY)
        .with_tolerance_grad(config.tol)
        .map_err(|e| Error::Optimizer(e.to_string()))?;
    let history = Arc::new(Mutex::new(Vec::new()));
    let run = Executor::new(Problem(&objective), solver)
        .configure(|state| state.param(init).max_iters(config.max_iter))
        .add_observer(CostHistory(Arc::clone(&history)), ObserverMode::Always)
        .timer(false)
        .run();
    let theta = match run {
        Ok(mut res) => res.state.take_best_param(),
        Err(e) => {
            log::warn!("optimizer stopped early: {e}; keeping the best point evaluated");
            None
        }
    };
    let theta = match theta {
        Some(t) => t,
        None => objective
            .best
            .lock()
            .expect("best lock")
            .take()
            .map(|(_, t)| t)
            .ok_or_else(|| Error::Optimizer("no objective evaluation succeeded".into()))?,
    };
    let history = std::mem::take(&mut *history.lock().expect("history lock"));
    let attributes = objective.into_attributes();
    let model = SequenceModel::new(config.clone(), lexicon.clone(), attributes, theta)?;
    Ok((model, history))
}

/// Maximizes the L2-regularized conditional log-likelihood with L-BFGS.
pub fn train(examples: &[Example<'_>], lexicon: &BTreeSet<String>, config: &CrfConfig) -> Result<SequenceModel> {
    train_with_history(examples, lexicon, config).map(|(model, _)| model)
}

use std::collections::BTreeMap;
use std::sync::Arc;

use annoloop::active::{MetricPoint, Mode, SessionConfig, SessionState};
use annoloop::corpus::{load_corpus, write_conll2003, CorpusFormat, LabelSeq, SentenceState, TagScheme};
use annoloop::esegraph::{self, ExpandConfig};
use annoloop::featurize::FeatureCooc;
use annoloop::harness::candidates;
use annoloop::npex::NounPhrase;
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};

use crate::error::{ApiError, ApiResult};
use crate::sessions::{AppState, SessionHandle};

type App = State<Arc<AppState>>;

pub fn routes() -> Router<Arc<AppState>> {
    Router::new()
        .route("/sessions", get(list_sessions).post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/batch", get(get_batch))
        .route("/sessions/{id}/labels", post(submit_labels))
        .route("/sessions/{id}/expand", post(seed_expand))
        .route("/sessions/{id}/confirm", post(confirm_candidates))
        .route("/sessions/{id}/metrics", get(get_metrics))
        .route("/sessions/{id}/model", get(export_model))
        .route("/sessions/{id}/annotations", get(export_annotations))
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> T + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::internal(format!("worker failed: {e}")))
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase")]
struct CreateSession {
    corpus: String,
    format: Option<CorpusFormat>,
    entity_class: String,
    mode: Mode,
    batch_size: Option<usize>,
    n: Option<usize>,
    threshold: Option<f64>,
    seed: Option<u64>,
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct Created {
    session_id: String,
    revision: u64,
    pool_size: usize,
}

async fn create_session(State(app): App, Json(req): Json<CreateSession>) -> ApiResult<Response> {
    let path = app.corpus_path(&req.corpus)?;
    let format = req.format.unwrap_or_else(|| {
        match path.extension().and_then(|e| e.to_str()) {
            Some("conllu") => CorpusFormat::Conllu,
            _ => CorpusFormat::Conll2003,
        }
    });
    let mut config = SessionConfig::for_mode(req.mode);
    config.batch_size = req.batch_size.unwrap_or(config.batch_size);
    config.n = req.n.unwrap_or(config.n);
    config.threshold = req.threshold.or(config.threshold);
    config.seed = req.seed.unwrap_or(config.seed);
    let class = req.entity_class;
    let state = blocking(move || {
        let pool = load_corpus(&path, format)?;
        if pool.is_empty() {
            return Err(annoloop::Error::Empty("corpus"));
        }
        SessionState::new(&pool.restrict_to_class(&class), config)
    })
    .await??;
    let pool_size = state.pool.len();
    let revision = state.revision;
    let handle = app.insert(state)?;
    log::info!("created session {} over {pool_size} sentences", handle.id);
    let body = Created {
        session_id: handle.id.clone(),
        revision,
        pool_size,
    };
    Ok((StatusCode::CREATED, Json(body)).into_response())
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct Summary {
    session_id: String,
    revision: u64,
    mode: Mode,
    entity_class: String,
    pool_size: usize,
    iteration: usize,
    labeled: usize,
    auto: usize,
    pending: usize,
    has_model: bool,
    training: bool,
    confirmed_entities: Vec<String>,
    config: SessionConfig,
}

fn summary(handle: &SessionHandle, s: &SessionState) -> Summary {
    Summary {
        session_id: handle.id.clone(),
        revision: s.revision,
        mode: s.config.mode,
        entity_class: s.pool.entity_class.clone(),
        pool_size: s.pool.len(),
        iteration: s.iteration,
        labeled: s.human_count(),
        auto: s.auto_count(),
        pending: s.pending.len(),
        has_model: s.model.is_some(),
        training: handle.is_training(),
        confirmed_entities: s.confirmed_entities.iter().cloned().collect(),
        config: s.config.clone(),
    }
}

async fn list_sessions(State(app): App) -> ApiResult<Json<Vec<String>>> {
    Ok(Json(app.ids()))
}

async fn get_session(State(app): App, Path(id): Path<String>) -> ApiResult<Json<Summary>> {
    let handle = app.get(&id)?;
    let state = handle.state.lock().await;
    Ok(Json(summary(&handle, &state)))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct BatchSentence {
    sentence_id: usize,
    tokens: Vec<String>,
    pos: Vec<String>,
    /// Model pre-highlights; empty before the first model exists.
    suggestion: Vec<Span>,
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct Batch {
    revision: u64,
    training: bool,
    /// No model yet: confirm seed candidates to obtain the first batch.
    needs_bootstrap: bool,
    exhausted: bool,
    sentences: Vec<BatchSentence>,
}

fn spans(seq: &LabelSeq) -> Vec<Span> {
    seq.spans().into_iter().map(|(start, end)| Span { start, end }).collect()
}

fn batch_view(handle: &SessionHandle, s: &SessionState) -> Batch {
    let sentences = s
        .pending
        .iter()
        .map(|&id| {
            let sentence = &s.pool.sentences[id];
            BatchSentence {
                sentence_id: id,
                tokens: sentence.tokens.iter().map(|t| t.surface.clone()).collect(),
                pos: sentence.tokens.iter().map(|t| t.pos.clone()).collect(),
                suggestion: s.suggest(id).as_ref().map(spans).unwrap_or_default(),
            }
        })
        .collect();
    Batch {
        revision: s.revision,
        training: handle.is_training(),
        needs_bootstrap: s.model.is_none() && s.pending.is_empty() && s.config.mode != Mode::Ar,
        exhausted: s.unlabeled().is_empty(),
        sentences,
    }
}

/// Returns the pending batch, sampling a new one when none is pending and
/// either a model exists or the session samples at random.
async fn get_batch(State(app): App, Path(id): Path<String>) -> ApiResult<Json<Batch>> {
    let handle = app.get(&id)?;
    let mut state = handle.state.lock().await;
    let can_sample = state.pending.is_empty()
        && (state.model.is_some() || state.config.mode == Mode::Ar)
        && !handle.is_training()
        && !state.unlabeled().is_empty();
    if can_sample {
        let mut work = state.clone();
        let work = blocking(move || work.sample_batch().map(|_| work)).await??;
        app.persist(&handle.id, &work)?;
        *state = work;
    }
    Ok(Json(batch_view(&handle, &state)))
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase")]
struct SpanLabel {
    sentence_id: usize,
    start: usize,
    end: usize,
}

#[derive(Deserialize)]
struct Submission {
    revision: u64,
    labels: Vec<SpanLabel>,
}

#[derive(Deserialize, Default)]
struct WaitQuery {
    #[serde(default)]
    wait: bool,
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct Accepted {
    revision: u64,
    training: bool,
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct Stepped {
    revision: u64,
    metric: Option<MetricPoint>,
}

/// Turns submitted spans into one label sequence per pending sentence.
/// Pending sentences without spans are labeled all-outside.
fn pending_labels(s: &SessionState, submitted: &[SpanLabel]) -> ApiResult<Vec<(usize, LabelSeq)>> {
    if s.pending.is_empty() {
        return Err(ApiError::conflict("no batch is pending; fetch a batch first"));
    }
    let mut by_sentence: BTreeMap<usize, Vec<(usize, usize)>> =
        s.pending.iter().map(|&id| (id, Vec::new())).collect();
    for l in submitted {
        let Some(list) = by_sentence.get_mut(&l.sentence_id) else {
            return Err(ApiError::invalid(format!(
                "sentence {} is not in the pending batch",
                l.sentence_id
            )));
        };
        list.push((l.start, l.end));
    }
    by_sentence
        .into_iter()
        .map(|(id, mut list)| {
            list.sort_unstable();
            let len = s.pool.sentences[id].len();
            LabelSeq::from_spans(len, &list)
                .map(|seq| (id, seq))
                .map_err(|e| ApiError::invalid(format!("sentence {id}: {e}")))
        })
        .collect()
}

async fn submit_labels(
    State(app): App,
    Path(id): Path<String>,
    Query(query): Query<WaitQuery>,
    Json(req): Json<Submission>,
) -> ApiResult<Response> {
    let handle = app.get(&id)?;
    let state = handle.lock_for_mutation(Some(req.revision)).await?;
    let labels = pending_labels(&state, &req.labels)?;
    let training = handle.begin_training()?;
    let mut work = state.clone();
    let revision = state.revision;
    drop(state);

    let job_handle = handle.clone();
    let job = tokio::spawn(async move {
        let _training = training;
        let outcome = blocking(move || work.step(labels).map(|point| (work, point))).await?;
        match outcome {
            Ok((work, point)) => {
                let mut state = job_handle.state.lock().await;
                *state = work;
                job_handle.set_last_error(None);
                if let Err(e) = app.persist(&job_handle.id, &state) {
                    log::error!("session {}: {}", job_handle.id, e.message);
                    job_handle.set_last_error(Some(e.message.clone()));
                }
                Ok(Stepped {
                    revision: state.revision,
                    metric: point,
                })
            }
            Err(e) => {
                log::error!("session {}: step failed: {e}", job_handle.id);
                job_handle.set_last_error(Some(e.to_string()));
                Err(ApiError::from(e))
            }
        }
    });
    if query.wait {
        let stepped = job
            .await
            .map_err(|e| ApiError::internal(format!("training job failed: {e}")))??;
        return Ok(Json(stepped).into_response());
    }
    Ok((StatusCode::ACCEPTED, Json(Accepted { revision, training: true })).into_response())
}

type Candidates = Arc<(Vec<NounPhrase>, Vec<FeatureCooc>)>;

async fn session_candidates(app: &AppState, handle: &SessionHandle) -> ApiResult<Candidates> {
    if let Some(c) = handle.candidates.get() {
        return Ok(c.clone());
    }
    let pool = handle.state.lock().await.pool.clone();
    let featurize = app.config.featurize;
    let computed = blocking(move || candidates(&pool, &featurize)).await??;
    let _ = handle.candidates.set(Arc::new(computed));
    Ok(handle.candidates.get().expect("just set").clone())
}

#[derive(Deserialize)]
struct ExpandRequest {
    seed: String,
    k: Option<usize>,
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct Candidate {
    rank: usize,
    surface: String,
    count: usize,
    score: f64,
    confirmed: bool,
}

#[derive(Serialize)]
struct Expansion {
    seed: String,
    k: usize,
    candidates: Vec<Candidate>,
}

async fn seed_expand(
    State(app): App,
    Path(id): Path<String>,
    Json(req): Json<ExpandRequest>,
) -> ApiResult<Json<Expansion>> {
    let handle = app.get(&id)?;
    let cands = session_candidates(&app, &handle).await?;
    let config = ExpandConfig {
        k: req.k.unwrap_or(app.config.expand.k),
        ..app.config.expand
    };
    if config.k == 0 {
        return Err(ApiError::invalid("k must be at least 1"));
    }
    let seed = req.seed.clone();
    let ranked = blocking(move || esegraph::expand(&[seed.as_str()], &cands.0, &cands.1, &config)).await??;
    let confirmed = handle.state.lock().await.confirmed_entities.clone();
    let candidates = ranked
        .entries
        .into_iter()
        .enumerate()
        .map(|(i, e)| Candidate {
            rank: i + 1,
            confirmed: confirmed.contains(&e.surface),
            surface: e.surface,
            count: e.count,
            score: e.score,
        })
        .collect();
    Ok(Json(Expansion {
        seed: req.seed,
        k: config.k,
        candidates,
    }))
}

#[derive(Deserialize)]
struct Confirm {
    revision: u64,
    surfaces: Vec<String>,
}

async fn confirm_candidates(
    State(app): App,
    Path(id): Path<String>,
    Json(req): Json<Confirm>,
) -> ApiResult<Json<Batch>> {
    let handle = app.get(&id)?;
    let cands = session_candidates(&app, &handle).await?;
    let confirmed: Vec<NounPhrase> = req
        .surfaces
        .iter()
        .map(|s| esegraph::find_np(&cands.0, s).map(|i| cands.0[i].clone()))
        .collect::<annoloop::Result<_>>()?;
    let mut state = handle.lock_for_mutation(Some(req.revision)).await?;
    let mut work = state.clone();
    work.bootstrap_from_ese(&confirmed)?;
    app.persist(&handle.id, &work)?;
    *state = work;
    Ok(Json(batch_view(&handle, &state)))
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct Metrics {
    revision: u64,
    training: bool,
    iteration: usize,
    labeled: usize,
    auto: usize,
    pool_size: usize,
    history: Vec<MetricPoint>,
    last_error: Option<String>,
}

async fn get_metrics(State(app): App, Path(id): Path<String>) -> ApiResult<Json<Metrics>> {
    let handle = app.get(&id)?;
    let s = handle.state.lock().await;
    Ok(Json(Metrics {
        revision: s.revision,
        training: handle.is_training(),
        iteration: s.iteration,
        labeled: s.human_count(),
        auto: s.auto_count(),
        pool_size: s.pool.len(),
        history: s.history.clone(),
        last_error: handle.last_error(),
    }))
}

async fn export_model(State(app): App, Path(id): Path<String>) -> ApiResult<Response> {
    let handle = app.get(&id)?;
    let s = handle.state.lock().await;
    let model = s.model.as_ref().ok_or(annoloop::Error::NoModel)?;
    let json = model.to_json()?;
    Ok(([(header::CONTENT_TYPE, "application/json")], json).into_response())
}

#[derive(Deserialize, Clone, Copy, Default, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
enum ExportFormat {
    #[default]
    Conll2003,
    Json,
}

#[derive(Deserialize, Default)]
struct ExportQuery {
    #[serde(default)]
    format: ExportFormat,
}

#[derive(Serialize)]
#[serde(rename_all = "lowercase")]
enum Source {
    Human,
    /// Labeled automatically by the model.
    Silver,
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct AnnotatedSentence {
    sentence_id: usize,
    tokens: Vec<String>,
    spans: Vec<Span>,
    source: Source,
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct Annotations {
    entity_class: String,
    sentences: Vec<AnnotatedSentence>,
}

/// Labeled sentences only; unlabeled ones are omitted.
async fn export_annotations(
    State(app): App,
    Path(id): Path<String>,
    Query(query): Query<ExportQuery>,
) -> ApiResult<Response> {
    let handle = app.get(&id)?;
    let s = handle.state.lock().await;
    match query.format {
        ExportFormat::Conll2003 => {
            let text = write_conll2003(&s.pool.sentences, &s.pool.entity_class, TagScheme::Bio, |x| {
                x.working.clone()
            });
            Ok(([(header::CONTENT_TYPE, "text/plain; charset=utf-8")], text).into_response())
        }
        ExportFormat::Json => {
            let sentences = s
                .pool
                .sentences
                .iter()
                .filter_map(|x| {
                    let working = x.working.as_ref()?;
                    Some(AnnotatedSentence {
                        sentence_id: x.id,
                        tokens: x.tokens.iter().map(|t| t.surface.clone()).collect(),
                        spans: spans(working),
                        source: if x.state == SentenceState::AutoLabeled {
                            Source::Silver
                        } else {
                            Source::Human
                        },
                    })
                })
                .collect();
            Ok(Json(Annotations {
                entity_class: s.pool.entity_class.clone(),
                sentences,
            })
            .into_response())
        }
    }
}

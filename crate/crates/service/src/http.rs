//! HTTP service. Sessions hold a private copy of a model; every change goes
//! through the store's ingest and action paths, one request at a time per
//! session. Bodies use the model-file encoding and carry `format_version`.

use std::collections::{BTreeSet, HashMap};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, RwLock};

use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post, put};
use axum::{Json, Router};
use bnelicit::elicitation::{check_consistency, HullStatus, IngestReport, ReconcileWarning, ReconciliationAction, SelectionMode, Target};
use bnelicit::model_file::{parse_document, AnswersFile, WhatIfFile, FORMAT_VERSION};
use bnelicit::{Dag, Evidence, ModelFile, Network};
use serde::{Deserialize, Serialize};
use tokio::sync::Mutex;

use crate::commands;
use crate::error::{Result, ServiceError};
use crate::proposals::{propose, ProposalQueue};

struct Session {
    model: ModelFile,
    dag: Dag,
    queue: ProposalQueue,
}

/// Shared service state: the served model and the open sessions.
pub struct AppState {
    base: Option<ModelFile>,
    network: Option<Network>,
    sessions: RwLock<HashMap<u64, Arc<Mutex<Session>>>>,
    next_session: AtomicU64,
}

impl AppState {
    pub fn new(base: Option<ModelFile>) -> Result<Arc<AppState>> {
        let network = match &base {
            Some(m) => m.network()?,
            None => None,
        };
        Ok(Arc::new(AppState {
            base,
            network,
            sessions: RwLock::new(HashMap::new()),
            next_session: AtomicU64::new(1),
        }))
    }

    fn session(&self, id: u64) -> Result<Arc<Mutex<Session>>> {
        self.sessions
            .read()
            .expect("session map poisoned")
            .get(&id)
            .cloned()
            .ok_or(ServiceError::UnknownSession(id))
    }

    fn network(&self) -> Result<&Network> {
        self.network.as_ref().ok_or(ServiceError::NotSynthesized)
    }
}

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let status = match &self {
            ServiceError::UnknownSession(_) | ServiceError::UnknownProposal(_) => StatusCode::NOT_FOUND,
            ServiceError::Conflict(_) => StatusCode::CONFLICT,
            ServiceError::Io(_) => StatusCode::INTERNAL_SERVER_ERROR,
            _ => StatusCode::BAD_REQUEST,
        };
        (status, Json(serde_json::json!({ "error": self.diagnostic() }))).into_response()
    }
}

/// A response body stamped with the format version.
fn document<T: Serialize>(status: StatusCode, body: &T) -> Response {
    let mut v = serde_json::to_value(body).expect("responses serialize");
    if let Some(obj) = v.as_object_mut() {
        obj.insert("format_version".into(), FORMAT_VERSION.into());
    }
    (status, Json(v)).into_response()
}

fn ok<T: Serialize>(body: &T) -> Response {
    document(StatusCode::OK, body)
}

type Shared = State<Arc<AppState>>;

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/sessions", post(open_session))
        .route("/sessions/{id}/questions", get(questions))
        .route("/sessions/{id}/answers", put(answers))
        .route("/sessions/{id}/consistency", get(consistency))
        .route("/sessions/{id}/reconcile", post(reconcile))
        .route("/sessions/{id}/actions/{aid}/{decision}", post(decide))
        .route("/sessions/{id}/model", get(model))
        .route("/infer", post(infer))
        .route("/whatif", post(whatif))
        .with_state(state)
}

#[derive(Serialize)]
struct Opened {
    session: u64,
    revision: u64,
    variables: usize,
}

/// Body: a model document, or empty to open a session on the served model.
async fn open_session(State(state): Shared, body: String) -> Result<Response> {
    let model = if body.trim().is_empty() {
        state
            .base
            .clone()
            .ok_or_else(|| ServiceError::Usage("no model is served; send a model document".into()))?
    } else {
        ModelFile::parse(&body)?
    };
    let dag = model.dag()?;
    let id = state.next_session.fetch_add(1, Ordering::Relaxed);
    let opened = Opened {
        session: id,
        revision: model.store.revision(),
        variables: dag.len(),
    };
    let session = Session {
        model,
        dag,
        queue: ProposalQueue::default(),
    };
    state
        .sessions
        .write()
        .expect("session map poisoned")
        .insert(id, Arc::new(Mutex::new(session)));
    tracing::info!(session = id, "session opened");
    Ok(document(StatusCode::CREATED, &opened))
}

#[derive(Deserialize)]
struct QuestionParams {
    expert: Option<String>,
    limit: Option<usize>,
}

async fn questions(State(state): Shared, Path(id): Path<u64>, Query(p): Query<QuestionParams>) -> Result<Response> {
    let s = state.session(id)?;
    let s = s.lock().await;
    let mut r = commands::open_questions(&s.model, p.expert.as_deref())?;
    if let Some(n) = p.limit {
        r.questions.truncate(n);
    }
    Ok(ok(&r))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairDelta {
    pub child: String,
    pub parent: String,
    pub state: String,
    #[serde(with = "opt_decimal")]
    pub residual_before: Option<f64>,
    #[serde(with = "opt_decimal")]
    pub residual_after: Option<f64>,
    pub inconsistent_before: bool,
    pub inconsistent_after: bool,
    pub hull_status_after: Option<HullStatus>,
}

/// Consistency of the pairs an answer can move.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerDelta {
    pub target: Target,
    pub pairs: Vec<PairDelta>,
}

#[derive(Debug, Clone, Serialize)]
struct AnswersResponse {
    revision: u64,
    report: IngestReport,
    deltas: Vec<AnswerDelta>,
}

mod opt_decimal {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
        match v {
            Some(x) => bnelicit::decimal::serialize(x, s),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<f64>, D::Error> {
        Ok(Option::<bnelicit::decimal::Decimal>::deserialize(d)?.map(|x| x.0))
    }
}

type PairKey = (String, String, String);

fn pair_states(
    store: &bnelicit::ElicitationStore,
    dag: &Dag,
    tolerance: f64,
) -> Result<HashMap<PairKey, (f64, bool, HullStatus)>> {
    let r = check_consistency(store, dag, tolerance)?;
    Ok(r.pairs
        .into_iter()
        .map(|p| ((p.pair.child, p.pair.parent, p.pair.state), (p.residual, p.inconsistent, p.hull_status)))
        .collect())
}

/// Answers are ingested one by one into a copy of the store, recording
/// what each did to the pairs around its variable; the copy replaces the
/// store only if every answer was accepted.
async fn answers(State(state): Shared, Path(id): Path<u64>, body: String) -> Result<Response> {
    let doc: AnswersFile = parse_document(&body)?;
    let s = state.session(id)?;
    let mut s = s.lock().await;
    let tol = s.model.metadata.tolerance;
    let mut trial = s.model.store.clone();
    let mut report = IngestReport::default();
    let mut deltas = Vec::with_capacity(doc.answers.len());
    for answer in doc.answers {
        let before = pair_states(&trial, &s.dag, tol)?;
        let target = answer.target.clone();
        let r = trial.ingest(&s.dag, &s.model.kept_interactions, vec![answer])?;
        report.added.extend(r.added);
        report.shadowed.extend(r.shadowed);
        let after = pair_states(&trial, &s.dag, tol)?;
        let var = target.variable();
        let keys: BTreeSet<&PairKey> = before
            .keys()
            .chain(after.keys())
            .filter(|(c, p, _)| c == var || p == var)
            .collect();
        let pairs = keys
            .into_iter()
            .map(|k| {
                let b = before.get(k);
                let a = after.get(k);
                PairDelta {
                    child: k.0.clone(),
                    parent: k.1.clone(),
                    state: k.2.clone(),
                    residual_before: b.map(|x| x.0),
                    residual_after: a.map(|x| x.0),
                    inconsistent_before: b.is_some_and(|x| x.1),
                    inconsistent_after: a.is_some_and(|x| x.1),
                    hull_status_after: a.map(|x| x.2),
                }
            })
            .collect();
        deltas.push(AnswerDelta { target, pairs });
    }
    s.model.store = trial;
    // pending proposals stay; their base revision is now stale
    s.model.cpts = None;
    let r = AnswersResponse {
        revision: s.model.store.revision(),
        report,
        deltas,
    };
    Ok(ok(&r))
}

#[derive(Deserialize)]
struct ToleranceParam {
    tolerance: Option<f64>,
}

async fn consistency(State(state): Shared, Path(id): Path<u64>, Query(p): Query<ToleranceParam>) -> Result<Response> {
    let s = state.session(id)?;
    let s = s.lock().await;
    let tol = p.tolerance.unwrap_or(s.model.metadata.tolerance);
    Ok(ok(&check_consistency(&s.model.store, &s.dag, tol)?))
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ReconcileRequest {
    #[allow(dead_code)]
    format_version: u32,
    #[serde(default)]
    mode: Option<SelectionMode>,
    #[serde(default, with = "opt_decimal")]
    tolerance: Option<f64>,
}

#[derive(Serialize)]
struct Proposals<'a> {
    revision: u64,
    proposals: &'a [ReconciliationAction],
    warnings: Vec<ReconcileWarning>,
}

/// Replaces the session's pending proposals with a fresh cascade run.
async fn reconcile(State(state): Shared, Path(id): Path<u64>, body: String) -> Result<Response> {
    let req: ReconcileRequest = if body.trim().is_empty() {
        ReconcileRequest::default()
    } else {
        parse_document(&body)?
    };
    let s = state.session(id)?;
    let mut s = s.lock().await;
    let config = commands::reconcile_config(&s.model, req.mode, req.tolerance);
    let out = propose(&s.model.store, &s.dag, &config)?;
    s.queue = ProposalQueue::new(out.actions);
    let body = Proposals {
        revision: s.model.store.revision(),
        proposals: s.queue.pending(),
        warnings: out.warnings,
    };
    Ok(ok(&body))
}

#[derive(Serialize)]
struct Decided {
    decision: &'static str,
    action: ReconciliationAction,
    revision: u64,
    pending: usize,
}

async fn decide(State(state): Shared, Path((id, aid, decision)): Path<(u64, u64, String)>) -> Result<Response> {
    let s = state.session(id)?;
    let mut guard = s.lock().await;
    let s = &mut *guard;
    let (decision, action) = match decision.as_str() {
        "accept" => ("accept", s.queue.accept(&mut s.model.store, &s.dag, aid)?),
        "reject" => ("reject", s.queue.reject(&mut s.model.store, aid)?),
        other => return Err(ServiceError::Usage(format!("unknown decision {other:?}; use accept or reject"))),
    };
    if decision == "accept" {
        s.model.cpts = None;
    }
    Ok(ok(&Decided {
        decision,
        action,
        revision: s.model.store.revision(),
        pending: s.queue.pending().len(),
    }))
}

/// The session's model as a canonical document, audit log included.
async fn model(State(state): Shared, Path(id): Path<u64>) -> Result<Response> {
    let s = state.session(id)?;
    let s = s.lock().await;
    Ok((
        [(axum::http::header::CONTENT_TYPE, "application/json")],
        s.model.to_canonical_string(),
    )
        .into_response())
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct InferRequest {
    #[allow(dead_code)]
    format_version: u32,
    query: String,
    #[serde(default)]
    evidence: Evidence,
}

async fn infer(State(state): Shared, body: String) -> Result<Response> {
    let req: InferRequest = parse_document(&body)?;
    let p = state.network()?.posterior(&req.query, &req.evidence)?;
    Ok(ok(&p))
}

async fn whatif(State(state): Shared, body: String) -> Result<Response> {
    let doc: WhatIfFile = parse_document(&body)?;
    let r = commands::what_if(state.network()?, &doc)?;
    Ok(ok(&r))
}

//! HTTP interface under `/v1`.
//!
//! Every route except the two probes needs `Authorization: Bearer <token>`.
//! Tokens come from `QOC_API_TOKENS` as comma-separated `actor:token` pairs;
//! the actor is what gets recorded on human decisions.

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Request, State};
use axum::http::{header, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Extension, Json, Router};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::engine::{AggregateResult, Criterion, CriterionId, OptionEntry, OptionId, Outcome};
use crate::pipeline::{
    AgentRationale, Amount, BallotInput, DecisionReport, FinalDecision, GovernanceConfig, GovernanceStore, LedgerRecord, Mode,
    PipelineError, Proposal, Verification, VoteCycle, VoteState,
};
use crate::safeguards::OutlierFlag;

pub const ENV_API_TOKENS: &str = "QOC_API_TOKENS";

/// Static bearer tokens mapped to actor ids.
#[derive(Debug, Clone, Default)]
pub struct ApiTokens {
    by_token: BTreeMap<String, String>,
}

impl ApiTokens {
    /// Parses `actor:token,actor:token`.
    pub fn parse(list: &str) -> Result<Self, String> {
        let mut by_token = BTreeMap::new();
        for (n, item) in list.split(',').map(str::trim).filter(|s| !s.is_empty()).enumerate() {
            // Never echo the entry: it may be a bare token.
            let (actor, token) = item.split_once(':').ok_or_else(|| format!("token entry {} is not actor:token", n + 1))?;
            if actor.trim().is_empty() || token.trim().is_empty() {
                return Err("token entries need a non-empty actor and token".into());
            }
            by_token.insert(token.trim().to_owned(), actor.trim().to_owned());
        }
        Ok(Self { by_token })
    }

    pub fn from_env() -> Result<Self, String> {
        Self::parse(&std::env::var(ENV_API_TOKENS).unwrap_or_default())
    }

    pub fn insert(&mut self, actor: impl Into<String>, token: impl Into<String>) {
        self.by_token.insert(token.into(), actor.into());
    }

    pub fn actor(&self, token: &str) -> Option<&str> {
        self.by_token.get(token).map(String::as_str)
    }

    pub fn is_empty(&self) -> bool {
        self.by_token.is_empty()
    }
}

/// The authenticated caller.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ApiSession {
    pub actor: String,
}

#[derive(Clone)]
struct AppState {
    store: Arc<GovernanceStore>,
    tokens: Arc<ApiTokens>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    pub message: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub violations: Vec<String>,
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    body: ErrorBody,
}

impl ApiError {
    fn new(status: StatusCode, error: &str, message: impl Into<String>) -> Self {
        Self { status, body: ErrorBody { error: error.into(), message: message.into(), violations: vec![] } }
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "validation", message)
    }
}

impl From<PipelineError> for ApiError {
    fn from(e: PipelineError) -> Self {
        let message = e.to_string();
        match e {
            PipelineError::Validation(v) => Self {
                status: StatusCode::BAD_REQUEST,
                body: ErrorBody { error: "validation".into(), message, violations: v },
            },
            PipelineError::Parse(_) => Self::new(StatusCode::BAD_REQUEST, "validation", message),
            PipelineError::NotFound(_) => Self::new(StatusCode::NOT_FOUND, "not_found", message),
            PipelineError::State(_) => Self::new(StatusCode::CONFLICT, "illegal_state", message),
            PipelineError::Conflict(_) => Self::new(StatusCode::CONFLICT, "conflict", message),
            PipelineError::Domain(_) => Self::new(StatusCode::CONFLICT, "domain", message),
            PipelineError::Backend(_) => Self::new(StatusCode::BAD_GATEWAY, "backend", message),
            PipelineError::Io(_) => Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

fn parse_body<T: DeserializeOwned>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request(format!("malformed request body: {e}")))
}

/// Runs a store operation off the async workers.
async fn blocking<T, F>(state: &AppState, f: F) -> Result<T, ApiError>
where
    T: Send + 'static,
    F: FnOnce(&GovernanceStore) -> Result<T, PipelineError> + Send + 'static,
{
    let store = Arc::clone(&state.store);
    tokio::task::spawn_blocking(move || f(&store))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))?
        .map_err(ApiError::from)
}

/// Vote summary returned by every vote route.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoteView {
    pub vote_id: String,
    pub proposal_id: String,
    pub mode: Mode,
    pub state: VoteState,
    pub question: String,
    pub options: Vec<OptionEntry>,
    pub criteria: Vec<Criterion>,
    pub weights: BTreeMap<CriterionId, f64>,
    pub ballot_count: usize,
    pub agent_count: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub recommendation: Option<Outcome>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decision: Option<FinalDecision>,
    pub ledger_length: usize,
}

impl From<&VoteCycle> for VoteView {
    fn from(v: &VoteCycle) -> Self {
        Self {
            vote_id: v.id().to_owned(),
            proposal_id: v.proposal().id.clone(),
            mode: v.mode(),
            state: v.state(),
            question: v.question(),
            options: v.options().entries().to_vec(),
            criteria: v.config().criteria.clone(),
            weights: v.config().weights.clone(),
            ballot_count: v.ballot_count(),
            agent_count: v.agent_evaluations().len(),
            recommendation: v.recommendation().cloned(),
            decision: v.decision().cloned(),
            ledger_length: v.ledger().len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateProposal {
    pub id: String,
    #[serde(default)]
    pub title: String,
    pub body: String,
    #[serde(default)]
    pub proposer: Option<String>,
    #[serde(default)]
    pub requested_amount: Option<Amount>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OpenVote {
    /// Defaults to the proposal id.
    #[serde(default)]
    pub vote_id: Option<String>,
    pub proposal_id: String,
    /// Falls back to the server's configuration.
    #[serde(default)]
    pub config: Option<GovernanceConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecordDecision {
    pub winner: OptionId,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecommendationView {
    pub vote_id: String,
    pub state: VoteState,
    pub recommendation: Outcome,
    pub aggregate: AggregateResult,
    pub outlier_flags: Vec<OutlierFlag>,
    pub agent_evaluations: Vec<AgentRationale>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportView {
    pub vote_id: String,
    pub state: VoteState,
    pub report: DecisionReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerView {
    pub vote_id: String,
    pub state: VoteState,
    pub records: Vec<LedgerRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyView {
    pub vote_id: String,
    pub state: VoteState,
    pub verification: Verification,
}

async fn require_token(State(state): State<AppState>, mut req: Request, next: Next) -> Response {
    let token = req
        .headers()
        .get(header::AUTHORIZATION)
        .and_then(|h| h.to_str().ok())
        .and_then(|h| h.strip_prefix("Bearer "))
        .map(str::trim);
    match token.and_then(|t| state.tokens.actor(t)) {
        Some(actor) => {
            req.extensions_mut().insert(ApiSession { actor: actor.to_owned() });
            next.run(req).await
        }
        None => ApiError::new(StatusCode::UNAUTHORIZED, "unauthorized", "missing or invalid bearer token").into_response(),
    }
}

async fn health() -> Json<serde_json::Value> {
    Json(json!({ "status": "ok" }))
}

async fn ready(State(state): State<AppState>) -> Json<serde_json::Value> {
    Json(json!({
        "status": "ready",
        "default_config": state.store.default_config().is_some(),
        "votes": state.store.vote_ids().len(),
    }))
}

async fn create_proposal(
    State(state): State<AppState>,
    Extension(session): Extension<ApiSession>,
    body: Bytes,
) -> Result<(StatusCode, Json<Proposal>), ApiError> {
    let req: CreateProposal = parse_body(&body)?;
    let proposal = blocking(&state, move |s| {
        s.create_proposal(Proposal {
            id: req.id,
            title: req.title,
            body: req.body,
            proposer: req.proposer.unwrap_or(session.actor),
            requested_amount: req.requested_amount,
            created_at: s.now(),
        })
    })
    .await?;
    Ok((StatusCode::CREATED, Json(proposal)))
}

async fn get_proposal(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Proposal> {
    blocking(&state, move |s| s.proposal(&id)).await.map(Json)
}

async fn open_vote(State(state): State<AppState>, body: Bytes) -> Result<(StatusCode, Json<VoteView>), ApiError> {
    let req: OpenVote = parse_body(&body)?;
    let vote = blocking(&state, move |s| {
        let vote_id = req.vote_id.unwrap_or_else(|| req.proposal_id.clone());
        s.open_vote(&vote_id, &req.proposal_id, req.config)
    })
    .await?;
    Ok((StatusCode::CREATED, Json(VoteView::from(&vote))))
}

async fn get_vote(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<VoteView> {
    blocking(&state, move |s| s.vote(&id)).await.map(|v| Json(VoteView::from(&v)))
}

async fn submit_ballot(State(state): State<AppState>, Path(id): Path<String>, body: Bytes) -> ApiResult<VoteView> {
    let req: BallotInput = parse_body(&body)?;
    let vote = blocking(&state, move |s| s.submit_ballot(&id, req.into_ballot(s.now()))).await?;
    Ok(Json(VoteView::from(&vote)))
}

async fn run_agents(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<VoteView> {
    blocking(&state, move |s| s.run_agents(&id)).await.map(|v| Json(VoteView::from(&v)))
}

async fn close_vote(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<VoteView> {
    blocking(&state, move |s| s.close(&id)).await.map(|v| Json(VoteView::from(&v)))
}

async fn recommendation(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<RecommendationView> {
    let vote = blocking(&state, move |s| s.vote(&id)).await?;
    match (vote.recommendation(), vote.aggregate()) {
        (Some(r), Some(a)) => Ok(Json(RecommendationView {
            vote_id: vote.id().to_owned(),
            state: vote.state(),
            recommendation: r.clone(),
            aggregate: a.clone(),
            outlier_flags: vote.outlier_flags().to_vec(),
            agent_evaluations: vote.agent_evaluations().iter().map(AgentRationale::from).collect(),
        })),
        _ => Err(PipelineError::State(format!("vote {} is still open; close it first", vote.id())).into()),
    }
}

async fn record_decision(
    State(state): State<AppState>,
    Extension(session): Extension<ApiSession>,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult<VoteView> {
    let req: RecordDecision = parse_body(&body)?;
    blocking(&state, move |s| s.record_human_decision(&id, req.winner, &session.actor))
        .await
        .map(|v| Json(VoteView::from(&v)))
}

async fn report(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<ReportView> {
    blocking(&state, move |s| {
        let report = s.report(&id)?;
        Ok(ReportView { vote_id: id.clone(), state: s.vote(&id)?.state(), report })
    })
    .await
    .map(Json)
}

async fn ledger(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<LedgerView> {
    blocking(&state, move |s| {
        let v = s.vote(&id)?;
        Ok(LedgerView { vote_id: id, state: v.state(), records: v.ledger().records().to_vec() })
    })
    .await
    .map(Json)
}

async fn verify(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<VerifyView> {
    blocking(&state, move |s| {
        let v = s.vote(&id)?;
        Ok(VerifyView { vote_id: id, state: v.state(), verification: v.ledger().verify() })
    })
    .await
    .map(Json)
}

async fn fallback() -> ApiError {
    ApiError::new(StatusCode::NOT_FOUND, "not_found", "no such route")
}

pub fn router(store: Arc<GovernanceStore>, tokens: ApiTokens) -> Router {
    let state = AppState { store, tokens: Arc::new(tokens) };
    let protected = Router::new()
        .route("/v1/proposals", post(create_proposal))
        .route("/v1/proposals/{id}", get(get_proposal))
        .route("/v1/votes", post(open_vote))
        .route("/v1/votes/{id}", get(get_vote))
        .route("/v1/votes/{id}/ballots", post(submit_ballot))
        .route("/v1/votes/{id}/agents", post(run_agents))
        .route("/v1/votes/{id}/close", post(close_vote))
        .route("/v1/votes/{id}/recommendation", get(recommendation))
        .route("/v1/votes/{id}/decision", post(record_decision))
        .route("/v1/votes/{id}/report", get(report))
        .route("/v1/votes/{id}/ledger", get(ledger))
        .route("/v1/votes/{id}/ledger/verify", get(verify))
        .route_layer(middleware::from_fn_with_state(state.clone(), require_token));
    Router::new()
        .route("/v1/health", get(health))
        .route("/v1/ready", get(ready))
        .merge(protected)
        .fallback(fallback)
        .with_state(state)
}

/// Serves until Ctrl-C.
pub async fn serve(addr: SocketAddr, app: Router) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    eprintln!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn token_list_parsing() {
        let t = ApiTokens::parse(" alice:s3cret , bob:hunter2,").unwrap();
        assert_eq!(t.actor("s3cret"), Some("alice"));
        assert_eq!(t.actor("hunter2"), Some("bob"));
        assert_eq!(t.actor("alice"), None);
        assert!(ApiTokens::parse("nocolon").is_err());
        assert!(ApiTokens::parse(":tok").is_err());
        assert!(ApiTokens::parse("").unwrap().is_empty());
    }

    #[test]
    fn error_statuses() {
        let cases = [
            (PipelineError::Validation(vec!["x".into()]), 400),
            (PipelineError::NotFound("vote v".into()), 404),
            (PipelineError::State("closed".into()), 409),
            (PipelineError::Conflict("dup".into()), 409),
        ];
        for (e, status) in cases {
            assert_eq!(ApiError::from(e).status.as_u16(), status);
        }
    }
}

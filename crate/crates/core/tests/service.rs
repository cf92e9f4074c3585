mod common;

use std::sync::Arc;

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use common::*;
use qoc_core::agents::{Backend, BackendError, BackendRequest, BackendResponse, MockBackend};
use qoc_core::pipeline::{BallotInput, DecisionReport, FixedClock, GovernanceStore, Proposal};
use qoc_core::service::{router, ApiTokens};

const TOKEN: &str = "s3cret-token";

fn store(backend: Arc<dyn Backend>) -> Arc<GovernanceStore> {
    Arc::new(GovernanceStore::new(None, backend, Arc::new(FixedClock(t0()))))
}

fn app_with(backend: Arc<dyn Backend>) -> Router {
    router(store(backend), ApiTokens::parse(&format!("dana:{TOKEN}")).unwrap())
}

fn app() -> Router {
    app_with(Arc::new(MockBackend))
}

async fn call(app: &Router, method: Method, path: &str, body: Option<&str>, token: Option<&str>) -> (StatusCode, Value) {
    let mut req = Request::builder().method(method).uri(path);
    if let Some(t) = token {
        req = req.header("authorization", format!("Bearer {t}"));
    }
    if body.is_some() {
        req = req.header("content-type", "application/json");
    }
    let req = req.body(Body::from(body.unwrap_or("").to_owned())).unwrap();
    let res = app.clone().oneshot(req).await.unwrap();
    let status = res.status();
    let bytes = res.into_body().collect().await.unwrap().to_bytes();
    let value = if bytes.is_empty() { Value::Null } else { serde_json::from_slice(&bytes).unwrap() };
    (status, value)
}

async fn get(app: &Router, path: &str) -> (StatusCode, Value) {
    call(app, Method::GET, path, None, Some(TOKEN)).await
}

async fn post(app: &Router, path: &str, body: &str) -> (StatusCode, Value) {
    call(app, Method::POST, path, Some(body), Some(TOKEN)).await
}

fn create_body() -> String {
    let p = proposal();
    json!({"id": p.id, "title": p.title, "body": p.body, "proposer": p.proposer, "requested_amount": p.requested_amount})
        .to_string()
}

async fn open(app: &Router, config_file: &str) {
    assert_eq!(post(app, "/v1/proposals", &create_body()).await.0, StatusCode::CREATED);
    let body = json!({"proposal_id": "pd-042", "config": config(config_file)}).to_string();
    let (status, view) = post(app, "/v1/votes", &body).await;
    assert_eq!(status, StatusCode::CREATED, "{view}");
    assert_eq!(view["vote_id"], "pd-042");
    assert_eq!(view["state"], "open");
}

#[tokio::test]
async fn wire_and_in_process_reports_match() {
    let app = app();
    open(&app, "human-only.toml").await;
    for b in BALLOTS {
        let (status, view) = post(&app, "/v1/votes/pd-042/ballots", &ballot(b)).await;
        assert_eq!(status, StatusCode::OK, "{view}");
    }
    let (status, view) = post(&app, "/v1/votes/pd-042/close", "").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(view["state"], "decided");
    assert_eq!(view["ballot_count"], 6);
    let (_, wire) = get(&app, "/v1/votes/pd-042/report").await;
    let wire: DecisionReport = serde_json::from_value(wire["report"].clone()).unwrap();

    let local = store(Arc::new(MockBackend));
    let p = proposal();
    local.create_proposal(Proposal { created_at: local.now(), ..p }).unwrap();
    local.open_vote("pd-042", "pd-042", Some(config("human-only.toml"))).unwrap();
    for b in BALLOTS {
        let input: BallotInput = serde_json::from_str(&ballot(b)).unwrap();
        local.submit_ballot("pd-042", input.into_ballot(local.now())).unwrap();
    }
    local.close("pd-042").unwrap();
    let in_process = local.report("pd-042").unwrap();

    assert_eq!(wire, in_process);
    assert_eq!(wire.to_canonical_json(), in_process.to_canonical_json());
    assert_eq!(wire.outcome.winner.as_str(), "yes");

    let (_, ledger) = get(&app, "/v1/votes/pd-042/ledger").await;
    assert_eq!(ledger["records"].as_array().unwrap().len(), local.ledger("pd-042").unwrap().len());
    let (_, verify) = get(&app, "/v1/votes/pd-042/ledger/verify").await;
    assert_eq!(verify["verification"]["valid"], true);
}

#[tokio::test]
async fn close_is_idempotent() {
    let app = app();
    open(&app, "human-only.toml").await;
    for b in &BALLOTS[..3] {
        post(&app, "/v1/votes/pd-042/ballots", &ballot(b)).await;
    }
    let (s1, first) = post(&app, "/v1/votes/pd-042/close", "").await;
    let (s2, second) = post(&app, "/v1/votes/pd-042/close", "").await;
    assert_eq!((s1, s2), (StatusCode::OK, StatusCode::OK));
    assert_eq!(first, second);
}

#[tokio::test]
async fn human_in_the_loop_decision_uses_session_actor() {
    let app = app();
    open(&app, "hitl.toml").await;
    assert_eq!(get(&app, "/v1/votes/pd-042/recommendation").await.0, StatusCode::CONFLICT);
    let (status, ballot_err) = post(&app, "/v1/votes/pd-042/ballots", &ballot("01-alice")).await;
    assert_eq!(status, StatusCode::CONFLICT, "{ballot_err}");

    let (status, view) = post(&app, "/v1/votes/pd-042/close", "").await;
    assert_eq!(status, StatusCode::OK, "{view}");
    assert_eq!(view["state"], "awaiting_human_decision");
    assert!(view["agent_count"].as_u64().unwrap() >= 1);
    let (status, rec) = get(&app, "/v1/votes/pd-042/recommendation").await;
    assert_eq!(status, StatusCode::OK);
    assert!(!rec["agent_evaluations"].as_array().unwrap().is_empty());
    assert_eq!(get(&app, "/v1/votes/pd-042/report").await.0, StatusCode::CONFLICT);

    let (status, body) = post(&app, "/v1/votes/pd-042/decision", r#"{"winner":"abstain"}"#).await;
    assert_eq!(status, StatusCode::BAD_REQUEST, "{body}");
    let (status, view) = post(&app, "/v1/votes/pd-042/decision", r#"{"winner":"no"}"#).await;
    assert_eq!(status, StatusCode::OK, "{view}");
    assert_eq!(view["state"], "decided");
    let (_, report) = get(&app, "/v1/votes/pd-042/report").await;
    assert_eq!(report["report"]["decided_by"], "human");
    assert_eq!(report["report"]["decided_by_actor"], "dana");
    assert_eq!(post(&app, "/v1/votes/pd-042/decision", r#"{"winner":"yes"}"#).await.0, StatusCode::CONFLICT);
}

#[tokio::test]
async fn autonomous_vote_refuses_human_decision() {
    let app = app();
    open(&app, "autonomous.toml").await;
    let (_, view) = post(&app, "/v1/votes/pd-042/close", "").await;
    assert_eq!(view["state"], "decided");
    let (status, body) = post(&app, "/v1/votes/pd-042/decision", r#"{"winner":"no"}"#).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(body["error"], "illegal_state");
    let (_, report) = get(&app, "/v1/votes/pd-042/report").await;
    assert_eq!(report["report"]["decided_by"], "autonomous_agent_aggregate");
}

#[tokio::test]
async fn authentication() {
    let app = app();
    assert_eq!(call(&app, Method::GET, "/v1/health", None, None).await.0, StatusCode::OK);
    assert_eq!(call(&app, Method::GET, "/v1/ready", None, None).await.0, StatusCode::OK);
    let (status, body) = call(&app, Method::GET, "/v1/votes/x", None, None).await;
    assert_eq!(status, StatusCode::UNAUTHORIZED);
    assert_eq!(body["error"], "unauthorized");
    let (status, body) = call(&app, Method::POST, "/v1/proposals", Some(&create_body()), Some("wrong")).await;
    assert_eq!(status, StatusCode::UNAUTHORIZED);
    assert!(!body.to_string().contains(TOKEN));
}

#[tokio::test]
async fn error_statuses() {
    let app = app();
    let (status, body) = post(&app, "/v1/proposals", "{not json").await;
    assert_eq!((status, body["error"].as_str()), (StatusCode::BAD_REQUEST, Some("validation")));
    let (status, body) = post(&app, "/v1/proposals", r#"{"id":"p","body":"  "}"#).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert!(!body["violations"].as_array().unwrap().is_empty());
    let (status, body) = get(&app, "/v1/votes/nope").await;
    assert_eq!((status, body["error"].as_str()), (StatusCode::NOT_FOUND, Some("not_found")));
    assert_eq!(get(&app, "/v1/nowhere").await.0, StatusCode::NOT_FOUND);
    let (status, _) = post(&app, "/v1/votes", r#"{"proposal_id":"pd-042"}"#).await;
    assert_eq!(status, StatusCode::NOT_FOUND);

    open(&app, "human-only.toml").await;
    let (status, body) = post(&app, "/v1/proposals", &create_body()).await;
    assert_eq!((status, body["error"].as_str()), (StatusCode::CONFLICT, Some("conflict")));
    let (status, body) = post(&app, "/v1/votes/pd-042/close", "").await;
    assert_eq!((status, body["error"].as_str()), (StatusCode::CONFLICT, Some("domain")), "{body}");
    let bad = r#"{"voter":"zed","evaluations":{"yes":{"roi":101,"risk":1,"alignment":1},"no":{"roi":1,"risk":1,"alignment":1}}}"#;
    assert_eq!(post(&app, "/v1/votes/pd-042/ballots", bad).await.0, StatusCode::BAD_REQUEST);
    assert_eq!(post(&app, "/v1/votes/pd-042/ballots", &ballot("01-alice")).await.0, StatusCode::OK);
    let (status, view) = post(&app, "/v1/votes/pd-042/ballots", &ballot("01-alice")).await;
    assert_eq!((status, view["ballot_count"].as_u64()), (StatusCode::OK, Some(1)));
}

struct Down;

impl Backend for Down {
    fn name(&self) -> &str {
        "down"
    }
    fn complete(&self, _: &BackendRequest) -> Result<BackendResponse, BackendError> {
        Err(BackendError::Status { status: 503, body: "unavailable".into() })
    }
}

#[tokio::test]
async fn backend_failure_is_bad_gateway() {
    let app = app_with(Arc::new(Down));
    open(&app, "autonomous.toml").await;
    let (status, body) = post(&app, "/v1/votes/pd-042/agents", "").await;
    assert_eq!((status, body["error"].as_str()), (StatusCode::BAD_GATEWAY, Some("backend")), "{body}");
    let (_, view) = get(&app, "/v1/votes/pd-042").await;
    assert_eq!(view["state"], "open");
    assert_eq!(view["agent_count"], 0);
}

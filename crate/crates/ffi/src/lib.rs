//! C ABI over the governance pipeline and the replay statistics.
//!
//! Conventions:
//! * Every function returns a `QocStatus`; results go through out-pointers.
//! * On failure, `qoc_last_error()` describes the error. The pointer stays
//!   valid until the next failing call on the same thread.
//! * Strings returned through `char **` belong to the caller and must be
//!   released with `qoc_string_free`.
//! * `at` arguments are RFC 3339 timestamps; NULL means the current time.
//! * A `QocVote` must not be used from two threads at once.

use std::cell::RefCell;
use std::collections::BTreeMap;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use chrono::{DateTime, Utc};
use serde::de::DeserializeOwned;
use qoc_core::agents::backend_by_name;
use qoc_core::engine::{score, CriterionId, EngineError, OptionId, WeightVector};
use qoc_core::harness::{cost, mcnemar, ContingencyTable};
use qoc_core::pipeline::{verify_ledger, BallotInput, GovernanceConfig, Ledger, PipelineError, Proposal, VoteCycle, VoteState};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QocStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    Parse = 3,
    Validation = 4,
    State = 5,
    NotFound = 6,
    Backend = 7,
    Domain = 8,
    Io = 9,
    Panic = 10,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QocVoteState {
    Open = 0,
    Closed = 1,
    AwaitingHumanDecision = 2,
    Decided = 3,
}

impl From<VoteState> for QocVoteState {
    fn from(s: VoteState) -> Self {
        match s {
            VoteState::Open => QocVoteState::Open,
            VoteState::Closed => QocVoteState::Closed,
            VoteState::AwaitingHumanDecision => QocVoteState::AwaitingHumanDecision,
            VoteState::Decided => QocVoteState::Decided,
        }
    }
}

/// Opaque vote handle.
pub struct QocVote {
    inner: VoteCycle,
}

struct Failure(QocStatus, String);

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        let status = match e {
            PipelineError::Validation(_) => QocStatus::Validation,
            PipelineError::State(_) | PipelineError::Conflict(_) => QocStatus::State,
            PipelineError::NotFound(_) => QocStatus::NotFound,
            PipelineError::Backend(_) => QocStatus::Backend,
            PipelineError::Domain(_) => QocStatus::Domain,
            PipelineError::Parse(_) => QocStatus::Parse,
            PipelineError::Io(_) => QocStatus::Io,
        };
        Failure(status, e.to_string())
    }
}

impl From<EngineError> for Failure {
    fn from(e: EngineError) -> Self {
        PipelineError::from(e).into()
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).expect("NULs removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> QocStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => QocStatus::Ok,
        Ok(Err(Failure(status, message))) => {
            set_last_error(message);
            status
        }
        Err(panic) => {
            let msg = panic
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(format!("internal panic: {msg}"));
            QocStatus::Panic
        }
    }
}

fn null(name: &str) -> Failure {
    Failure(QocStatus::NullArgument, format!("{name} is NULL"))
}

unsafe fn text<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(name));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Failure(QocStatus::InvalidUtf8, format!("{name} is not UTF-8")))
}

unsafe fn timestamp(p: *const c_char) -> Result<DateTime<Utc>, Failure> {
    if p.is_null() {
        return Ok(Utc::now());
    }
    let s = text(p, "at")?;
    DateTime::parse_from_rfc3339(s)
        .map(|t| t.with_timezone(&Utc))
        .map_err(|e| Failure(QocStatus::Parse, format!("at: {e}")))
}

fn parse_json<T: DeserializeOwned>(s: &str, name: &str) -> Result<T, Failure> {
    serde_json::from_str(s).map_err(|e| Failure(QocStatus::Parse, format!("{name}: {e}")))
}

unsafe fn vote_mut<'a>(v: *mut QocVote) -> Result<&'a mut VoteCycle, Failure> {
    v.as_mut().map(|v| &mut v.inner).ok_or_else(|| null("vote"))
}

unsafe fn vote_ref<'a>(v: *const QocVote) -> Result<&'a VoteCycle, Failure> {
    v.as_ref().map(|v| &v.inner).ok_or_else(|| null("vote"))
}

unsafe fn put_string(out: *mut *mut c_char, s: String) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null("out"));
    }
    let c = CString::new(s).map_err(|_| Failure(QocStatus::Domain, "output contains a NUL byte".into()))?;
    *out = c.into_raw();
    Ok(())
}

unsafe fn put<T>(out: *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null("out"));
    }
    *out = value;
    Ok(())
}

/// Message of the last failure on this thread, or NULL.
#[no_mangle]
pub extern "C" fn qoc_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Releases a string returned by this library. NULL is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn qoc_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Library version, statically allocated.
#[no_mangle]
pub extern "C" fn qoc_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Opens a vote with the proposal's id as vote id.
///
/// `config_toml` is a governance configuration; `proposal_json` holds `id`,
/// `title`, `body` and `created_at` (plus optional `proposer`,
/// `requested_amount`).
///
/// # Safety
/// String arguments must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn qoc_vote_open(
    config_toml: *const c_char,
    proposal_json: *const c_char,
    at: *const c_char,
    out: *mut *mut QocVote,
) -> QocStatus {
    guard(|| {
        let config = GovernanceConfig::from_toml_str(text(config_toml, "config_toml")?)?;
        let proposal: Proposal = parse_json(text(proposal_json, "proposal_json")?, "proposal_json")?;
        let vote = VoteCycle::open(proposal.id.clone(), proposal, config, timestamp(at)?)?;
        put(out, Box::into_raw(Box::new(QocVote { inner: vote })))
    })
}

/// Restores a vote saved with `qoc_vote_to_json`. The ledger must verify.
///
/// # Safety
/// As for `qoc_vote_open`.
#[no_mangle]
pub unsafe extern "C" fn qoc_vote_from_json(vote_json: *const c_char, out: *mut *mut QocVote) -> QocStatus {
    guard(|| {
        let vote: VoteCycle = parse_json(text(vote_json, "vote_json")?, "vote_json")?;
        let v = vote.ledger().verify();
        if !v.valid {
            return Err(Failure(QocStatus::Validation, format!("ledger does not verify: {}", v.reason.unwrap_or_default())));
        }
        put(out, Box::into_raw(Box::new(QocVote { inner: vote })))
    })
}

/// Frees a vote. NULL is ignored.
///
/// # Safety
/// `vote` must come from `qoc_vote_open`/`qoc_vote_from_json` and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn qoc_vote_free(vote: *mut QocVote) {
    if !vote.is_null() {
        let _ = catch_unwind(AssertUnwindSafe(|| drop(Box::from_raw(vote))));
    }
}

/// Submits a human ballot: `{"voter", "voting_power", "evaluations": {option: {criterion: 0..100}}}`.
///
/// # Safety
/// `vote` must be a live handle; strings NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn qoc_vote_submit_ballot(vote: *mut QocVote, ballot_json: *const c_char, at: *const c_char) -> QocStatus {
    guard(|| {
        let v = vote_mut(vote)?;
        let b: BallotInput = parse_json(text(ballot_json, "ballot_json")?, "ballot_json")?;
        let at = timestamp(at)?;
        v.submit_ballot(b.into_ballot(at), at)?;
        Ok(())
    })
}

fn backend(name: &str) -> Result<std::sync::Arc<dyn qoc_core::agents::Backend>, Failure> {
    backend_by_name(name).map_err(|e| Failure(QocStatus::Backend, e.to_string()))
}

/// Runs the agents of a mode-2/3 vote. `backend` is "mock" or "http"
/// (configured through QOC_BACKEND_URL / QOC_BACKEND_TOKEN).
///
/// # Safety
/// `vote` must be a live handle; strings NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn qoc_vote_run_agents(vote: *mut QocVote, backend_name: *const c_char, at: *const c_char) -> QocStatus {
    guard(|| {
        let v = vote_mut(vote)?;
        let b = backend(text(backend_name, "backend")?)?;
        v.run_agents(b.as_ref(), timestamp(at)?)?;
        Ok(())
    })
}

/// Closes the vote, running the agents first when the mode needs them.
///
/// # Safety
/// `vote` must be a live handle; strings NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn qoc_vote_close(vote: *mut QocVote, backend_name: *const c_char, at: *const c_char) -> QocStatus {
    guard(|| {
        let v = vote_mut(vote)?;
        let b = backend(text(backend_name, "backend")?)?;
        v.close_with_agents(b.as_ref(), timestamp(at)?)?;
        Ok(())
    })
}

/// Records the human decision ("yes" or "no") on a human-in-the-loop vote.
///
/// # Safety
/// `vote` must be a live handle; strings NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn qoc_vote_decide(
    vote: *mut QocVote,
    winner: *const c_char,
    actor: *const c_char,
    at: *const c_char,
) -> QocStatus {
    guard(|| {
        let v = vote_mut(vote)?;
        let winner = OptionId::new(text(winner, "winner")?);
        let actor = text(actor, "actor")?;
        v.record_human_decision(winner, actor, timestamp(at)?)?;
        Ok(())
    })
}

/// # Safety
/// `vote` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn qoc_vote_state(vote: *const QocVote, out: *mut QocVoteState) -> QocStatus {
    guard(|| put(out, vote_ref(vote)?.state().into()))
}

/// Decision report as JSON. Fails with `QOC_STATUS_STATE` before the vote is decided.
///
/// # Safety
/// `vote` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn qoc_vote_report_json(vote: *const QocVote, out: *mut *mut c_char) -> QocStatus {
    guard(|| {
        let report = vote_ref(vote)?.generate_report()?;
        put_string(out, String::from_utf8(report.to_canonical_json()).expect("JSON is UTF-8"))
    })
}

/// The vote's ledger, one JSON record per line.
///
/// # Safety
/// `vote` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn qoc_vote_ledger_ndjson(vote: *const QocVote, out: *mut *mut c_char) -> QocStatus {
    guard(|| put_string(out, vote_ref(vote)?.ledger().to_ndjson()))
}

/// Whole vote state as JSON, for `qoc_vote_from_json`.
///
/// # Safety
/// `vote` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn qoc_vote_to_json(vote: *const QocVote, out: *mut *mut c_char) -> QocStatus {
    guard(|| {
        let json = serde_json::to_string(vote_ref(vote)?).map_err(|e| Failure(QocStatus::Domain, e.to_string()))?;
        put_string(out, json)
    })
}

/// Verifies a ledger. Tampering is a result, not an error: `out_valid` is
/// false and `out_first_break` the index of the first bad record (-1 when valid).
///
/// # Safety
/// `ndjson` NUL-terminated; out-pointers writable.
#[no_mangle]
pub unsafe extern "C" fn qoc_ledger_verify(ndjson: *const c_char, out_valid: *mut bool, out_first_break: *mut i64) -> QocStatus {
    guard(|| {
        let ledger = Ledger::from_ndjson(text(ndjson, "ndjson")?).map_err(|e| Failure(QocStatus::Parse, e))?;
        let v = verify_ledger(ledger.records());
        if out_valid.is_null() || out_first_break.is_null() {
            return Err(null("out"));
        }
        *out_valid = v.valid;
        *out_first_break = v.first_break.map_or(-1, |i| i as i64);
        Ok(())
    })
}

/// Uncorrected McNemar test on a 2×2 table (rows AI yes/no, columns DAO yes/no).
///
/// # Safety
/// Out-pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn qoc_mcnemar(yy: u64, yn: u64, ny: u64, nn: u64, out_chi_square: *mut f64, out_p_value: *mut f64) -> QocStatus {
    guard(|| {
        let r = mcnemar(&ContingencyTable::new(yy, yn, ny, nn));
        if out_p_value.is_null() {
            return Err(null("out_p_value"));
        }
        put(out_chi_square, r.chi_square)?;
        *out_p_value = r.p_value;
        Ok(())
    })
}

/// c = fn_weight · ny + fp_weight · yn.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn qoc_cost(ny: u64, yn: u64, fn_weight: f64, fp_weight: f64, out: *mut f64) -> QocStatus {
    guard(|| {
        let c = cost(&ContingencyTable::new(0, yn, ny, 0), fn_weight, fp_weight)
            .map_err(|e| Failure(QocStatus::Validation, e.to_string()))?;
        put(out, c.total_cost)
    })
}

/// S(o) = Σ w_j · e_j for one option. `weights_json` maps criterion to
/// weight in (0, 100]; `scores_json` maps the same criteria to 0..100.
///
/// # Safety
/// Strings NUL-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn qoc_score(weights_json: *const c_char, scores_json: *const c_char, out: *mut f64) -> QocStatus {
    guard(|| {
        let weights: BTreeMap<CriterionId, f64> = parse_json(text(weights_json, "weights_json")?, "weights_json")?;
        let scores: BTreeMap<CriterionId, f64> = parse_json(text(scores_json, "scores_json")?, "scores_json")?;
        let w = WeightVector::new(weights)?;
        put(out, score(&w, &scores)?)
    })
}

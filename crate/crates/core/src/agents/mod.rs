//! Stakeholder-aligned evaluation agents.
//!
//! Each selected stakeholder group gets exactly one agent. An agent asks a
//! [`Backend`] to score every (option, criterion) cell of the proposal and the
//! result becomes an ordinary [`Ballot`] carrying the group's voting power.

mod backend;
pub mod prompt;

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Mutex;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use backend::{
    backend_by_name, Backend, BackendError, BackendRequest, BackendResponse, HttpBackend, MockBackend, TokenUsage, ENV_BACKEND_TOKEN,
    ENV_BACKEND_URL, MOCK_BACKEND_NAME,
};

use crate::digest::digest_of;
use crate::engine::{
    Ballot, Criterion, CriterionId, EngineError, EvaluationMatrix, OptionEntry, OptionId, OptionSet, VoterId,
};
use prompt::{cell_key, parse_batched_response, parse_cell_response, ParsedScore};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StakeholderGroup {
    pub id: String,
    pub name: String,
    pub perspective: String,
    #[serde(default)]
    pub keywords: Vec<String>,
    #[serde(default = "one")]
    pub voting_power: f64,
}

fn one() -> f64 {
    1.0
}

impl StakeholderGroup {
    pub fn validate(&self) -> Result<(), AgentError> {
        if self.perspective.trim().is_empty() {
            return Err(AgentError::Invalid(format!("stakeholder group {} has an empty perspective", self.id)));
        }
        if !(self.voting_power >= 0.0 && self.voting_power.is_finite()) {
            return Err(AgentError::Invalid(format!(
                "stakeholder group {} has invalid voting power {}",
                self.id, self.voting_power
            )));
        }
        Ok(())
    }

    fn matches(&self, proposal_lower: &str) -> bool {
        self.keywords.is_empty()
            || self.keywords.iter().any(|k| !k.trim().is_empty() && proposal_lower.contains(&k.trim().to_lowercase()))
    }
}

/// Selects the groups relevant to a proposal, in configuration order.
///
/// A group is selected when it has no keywords or when any keyword occurs in
/// the proposal text (case-insensitive substring).
pub fn identify_groups(proposal_text: &str, groups: &[StakeholderGroup]) -> Result<Vec<StakeholderGroup>, AgentError> {
    if groups.is_empty() {
        return Err(AgentError::NoGroups);
    }
    let lower = proposal_text.to_lowercase();
    let selected: Vec<_> = groups.iter().filter(|g| g.matches(&lower)).cloned().collect();
    if selected.is_empty() {
        return Err(AgentError::NoGroups);
    }
    Ok(selected)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentPersona {
    pub id: String,
    pub group: StakeholderGroup,
    pub instructions: String,
    pub backend_ref: String,
    pub template_version: u32,
}

impl AgentPersona {
    pub fn new(group: StakeholderGroup, backend_ref: impl Into<String>) -> Self {
        Self::with_template(group, backend_ref, prompt::TEMPLATE_VERSION)
    }

    pub fn with_template(group: StakeholderGroup, backend_ref: impl Into<String>, template_version: u32) -> Self {
        Self {
            id: format!("agent:{}", group.id),
            instructions: prompt::render_instructions(&group, template_version),
            group,
            backend_ref: backend_ref.into(),
            template_version,
        }
    }

    pub fn voter(&self) -> VoterId {
        VoterId::new(self.id.clone())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Prompting {
    /// One request per (option, criterion) cell.
    #[default]
    PerCell,
    /// One request for the whole matrix.
    Batched,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentSettings {
    /// `"mock"` or `"http"`.
    pub backend: String,
    pub model: String,
    pub prompting: Prompting,
    pub max_retries: u32,
    pub temperature: f64,
    pub max_output_tokens: u32,
    /// Upper bound on concurrent backend calls per agent.
    pub in_flight: usize,
}

impl Default for AgentSettings {
    fn default() -> Self {
        Self {
            backend: MOCK_BACKEND_NAME.into(),
            model: "qoc-mock-1".into(),
            prompting: Prompting::PerCell,
            max_retries: 2,
            temperature: 0.0,
            max_output_tokens: 256,
            in_flight: 4,
        }
    }
}

/// One request/response exchange kept for audit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub request_id: String,
    pub prompt: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub request_body: Option<String>,
    pub response: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub usage: TokenUsage,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClampNote {
    pub option: OptionId,
    pub criterion: CriterionId,
    pub raw_score: i64,
    pub stored_score: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentEvaluation {
    pub agent: String,
    pub group: String,
    pub matrix: EvaluationMatrix,
    pub rationale: BTreeMap<OptionId, BTreeMap<CriterionId, String>>,
    pub clamped: Vec<ClampNote>,
    /// SHA-256 of the canonical JSON of `transcripts`.
    pub raw_response_digest: String,
    pub transcripts: Vec<Transcript>,
}

impl AgentEvaluation {
    pub fn digest_matches(&self) -> bool {
        digest_of(&self.transcripts) == self.raw_response_digest
    }

    pub fn to_ballot(&self, voting_power: f64, submitted_at: DateTime<Utc>) -> Ballot {
        Ballot {
            voter: VoterId::new(self.agent.clone()),
            voting_power,
            weight_vector: None,
            evaluations: self.matrix.clone(),
            submitted_at,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AgentError {
    #[error("no stakeholder group matches the proposal; a vote needs at least one evaluator")]
    NoGroups,
    #[error("backend failure for {agent} on cell {cell}: {source}")]
    Backend { agent: String, cell: String, source: BackendError },
    #[error("{agent} gave no parseable score for cell {cell} after {attempts} attempts")]
    Unparseable { agent: String, cell: String, attempts: u32 },
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

impl AgentError {
    /// Transport-level failures may succeed if the whole evaluation is retried.
    pub fn is_retryable(&self) -> bool {
        matches!(self, AgentError::Backend { source, .. } if source.is_retryable())
    }
}

struct Job {
    batched: bool,
    cells: Vec<(OptionEntry, Criterion)>,
    prompt: String,
    label: String,
}

struct JobOutput {
    scores: BTreeMap<(OptionId, CriterionId), ParsedScore>,
    transcripts: Vec<Transcript>,
}

fn run_job(
    job: &Job,
    persona: &AgentPersona,
    backend: &dyn Backend,
    settings: &AgentSettings,
    request_prefix: &str,
) -> Result<JobOutput, AgentError> {
    let attempts = settings.max_retries + 1;
    let mut transcripts = Vec::new();
    let mut last_backend_error = None;
    for attempt in 1..=attempts {
        let request = BackendRequest {
            request_id: format!("{request_prefix}/{}/{}/{attempt}", persona.id, job.label),
            model: settings.model.clone(),
            prompt: job.prompt.clone(),
            temperature: settings.temperature,
            max_output_tokens: settings.max_output_tokens,
        };
        match backend.complete(&request) {
            Ok(resp) => {
                transcripts.push(Transcript {
                    request_id: request.request_id,
                    prompt: request.prompt,
                    request_body: resp.request_body.clone(),
                    response: Some(resp.text.clone()),
                    error: None,
                    usage: resp.usage,
                });
                last_backend_error = None;
                let scores = if !job.batched {
                    let (o, c) = &job.cells[0];
                    parse_cell_response(&resp.text).map(|p| [((o.id.clone(), c.id.clone()), p)].into())
                } else {
                    let parsed = parse_batched_response(&resp.text);
                    let complete = job.cells.iter().all(|(o, c)| parsed.contains_key(&(o.id.clone(), c.id.clone())));
                    complete.then_some(parsed)
                };
                if let Some(mut scores) = scores {
                    scores.retain(|k, _| job.cells.iter().any(|(o, c)| (&o.id, &c.id) == (&k.0, &k.1)));
                    return Ok(JobOutput { scores, transcripts });
                }
            }
            Err(e) => {
                transcripts.push(Transcript {
                    request_id: request.request_id,
                    prompt: request.prompt,
                    request_body: None,
                    response: None,
                    error: Some(e.to_string()),
                    usage: TokenUsage::default(),
                });
                if !e.is_retryable() {
                    return Err(AgentError::Backend { agent: persona.id.clone(), cell: job.label.clone(), source: e });
                }
                last_backend_error = Some(e);
            }
        }
    }
    match last_backend_error {
        Some(source) => Err(AgentError::Backend { agent: persona.id.clone(), cell: job.label.clone(), source }),
        None => Err(AgentError::Unparseable { agent: persona.id.clone(), cell: job.label.clone(), attempts }),
    }
}

/// Runs `f` over `jobs` with at most `limit` calls in flight.
///
/// Output keeps job order. After the first failure no further jobs are
/// started; the failure with the lowest job index is returned.
fn try_fan_out<T, R, E, F>(jobs: &[T], limit: usize, f: F) -> Result<Vec<R>, E>
where
    T: Sync,
    R: Send,
    E: Send,
    F: Fn(&T) -> Result<R, E> + Sync,
{
    let workers = limit.max(1).min(jobs.len());
    if workers <= 1 {
        return jobs.iter().map(&f).collect();
    }
    let next = AtomicUsize::new(0);
    let failed = AtomicBool::new(false);
    let slots: Mutex<Vec<Option<Result<R, E>>>> = Mutex::new((0..jobs.len()).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                if failed.load(Ordering::Acquire) {
                    break;
                }
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= jobs.len() {
                    break;
                }
                let r = f(&jobs[i]);
                if r.is_err() {
                    failed.store(true, Ordering::Release);
                }
                slots.lock().unwrap_or_else(|p| p.into_inner())[i] = Some(r);
            });
        }
    });
    let slots = slots.into_inner().unwrap_or_else(|p| p.into_inner());
    if let Some(err) = slots.iter().position(|r| matches!(r, Some(Err(_)))) {
        let Some(Some(Err(e))) = slots.into_iter().nth(err) else { unreachable!() };
        return Err(e);
    }
    Ok(slots.into_iter().map(|r| match r {
        Some(Ok(v)) => v,
        _ => unreachable!("no job failed, so every slot holds a result"),
    }).collect())
}

/// Has one agent score every cell of the proposal.
///
/// Malformed answers are retried up to `settings.max_retries` times per
/// request. Results are joined by cell key, so the order in which concurrent
/// requests complete never changes the output.
pub fn evaluate(
    persona: &AgentPersona,
    proposal_text: &str,
    options: &OptionSet,
    criteria: &[Criterion],
    backend: &dyn Backend,
    settings: &AgentSettings,
    request_prefix: &str,
) -> Result<AgentEvaluation, AgentError> {
    if criteria.is_empty() {
        return Err(AgentError::Invalid("cannot evaluate against an empty criterion list".into()));
    }
    let jobs: Vec<Job> = match settings.prompting {
        Prompting::PerCell => options
            .entries()
            .iter()
            .flat_map(|o| criteria.iter().map(move |c| (o, c)))
            .map(|(o, c)| Job {
                prompt: prompt::render_cell_prompt(&persona.instructions, proposal_text, o, c),
                batched: false,
                label: cell_key(&o.id, &c.id),
                cells: vec![(o.clone(), c.clone())],
            })
            .collect(),
        Prompting::Batched => vec![Job {
            prompt: prompt::render_batched_prompt(&persona.instructions, proposal_text, options.entries(), criteria),
            batched: true,
            label: "batch".into(),
            cells: options
                .entries()
                .iter()
                .flat_map(|o| criteria.iter().map(move |c| (o.clone(), c.clone())))
                .collect(),
        }],
    };

    let outputs = try_fan_out(&jobs, settings.in_flight, |job| {
        run_job(job, persona, backend, settings, request_prefix)
    })?;

    let mut scores = BTreeMap::new();
    let mut transcripts = Vec::new();
    for out in outputs {
        scores.extend(out.scores);
        transcripts.extend(out.transcripts);
    }

    let mut matrix: BTreeMap<OptionId, BTreeMap<CriterionId, u8>> = BTreeMap::new();
    let mut rationale: BTreeMap<OptionId, BTreeMap<CriterionId, String>> = BTreeMap::new();
    let mut clamped = Vec::new();
    for ((o, c), p) in scores {
        if p.clamped() {
            clamped.push(ClampNote { option: o.clone(), criterion: c.clone(), raw_score: p.raw, stored_score: p.score });
        }
        matrix.entry(o.clone()).or_default().insert(c.clone(), p.score);
        rationale.entry(o).or_default().insert(c, p.rationale);
    }
    let matrix = EvaluationMatrix::new(matrix)?;
    matrix.check_grid(options, criteria)?;

    Ok(AgentEvaluation {
        agent: persona.id.clone(),
        group: persona.group.id.clone(),
        matrix,
        rationale,
        clamped,
        raw_response_digest: digest_of(&transcripts),
        transcripts,
    })
}

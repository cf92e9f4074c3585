//! Vote lifecycle for DAO proposals across the three operating modes,
//! with outlier filtering, decision reports and a hash-chained ledger.

mod config;
mod ledger;
mod report;
mod store;
mod vote;

pub use config::{GovernanceConfig, Mode, ReportBands, DEFAULT_QUESTION};
pub use ledger::{format_timestamp, verify_ledger, Ledger, LedgerEvent, LedgerRecord, Verification, GENESIS_HASH};
pub use report::{AgentRationale, CriterionNote, CriterionRow, DecisionReport, OutlierSummary};
pub use store::{Clock, FixedClock, GovernanceStore, SystemClock};
pub use vote::{DecidedBy, FinalDecision, VoteCycle, VoteState};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::AgentError;
use crate::engine::{Ballot, EngineError, EvaluationMatrix, VoterId};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Amount {
    pub value: f64,
    pub currency: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Proposal {
    pub id: String,
    pub title: String,
    pub body: String,
    #[serde(default)]
    pub proposer: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub requested_amount: Option<Amount>,
    pub created_at: DateTime<Utc>,
}

impl Proposal {
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if self.id.trim().is_empty() {
            v.push("proposal id is empty".to_owned());
        }
        if self.body.trim().is_empty() {
            v.push("proposal body is empty".to_owned());
        }
        if let Some(a) = &self.requested_amount {
            if !(a.value >= 0.0 && a.value.is_finite()) {
                v.push(format!("requested amount must be a non-negative number, got {}", a.value));
            }
        }
        v
    }

    /// Text handed to evaluators.
    pub fn text(&self) -> String {
        let mut text = format!("Title: {}\n\n{}", self.title.trim(), self.body.trim());
        if let Some(a) = &self.requested_amount {
            text.push_str(&format!("\n\nRequested amount: {} {}", a.value, a.currency));
        }
        text
    }
}

/// A human ballot as submitted; the submission time is assigned on receipt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BallotInput {
    pub voter: VoterId,
    #[serde(default = "one")]
    pub voting_power: f64,
    pub evaluations: EvaluationMatrix,
}

fn one() -> f64 {
    1.0
}

impl BallotInput {
    pub fn into_ballot(self, submitted_at: DateTime<Utc>) -> Ballot {
        Ballot {
            voter: self.voter,
            voting_power: self.voting_power,
            weight_vector: None,
            evaluations: self.evaluations,
            submitted_at,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PipelineError {
    #[error("validation failed: {}", .0.join("; "))]
    Validation(Vec<String>),
    #[error("illegal state transition: {0}")]
    State(String),
    #[error("{0} not found")]
    NotFound(String),
    #[error("conflict: {0}")]
    Conflict(String),
    #[error("agent backend failure: {0}")]
    Backend(AgentError),
    #[error("{0}")]
    Domain(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<EngineError> for PipelineError {
    fn from(e: EngineError) -> Self {
        match e {
            EngineError::GridMismatch(_) | EngineError::CriterionMismatch { .. } | EngineError::Invalid(_) => {
                PipelineError::Validation(vec![e.to_string()])
            }
            other => PipelineError::Domain(other.to_string()),
        }
    }
}

impl From<AgentError> for PipelineError {
    fn from(e: AgentError) -> Self {
        match e {
            AgentError::Backend { .. } | AgentError::Unparseable { .. } => PipelineError::Backend(e),
            other => PipelineError::Domain(other.to_string()),
        }
    }
}

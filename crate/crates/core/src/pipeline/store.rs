use std::collections::BTreeMap;
use std::sync::{Arc, Mutex, RwLock};

use chrono::{DateTime, Utc};

use crate::agents::Backend;
use crate::engine::{Ballot, OptionId};

use super::{DecisionReport, GovernanceConfig, Ledger, PipelineError, Proposal, Verification, VoteCycle, VoteState};

pub trait Clock: Send + Sync {
    fn now(&self) -> DateTime<Utc>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> DateTime<Utc> {
        Utc::now()
    }
}

/// Always reports the same instant. Used for replay and tests.
#[derive(Debug, Clone, Copy)]
pub struct FixedClock(pub DateTime<Utc>);

impl Clock for FixedClock {
    fn now(&self) -> DateTime<Utc> {
        self.0
    }
}

type VoteHandle = Arc<Mutex<VoteCycle>>;

/// Proposals and votes held in memory.
///
/// Each vote sits behind its own mutex, so transitions on one vote are
/// serialized while distinct votes proceed independently. Timestamps come
/// from the store's clock, never from callers.
pub struct GovernanceStore {
    proposals: RwLock<BTreeMap<String, Proposal>>,
    votes: RwLock<BTreeMap<String, VoteHandle>>,
    default_config: Option<GovernanceConfig>,
    backend: Arc<dyn Backend>,
    clock: Arc<dyn Clock>,
}

impl GovernanceStore {
    pub fn new(default_config: Option<GovernanceConfig>, backend: Arc<dyn Backend>, clock: Arc<dyn Clock>) -> Self {
        Self {
            proposals: RwLock::new(BTreeMap::new()),
            votes: RwLock::new(BTreeMap::new()),
            default_config,
            backend,
            clock,
        }
    }

    pub fn now(&self) -> DateTime<Utc> {
        self.clock.now()
    }

    pub fn default_config(&self) -> Option<&GovernanceConfig> {
        self.default_config.as_ref()
    }

    pub fn create_proposal(&self, proposal: Proposal) -> Result<Proposal, PipelineError> {
        let v = proposal.violations();
        if !v.is_empty() {
            return Err(PipelineError::Validation(v));
        }
        let mut proposals = self.proposals.write().unwrap_or_else(|p| p.into_inner());
        if proposals.contains_key(&proposal.id) {
            return Err(PipelineError::Conflict(format!("proposal {} already exists", proposal.id)));
        }
        proposals.insert(proposal.id.clone(), proposal.clone());
        Ok(proposal)
    }

    pub fn proposal(&self, id: &str) -> Result<Proposal, PipelineError> {
        self.proposals
            .read()
            .unwrap_or_else(|p| p.into_inner())
            .get(id)
            .cloned()
            .ok_or_else(|| PipelineError::NotFound(format!("proposal {id}")))
    }

    pub fn open_vote(
        &self,
        vote_id: &str,
        proposal_id: &str,
        config: Option<GovernanceConfig>,
    ) -> Result<VoteCycle, PipelineError> {
        let proposal = self.proposal(proposal_id)?;
        let config = config
            .or_else(|| self.default_config.clone())
            .ok_or_else(|| PipelineError::Validation(vec!["no governance configuration given".into()]))?;
        let mut votes = self.votes.write().unwrap_or_else(|p| p.into_inner());
        if votes.contains_key(vote_id) {
            return Err(PipelineError::Conflict(format!("vote {vote_id} already exists")));
        }
        let vote = VoteCycle::open(vote_id, proposal, config, self.now())?;
        votes.insert(vote_id.to_owned(), Arc::new(Mutex::new(vote.clone())));
        Ok(vote)
    }

    fn handle(&self, vote_id: &str) -> Result<VoteHandle, PipelineError> {
        self.votes
            .read()
            .unwrap_or_else(|p| p.into_inner())
            .get(vote_id)
            .cloned()
            .ok_or_else(|| PipelineError::NotFound(format!("vote {vote_id}")))
    }

    /// Runs `f` as the vote's single writer.
    pub fn with_vote<R>(
        &self,
        vote_id: &str,
        f: impl FnOnce(&mut VoteCycle) -> Result<R, PipelineError>,
    ) -> Result<R, PipelineError> {
        let handle = self.handle(vote_id)?;
        let mut vote = handle.lock().unwrap_or_else(|p| p.into_inner());
        f(&mut vote)
    }

    pub fn vote(&self, vote_id: &str) -> Result<VoteCycle, PipelineError> {
        self.with_vote(vote_id, |v| Ok(v.clone()))
    }

    pub fn vote_ids(&self) -> Vec<String> {
        self.votes.read().unwrap_or_else(|p| p.into_inner()).keys().cloned().collect()
    }

    pub fn submit_ballot(&self, vote_id: &str, ballot: Ballot) -> Result<VoteCycle, PipelineError> {
        let at = self.now();
        self.with_vote(vote_id, |v| {
            v.submit_ballot(Ballot { submitted_at: at, ..ballot }, at)?;
            Ok(v.clone())
        })
    }

    pub fn run_agents(&self, vote_id: &str) -> Result<VoteCycle, PipelineError> {
        let at = self.now();
        let backend = Arc::clone(&self.backend);
        self.with_vote(vote_id, |v| {
            v.run_agents(backend.as_ref(), at)?;
            Ok(v.clone())
        })
    }

    /// Closes a vote, running agents first when the mode needs them.
    ///
    /// Closing a vote that is already closed returns it as is.
    pub fn close(&self, vote_id: &str) -> Result<VoteCycle, PipelineError> {
        let at = self.now();
        let backend = Arc::clone(&self.backend);
        self.with_vote(vote_id, |v| {
            if v.state() != VoteState::Open {
                return Ok(v.clone());
            }
            v.close_with_agents(backend.as_ref(), at)?;
            Ok(v.clone())
        })
    }

    pub fn record_human_decision(&self, vote_id: &str, winner: OptionId, actor: &str) -> Result<VoteCycle, PipelineError> {
        let at = self.now();
        self.with_vote(vote_id, |v| {
            v.record_human_decision(winner, actor, at)?;
            Ok(v.clone())
        })
    }

    /// Builds the report; the first build of each vote is logged to its ledger.
    pub fn report(&self, vote_id: &str) -> Result<DecisionReport, PipelineError> {
        let at = self.now();
        self.with_vote(vote_id, |v| {
            let already = v.ledger().records().iter().any(|r| r.event == super::LedgerEvent::ReportEmitted);
            if already {
                v.generate_report()
            } else {
                v.emit_report(at)
            }
        })
    }

    pub fn ledger(&self, vote_id: &str) -> Result<Ledger, PipelineError> {
        self.with_vote(vote_id, |v| Ok(v.ledger().clone()))
    }

    pub fn verify_ledger(&self, vote_id: &str) -> Result<Verification, PipelineError> {
        self.with_vote(vote_id, |v| Ok(v.ledger().verify()))
    }
}

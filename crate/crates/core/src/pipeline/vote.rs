use std::collections::BTreeMap;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::agents::{evaluate, identify_groups, AgentEvaluation, AgentPersona, Backend};
use crate::digest::digest_of;
use crate::engine::{
    aggregate, decide, AggregateInput, AggregateResult, Ballot, OptionId, OptionSet, Outcome, QuestionMode, VoterId,
    WeightSourceMode,
};
use crate::safeguards::{apply_exclusions, detect_outliers, OutlierFlag};

use super::{
    DecisionReport, GovernanceConfig, Ledger, LedgerEvent, Mode, PipelineError, Proposal,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VoteState {
    Open,
    Closed,
    AwaitingHumanDecision,
    Decided,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecidedBy {
    Aggregate,
    Human,
    AutonomousAgentAggregate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalDecision {
    pub outcome: Outcome,
    pub decided_by: DecidedBy,
    pub overridden: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub actor: Option<String>,
}

/// One proposal's decision process.
///
/// States only move forward: Open → Closed → (AwaitingHumanDecision) → Decided.
/// Every transition appends to the vote's ledger. Operations that fail leave
/// the vote untouched.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoteCycle {
    id: String,
    proposal: Proposal,
    config: GovernanceConfig,
    config_digest: String,
    state: VoteState,
    ballots: BTreeMap<VoterId, Ballot>,
    agent_evaluations: Vec<AgentEvaluation>,
    agent_ballots: Vec<Ballot>,
    outlier_flags: Vec<OutlierFlag>,
    aggregate: Option<AggregateResult>,
    recommendation: Option<Outcome>,
    decision: Option<FinalDecision>,
    ledger: Ledger,
}

impl VoteCycle {
    /// Validates inputs and opens the vote with a snapshot of `config`.
    pub fn open(
        id: impl Into<String>,
        proposal: Proposal,
        config: GovernanceConfig,
        at: DateTime<Utc>,
    ) -> Result<Self, PipelineError> {
        let id = id.into();
        let mut violations = config.violations();
        violations.extend(proposal.violations());
        if id.trim().is_empty() {
            violations.push("vote id is empty".into());
        }
        if !violations.is_empty() {
            return Err(PipelineError::Validation(violations));
        }
        let config_digest = digest_of(&config);
        let mut ledger = Ledger::new();
        ledger.append(
            at,
            LedgerEvent::VoteOpened,
            json!({
                "vote_id": id,
                "proposal_id": proposal.id,
                "proposal_digest": digest_of(&proposal),
                "mode": config.mode,
                "config_digest": config_digest,
            }),
        );
        Ok(Self {
            id,
            proposal,
            config,
            config_digest,
            state: VoteState::Open,
            ballots: BTreeMap::new(),
            agent_evaluations: Vec::new(),
            agent_ballots: Vec::new(),
            outlier_flags: Vec::new(),
            aggregate: None,
            recommendation: None,
            decision: None,
            ledger,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn proposal(&self) -> &Proposal {
        &self.proposal
    }

    pub fn config(&self) -> &GovernanceConfig {
        &self.config
    }

    pub fn config_digest(&self) -> &str {
        &self.config_digest
    }

    pub fn mode(&self) -> Mode {
        self.config.mode
    }

    pub fn state(&self) -> VoteState {
        self.state
    }

    /// Effective human ballots, one per voter.
    pub fn ballots(&self) -> impl Iterator<Item = &Ballot> {
        self.ballots.values()
    }

    pub fn ballot_count(&self) -> usize {
        self.ballots.len()
    }

    pub fn agent_evaluations(&self) -> &[AgentEvaluation] {
        &self.agent_evaluations
    }

    pub fn agent_ballots(&self) -> &[Ballot] {
        &self.agent_ballots
    }

    pub fn outlier_flags(&self) -> &[OutlierFlag] {
        &self.outlier_flags
    }

    pub fn aggregate(&self) -> Option<&AggregateResult> {
        self.aggregate.as_ref()
    }

    pub fn recommendation(&self) -> Option<&Outcome> {
        self.recommendation.as_ref()
    }

    pub fn decision(&self) -> Option<&FinalDecision> {
        self.decision.as_ref()
    }

    pub fn ledger(&self) -> &Ledger {
        &self.ledger
    }

    pub fn options(&self) -> OptionSet {
        OptionSet::yes_no()
    }

    pub fn question(&self) -> String {
        self.config.question_for(&self.proposal.title)
    }

    fn require_state(&self, expected: VoteState, action: &str) -> Result<(), PipelineError> {
        if self.state != expected {
            return Err(PipelineError::State(format!(
                "cannot {action} vote {} in state {:?}; it must be {:?}",
                self.id, self.state, expected
            )));
        }
        Ok(())
    }

    /// Adds or replaces (latest wins) a human ballot.
    pub fn submit_ballot(&mut self, ballot: Ballot, at: DateTime<Utc>) -> Result<(), PipelineError> {
        self.require_state(VoteState::Open, "submit a ballot to")?;
        if self.config.mode != Mode::HumanOnly {
            return Err(PipelineError::State(format!(
                "vote {} runs in {:?} mode; agents evaluate and humans only record the final decision",
                self.id, self.config.mode
            )));
        }
        let mut violations = Vec::new();
        if ballot.voter.as_str().trim().is_empty() {
            violations.push("ballot voter id is empty".to_owned());
        }
        if ballot.weight_vector.is_some() {
            violations.push("DAO ballots must not carry a weight vector; global weights apply".to_owned());
        }
        if let Err(e) = ballot.check() {
            violations.push(e.to_string());
        }
        if let Err(e) = ballot.evaluations.check_grid(&self.options(), &self.config.criteria) {
            violations.push(e.to_string());
        }
        if !violations.is_empty() {
            return Err(PipelineError::Validation(violations));
        }
        let replaced = self.ballots.insert(ballot.voter.clone(), ballot.clone()).is_some();
        self.ledger.append(
            at,
            LedgerEvent::BallotSubmitted,
            json!({
                "source": "human",
                "voter": ballot.voter,
                "voting_power": ballot.voting_power,
                "ballot_digest": digest_of(&ballot),
                "replaced": replaced,
            }),
        );
        Ok(())
    }

    /// Instantiates one agent per matching stakeholder group and collects
    /// their evaluations. All-or-nothing: any agent failure leaves the vote
    /// unchanged.
    pub fn run_agents(&mut self, backend: &dyn Backend, at: DateTime<Utc>) -> Result<(), PipelineError> {
        self.require_state(VoteState::Open, "run agents on")?;
        if !self.config.mode.uses_agents() {
            return Err(PipelineError::State(format!("vote {} is human-only; agents are not used", self.id)));
        }
        if !self.agent_evaluations.is_empty() {
            return Err(PipelineError::State(format!("agents already evaluated vote {}", self.id)));
        }
        let text = self.proposal.text();
        let groups = identify_groups(&text, &self.config.stakeholder_groups)?;
        let options = self.options();
        let mut evaluations = Vec::with_capacity(groups.len());
        for group in groups {
            let persona = AgentPersona::new(group, backend.name());
            let e = evaluate(&persona, &text, &options, &self.config.criteria, backend, &self.config.agents, &self.id)?;
            evaluations.push((persona, e));
        }
        for (persona, e) in evaluations {
            let ballot = e.to_ballot(persona.group.voting_power, at);
            self.ledger.append(
                at,
                LedgerEvent::BallotSubmitted,
                json!({
                    "source": "agent",
                    "voter": ballot.voter,
                    "group": persona.group.id,
                    "voting_power": ballot.voting_power,
                    "ballot_digest": digest_of(&ballot),
                    "raw_response_digest": e.raw_response_digest,
                    "replaced": false,
                }),
            );
            self.agent_ballots.push(ballot);
            self.agent_evaluations.push(e);
        }
        Ok(())
    }

    fn evaluators(&self) -> Vec<Ballot> {
        match self.config.mode {
            Mode::HumanOnly => self.ballots.values().cloned().collect(),
            Mode::HumanInTheLoop | Mode::Autonomous => self.agent_ballots.clone(),
        }
    }

    /// Closes the vote: outlier detection, exclusion, aggregation, decision.
    ///
    /// Human-only and autonomous votes end Decided; human-in-the-loop votes
    /// wait for [`VoteCycle::record_human_decision`].
    pub fn close_and_aggregate(&mut self, at: DateTime<Utc>) -> Result<(), PipelineError> {
        self.require_state(VoteState::Open, "close")?;
        let ballots = self.evaluators();
        if ballots.is_empty() {
            return Err(PipelineError::Domain(format!(
                "vote {} has no evaluators; {}",
                self.id,
                if self.config.mode.uses_agents() { "run the agents first" } else { "no ballots were submitted" }
            )));
        }
        let options = self.options();
        let weights = self.config.global_weights()?;
        let flags = detect_outliers(&ballots, &self.config.safeguard)?;
        let exclusions = apply_exclusions(&flags, &self.config.safeguard, &options, &self.config.criteria);
        let result = aggregate(&AggregateInput {
            options: &options,
            criteria: &self.config.criteria,
            ballots: &ballots,
            weights: WeightSourceMode::Global(&weights),
            power_weighted: self.config.power_weighted,
            exclusions: &exclusions,
        })?;
        let ordered: Vec<(OptionId, f64)> =
            options.ids().map(|o| (o.clone(), result.option_scores[o])).collect();
        let outcome = decide(&ordered, QuestionMode::DaoBinary)?;

        self.state = VoteState::Closed;
        self.ledger.append(
            at,
            LedgerEvent::VoteClosed,
            json!({ "evaluators": ballots.len(), "ballots_digest": digest_of(&ballots) }),
        );
        self.ledger.append(
            at,
            LedgerEvent::OutliersApplied,
            json!({
                "threshold_k": self.config.safeguard.threshold_k,
                "flags": flags.len(),
                "flags_digest": digest_of(&flags),
                "excluded": exclusions,
            }),
        );
        self.ledger.append(
            at,
            LedgerEvent::RecommendationIssued,
            json!({
                "outcome": outcome,
                "option_scores": result.option_scores,
                "aggregate_digest": digest_of(&result),
            }),
        );
        self.outlier_flags = flags;
        self.aggregate = Some(result);
        self.recommendation = Some(outcome.clone());

        match self.config.mode {
            Mode::HumanInTheLoop => self.state = VoteState::AwaitingHumanDecision,
            Mode::HumanOnly => self.finalize(outcome, DecidedBy::Aggregate, None, at),
            Mode::Autonomous => self.finalize(outcome, DecidedBy::AutonomousAgentAggregate, None, at),
        }
        Ok(())
    }

    fn finalize(&mut self, outcome: Outcome, decided_by: DecidedBy, actor: Option<String>, at: DateTime<Utc>) {
        let overridden = self.recommendation.as_ref().is_some_and(|r| r.winner != outcome.winner);
        let decision = FinalDecision { outcome, decided_by, overridden, actor };
        self.ledger.append(at, LedgerEvent::DecisionRecorded, json!(decision));
        self.decision = Some(decision);
        self.state = VoteState::Decided;
    }

    /// Runs the agents if they have not run yet, then closes.
    pub fn close_with_agents(&mut self, backend: &dyn Backend, at: DateTime<Utc>) -> Result<(), PipelineError> {
        if self.state == VoteState::Open && self.config.mode.uses_agents() && self.agent_evaluations.is_empty() {
            self.run_agents(backend, at)?;
        }
        self.close_and_aggregate(at)
    }

    /// Records the human verdict on a human-in-the-loop vote.
    pub fn record_human_decision(
        &mut self,
        winner: OptionId,
        actor: impl Into<String>,
        at: DateTime<Utc>,
    ) -> Result<(), PipelineError> {
        if self.config.mode != Mode::HumanInTheLoop {
            return Err(PipelineError::State(format!(
                "vote {} runs in {:?} mode; only human-in-the-loop votes take a human decision",
                self.id, self.config.mode
            )));
        }
        self.require_state(VoteState::AwaitingHumanDecision, "record a human decision on")?;
        if self.options().position(&winner).is_none() {
            return Err(PipelineError::Validation(vec![format!("unknown option {winner}; expected yes or no")]));
        }
        let actor = actor.into();
        if actor.trim().is_empty() {
            return Err(PipelineError::Validation(vec!["actor id is empty".into()]));
        }
        self.finalize(Outcome { winner, tie_broken: false }, DecidedBy::Human, Some(actor), at);
        Ok(())
    }

    /// Builds the decision report. Pure: identical votes give identical reports.
    pub fn generate_report(&self) -> Result<DecisionReport, PipelineError> {
        self.require_state(VoteState::Decided, "report on")?;
        Ok(DecisionReport::build(self))
    }

    /// Builds the report and records its digest in the ledger.
    pub fn emit_report(&mut self, at: DateTime<Utc>) -> Result<DecisionReport, PipelineError> {
        let report = self.generate_report()?;
        self.ledger.append(at, LedgerEvent::ReportEmitted, json!({ "report_digest": digest_of(&report) }));
        Ok(report)
    }
}

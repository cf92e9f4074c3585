//! Random operation sequences against `VoteCycle`, checked against a small model.

use qoc_core::agents::MockBackend;
use qoc_core::engine::{Ballot, EvaluationMatrix, OptionId, VoterId};
use qoc_core::pipeline::{LedgerEvent, Mode, PipelineError, VoteCycle, VoteState};
use rand::rngs::StdRng;
use rand::Rng;

use std::sync::OnceLock;

use qoc_core::pipeline::{GovernanceConfig, Proposal};

use super::{config, proposal, t0};

fn fixtures() -> &'static (Proposal, [GovernanceConfig; 3]) {
    static CELL: OnceLock<(Proposal, [GovernanceConfig; 3])> = OnceLock::new();
    CELL.get_or_init(|| (proposal(), [config("human-only.toml"), config("hitl.toml"), config("autonomous.toml")]))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Op {
    Submit { voter: u8, valid: bool },
    RunAgents,
    Close,
    CloseWithAgents,
    Decide { winner: u8 },
    Report,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Expect {
    Ok,
    State,
    Validation,
    Domain,
}

fn kind(r: &Result<(), PipelineError>) -> Expect {
    match r {
        Ok(()) => Expect::Ok,
        Err(PipelineError::State(_)) => Expect::State,
        Err(PipelineError::Validation(_)) => Expect::Validation,
        Err(PipelineError::Domain(_)) => Expect::Domain,
        Err(e) => panic!("unexpected error {e}"),
    }
}

pub fn random_op(rng: &mut StdRng) -> Op {
    match rng.gen_range(0..10) {
        0..=3 => Op::Submit { voter: rng.gen_range(0..5), valid: rng.gen_bool(0.85) },
        4 => Op::RunAgents,
        5 => Op::Close,
        6 => Op::CloseWithAgents,
        7 | 8 => Op::Decide { winner: rng.gen_range(0..3) },
        _ => Op::Report,
    }
}

fn ballot(voter: u8, valid: bool, seed: u8) -> Ballot {
    let bad = if valid { 0 } else { 1 };
    let crit = if bad == 1 { "bogus" } else { "alignment" };
    let s = |k: u8| (seed.wrapping_mul(31).wrapping_add(k * 17)) % 101;
    Ballot {
        voter: VoterId::new(format!("h{voter}")),
        voting_power: 1.0 + f64::from(voter),
        weight_vector: None,
        evaluations: EvaluationMatrix::from_rows([
            ("yes", [("roi", s(1)), ("risk", s(2)), (crit, s(3))]),
            ("no", [("roi", s(4)), ("risk", s(5)), (crit, s(6))]),
        ])
        .unwrap(),
        submitted_at: t0(),
    }
}

/// Tracks what a correct vote must accept.
struct Model {
    mode: Mode,
    state: VoteState,
    voters: std::collections::BTreeSet<u8>,
    agents_ran: bool,
}

impl Model {
    fn expect(&self, op: Op) -> Expect {
        use Expect::*;
        let open = self.state == VoteState::Open;
        match op {
            Op::Submit { valid, .. } => match (open, self.mode) {
                (true, Mode::HumanOnly) if valid => Ok,
                (true, Mode::HumanOnly) => Validation,
                _ => State,
            },
            Op::RunAgents => {
                if open && self.mode != Mode::HumanOnly && !self.agents_ran {
                    Ok
                } else {
                    State
                }
            }
            Op::Close | Op::CloseWithAgents => {
                if !open {
                    State
                } else if self.mode == Mode::HumanOnly {
                    if self.voters.is_empty() { Domain } else { Ok }
                } else if self.agents_ran || op == Op::CloseWithAgents {
                    Ok
                } else {
                    Domain
                }
            }
            Op::Decide { winner } => {
                if self.mode != Mode::HumanInTheLoop || self.state != VoteState::AwaitingHumanDecision {
                    State
                } else if winner == 2 {
                    Validation
                } else {
                    Ok
                }
            }
            Op::Report => {
                if self.state == VoteState::Decided { Ok } else { State }
            }
        }
    }

    fn apply(&mut self, op: Op) {
        match op {
            Op::Submit { voter, .. } => {
                self.voters.insert(voter);
            }
            Op::RunAgents => self.agents_ran = true,
            Op::Close | Op::CloseWithAgents => {
                self.agents_ran |= self.mode != Mode::HumanOnly;
                self.state = if self.mode == Mode::HumanInTheLoop { VoteState::AwaitingHumanDecision } else { VoteState::Decided };
            }
            Op::Decide { .. } => self.state = VoteState::Decided,
            Op::Report => {}
        }
    }
}

fn execute(vote: &mut VoteCycle, op: Op, step: u8) -> Result<(), PipelineError> {
    let at = t0();
    match op {
        Op::Submit { voter, valid } => vote.submit_ballot(ballot(voter, valid, step), at),
        Op::RunAgents => vote.run_agents(&MockBackend, at),
        Op::Close => vote.close_and_aggregate(at),
        Op::CloseWithAgents => vote.close_with_agents(&MockBackend, at),
        Op::Decide { winner } => {
            let w = ["yes", "no", "maybe"][usize::from(winner)];
            vote.record_human_decision(OptionId::new(w), "auditor", at)
        }
        Op::Report => vote.emit_report(at).map(|_| ()),
    }
}

fn evaluator_snapshot(vote: &VoteCycle) -> String {
    serde_json::to_string(&(vote.ballots().collect::<Vec<_>>(), vote.agent_ballots())).unwrap()
}

/// A decision must follow a close in the ledger, and only mode-2 votes take a human one.
fn check_ledger_order(vote: &VoteCycle) -> Result<(), String> {
    let events: Vec<LedgerEvent> = vote.ledger().records().iter().map(|r| r.event).collect();
    let closed = events.iter().position(|e| *e == LedgerEvent::VoteClosed);
    if let Some(decided) = events.iter().position(|e| *e == LedgerEvent::DecisionRecorded) {
        if closed.is_none_or(|c| c > decided) {
            return Err("decision recorded before the vote closed".into());
        }
    }
    if let Some(d) = vote.decision() {
        let human = d.decided_by == qoc_core::pipeline::DecidedBy::Human;
        if human != (vote.mode() == Mode::HumanInTheLoop) {
            return Err(format!("{:?} decision on a {:?} vote", d.decided_by, vote.mode()));
        }
    }
    Ok(())
}

/// Runs one random sequence and hands back the final vote, or the first violation.
pub fn run_sequence(rng: &mut StdRng) -> Result<VoteCycle, String> {
    let (proposal, configs) = fixtures();
    let pick = rng.gen_range(0..3);
    let mode = [Mode::HumanOnly, Mode::HumanInTheLoop, Mode::Autonomous][pick];
    let mut vote = VoteCycle::open("v", proposal.clone(), configs[pick].clone(), t0()).map_err(|e| e.to_string())?;
    let mut model = Model { mode, state: VoteState::Open, voters: Default::default(), agents_ran: false };
    let len = rng.gen_range(1..=12);
    let mut frozen: Option<String> = None;
    for step in 0..len {
        let op = random_op(rng);
        let before_len = vote.ledger().len();
        let before_head = vote.ledger().records().last().map(|r| r.hash.clone());
        let expected = model.expect(op);
        let got = kind(&execute(&mut vote, op, step as u8));
        if got != expected {
            return Err(format!("{mode:?} step {step}: {op:?} gave {got:?}, model expected {expected:?}"));
        }
        if got == Expect::Ok {
            model.apply(op);
            if vote.ledger().len() <= before_len {
                return Err(format!("{op:?} succeeded without a ledger entry"));
            }
        } else if vote.ledger().len() != before_len || vote.ledger().records().last().map(|r| r.hash.clone()) != before_head {
            return Err(format!("failed {op:?} changed the ledger"));
        }
        if vote.state() != model.state {
            return Err(format!("state {:?}, model {:?}", vote.state(), model.state));
        }
        if vote.state() == VoteState::Closed {
            return Err("vote rested in the transient Closed state".into());
        }
        if vote.ballot_count() != model.voters.len() {
            return Err(format!("{} ballots, model {}", vote.ballot_count(), model.voters.len()));
        }
        let v = vote.ledger().verify();
        if !v.valid {
            return Err(format!("ledger broke after {op:?}: {:?}", v.reason));
        }
        check_ledger_order(&vote)?;
        match (&frozen, vote.state()) {
            (None, VoteState::Open) => {}
            (None, _) => frozen = Some(evaluator_snapshot(&vote)),
            (Some(snap), _) => {
                if *snap != evaluator_snapshot(&vote) {
                    return Err(format!("evaluations changed after close by {op:?}"));
                }
            }
        }
    }
    Ok(vote)
}

/// Every single-record modification must be reported at that record.
pub fn check_tamper_detection(vote: &VoteCycle) -> Result<usize, String> {
    let records = vote.ledger().records().to_vec();
    let mut checked = 0;
    for i in 0..records.len() {
        let mut variants = Vec::new();
        let mut r = records.clone();
        r[i].seq += 1;
        variants.push(("seq", r));
        let mut r = records.clone();
        r[i].timestamp.push('0');
        variants.push(("timestamp", r));
        let mut r = records.clone();
        r[i].event = if r[i].event == LedgerEvent::VoteOpened { LedgerEvent::VoteClosed } else { LedgerEvent::VoteOpened };
        variants.push(("event", r));
        let mut r = records.clone();
        r[i].payload = serde_json::json!({ "tampered": r[i].payload.clone() });
        variants.push(("payload", r));
        let mut r = records.clone();
        r[i].payload_digest = "0".repeat(64);
        variants.push(("payload_digest", r));
        let mut r = records.clone();
        r[i].prev_hash = "f".repeat(64);
        variants.push(("prev_hash", r));
        let mut r = records.clone();
        r[i].hash = "e".repeat(64);
        variants.push(("hash", r));
        if i + 1 < records.len() {
            let mut r = records.clone();
            r.remove(i);
            variants.push(("deletion", r));
            let mut r = records.clone();
            r.swap(i, i + 1);
            variants.push(("swap", r));
        }
        for (what, r) in variants {
            let v = qoc_core::pipeline::verify_ledger(&r);
            // A rewritten hash is caught by the record itself when it is last, else by its successor.
            if v.valid || v.first_break.is_none_or(|b| b > i + 1) {
                return Err(format!("{what} tamper at record {i} not detected: {v:?}"));
            }
            checked += 1;
        }
    }
    Ok(checked)
}

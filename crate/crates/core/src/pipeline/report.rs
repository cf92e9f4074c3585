use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::agents::AgentEvaluation;
use crate::digest::canonical_json;
use crate::engine::{CellRef, CriterionId, OptionEntry, OptionId, Outcome};
use crate::safeguards::{Granularity, OutlierFlag, ReferenceStatistics};

use super::{DecidedBy, Mode, ReportBands, VoteCycle};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionRow {
    pub id: CriterionId,
    pub label: String,
    pub weight: f64,
    /// ē per option.
    pub scores: BTreeMap<OptionId, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutlierSummary {
    pub threshold_k: f64,
    pub min_ballots: usize,
    pub statistics: ReferenceStatistics,
    pub granularity: Granularity,
    pub flags: Vec<OutlierFlag>,
    pub exclusions: Vec<CellRef>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentRationale {
    pub agent: String,
    pub group: String,
    pub scores: BTreeMap<OptionId, BTreeMap<CriterionId, u8>>,
    pub rationale: BTreeMap<OptionId, BTreeMap<CriterionId, String>>,
    pub raw_response_digest: String,
}

impl From<&AgentEvaluation> for AgentRationale {
    fn from(e: &AgentEvaluation) -> Self {
        Self {
            agent: e.agent.clone(),
            group: e.group.clone(),
            scores: e.matrix.clone().into(),
            rationale: e.rationale.clone(),
            raw_response_digest: e.raw_response_digest.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionNote {
    pub criterion: CriterionId,
    pub label: String,
    pub score: f64,
}

/// Criterion-level account of a decided vote.
///
/// Every number is copied from the vote's stored aggregate; nothing is
/// recomputed. [`DecisionReport::to_canonical_json`] gives stable bytes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionReport {
    pub vote_id: String,
    pub proposal_id: String,
    pub proposal_title: String,
    pub question: String,
    pub mode: Mode,
    pub options: Vec<OptionEntry>,
    pub criteria: Vec<CriterionRow>,
    pub option_scores: BTreeMap<OptionId, f64>,
    pub ballot_count: usize,
    pub outliers: OutlierSummary,
    pub recommendation: Outcome,
    pub outcome: Outcome,
    pub decided_by: DecidedBy,
    pub overridden: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decided_by_actor: Option<String>,
    pub agent_rationales: Vec<AgentRationale>,
    pub bands: ReportBands,
    pub strengths: Vec<CriterionNote>,
    pub weaknesses: Vec<CriterionNote>,
}

impl DecisionReport {
    /// Caller guarantees the vote is decided.
    pub(super) fn build(vote: &VoteCycle) -> Self {
        let aggregate = vote.aggregate().expect("decided votes carry an aggregate");
        let decision = vote.decision().expect("decided votes carry a decision");
        let recommendation = vote.recommendation().expect("decided votes carry a recommendation").clone();
        let config = vote.config();

        let criteria: Vec<CriterionRow> = config
            .criteria
            .iter()
            .map(|c| CriterionRow {
                id: c.id.clone(),
                label: c.label.clone(),
                weight: aggregate.mean_weights[&c.id],
                scores: aggregate
                    .mean_evaluations
                    .iter()
                    .map(|(o, row)| (o.clone(), row[&c.id]))
                    .collect(),
            })
            .collect();

        let winner = &decision.outcome.winner;
        let note = |row: &CriterionRow| CriterionNote {
            criterion: row.id.clone(),
            label: row.label.clone(),
            score: row.scores[winner],
        };
        let strengths = criteria.iter().filter(|r| r.scores[winner] >= config.report.strength).map(note).collect();
        let weaknesses = criteria.iter().filter(|r| r.scores[winner] < config.report.weakness).map(note).collect();

        let agent_rationales = vote
            .agent_evaluations()
            .iter()
            .map(AgentRationale::from)
            .collect();

        Self {
            vote_id: vote.id().to_owned(),
            proposal_id: vote.proposal().id.clone(),
            proposal_title: vote.proposal().title.clone(),
            question: vote.question(),
            mode: config.mode,
            options: vote.options().entries().to_vec(),
            criteria,
            option_scores: aggregate.option_scores.clone(),
            ballot_count: aggregate.ballot_count,
            outliers: OutlierSummary {
                threshold_k: config.safeguard.threshold_k,
                min_ballots: config.safeguard.min_ballots,
                statistics: config.safeguard.statistics,
                granularity: config.safeguard.granularity,
                flags: vote.outlier_flags().to_vec(),
                exclusions: aggregate.excluded_evaluations.iter().cloned().collect(),
            },
            recommendation,
            outcome: decision.outcome.clone(),
            decided_by: decision.decided_by,
            overridden: decision.overridden,
            decided_by_actor: decision.actor.clone(),
            agent_rationales,
            bands: config.report,
            strengths,
            weaknesses,
        }
    }

    pub fn to_canonical_json(&self) -> Vec<u8> {
        canonical_json(self)
    }

    pub fn to_pretty_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports always serialize")
    }

    /// Re-derives S(o) = Σ weight · ē from the report's own tables.
    pub fn recomputed_scores(&self) -> BTreeMap<OptionId, f64> {
        self.options
            .iter()
            .map(|o| (o.id.clone(), self.criteria.iter().map(|r| r.weight * r.scores[&o.id]).sum()))
            .collect()
    }

    fn label_of<'a>(&'a self, id: &'a OptionId) -> &'a str {
        self.options.iter().find(|o| &o.id == id).map_or(id.as_str(), |o| o.label.as_str())
    }

    /// Human-readable Markdown rendering.
    pub fn render_markdown(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# Decision report: {}", self.proposal_title);
        let _ = writeln!(out);
        let _ = writeln!(out, "- Vote: `{}`  Proposal: `{}`", self.vote_id, self.proposal_id);
        let _ = writeln!(out, "- Question: {}", self.question);
        let _ = writeln!(out, "- Mode: {:?}", self.mode);
        let _ = writeln!(out, "- Evaluators: {}", self.ballot_count);
        let tie = if self.outcome.tie_broken { " (tie broken)" } else { "" };
        let _ = writeln!(out, "- Outcome: **{}**{tie}, decided by {:?}", self.label_of(&self.outcome.winner), self.decided_by);
        if self.decided_by == DecidedBy::Human {
            let _ = writeln!(
                out,
                "- Recommendation: {}{}{}",
                self.label_of(&self.recommendation.winner),
                if self.overridden { ", overridden" } else { ", accepted" },
                self.decided_by_actor.as_deref().map(|a| format!(" by {a}")).unwrap_or_default()
            );
        }
        let _ = writeln!(out);
        let _ = writeln!(out, "## Criterion breakdown");
        let _ = writeln!(out);
        let mut header = String::from("| Criterion | Weight |");
        let mut rule = String::from("|---|---:|");
        for o in &self.options {
            let _ = write!(header, " {} |", o.label);
            rule.push_str("---:|");
        }
        let _ = writeln!(out, "{header}\n{rule}");
        for r in &self.criteria {
            let _ = write!(out, "| {} | {} |", r.label, r.weight);
            for o in &self.options {
                let _ = write!(out, " {:.2} |", r.scores[&o.id]);
            }
            let _ = writeln!(out);
        }
        let _ = write!(out, "| **Total S** | |");
        for o in &self.options {
            let _ = write!(out, " **{:.2}** |", self.option_scores[&o.id]);
        }
        let _ = writeln!(out);
        let _ = writeln!(out);

        let winner = self.label_of(&self.outcome.winner);
        let _ = writeln!(out, "## Strengths of \"{winner}\" (ē ≥ {})", self.bands.strength);
        let _ = writeln!(out);
        list_notes(&mut out, &self.strengths);
        let _ = writeln!(out, "## Weaknesses of \"{winner}\" (ē < {})", self.bands.weakness);
        let _ = writeln!(out);
        list_notes(&mut out, &self.weaknesses);

        let _ = writeln!(out, "## Outliers");
        let _ = writeln!(out);
        let _ = writeln!(
            out,
            "Threshold k = {}, minimum ballots {}, {:?} statistics, {:?} exclusion.",
            self.outliers.threshold_k, self.outliers.min_ballots, self.outliers.statistics, self.outliers.granularity
        );
        let _ = writeln!(out);
        if self.outliers.flags.is_empty() {
            let _ = writeln!(out, "No evaluations were flagged.");
        } else {
            let _ = writeln!(out, "| Voter | Option | Criterion | Value | Mean | σ | z |");
            let _ = writeln!(out, "|---|---|---|---:|---:|---:|---:|");
            for f in &self.outliers.flags {
                let _ = writeln!(
                    out,
                    "| {} | {} | {} | {} | {:.2} | {:.2} | {:.2} |",
                    f.voter, f.option, f.criterion, f.value, f.cell_mean, f.cell_stddev, f.z_score
                );
            }
            let _ = writeln!(out);
            let _ = writeln!(out, "{} evaluation(s) excluded from aggregation.", self.outliers.exclusions.len());
        }

        if !self.agent_rationales.is_empty() {
            let _ = writeln!(out);
            let _ = writeln!(out, "## Agent evaluations");
            for a in &self.agent_rationales {
                let _ = writeln!(out);
                let _ = writeln!(out, "### {} (group {})", a.agent, a.group);
                let _ = writeln!(out);
                for (o, row) in &a.scores {
                    for (c, s) in row {
                        let why = a.rationale.get(o).and_then(|r| r.get(c)).map(String::as_str).unwrap_or("");
                        let _ = writeln!(out, "- {o} / {c}: {s} {why}");
                    }
                }
            }
        }
        out
    }
}

fn list_notes(out: &mut String, notes: &[CriterionNote]) {
    if notes.is_empty() {
        let _ = writeln!(out, "None.");
    }
    for n in notes {
        let _ = writeln!(out, "- {}: {:.2}", n.label, n.score);
    }
    let _ = writeln!(out);
}

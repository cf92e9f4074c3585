//! Question-Option-Criteria model: domain types, weighted-sum scoring,
//! multi-user consolidation and aggregation, and outcome selection.
//!
//! All arithmetic after aggregation is `f64`; comparisons use [`TOLERANCE`].
//! Every function here is pure.

mod aggregate;
mod consolidate;
mod scoring;
mod types;

pub use aggregate::{aggregate, aggregate_evaluations, aggregate_weights, AggregateInput, WeightSource, WeightSourceMode};
pub use consolidate::consolidate;
pub use scoring::{decide, score, scores_for};
pub use types::*;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EngineError {
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("criterion mismatch: missing {missing:?}, extra {extra:?}")]
    CriterionMismatch { missing: Vec<CriterionId>, extra: Vec<CriterionId> },
    #[error("evaluation grid mismatch: {0}")]
    GridMismatch(String),
    #[error("no contributions to consolidate")]
    NoContributions,
    #[error("total voting power is zero")]
    ZeroTotalPower,
    #[error("every evaluation of cell ({option}, {criterion}) was excluded")]
    EmptyCell { option: OptionId, criterion: CriterionId },
    #[error("duplicate ballot from voter {0}")]
    DuplicateVoter(VoterId),
    #[error("at least 2 scored options are required, got {0}")]
    TooFewOptions(usize),
}

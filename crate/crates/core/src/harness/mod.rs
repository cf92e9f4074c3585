//! Replays historical DAO decisions through the autonomous pipeline and
//! compares the agents' verdicts with what the DAO decided.

mod corpus;
mod replay;
mod stats;
mod stats_report;

pub use corpus::{fetch_corpus, load_corpus, load_pairs, parse_corpus, parse_pairs, pairs_to_jsonl, HistoricalDecision, Pair, Verdict};
pub use replay::{replay, ReplayOptions, ReplayRun, Skip};
pub use stats::{chi_square_1df_p, contingency, cost, mcnemar, ContingencyTable, CostResult, McNemarResult};
pub use stats_report::{emit_stats_report, ModelStats, StatsReport, SweepRow};

use thiserror::Error;

use crate::pipeline::PipelineError;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HarnessError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("no decision pairs to analyse")]
    NoPairs,
    #[error("{0}")]
    Invalid(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
}

impl HarnessError {
    pub(crate) fn io(path: &std::path::Path, e: std::io::Error) -> Self {
        HarnessError::Io(format!("{}: {e}", path.display()))
    }
}

//! `qoc` command line.
//!
//! Exit codes: 0 success, 1 validation or domain error, 2 usage error.

use std::ffi::OsString;
use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use chrono::{DateTime, Utc};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::agents::{backend_by_name, Backend};
use crate::engine::{Ballot, OptionId};
use crate::harness::{
    contingency, emit_stats_report, fetch_corpus, load_corpus, load_pairs, pairs_to_jsonl, replay, HarnessError,
    ReplayOptions,
};
use crate::pipeline::{
    verify_ledger, Amount, BallotInput, GovernanceConfig, GovernanceStore, Ledger, Mode, PipelineError, Proposal, SystemClock,
    VoteCycle, VoteState,
};
use crate::service::{router, serve, ApiTokens};

#[derive(Debug, Parser)]
#[command(name = "qoc", version, about = "Question-Option-Criteria governance for DAOs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one vote offline and write its report, ledger and state.
    RunVote(RunVoteArgs),
    /// Record the human decision on a human-in-the-loop vote written by run-vote.
    Decide(DecideArgs),
    /// Replay a corpus of past decisions in autonomous mode and compute statistics.
    Replay(ReplayArgs),
    /// Compute agreement, McNemar and cost statistics from pair files.
    Stats(StatsArgs),
    /// Print the report of a decided vote.
    Report(ReportArgs),
    /// Check the hash chain of a ledger file.
    VerifyLedger(VerifyArgs),
    /// Serve the HTTP API. Tokens come from QOC_API_TOKENS.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
struct RunVoteArgs {
    /// Governance configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Proposal (JSON).
    #[arg(long)]
    proposal: PathBuf,
    /// Directory of ballot files (*.json), read in file-name order.
    #[arg(long)]
    ballots: Option<PathBuf>,
    /// Overrides the configured mode: human-only, human-in-the-loop or autonomous (or 1, 2, 3).
    #[arg(long)]
    mode: Option<Mode>,
    #[arg(long, default_value = "mock", value_parser = ["mock", "http"])]
    backend: String,
    /// Overrides the outlier threshold k.
    #[arg(long)]
    k_threshold: Option<f64>,
    /// Human decision for human-in-the-loop votes: yes or no.
    #[arg(long, requires = "actor")]
    decision: Option<String>,
    /// Who records the human decision.
    #[arg(long)]
    actor: Option<String>,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct DecideArgs {
    /// vote.json written by run-vote.
    #[arg(long)]
    vote: PathBuf,
    /// yes or no.
    #[arg(long)]
    decision: String,
    #[arg(long)]
    actor: String,
    /// Output directory; defaults to the directory of --vote.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct CostArgs {
    /// Weight of a false positive (AI yes, DAO no).
    #[arg(long, default_value_t = 10.0)]
    fp_weight: f64,
    /// Weight of a false negative (AI no, DAO yes).
    #[arg(long, default_value_t = 1.0)]
    fn_weight: f64,
    /// Extra false-positive weights to tabulate, comma separated.
    #[arg(long, value_delimiter = ',')]
    sweep: Vec<f64>,
}

#[derive(Debug, Args)]
struct ReplayArgs {
    /// Corpus file (JSONL) or http(s) URL.
    #[arg(long)]
    corpus: String,
    /// Governance configuration (TOML); its mode must be autonomous.
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value = "mock", value_parser = ["mock", "http"])]
    backend: String,
    /// Progress file; an interrupted replay resumes from it.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Overrides the outlier threshold k.
    #[arg(long)]
    k_threshold: Option<f64>,
    /// Stop after evaluating this many new proposals.
    #[arg(long)]
    limit: Option<usize>,
    /// Column label in the rendered tables.
    #[arg(long, default_value = "model")]
    label: String,
    #[command(flatten)]
    cost: CostArgs,
    /// Output directory for pairs.jsonl, skips.json, stats.json and stats.txt.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct StatsArgs {
    /// Pair files (JSONL of id, ai_outcome, dao_outcome), one per model.
    #[arg(long = "pairs", required = true)]
    pairs: Vec<PathBuf>,
    /// Labels, one per pair file; defaults to the file stems.
    #[arg(long = "label")]
    labels: Vec<String>,
    #[command(flatten)]
    cost: CostArgs,
    /// Also write stats.json and stats.txt here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ReportArgs {
    /// vote.json written by run-vote or decide.
    #[arg(long)]
    vote: PathBuf,
    #[arg(long, default_value = "markdown", value_parser = ["markdown", "json"])]
    format: String,
}

#[derive(Debug, Args)]
struct VerifyArgs {
    /// Ledger file (NDJSON).
    #[arg(long)]
    ledger: PathBuf,
}

#[derive(Debug, Args)]
struct ServeArgs {
    /// Default governance configuration for votes opened without one.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, env = "QOC_LISTEN", default_value = "127.0.0.1:8080")]
    listen: SocketAddr,
    #[arg(long, default_value = "mock", value_parser = ["mock", "http"])]
    backend: String,
}

/// Proposal file. `created_at` defaults to the current time.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProposalFile {
    id: String,
    #[serde(default)]
    title: String,
    body: String,
    #[serde(default)]
    proposer: String,
    #[serde(default)]
    requested_amount: Option<Amount>,
    #[serde(default)]
    created_at: Option<DateTime<Utc>>,
}

struct Failure(String);

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        Failure(e.to_string())
    }
}

impl From<HarnessError> for Failure {
    fn from(e: HarnessError) -> Self {
        Failure(e.to_string())
    }
}

type CliResult = Result<(), Failure>;

pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let result = match cli.command {
        Command::RunVote(a) => run_vote(a),
        Command::Decide(a) => decide(a),
        Command::Replay(a) => run_replay(a),
        Command::Stats(a) => stats(a),
        Command::Report(a) => report(a),
        Command::VerifyLedger(a) => verify(a),
        Command::Serve(a) => run_serve(a),
    };
    match result {
        Ok(()) => 0,
        Err(Failure(msg)) => {
            eprintln!("error: {msg}");
            1
        }
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure(format!("{}: {e}", path.display())))
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> CliResult {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Failure(format!("{}: {e}", dir.display())))?;
    }
    fs::write(path, contents).map_err(|e| Failure(format!("{}: {e}", path.display())))
}

fn parse_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, Failure> {
    serde_json::from_str(&read(path)?).map_err(|e| Failure(format!("{}: {e}", path.display())))
}

fn pretty<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("values serialize") + "\n"
}

fn load_config(path: &Path, mode: Option<Mode>, k: Option<f64>) -> Result<GovernanceConfig, Failure> {
    let mut config = GovernanceConfig::load(path)?;
    if let Some(m) = mode {
        config.mode = m;
    }
    if let Some(k) = k {
        config.safeguard.threshold_k = k;
    }
    config.validate()?;
    Ok(config)
}

fn backend(name: &str) -> Result<Arc<dyn Backend>, Failure> {
    backend_by_name(name).map_err(|e| Failure(e.to_string()))
}

fn parse_verdict(s: &str) -> Result<OptionId, Failure> {
    match s.trim().to_lowercase().as_str() {
        v @ ("yes" | "no") => Ok(OptionId::new(v)),
        other => Err(Failure(format!("decision must be yes or no, got {other:?}"))),
    }
}

fn read_ballots(dir: &Path, at: DateTime<Utc>) -> Result<Vec<Ballot>, Failure> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Failure(format!("{}: {e}", dir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    files.sort();
    files
        .iter()
        .map(|p| {
            let b: BallotInput = parse_json(p)?;
            Ok(b.into_ballot(at))
        })
        .collect()
}

/// Writes the artefacts of a vote; the report only once it is decided.
fn write_vote(vote: &mut VoteCycle, out: &Path, at: DateTime<Utc>) -> CliResult {
    if vote.state() == VoteState::Decided {
        let report = vote.emit_report(at)?;
        write(&out.join("report.json"), report.to_pretty_json() + "\n")?;
        write(&out.join("report.md"), report.render_markdown())?;
    }
    write(&out.join("ledger.ndjson"), vote.ledger().to_ndjson())?;
    write(&out.join("vote.json"), pretty(vote))
}

fn summarize(vote: &VoteCycle) {
    let scores = vote
        .aggregate()
        .map(|a| a.option_scores.iter().map(|(o, s)| format!("S({o}) = {s:.2}")).collect::<Vec<_>>().join(", "))
        .unwrap_or_default();
    match (vote.decision(), vote.recommendation()) {
        (Some(d), _) => println!(
            "vote {}: {} decided by {:?}{}; {scores}",
            vote.id(),
            d.outcome.winner,
            d.decided_by,
            if d.overridden { " (recommendation overridden)" } else { "" }
        ),
        (None, Some(r)) => println!("vote {}: recommendation {}; {scores}", vote.id(), r.winner),
        _ => println!("vote {}: {:?}", vote.id(), vote.state()),
    }
}

fn run_vote(a: RunVoteArgs) -> CliResult {
    let config = load_config(&a.config, a.mode, a.k_threshold)?;
    let decision = a.decision.as_deref().map(parse_verdict).transpose()?;
    if decision.is_some() && config.mode != Mode::HumanInTheLoop {
        return Err(Failure(format!("--decision only applies to human-in-the-loop votes, not {:?}", config.mode)));
    }
    let now = Utc::now();
    let p: ProposalFile = parse_json(&a.proposal)?;
    let proposal = Proposal {
        id: p.id,
        title: p.title,
        body: p.body,
        proposer: p.proposer,
        requested_amount: p.requested_amount,
        created_at: p.created_at.unwrap_or(now),
    };
    let violations = proposal.violations();
    if !violations.is_empty() {
        return Err(PipelineError::Validation(violations).into());
    }
    let ballots = match &a.ballots {
        Some(dir) => read_ballots(dir, now)?,
        None => vec![],
    };
    let backend = backend(&a.backend)?;

    let mut vote = VoteCycle::open(proposal.id.clone(), proposal, config, now)?;
    for b in ballots {
        vote.submit_ballot(b, now)?;
    }
    vote.close_with_agents(backend.as_ref(), now)?;

    if vote.state() == VoteState::AwaitingHumanDecision {
        let out = &a.out;
        let rec = serde_json::json!({
            "vote_id": vote.id(),
            "recommendation": vote.recommendation(),
            "aggregate": vote.aggregate(),
            "outlier_flags": vote.outlier_flags(),
            "agent_evaluations": vote.agent_evaluations().iter().map(crate::pipeline::AgentRationale::from).collect::<Vec<_>>(),
        });
        write(&out.join("recommendation.json"), pretty(&rec))?;
        match (decision, &a.actor) {
            (Some(winner), Some(actor)) => vote.record_human_decision(winner, actor.as_str(), now)?,
            _ => {
                write_vote(&mut vote, out, now)?;
                summarize(&vote);
                println!(
                    "awaiting human decision; run: qoc decide --vote {} --decision yes|no --actor <name>",
                    out.join("vote.json").display()
                );
                return Ok(());
            }
        }
    }
    write_vote(&mut vote, &a.out, now)?;
    summarize(&vote);
    Ok(())
}

fn load_vote(path: &Path) -> Result<VoteCycle, Failure> {
    let vote: VoteCycle = parse_json(path)?;
    let v = vote.ledger().verify();
    if !v.valid {
        return Err(Failure(format!(
            "{}: ledger does not verify at record {}: {}",
            path.display(),
            v.first_break.unwrap_or(0),
            v.reason.unwrap_or_default()
        )));
    }
    Ok(vote)
}

fn decide(a: DecideArgs) -> CliResult {
    let winner = parse_verdict(&a.decision)?;
    let mut vote = load_vote(&a.vote)?;
    let now = Utc::now();
    vote.record_human_decision(winner, a.actor.as_str(), now)?;
    let out = a.out.unwrap_or_else(|| a.vote.parent().map(Path::to_path_buf).unwrap_or_default());
    write_vote(&mut vote, &out, now)?;
    summarize(&vote);
    Ok(())
}

fn write_stats(out: &Path, report: &crate::harness::StatsReport) -> CliResult {
    write(&out.join("stats.json"), report.to_pretty_json() + "\n")?;
    write(&out.join("stats.txt"), report.render_text())
}

fn run_replay(a: ReplayArgs) -> CliResult {
    let config = load_config(&a.config, None, a.k_threshold)?;
    let corpus = if a.corpus.starts_with("http://") || a.corpus.starts_with("https://") {
        fetch_corpus(&a.corpus)?
    } else {
        load_corpus(Path::new(&a.corpus))?
    };
    let backend = backend(&a.backend)?;
    let run = replay(&corpus, &config, backend.as_ref(), &ReplayOptions { checkpoint: a.checkpoint, stop_after: a.limit })?;
    write(&a.out.join("pairs.jsonl"), pairs_to_jsonl(&run.pairs))?;
    write(&a.out.join("skips.json"), pretty(&run.skips))?;
    eprintln!(
        "{} proposals: {} from checkpoint, {} evaluated, {} skipped",
        corpus.len(),
        run.resumed,
        run.evaluated,
        run.skips.len()
    );
    if !run.complete {
        eprintln!("stopped early; rerun with the same --checkpoint to continue");
        return Ok(());
    }
    let table = contingency(&run.pairs).map_err(|_| Failure("every proposal was skipped; nothing to analyse".into()))?;
    let report = emit_stats_report(&[(a.label, table, run.skips.len())], a.cost.fn_weight, a.cost.fp_weight, &a.cost.sweep)?;
    write_stats(&a.out, &report)?;
    print!("{}", report.render_text());
    Ok(())
}

fn stats(a: StatsArgs) -> CliResult {
    if !a.labels.is_empty() && a.labels.len() != a.pairs.len() {
        return Err(Failure(format!("{} labels given for {} pair files", a.labels.len(), a.pairs.len())));
    }
    let mut models = Vec::new();
    for (i, path) in a.pairs.iter().enumerate() {
        let pairs = load_pairs(path).map_err(|e| Failure(format!("{}: {e}", path.display())))?;
        let table = contingency(&pairs).map_err(|e| Failure(format!("{}: {e}", path.display())))?;
        let label = a.labels.get(i).cloned().unwrap_or_else(|| {
            path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| format!("model {}", i + 1))
        });
        models.push((label, table, 0));
    }
    let report = emit_stats_report(&models, a.cost.fn_weight, a.cost.fp_weight, &a.cost.sweep)?;
    if let Some(out) = &a.out {
        write_stats(out, &report)?;
    }
    print!("{}", report.render_text());
    Ok(())
}

fn report(a: ReportArgs) -> CliResult {
    let report = load_vote(&a.vote)?.generate_report()?;
    match a.format.as_str() {
        "json" => println!("{}", report.to_pretty_json()),
        _ => print!("{}", report.render_markdown()),
    }
    Ok(())
}

fn verify(a: VerifyArgs) -> CliResult {
    let ledger = Ledger::from_ndjson(&read(&a.ledger)?).map_err(|e| Failure(format!("{}: {e}", a.ledger.display())))?;
    let v = verify_ledger(ledger.records());
    print!("{}", pretty(&v));
    if v.valid {
        Ok(())
    } else {
        Err(Failure(format!(
            "ledger breaks at record {}: {}",
            v.first_break.unwrap_or(0),
            v.reason.unwrap_or_default()
        )))
    }
}

fn run_serve(a: ServeArgs) -> CliResult {
    let tokens = ApiTokens::from_env().map_err(Failure)?;
    if tokens.is_empty() {
        return Err(Failure("QOC_API_TOKENS is empty; set it to actor:token pairs".into()));
    }
    let config = a.config.as_deref().map(|p| load_config(p, None, None)).transpose()?;
    let store = Arc::new(GovernanceStore::new(config, backend(&a.backend)?, Arc::new(SystemClock)));
    let runtime = tokio::runtime::Runtime::new().map_err(|e| Failure(e.to_string()))?;
    runtime
        .block_on(serve(a.listen, router(store, tokens)))
        .map_err(|e| Failure(format!("{}: {e}", a.listen)))
}

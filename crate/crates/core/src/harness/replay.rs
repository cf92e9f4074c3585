use std::collections::BTreeMap;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::agents::Backend;
use crate::digest::digest_of;
use crate::pipeline::{DecisionReport, GovernanceConfig, Mode, PipelineError, Proposal, VoteCycle};

use super::{HarnessError, HistoricalDecision, Pair, Verdict};

const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Default)]
pub struct ReplayOptions {
    /// JSONL progress file. Entries already present are not re-evaluated.
    pub checkpoint: Option<PathBuf>,
    /// Stop after evaluating this many new proposals.
    pub stop_after: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Skip {
    pub id: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplayRun {
    /// In corpus order.
    pub pairs: Vec<Pair>,
    pub skips: Vec<Skip>,
    /// One per pair, same order.
    pub reports: Vec<DecisionReport>,
    /// Taken from the checkpoint rather than evaluated in this run.
    pub resumed: usize,
    pub evaluated: usize,
    pub complete: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum CheckpointLine {
    Header {
        version: u32,
        config_digest: String,
        backend: String,
    },
    Done {
        id: String,
        ai_outcome: Verdict,
        dao_outcome: Verdict,
        report_digest: String,
        report: Box<DecisionReport>,
    },
    Skipped {
        id: String,
        dao_outcome: Verdict,
        reason: String,
    },
}

impl CheckpointLine {
    fn id(&self) -> Option<&str> {
        match self {
            CheckpointLine::Header { .. } => None,
            CheckpointLine::Done { id, .. } | CheckpointLine::Skipped { id, .. } => Some(id),
        }
    }

    fn to_line(&self) -> String {
        serde_json::to_string(self).expect("checkpoint lines serialize") + "\n"
    }
}

struct Checkpoint {
    path: PathBuf,
    entries: BTreeMap<String, CheckpointLine>,
}

impl Checkpoint {
    /// Reads an existing file and rewrites it without a torn final line.
    fn open(path: &Path, header: &CheckpointLine) -> Result<Self, HarnessError> {
        let text = match fs::read_to_string(path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => String::new(),
            Err(e) => return Err(HarnessError::io(path, e)),
        };
        let mut entries = BTreeMap::new();
        let lines: Vec<&str> = text.lines().collect();
        let mut saw_header = false;
        for (i, line) in lines.iter().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let parsed: CheckpointLine = match serde_json::from_str(line) {
                Ok(p) => p,
                Err(_) if i + 1 == lines.len() && !text.ends_with('\n') => break,
                Err(e) => return Err(HarnessError::Checkpoint(format!("{} line {}: {e}", path.display(), i + 1))),
            };
            match &parsed {
                CheckpointLine::Header { .. } => {
                    if saw_header || !entries.is_empty() {
                        return Err(HarnessError::Checkpoint(format!("{} line {}: unexpected header", path.display(), i + 1)));
                    }
                    if &parsed != header {
                        return Err(HarnessError::Checkpoint(format!(
                            "{} was written with a different configuration or backend",
                            path.display()
                        )));
                    }
                    saw_header = true;
                }
                CheckpointLine::Done { id, report, report_digest, .. } => {
                    if &digest_of(report) != report_digest {
                        return Err(HarnessError::Checkpoint(format!("{} line {}: report digest mismatch for {id}", path.display(), i + 1)));
                    }
                    entries.insert(id.clone(), parsed.clone());
                }
                CheckpointLine::Skipped { id, .. } => {
                    entries.insert(id.clone(), parsed.clone());
                }
            }
            if !saw_header {
                return Err(HarnessError::Checkpoint(format!("{} does not start with a header", path.display())));
            }
        }
        let mut body = header.to_line();
        for e in entries.values() {
            body.push_str(&e.to_line());
        }
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
        }
        let tmp = path.with_extension("tmp");
        fs::write(&tmp, body).map_err(|e| HarnessError::io(&tmp, e))?;
        fs::rename(&tmp, path).map_err(|e| HarnessError::io(path, e))?;
        Ok(Self { path: path.to_owned(), entries })
    }

    fn append(&mut self, line: CheckpointLine) -> Result<(), HarnessError> {
        let mut f = OpenOptions::new().append(true).open(&self.path).map_err(|e| HarnessError::io(&self.path, e))?;
        f.write_all(line.to_line().as_bytes()).map_err(|e| HarnessError::io(&self.path, e))?;
        f.flush().map_err(|e| HarnessError::io(&self.path, e))?;
        let id = line.id().expect("entries carry ids").to_owned();
        self.entries.insert(id, line);
        Ok(())
    }
}

fn evaluate_one(d: &HistoricalDecision, config: &GovernanceConfig, backend: &dyn Backend) -> Result<(Verdict, DecisionReport), PipelineError> {
    let proposal = Proposal {
        id: d.id.clone(),
        title: d.title.clone(),
        body: d.body.clone(),
        proposer: String::new(),
        requested_amount: None,
        created_at: d.decided_at,
    };
    let mut vote = VoteCycle::open(&d.id, proposal, config.clone(), d.decided_at)?;
    vote.close_with_agents(backend, d.decided_at)?;
    let report = vote.emit_report(d.decided_at)?;
    let verdict = Verdict::from_option(&report.outcome.winner)
        .ok_or_else(|| PipelineError::Domain(format!("binary vote produced option {}", report.outcome.winner)))?;
    Ok((verdict, report))
}

/// Runs one autonomous vote per decision, in corpus order, all stamped
/// with the decision's `decided_at`.
///
/// A proposal whose vote fails is recorded as a skip and left out of the
/// pairs. With a checkpoint, every finished proposal is appended as soon as
/// it completes and reused on the next run.
pub fn replay(
    corpus: &[HistoricalDecision],
    config: &GovernanceConfig,
    backend: &dyn Backend,
    options: &ReplayOptions,
) -> Result<ReplayRun, HarnessError> {
    if corpus.is_empty() {
        return Err(HarnessError::EmptyCorpus);
    }
    if config.mode != Mode::Autonomous {
        return Err(HarnessError::Invalid(format!("replay needs an autonomous configuration, got {:?}", config.mode)));
    }
    config.validate()?;

    let header = CheckpointLine::Header {
        version: CHECKPOINT_VERSION,
        config_digest: digest_of(config),
        backend: backend.name().to_owned(),
    };
    let mut checkpoint = options.checkpoint.as_deref().map(|p| Checkpoint::open(p, &header)).transpose()?;
    if let Some(cp) = &checkpoint {
        if let Some(stray) = cp.entries.keys().find(|id| !corpus.iter().any(|d| &d.id == *id)) {
            return Err(HarnessError::Checkpoint(format!("entry {stray} is not in the corpus")));
        }
    }

    let mut run = ReplayRun { pairs: vec![], skips: vec![], reports: vec![], resumed: 0, evaluated: 0, complete: true };
    for d in corpus {
        let saved = checkpoint.as_ref().and_then(|cp| cp.entries.get(&d.id)).cloned();
        let entry = match saved {
            Some(e) => {
                run.resumed += 1;
                e
            }
            None => {
                if options.stop_after.is_some_and(|n| run.evaluated >= n) {
                    run.complete = false;
                    break;
                }
                run.evaluated += 1;
                let entry = match evaluate_one(d, config, backend) {
                    Ok((ai, report)) => CheckpointLine::Done {
                        id: d.id.clone(),
                        ai_outcome: ai,
                        dao_outcome: d.outcome,
                        report_digest: digest_of(&report),
                        report: Box::new(report),
                    },
                    Err(e) => CheckpointLine::Skipped { id: d.id.clone(), dao_outcome: d.outcome, reason: e.to_string() },
                };
                if let Some(cp) = checkpoint.as_mut() {
                    cp.append(entry.clone())?;
                }
                entry
            }
        };
        match entry {
            CheckpointLine::Done { id, ai_outcome, dao_outcome, report, .. } => {
                run.pairs.push(Pair { id, ai_outcome, dao_outcome });
                run.reports.push(*report);
            }
            CheckpointLine::Skipped { id, reason, .. } => run.skips.push(Skip { id, reason }),
            CheckpointLine::Header { .. } => unreachable!("headers are not stored as entries"),
        }
    }
    Ok(run)
}

use std::path::Path;

use chrono::{DateTime, Utc};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::engine::{OptionId, NO, YES};

use super::HarnessError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    #[serde(alias = "Yes", alias = "YES")]
    Yes,
    #[serde(alias = "No", alias = "NO")]
    No,
}

impl Verdict {
    pub fn option_id(self) -> OptionId {
        OptionId::new(match self {
            Verdict::Yes => YES,
            Verdict::No => NO,
        })
    }

    pub fn from_option(id: &OptionId) -> Option<Self> {
        match id.as_str() {
            YES => Some(Verdict::Yes),
            NO => Some(Verdict::No),
            _ => None,
        }
    }
}

/// One line of a corpus file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HistoricalDecision {
    pub id: String,
    #[serde(default)]
    pub title: String,
    pub body: String,
    pub outcome: Verdict,
    pub decided_at: DateTime<Utc>,
}

/// One line of a pairs file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Pair {
    pub id: String,
    pub ai_outcome: Verdict,
    pub dao_outcome: Verdict,
}

fn parse_lines<T: DeserializeOwned>(text: &str) -> Result<Vec<(usize, T)>, HarnessError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let value = serde_json::from_str(line).map_err(|e| HarnessError::Parse { line: i + 1, message: e.to_string() })?;
        out.push((i + 1, value));
    }
    Ok(out)
}

/// Parses newline-delimited records, ordered by `decided_at` then `id`.
pub fn parse_corpus(text: &str) -> Result<Vec<HistoricalDecision>, HarnessError> {
    let mut decisions = Vec::new();
    let mut seen = std::collections::BTreeMap::new();
    for (line, d) in parse_lines::<HistoricalDecision>(text)? {
        if d.id.trim().is_empty() {
            return Err(HarnessError::Parse { line, message: "id is empty".into() });
        }
        if d.body.trim().is_empty() {
            return Err(HarnessError::Parse { line, message: format!("decision {} has an empty body", d.id) });
        }
        if let Some(first) = seen.insert(d.id.clone(), line) {
            return Err(HarnessError::Parse { line, message: format!("id {} already used on line {first}", d.id) });
        }
        decisions.push(d);
    }
    if decisions.is_empty() {
        return Err(HarnessError::EmptyCorpus);
    }
    decisions.sort_by(|a, b| a.decided_at.cmp(&b.decided_at).then_with(|| a.id.cmp(&b.id)));
    Ok(decisions)
}

pub fn load_corpus(path: &Path) -> Result<Vec<HistoricalDecision>, HarnessError> {
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    parse_corpus(&text)
}

/// Downloads a corpus in the local file format. Best effort: no retries, no
/// schema translation.
pub fn fetch_corpus(url: &str) -> Result<Vec<HistoricalDecision>, HarnessError> {
    let response = ureq::get(url).call().map_err(|e| HarnessError::Io(format!("{url}: {e}")))?;
    let text = response
        .into_body()
        .read_to_string()
        .map_err(|e| HarnessError::Io(format!("{url}: {e}")))?;
    parse_corpus(&text)
}

pub fn parse_pairs(text: &str) -> Result<Vec<Pair>, HarnessError> {
    Ok(parse_lines(text)?.into_iter().map(|(_, p)| p).collect())
}

pub fn load_pairs(path: &Path) -> Result<Vec<Pair>, HarnessError> {
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    parse_pairs(&text)
}

pub fn pairs_to_jsonl(pairs: &[Pair]) -> String {
    pairs
        .iter()
        .map(|p| serde_json::to_string(p).expect("pairs serialize") + "\n")
        .collect()
}

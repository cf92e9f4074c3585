//! Append-only, SHA-256 hash-chained event ledger.
//!
//! One JSON object per line with fields in this order:
//! `seq, timestamp, event, payload, payload_digest, prev_hash, hash`.
//!
//! * `seq` starts at 0 and increases by one per record.
//! * `timestamp` is RFC 3339 UTC with microseconds, e.g. `2025-01-02T03:04:05.000000Z`.
//! * `payload_digest` = hex SHA-256 of the canonical JSON of `payload`.
//! * `prev_hash` is the previous record's `hash`, 64 zeros for the first record.
//! * `hash` = hex SHA-256 of `seq "\n" timestamp "\n" event "\n" payload_digest "\n" prev_hash`.

use std::fmt;

use chrono::{DateTime, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};

use crate::digest::{canonical_json, sha256_hex};

pub const GENESIS_HASH: &str = "0000000000000000000000000000000000000000000000000000000000000000";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LedgerEvent {
    VoteOpened,
    BallotSubmitted,
    VoteClosed,
    OutliersApplied,
    RecommendationIssued,
    DecisionRecorded,
    ReportEmitted,
}

impl LedgerEvent {
    pub fn as_str(self) -> &'static str {
        match self {
            LedgerEvent::VoteOpened => "vote_opened",
            LedgerEvent::BallotSubmitted => "ballot_submitted",
            LedgerEvent::VoteClosed => "vote_closed",
            LedgerEvent::OutliersApplied => "outliers_applied",
            LedgerEvent::RecommendationIssued => "recommendation_issued",
            LedgerEvent::DecisionRecorded => "decision_recorded",
            LedgerEvent::ReportEmitted => "report_emitted",
        }
    }
}

impl fmt::Display for LedgerEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerRecord {
    pub seq: u64,
    pub timestamp: String,
    pub event: LedgerEvent,
    pub payload: serde_json::Value,
    pub payload_digest: String,
    pub prev_hash: String,
    pub hash: String,
}

pub fn format_timestamp(at: DateTime<Utc>) -> String {
    at.to_rfc3339_opts(SecondsFormat::Micros, true)
}

fn record_hash(seq: u64, timestamp: &str, event: LedgerEvent, payload_digest: &str, prev_hash: &str) -> String {
    sha256_hex(format!("{seq}\n{timestamp}\n{event}\n{payload_digest}\n{prev_hash}"))
}

fn payload_digest(payload: &serde_json::Value) -> String {
    sha256_hex(canonical_json(payload))
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Ledger {
    records: Vec<LedgerRecord>,
}

impl Ledger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_records(records: Vec<LedgerRecord>) -> Self {
        Self { records }
    }

    pub fn append(&mut self, at: DateTime<Utc>, event: LedgerEvent, payload: serde_json::Value) -> &LedgerRecord {
        let seq = self.records.len() as u64;
        let prev_hash = self.records.last().map_or_else(|| GENESIS_HASH.to_owned(), |r| r.hash.clone());
        let timestamp = format_timestamp(at);
        let payload_digest = payload_digest(&payload);
        let hash = record_hash(seq, &timestamp, event, &payload_digest, &prev_hash);
        self.records.push(LedgerRecord { seq, timestamp, event, payload, payload_digest, prev_hash, hash });
        self.records.last().expect("just pushed")
    }

    pub fn records(&self) -> &[LedgerRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn verify(&self) -> Verification {
        verify_ledger(&self.records)
    }

    pub fn to_ndjson(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&String::from_utf8(canonical_json(r)).expect("JSON is UTF-8"));
            out.push('\n');
        }
        out
    }

    /// Parses newline-delimited records; blank lines are ignored.
    pub fn from_ndjson(text: &str) -> Result<Self, String> {
        let mut records = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            records.push(serde_json::from_str(line).map_err(|e| format!("ledger line {}: {e}", i + 1))?);
        }
        Ok(Self { records })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verification {
    pub valid: bool,
    pub records: usize,
    /// Index of the first record that does not verify.
    pub first_break: Option<usize>,
    pub reason: Option<String>,
}

/// Recomputes the chain; tampering is reported in the result, never as an error.
pub fn verify_ledger(records: &[LedgerRecord]) -> Verification {
    let mut prev = GENESIS_HASH;
    for (i, r) in records.iter().enumerate() {
        let problem = if r.seq != i as u64 {
            Some(format!("sequence number {} at position {i}", r.seq))
        } else if r.prev_hash != prev {
            Some("previous-hash link does not match".to_owned())
        } else if payload_digest(&r.payload) != r.payload_digest {
            Some("payload digest does not match payload".to_owned())
        } else if record_hash(r.seq, &r.timestamp, r.event, &r.payload_digest, &r.prev_hash) != r.hash {
            Some("record hash does not match contents".to_owned())
        } else {
            None
        };
        if let Some(reason) = problem {
            return Verification { valid: false, records: records.len(), first_break: Some(i), reason: Some(reason) };
        }
        prev = &r.hash;
    }
    Verification { valid: true, records: records.len(), first_break: None, reason: None }
}

#![allow(dead_code)]

use std::path::PathBuf;

use chrono::{DateTime, TimeZone, Utc};
use qoc_core::pipeline::{GovernanceConfig, Proposal};

pub const BALLOTS: [&str; 6] = ["01-alice", "02-bob", "03-carol", "04-dave", "05-erin", "06-mallory"];

pub fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

pub fn read(name: &str) -> String {
    std::fs::read_to_string(fixtures().join(name)).unwrap()
}

pub fn config(name: &str) -> GovernanceConfig {
    GovernanceConfig::from_toml_str(&read(name)).unwrap()
}

pub fn proposal() -> Proposal {
    serde_json::from_str(&read("proposal.json")).unwrap()
}

pub fn ballot(name: &str) -> String {
    read(&format!("ballots/{name}.json"))
}

pub fn t0() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2025, 3, 1, 12, 0, 0).unwrap()
}

pub mod machine;
pub mod oracle;

//! Prompt rendering and score extraction.
//!
//! Single-cell answers must end with a line `SCORE=<int>`; the parser takes
//! the last line of the form `score = n` or `score: n` (case-insensitive).
//! Batched answers carry `CELL <option>/<criterion>: <rationale>` and
//! `SCORE <option>/<criterion>=<int>` lines.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use regex::Regex;

use crate::engine::{Criterion, CriterionId, OptionEntry, OptionId};

use super::StakeholderGroup;

pub const TEMPLATE_VERSION: u32 = 1;

pub fn render_instructions(group: &StakeholderGroup, template_version: u32) -> String {
    format!(
        "You are an evaluator representing the stakeholder group \"{name}\" in a DAO governance vote.\n\
         Perspective of this group: {perspective}\n\
         Judge the proposal strictly from this perspective and stay consistent across criteria.\n\
         [template v{template_version}]",
        name = group.name.trim(),
        perspective = group.perspective.trim(),
    )
}

pub fn render_cell_prompt(instructions: &str, proposal: &str, option: &OptionEntry, criterion: &Criterion) -> String {
    let description = if criterion.description.trim().is_empty() {
        String::new()
    } else {
        format!("Criterion description: {}\n", criterion.description.trim())
    };
    format!(
        "{instructions}\n\n\
         Proposal:\n{proposal}\n\n\
         Option: {ol} ({oi})\n\
         Criterion: {cl} ({ci})\n\
         {description}\n\
         Rate from 0 to 100 how strongly choosing this option supports the criterion for this proposal \
         (0 = no support, 100 = maximal support).\n\
         Answer with one sentence of rationale, then a final line of the form SCORE=<integer 0-100>.",
        proposal = proposal.trim(),
        ol = option.label,
        oi = option.id,
        cl = criterion.label,
        ci = criterion.id,
    )
}

pub fn cell_key(option: &OptionId, criterion: &CriterionId) -> String {
    format!("{option}/{criterion}")
}

pub fn render_batched_prompt(
    instructions: &str,
    proposal: &str,
    options: &[OptionEntry],
    criteria: &[Criterion],
) -> String {
    let mut cells = String::new();
    for o in options {
        for c in criteria {
            cells.push_str(&format!(
                "CELL {}: option \"{}\" against criterion \"{}\"{}\n",
                cell_key(&o.id, &c.id),
                o.label,
                c.label,
                if c.description.trim().is_empty() { String::new() } else { format!(" ({})", c.description.trim()) }
            ));
        }
    }
    format!(
        "{instructions}\n\n\
         Proposal:\n{proposal}\n\n\
         Rate every cell below from 0 to 100 by how strongly choosing the option supports the criterion \
         for this proposal (0 = no support, 100 = maximal support).\n\
         {cells}\n\
         For each cell answer with a line `CELL <option>/<criterion>: <one-sentence rationale>` \
         followed by a line `SCORE <option>/<criterion>=<integer 0-100>`.",
        proposal = proposal.trim(),
    )
}

/// A score read from a response, before and after clamping to [0, 100].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedScore {
    pub score: u8,
    pub raw: i64,
    pub rationale: String,
}

impl ParsedScore {
    pub fn clamped(&self) -> bool {
        i64::from(self.score) != self.raw
    }
}

fn parse_int_saturating(digits: &str) -> i64 {
    digits.parse::<i64>().unwrap_or(if digits.starts_with('-') { i64::MIN } else { i64::MAX })
}

fn clamp(raw: i64) -> u8 {
    raw.clamp(0, 100) as u8
}

fn score_line() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)^\s*\**\s*score\s*\**\s*[=:]\s*([+-]?\d+)\s*\**\s*$").unwrap())
}

fn batched_score_line() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)^\s*score\s+([^\s=:/]+)/([^\s=:]+)\s*[=:]\s*([+-]?\d+)\s*$").unwrap())
}

fn batched_cell_line() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^\s*CELL\s+([^\s:/]+)/([^\s:]+)\s*:\s*(.*)$").unwrap())
}

/// Reads the last score line of a single-cell answer.
pub fn parse_cell_response(text: &str) -> Option<ParsedScore> {
    let lines: Vec<&str> = text.lines().collect();
    let idx = lines.iter().rposition(|l| score_line().is_match(l))?;
    let caps = score_line().captures(lines[idx])?;
    let raw = parse_int_saturating(&caps[1]);
    let rationale = lines
        .iter()
        .enumerate()
        .filter(|(i, l)| *i != idx && !score_line().is_match(l))
        .map(|(_, l)| l.trim())
        .filter(|l| !l.is_empty())
        .collect::<Vec<_>>()
        .join(" ");
    Some(ParsedScore { score: clamp(raw), raw, rationale })
}

/// Reads every `SCORE o/c=` line of a batched answer; later lines win.
pub fn parse_batched_response(text: &str) -> BTreeMap<(OptionId, CriterionId), ParsedScore> {
    let mut rationales: BTreeMap<(OptionId, CriterionId), String> = BTreeMap::new();
    let mut out = BTreeMap::new();
    for line in text.lines() {
        if let Some(c) = batched_cell_line().captures(line) {
            rationales.insert((OptionId::new(&c[1]), CriterionId::new(&c[2])), c[3].trim().to_owned());
        } else if let Some(c) = batched_score_line().captures(line) {
            let key = (OptionId::new(&c[1]), CriterionId::new(&c[2]));
            let raw = parse_int_saturating(&c[3]);
            let rationale = rationales.get(&key).cloned().unwrap_or_default();
            out.insert(key, ParsedScore { score: clamp(raw), raw, rationale });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn last_score_line_wins() {
        let p = parse_cell_response("Thinking: SCORE=3 is too low.\nSCORE=10\nGood fit overall.\nSCORE=72").unwrap();
        assert_eq!(p.score, 72);
        assert_eq!(p.rationale, "Thinking: SCORE=3 is too low. Good fit overall.");
        assert!(!p.clamped());
    }

    #[test]
    fn out_of_range_scores_are_clamped() {
        let p = parse_cell_response("score: 140").unwrap();
        assert_eq!((p.score, p.raw), (100, 140));
        assert!(p.clamped());
        assert_eq!(parse_cell_response("SCORE = -5").unwrap().score, 0);
        assert_eq!(parse_cell_response("SCORE=99999999999999999999999").unwrap().score, 100);
    }

    #[test]
    fn prose_without_score_block() {
        assert_eq!(parse_cell_response("I think this proposal is quite good, maybe 80 out of 100."), None);
        assert_eq!(parse_cell_response(""), None);
    }

    #[test]
    fn batched_lines() {
        let text = "CELL yes/roi: Strong return.\nSCORE yes/roi=81\nCELL no/roi: Weak.\nSCORE no/roi=120\n";
        let parsed = parse_batched_response(text);
        let yes = &parsed[&(OptionId::new("yes"), CriterionId::new("roi"))];
        assert_eq!((yes.score, yes.rationale.as_str()), (81, "Strong return."));
        assert_eq!(parsed[&(OptionId::new("no"), CriterionId::new("roi"))].score, 100);
    }
}

use std::collections::BTreeSet;

use super::types::{normalize_label, ContributionSet, Criterion, CriterionId, OptionEntry, OptionId, OptionSet};
use super::EngineError;

fn slug(normalized: &str) -> String {
    normalized.replace(' ', "-")
}

/// Merges every contributor's options and criteria into one set each.
///
/// Labels merge when their normalized forms match exactly; the first spelling
/// seen is kept. Ids are derived from the normalized label, so consolidating an
/// already consolidated set is a no-op.
pub fn consolidate(contributions: &[ContributionSet]) -> Result<(OptionSet, Vec<Criterion>), EngineError> {
    if contributions.is_empty() {
        return Err(EngineError::NoContributions);
    }

    let mut seen = BTreeSet::new();
    let mut options = Vec::new();
    for label in contributions.iter().flat_map(|c| &c.options) {
        let norm = normalize_label(label);
        if norm.is_empty() {
            continue;
        }
        if seen.insert(norm.clone()) {
            options.push(OptionEntry { id: OptionId::new(slug(&norm)), label: label.trim().to_owned() });
        }
    }

    let mut seen = BTreeSet::new();
    let mut criteria = Vec::new();
    for label in contributions.iter().flat_map(|c| &c.criteria) {
        let norm = normalize_label(label);
        if norm.is_empty() {
            continue;
        }
        if seen.insert(norm.clone()) {
            criteria.push(Criterion {
                id: CriterionId::new(slug(&norm)),
                label: label.trim().to_owned(),
                description: String::new(),
            });
        }
    }
    if criteria.is_empty() {
        return Err(EngineError::Invalid("no criteria left after consolidation".into()));
    }

    Ok((OptionSet::new(options)?, criteria))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{VoterId, WeightVector};

    fn contrib(voter: &str, options: &[&str], criteria: &[&str]) -> ContributionSet {
        let ids: Vec<_> = if criteria.is_empty() { vec!["x"] } else { criteria.to_vec() };
        ContributionSet {
            voter: VoterId::new(voter),
            options: options.iter().map(|s| s.to_string()).collect(),
            criteria: criteria.iter().map(|s| s.to_string()).collect(),
            weight_vector: WeightVector::from_pairs(ids.iter().map(|c| (normalize_label(c), 10.0))).unwrap(),
        }
    }

    fn labels(set: &OptionSet) -> Vec<&str> {
        set.entries().iter().map(|o| o.label.as_str()).collect()
    }

    #[test]
    fn single_contribution_is_unchanged() {
        let (o, c) = consolidate(&[contrib("u1", &["Fund it", "Reject"], &["Cost", "Risk"])]).unwrap();
        assert_eq!(labels(&o), ["Fund it", "Reject"]);
        assert_eq!(c.iter().map(|c| c.label.as_str()).collect::<Vec<_>>(), ["Cost", "Risk"]);
    }

    #[test]
    fn case_folded_union_keeps_first_appearance() {
        let (o, _) = consolidate(&[contrib("u1", &["A", "B"], &["k"]), contrib("u2", &["b", "C"], &["k"])]).unwrap();
        assert_eq!(labels(&o), ["A", "B", "C"]);
    }

    #[test]
    fn whitespace_is_collapsed() {
        let (_, c) = consolidate(&[
            contrib("u1", &["x", "y"], &["Technical  feasibility"]),
            contrib("u2", &["x", "y"], &[" technical feasibility "]),
        ])
        .unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].id.as_str(), "technical-feasibility");
    }

    #[test]
    fn empty_criteria_rejected() {
        let err = consolidate(&[contrib("u1", &["x", "y"], &[]), contrib("u2", &["z"], &["  "])]).unwrap_err();
        assert!(matches!(err, EngineError::Invalid(_)));
    }

    #[test]
    fn empty_input_rejected() {
        assert_eq!(consolidate(&[]).unwrap_err(), EngineError::NoContributions);
    }
}

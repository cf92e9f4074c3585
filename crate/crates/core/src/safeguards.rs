//! Outlier detection over ballots and exclusion sets for re-aggregation.
//!
//! Every evaluation is compared with the mean of its cell using the
//! population standard deviation (divide by n, not n - 1). By default the
//! voter's own value is part of the cell. Note that a single value then never
//! lies more than sqrt(n - 1) standard deviations from the mean, so k = 2
//! cannot flag anything with five or fewer ballots.
//! [`ReferenceStatistics::LeaveOneOut`] compares each value with the other
//! voters' values instead; it catches lone manipulators in small votes but
//! also flags honest disagreement more often.
//!
//! Detection runs once against the original statistics. The comparison is
//! done on integer moments, so adding a constant to a cell never changes the
//! flag set.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::engine::{Ballot, CellRef, Criterion, CriterionId, EngineError, OptionId, OptionSet, VoterId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Granularity {
    /// Exclude only the flagged evaluations.
    #[default]
    PerCell,
    /// Exclude every evaluation of a voter with at least one flag.
    WholeBallot,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReferenceStatistics {
    /// Mean and deviation of all values in the cell, the voter's own included.
    #[default]
    Inclusive,
    /// Mean and deviation of the other voters' values in the cell.
    LeaveOneOut,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SafeguardConfig {
    pub threshold_k: f64,
    pub min_ballots: usize,
    pub granularity: Granularity,
    pub statistics: ReferenceStatistics,
}

impl Default for SafeguardConfig {
    fn default() -> Self {
        Self {
            threshold_k: 2.0,
            min_ballots: 3,
            granularity: Granularity::PerCell,
            statistics: ReferenceStatistics::Inclusive,
        }
    }
}

impl SafeguardConfig {
    pub fn validate(&self) -> Result<(), EngineError> {
        if self.threshold_k.is_nan() || self.threshold_k <= 0.0 {
            return Err(EngineError::Invalid(format!(
                "safeguard threshold_k must be > 0, got {}",
                self.threshold_k
            )));
        }
        if self.min_ballots < 3 {
            return Err(EngineError::Invalid(format!(
                "safeguard min_ballots must be >= 3, got {}",
                self.min_ballots
            )));
        }
        Ok(())
    }
}

/// One flagged evaluation and the statistics it was judged against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutlierFlag {
    pub voter: VoterId,
    pub option: OptionId,
    pub criterion: CriterionId,
    pub value: u8,
    pub cell_mean: f64,
    pub cell_stddev: f64,
    pub z_score: f64,
    pub threshold_k: f64,
}

impl OutlierFlag {
    pub fn cell(&self) -> CellRef {
        CellRef { voter: self.voter.clone(), option: self.option.clone(), criterion: self.criterion.clone() }
    }
}

/// Integer moments of a set of scores.
#[derive(Debug, Clone, Copy)]
struct Moments {
    n: i128,
    sum: i128,
    sum_sq: i128,
}

impl Moments {
    fn of(values: &[u8]) -> Self {
        values.iter().fold(Self { n: 0, sum: 0, sum_sq: 0 }, |m, &v| {
            let v = i128::from(v);
            Self { n: m.n + 1, sum: m.sum + v, sum_sq: m.sum_sq + v * v }
        })
    }

    fn without(self, v: u8) -> Self {
        let v = i128::from(v);
        Self { n: self.n - 1, sum: self.sum - v, sum_sq: self.sum_sq - v * v }
    }

    /// n² · variance, exact.
    fn scaled_variance(self) -> i128 {
        self.n * self.sum_sq - self.sum * self.sum
    }
}

/// Flags evaluations deviating from their cell reference by more than k·σ.
///
/// Returns nothing when fewer than `min_ballots` ballots exist. A value whose
/// reference population has zero spread is never flagged. The output is
/// sorted by (option, criterion, voter).
pub fn detect_outliers(ballots: &[Ballot], config: &SafeguardConfig) -> Result<Vec<OutlierFlag>, EngineError> {
    config.validate()?;
    let Some(first) = ballots.first() else {
        return Ok(Vec::new());
    };
    let grid_options = first.evaluations.options();
    let grid_criteria = first.evaluations.criteria();
    for b in ballots {
        if b.evaluations.options() != grid_options || b.evaluations.criteria() != grid_criteria {
            return Err(EngineError::GridMismatch(format!(
                "ballot of {} does not share the grid of {}",
                b.voter, first.voter
            )));
        }
    }
    if ballots.len() < config.min_ballots {
        return Ok(Vec::new());
    }

    let k_sq = config.threshold_k * config.threshold_k;
    let mut flags = Vec::new();
    for (option, criterion, _) in first.evaluations.cells() {
        let values: Vec<u8> =
            ballots.iter().map(|b| b.evaluations.get(option, criterion).unwrap_or_default()).collect();
        let cell = Moments::of(&values);
        if cell.scaled_variance() == 0 {
            continue;
        }
        for (b, &v) in ballots.iter().zip(&values) {
            let reference = match config.statistics {
                ReferenceStatistics::LeaveOneOut => cell.without(v),
                ReferenceStatistics::Inclusive => cell,
            };
            let spread = reference.scaled_variance();
            if spread == 0 {
                continue;
            }
            // |v - mean| > k·σ  ⇔  (n·v - Σ)² > k² · (n·Σv² - (Σ)²)
            let deviation = reference.n * i128::from(v) - reference.sum;
            if (deviation * deviation) as f64 > k_sq * spread as f64 {
                let n = reference.n as f64;
                let root = (spread as f64).sqrt();
                flags.push(OutlierFlag {
                    voter: b.voter.clone(),
                    option: option.clone(),
                    criterion: criterion.clone(),
                    value: v,
                    cell_mean: reference.sum as f64 / n,
                    cell_stddev: root / n,
                    z_score: deviation.unsigned_abs() as f64 / root,
                    threshold_k: config.threshold_k,
                });
            }
        }
    }
    flags.sort_by(|a, b| {
        (&a.option, &a.criterion, &a.voter).cmp(&(&b.option, &b.criterion, &b.voter))
    });
    Ok(flags)
}

/// Turns flags into the set of evaluations to drop from aggregation.
pub fn apply_exclusions(
    flags: &[OutlierFlag],
    config: &SafeguardConfig,
    options: &OptionSet,
    criteria: &[Criterion],
) -> BTreeSet<CellRef> {
    match config.granularity {
        Granularity::PerCell => flags.iter().map(OutlierFlag::cell).collect(),
        Granularity::WholeBallot => {
            let voters: BTreeSet<&VoterId> = flags.iter().map(|f| &f.voter).collect();
            voters
                .into_iter()
                .flat_map(|v| {
                    options.ids().flat_map(move |o| {
                        criteria.iter().map(move |c| CellRef {
                            voter: v.clone(),
                            option: o.clone(),
                            criterion: c.id.clone(),
                        })
                    })
                })
                .collect()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::EvaluationMatrix;
    use chrono::{TimeZone, Utc};

    fn ballots(values: &[u8]) -> Vec<Ballot> {
        values
            .iter()
            .enumerate()
            .map(|(i, &v)| Ballot {
                voter: VoterId::new(format!("v{i}")),
                voting_power: 1.0,
                weight_vector: None,
                evaluations: EvaluationMatrix::from_rows([("yes", [("c", v)]), ("no", [("c", 50)])]).unwrap(),
                submitted_at: Utc.timestamp_opt(0, 0).unwrap(),
            })
            .collect()
    }

    #[test]
    fn inclusive_z_is_capped_at_sqrt_n_minus_one() {
        // (10, 12, 11, 13, 95): mean 28.2, σ = sqrt(1116.56), z = 66.8 / σ < 2
        let flags = detect_outliers(&ballots(&[10, 12, 11, 13, 95]), &SafeguardConfig::default()).unwrap();
        assert!(flags.is_empty());
        let lower = SafeguardConfig { threshold_k: 1.99, ..Default::default() };
        let flags = detect_outliers(&ballots(&[10, 12, 11, 13, 95]), &lower).unwrap();
        assert_eq!(flags.len(), 1);
        let f = &flags[0];
        assert_eq!((f.voter.as_str(), f.value), ("v4", 95));
        assert!((f.cell_mean - 28.2).abs() < 1e-12);
        assert!((f.cell_stddev - 1116.56f64.sqrt()).abs() < 1e-9);
        assert!((f.z_score - 1.999_104_191_443_088_5).abs() < 1e-12);
        assert!(f.z_score < 4f64.sqrt());
    }

    #[test]
    fn inclusive_flags_with_six_ballots() {
        let flags = detect_outliers(&ballots(&[10, 12, 11, 13, 12, 95]), &SafeguardConfig::default()).unwrap();
        assert_eq!(flags.iter().map(|f| f.value).collect::<Vec<_>>(), [95]);
    }

    #[test]
    fn leave_one_out_flags_the_lone_manipulator() {
        let config = SafeguardConfig { statistics: ReferenceStatistics::LeaveOneOut, ..Default::default() };
        let flags = detect_outliers(&ballots(&[10, 12, 11, 13, 95]), &config).unwrap();
        assert_eq!(flags.len(), 1);
        let f = &flags[0];
        assert_eq!((f.voter.as_str(), f.value), ("v4", 95));
        // reference = (10, 12, 11, 13): mean 11.5, σ = sqrt(1.25)
        assert!((f.cell_mean - 11.5).abs() < 1e-12);
        assert!((f.cell_stddev - 1.25f64.sqrt()).abs() < 1e-12);
        assert!((f.z_score - 83.5 / 1.25f64.sqrt()).abs() < 1e-9);
        assert!(((f64::from(f.value) - f.cell_mean).abs() - f.z_score * f.cell_stddev).abs() < 1e-9);
    }

    #[test]
    fn zero_variance_cell() {
        for k in [0.01, 1.0, 2.0, 100.0] {
            let config = SafeguardConfig { threshold_k: k, ..Default::default() };
            assert!(detect_outliers(&ballots(&[50, 50, 50]), &config).unwrap().is_empty());
        }
    }

    #[test]
    fn disabled_below_quorum() {
        assert!(detect_outliers(&ballots(&[0, 100]), &SafeguardConfig::default()).unwrap().is_empty());
    }

    #[test]
    fn invalid_config() {
        let bad = SafeguardConfig { min_ballots: 2, ..Default::default() };
        assert!(detect_outliers(&ballots(&[1, 2, 3]), &bad).is_err());
        let bad = SafeguardConfig { threshold_k: 0.0, ..Default::default() };
        assert!(detect_outliers(&ballots(&[1, 2, 3]), &bad).is_err());
    }

    #[test]
    fn grid_mismatch() {
        let mut b = ballots(&[1, 2, 3]);
        b[2].evaluations = EvaluationMatrix::from_rows([("yes", [("d", 1)]), ("no", [("d", 1)])]).unwrap();
        assert!(matches!(detect_outliers(&b, &SafeguardConfig::default()), Err(EngineError::GridMismatch(_))));
    }

    fn flag(voter: &str, option: &str, criterion: &str) -> OutlierFlag {
        OutlierFlag {
            voter: VoterId::new(voter),
            option: OptionId::new(option),
            criterion: CriterionId::new(criterion),
            value: 0,
            cell_mean: 0.0,
            cell_stddev: 0.0,
            z_score: 0.0,
            threshold_k: 2.0,
        }
    }

    #[test]
    fn exclusion_granularity() {
        let options = OptionSet::yes_no();
        let criteria: Vec<_> = ["a", "b", "c"].iter().map(|c| Criterion::new(*c, *c, "")).collect();
        let per_cell = SafeguardConfig::default();
        assert!(apply_exclusions(&[], &per_cell, &options, &criteria).is_empty());

        let flags = [flag("v1", "yes", "b")];
        let ex = apply_exclusions(&flags, &per_cell, &options, &criteria);
        assert_eq!(ex, [CellRef::new("v1", "yes", "b")].into());

        let whole = SafeguardConfig { granularity: Granularity::WholeBallot, ..Default::default() };
        let ex = apply_exclusions(&flags, &whole, &options, &criteria);
        assert_eq!(ex.len(), 6);
        assert!(ex.iter().all(|c| c.voter.as_str() == "v1"));
    }
}

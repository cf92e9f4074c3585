use std::collections::{BTreeMap, BTreeSet};

use super::scoring::scores_for;
use super::types::{AggregateResult, Ballot, CellRef, Criterion, CriterionId, OptionId, OptionSet, VoterId, WeightVector};
use super::EngineError;

/// One contributor's weight vector and voting power.
#[derive(Debug, Clone, Copy)]
pub struct WeightSource<'a> {
    pub voter: &'a VoterId,
    pub power: f64,
    pub weights: &'a WeightVector,
}

fn sorted_unique<T>(items: &[T], voter: impl Fn(&T) -> &VoterId) -> Result<Vec<&T>, EngineError> {
    let mut sorted: Vec<&T> = items.iter().collect();
    sorted.sort_by(|a, b| voter(a).cmp(voter(b)));
    for pair in sorted.windows(2) {
        if voter(pair[0]) == voter(pair[1]) {
            return Err(EngineError::DuplicateVoter(voter(pair[0]).clone()));
        }
    }
    Ok(sorted)
}

/// Mean weight per criterion, optionally weighted by voting power.
///
/// Unweighted: w̄_j = (1/r) Σ_i w_ij. Weighted: Σ_i p_i w_ij / Σ_i p_i.
/// Contributors are summed in voter order so the result does not depend on
/// input order. The result is not re-normalized.
pub fn aggregate_weights(
    sources: &[WeightSource<'_>],
    criteria: &[Criterion],
    power_weighted: bool,
) -> Result<BTreeMap<CriterionId, f64>, EngineError> {
    if sources.is_empty() {
        return Err(EngineError::Invalid("no weight vectors to aggregate".into()));
    }
    let sources = sorted_unique(sources, |s| s.voter)?;
    for s in &sources {
        s.weights.check_covers(criteria)?;
    }
    let total_power: f64 = sources.iter().map(|s| s.power).sum();
    if power_weighted && total_power <= 0.0 {
        return Err(EngineError::ZeroTotalPower);
    }

    let mut out = BTreeMap::new();
    for c in criteria {
        let mean = if power_weighted {
            sources.iter().map(|s| s.power * s.weights.get(&c.id).unwrap_or(0.0)).sum::<f64>() / total_power
        } else {
            sources.iter().map(|s| s.weights.get(&c.id).unwrap_or(0.0)).sum::<f64>() / sources.len() as f64
        };
        out.insert(c.id.clone(), mean);
    }
    Ok(out)
}

/// Per-cell mean evaluation over all non-excluded ballots.
///
/// All ballots must share the first ballot's grid. The mean of a cell is
/// clamped to the range of its surviving values so rounding can never push it
/// outside [0, 100].
pub fn aggregate_evaluations(
    ballots: &[Ballot],
    power_weighted: bool,
    exclusions: &BTreeSet<CellRef>,
) -> Result<BTreeMap<OptionId, BTreeMap<CriterionId, f64>>, EngineError> {
    let first = ballots.first().ok_or_else(|| EngineError::Invalid("no ballots to aggregate".into()))?;
    let ballots = sorted_unique(ballots, |b| &b.voter)?;
    for b in &ballots {
        b.check()?;
        if b.evaluations.options() != first.evaluations.options()
            || b.evaluations.criteria() != first.evaluations.criteria()
        {
            return Err(EngineError::GridMismatch(format!(
                "ballot of {} does not match the grid of {}",
                b.voter, first.voter
            )));
        }
    }

    let mut out: BTreeMap<OptionId, BTreeMap<CriterionId, f64>> = BTreeMap::new();
    for (option, criterion, _) in first.evaluations.cells() {
        let mut numerator = 0.0;
        let mut denominator = 0.0;
        let mut lo = u8::MAX;
        let mut hi = u8::MIN;
        let mut survivors = 0usize;
        for b in &ballots {
            let key = CellRef { voter: b.voter.clone(), option: option.clone(), criterion: criterion.clone() };
            if exclusions.contains(&key) {
                continue;
            }
            let v = b.evaluations.get(option, criterion).unwrap_or_default();
            let weight = if power_weighted { b.voting_power } else { 1.0 };
            numerator += weight * f64::from(v);
            denominator += weight;
            lo = lo.min(v);
            hi = hi.max(v);
            survivors += 1;
        }
        if survivors == 0 {
            return Err(EngineError::EmptyCell { option: option.clone(), criterion: criterion.clone() });
        }
        if denominator <= 0.0 {
            return Err(EngineError::ZeroTotalPower);
        }
        let mean = (numerator / denominator).clamp(f64::from(lo), f64::from(hi));
        out.entry(option.clone()).or_default().insert(criterion.clone(), mean);
    }
    Ok(out)
}

/// Where the criterion weights of an aggregation come from.
#[derive(Debug, Clone, Copy)]
pub enum WeightSourceMode<'a> {
    /// Fixed weights for every ballot (DAO votes).
    Global(&'a WeightVector),
    /// Each ballot carries its own weight vector.
    PerBallot,
}

pub struct AggregateInput<'a> {
    pub options: &'a OptionSet,
    pub criteria: &'a [Criterion],
    pub ballots: &'a [Ballot],
    pub weights: WeightSourceMode<'a>,
    pub power_weighted: bool,
    pub exclusions: &'a BTreeSet<CellRef>,
}

/// Full aggregation: weights, evaluations and option scores.
pub fn aggregate(input: &AggregateInput<'_>) -> Result<AggregateResult, EngineError> {
    for b in input.ballots {
        b.evaluations.check_grid(input.options, input.criteria)?;
    }
    let mean_weights = match input.weights {
        WeightSourceMode::Global(w) => {
            w.check_covers(input.criteria)?;
            w.as_map().clone()
        }
        WeightSourceMode::PerBallot => {
            let sources = input
                .ballots
                .iter()
                .map(|b| {
                    let weights = b.weight_vector.as_ref().ok_or_else(|| {
                        EngineError::Invalid(format!("ballot of {} carries no weight vector", b.voter))
                    })?;
                    Ok(WeightSource { voter: &b.voter, power: b.voting_power, weights })
                })
                .collect::<Result<Vec<_>, EngineError>>()?;
            aggregate_weights(&sources, input.criteria, input.power_weighted)?
        }
    };
    let mean_evaluations = aggregate_evaluations(input.ballots, input.power_weighted, input.exclusions)?;
    let option_scores = scores_for(&WeightVector::from_map_unchecked(mean_weights.clone()), &mean_evaluations)?;
    Ok(AggregateResult {
        mean_weights,
        mean_evaluations,
        option_scores,
        ballot_count: input.ballots.len(),
        excluded_evaluations: input.exclusions.clone(),
    })
}

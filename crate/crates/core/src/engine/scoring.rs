use std::collections::{BTreeMap, BTreeSet};

use super::types::{CriterionId, CriterionMismatch, OptionId, Outcome, QuestionMode, WeightVector, NO, TOLERANCE};
use super::EngineError;

/// Weighted sum S = Σ_j w_j · e_j over one option's row.
///
/// The sum runs in criterion-id order, so the result does not depend on how
/// the caller built either map.
pub fn score<V>(weights: &WeightVector, row: &BTreeMap<CriterionId, V>) -> Result<f64, EngineError>
where
    V: Copy + Into<f64>,
{
    let expected: BTreeSet<&CriterionId> = weights.as_map().keys().collect();
    let actual: BTreeSet<&CriterionId> = row.keys().collect();
    CriterionMismatch::between(&expected, &actual).into_result()?;
    Ok(weights.iter().map(|(c, w)| w * row[c].into()).sum())
}

/// Scores every option row of an aggregated evaluation table.
pub fn scores_for(
    weights: &WeightVector,
    evaluations: &BTreeMap<OptionId, BTreeMap<CriterionId, f64>>,
) -> Result<BTreeMap<OptionId, f64>, EngineError> {
    evaluations.iter().map(|(o, row)| Ok((o.clone(), score(weights, row)?))).collect()
}

fn nearly_equal(a: f64, b: f64) -> bool {
    (a - b).abs() <= TOLERANCE * a.abs().max(b.abs())
}

/// Picks the option with the highest score.
///
/// `scores` must be in option-set order. Scores within the relative tolerance
/// of the maximum count as tied. Ties resolve to `no` for DAO questions and to
/// the earliest tied option otherwise; either way `tie_broken` is set.
pub fn decide(scores: &[(OptionId, f64)], mode: QuestionMode) -> Result<Outcome, EngineError> {
    if scores.len() < 2 {
        return Err(EngineError::TooFewOptions(scores.len()));
    }
    if let Some((o, s)) = scores.iter().find(|(_, s)| !s.is_finite()) {
        return Err(EngineError::Invalid(format!("score of option {o} is not finite: {s}")));
    }
    let max = scores.iter().map(|(_, s)| *s).fold(f64::NEG_INFINITY, f64::max);
    let tied: Vec<&OptionId> = scores.iter().filter(|(_, s)| nearly_equal(*s, max)).map(|(o, _)| o).collect();
    if tied.len() == 1 {
        return Ok(Outcome { winner: tied[0].clone(), tie_broken: false });
    }
    let winner = match mode {
        QuestionMode::DaoBinary => {
            let no = OptionId::new(NO);
            if !scores.iter().any(|(o, _)| *o == no) {
                return Err(EngineError::Invalid("DAO binary scores lack the `no` option".into()));
            }
            no
        }
        QuestionMode::General => tied[0].clone(),
    };
    Ok(Outcome { winner, tie_broken: true })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn w(pairs: &[(&str, f64)]) -> WeightVector {
        WeightVector::from_pairs(pairs.iter().map(|(k, v)| (*k, *v))).unwrap()
    }

    fn row(pairs: &[(&str, u8)]) -> BTreeMap<CriterionId, u8> {
        pairs.iter().map(|(k, v)| (CriterionId::new(*k), *v)).collect()
    }

    #[test]
    fn maximal_support() {
        let s = score(&w(&[("a", 50.0), ("b", 30.0), ("c", 20.0)]), &row(&[("a", 100), ("b", 100), ("c", 100)]));
        assert_eq!(s.unwrap(), 10000.0);
    }

    #[test]
    fn zero_support() {
        let s = score(&w(&[("a", 13.0), ("b", 87.0)]), &row(&[("a", 0), ("b", 0)]));
        assert_eq!(s.unwrap(), 0.0);
    }

    #[test]
    fn hand_computed_sum() {
        // 40·80 + 60·50
        let s = score(&w(&[("a", 40.0), ("b", 60.0)]), &row(&[("a", 80), ("b", 50)]));
        assert_eq!(s.unwrap(), 6200.0);
    }

    #[test]
    fn mismatch_names_missing_and_extra() {
        let err = score(&w(&[("a", 40.0), ("b", 60.0)]), &row(&[("a", 80), ("z", 50)])).unwrap_err();
        assert_eq!(
            err,
            EngineError::CriterionMismatch { missing: vec![CriterionId::new("b")], extra: vec![CriterionId::new("z")] }
        );
    }

    fn yn(yes: f64, no: f64) -> Vec<(OptionId, f64)> {
        vec![(OptionId::new("yes"), yes), (OptionId::new("no"), no)]
    }

    #[test]
    fn strict_argmax() {
        let o = decide(&yn(6200.0, 4000.0), QuestionMode::DaoBinary).unwrap();
        assert_eq!(o, Outcome { winner: OptionId::new("yes"), tie_broken: false });
    }

    #[test]
    fn dao_tie_goes_to_no() {
        let weights = w(&[("a", 40.0), ("b", 60.0)]);
        let yes = score(&weights, &row(&[("a", 80), ("b", 50)])).unwrap();
        let no = score(&weights, &row(&[("a", 20), ("b", 90)])).unwrap();
        assert_eq!((yes, no), (6200.0, 6200.0));
        let o = decide(&yn(yes, no), QuestionMode::DaoBinary).unwrap();
        assert_eq!(o, Outcome { winner: OptionId::new("no"), tie_broken: true });
    }

    #[test]
    fn general_tie_goes_to_first() {
        let scores = vec![(OptionId::new("b"), 1.0), (OptionId::new("a"), 5.0), (OptionId::new("c"), 5.0)];
        let o = decide(&scores, QuestionMode::General).unwrap();
        assert_eq!(o, Outcome { winner: OptionId::new("a"), tie_broken: true });
    }

    #[test]
    fn single_option_rejected() {
        assert_eq!(
            decide(&[(OptionId::new("yes"), 1.0)], QuestionMode::DaoBinary),
            Err(EngineError::TooFewOptions(1))
        );
        assert_eq!(decide(&[], QuestionMode::General), Err(EngineError::TooFewOptions(0)));
    }
}

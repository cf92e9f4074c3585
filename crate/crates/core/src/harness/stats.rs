use serde::{Deserialize, Serialize};

use super::{HarnessError, Pair, Verdict};

/// AI verdict (rows) against DAO verdict (columns).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContingencyTable {
    pub yy: u64,
    /// AI yes, DAO no: false positives.
    pub yn: u64,
    /// AI no, DAO yes: false negatives.
    pub ny: u64,
    pub nn: u64,
}

impl ContingencyTable {
    pub fn new(yy: u64, yn: u64, ny: u64, nn: u64) -> Self {
        Self { yy, yn, ny, nn }
    }

    pub fn total(&self) -> u64 {
        self.yy + self.yn + self.ny + self.nn
    }

    pub fn agreeing(&self) -> u64 {
        self.yy + self.nn
    }

    /// (yy + nn) / total; 0 for an empty table.
    pub fn agreement_rate(&self) -> f64 {
        match self.total() {
            0 => 0.0,
            t => self.agreeing() as f64 / t as f64,
        }
    }

    pub fn disagreement_rate(&self) -> f64 {
        1.0 - self.agreement_rate()
    }

    pub fn swapped(&self) -> Self {
        Self { yn: self.ny, ny: self.yn, ..*self }
    }

    pub fn record(&mut self, ai: Verdict, dao: Verdict) {
        match (ai, dao) {
            (Verdict::Yes, Verdict::Yes) => self.yy += 1,
            (Verdict::Yes, Verdict::No) => self.yn += 1,
            (Verdict::No, Verdict::Yes) => self.ny += 1,
            (Verdict::No, Verdict::No) => self.nn += 1,
        }
    }
}

pub fn contingency(pairs: &[Pair]) -> Result<ContingencyTable, HarnessError> {
    if pairs.is_empty() {
        return Err(HarnessError::NoPairs);
    }
    let mut t = ContingencyTable::default();
    for p in pairs {
        t.record(p.ai_outcome, p.dao_outcome);
    }
    Ok(t)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McNemarResult {
    pub chi_square: f64,
    pub p_value: f64,
    pub discordant_b: u64,
    pub discordant_d: u64,
}

/// Upper tail of the χ² distribution with one degree of freedom.
pub fn chi_square_1df_p(x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    libm::erfc((x / 2.0).sqrt()).clamp(0.0, 1.0)
}

/// Uncorrected McNemar test on the discordant cells.
pub fn mcnemar(table: &ContingencyTable) -> McNemarResult {
    let (b, d) = (table.yn, table.ny);
    let chi_square = if b + d == 0 {
        0.0
    } else {
        let diff = b.abs_diff(d) as f64;
        diff * diff / (b + d) as f64
    };
    McNemarResult { chi_square, p_value: chi_square_1df_p(chi_square), discordant_b: b, discordant_d: d }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostResult {
    pub fn_weight: f64,
    pub fp_weight: f64,
    pub total_cost: f64,
}

/// c = fn_weight · ny + fp_weight · yn.
pub fn cost(table: &ContingencyTable, fn_weight: f64, fp_weight: f64) -> Result<CostResult, HarnessError> {
    for (name, w) in [("false-negative", fn_weight), ("false-positive", fp_weight)] {
        if !(w >= 0.0 && w.is_finite()) {
            return Err(HarnessError::Invalid(format!("{name} weight must be a non-negative number, got {w}")));
        }
    }
    Ok(CostResult { fn_weight, fp_weight, total_cost: fn_weight * table.ny as f64 + fp_weight * table.yn as f64 })
}

#[cfg(test)]
mod tests {
    use super::*;

    const GPT4_MINI: ContingencyTable = ContingencyTable { yy: 56, yn: 20, ny: 14, nn: 12 };
    const GPT5_MINI: ContingencyTable = ContingencyTable { yy: 32, yn: 8, ny: 38, nn: 24 };
    const GPT5: ContingencyTable = ContingencyTable { yy: 24, yn: 3, ny: 46, nn: 29 };

    #[test]
    fn agreement_rates() {
        assert_eq!(GPT4_MINI.agreement_rate(), 68.0 / 102.0);
        assert_eq!(GPT5_MINI.agreement_rate(), 56.0 / 102.0);
        assert_eq!(GPT5.agreement_rate(), 53.0 / 102.0);
        for t in [GPT4_MINI, GPT5_MINI, GPT5] {
            assert_eq!(t.total(), 102);
            assert_eq!(t.agreement_rate() + t.disagreement_rate(), 1.0);
        }
    }

    #[test]
    fn mcnemar_matches_published_values() {
        let cases = [(GPT4_MINI, 1.06, 0.303, 3), (GPT5_MINI, 19.57, 9.72e-6, 8), (GPT5, 37.73, 8.11e-10, 12)];
        for (t, chi, p, digits) in cases {
            let r = mcnemar(&t);
            assert!((r.chi_square - chi).abs() < 0.005, "{}", r.chi_square);
            let scale = 10f64.powi(digits);
            assert_eq!((r.p_value * scale).round() / scale, p, "{}", r.p_value);
        }
        assert_eq!(mcnemar(&GPT4_MINI).chi_square, 36.0 / 34.0);
    }

    #[test]
    fn p_values_to_three_significant_digits() {
        assert_eq!(format!("{:.2e}", mcnemar(&GPT4_MINI).p_value), "3.03e-1");
        assert_eq!(format!("{:.2e}", mcnemar(&GPT5_MINI).p_value), "9.72e-6");
        assert_eq!(format!("{:.2e}", mcnemar(&GPT5).p_value), "8.11e-10");
    }

    #[test]
    fn no_discordance_is_degenerate() {
        let r = mcnemar(&ContingencyTable::new(5, 0, 0, 7));
        assert_eq!((r.chi_square, r.p_value), (0.0, 1.0));
    }

    #[test]
    fn costs() {
        assert_eq!(cost(&GPT4_MINI, 1.0, 10.0).unwrap().total_cost, 214.0);
        assert_eq!(cost(&GPT5_MINI, 1.0, 10.0).unwrap().total_cost, 118.0);
        assert_eq!(cost(&GPT5, 1.0, 10.0).unwrap().total_cost, 76.0);
        let sweep: Vec<f64> = [1.0, 5.0, 10.0].iter().map(|w| cost(&GPT5, 1.0, *w).unwrap().total_cost).collect();
        assert_eq!(sweep, [49.0, 61.0, 76.0]);
        assert_eq!(cost(&ContingencyTable::new(3, 0, 0, 4), 1.0, 10.0).unwrap().total_cost, 0.0);
        assert!(cost(&GPT5, -1.0, 10.0).is_err());
    }

    #[test]
    fn contingency_counts_pairs() {
        let p = |ai, dao| Pair { id: String::new(), ai_outcome: ai, dao_outcome: dao };
        let t = contingency(&[p(Verdict::Yes, Verdict::Yes), p(Verdict::No, Verdict::No), p(Verdict::No, Verdict::No)]).unwrap();
        assert_eq!(t, ContingencyTable::new(1, 0, 0, 2));
        assert_eq!(t.agreement_rate(), 1.0);
        assert_eq!(contingency(&[]), Err(HarnessError::NoPairs));
    }
}

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::digest::canonical_json;

use super::{cost, mcnemar, ContingencyTable, CostResult, HarnessError, McNemarResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelStats {
    pub label: String,
    /// Pairs analysed; skipped proposals are not counted.
    pub n: u64,
    pub skipped: usize,
    pub table: ContingencyTable,
    pub agreement_rate: f64,
    pub disagreement_rate: f64,
    pub mcnemar: McNemarResult,
    pub cost: CostResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub fp_weight: f64,
    /// One entry per model, in model order.
    pub costs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsReport {
    pub fn_weight: f64,
    pub fp_weight: f64,
    pub models: Vec<ModelStats>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sweep: Vec<SweepRow>,
}

/// Builds the statistics for each `(label, table, skipped)` model.
pub fn emit_stats_report(
    models: &[(String, ContingencyTable, usize)],
    fn_weight: f64,
    fp_weight: f64,
    sweep: &[f64],
) -> Result<StatsReport, HarnessError> {
    if models.is_empty() {
        return Err(HarnessError::NoPairs);
    }
    let mut out = Vec::with_capacity(models.len());
    for (label, table, skipped) in models {
        if table.total() == 0 {
            return Err(HarnessError::Invalid(format!("model {label} has no decision pairs")));
        }
        out.push(ModelStats {
            label: label.clone(),
            n: table.total(),
            skipped: *skipped,
            table: *table,
            agreement_rate: table.agreement_rate(),
            disagreement_rate: table.disagreement_rate(),
            mcnemar: mcnemar(table),
            cost: cost(table, fn_weight, fp_weight)?,
        });
    }
    let mut rows = Vec::with_capacity(sweep.len());
    for &w in sweep {
        let costs = models.iter().map(|(_, t, _)| cost(t, fn_weight, w).map(|c| c.total_cost)).collect::<Result<_, _>>()?;
        rows.push(SweepRow { fp_weight: w, costs });
    }
    Ok(StatsReport { fn_weight, fp_weight, models: out, sweep: rows })
}

fn share(count: u64, total: u64) -> String {
    format!("{count} ({:.1}%)", 100.0 * count as f64 / total as f64)
}

impl StatsReport {
    pub fn to_canonical_json(&self) -> Vec<u8> {
        canonical_json(self)
    }

    pub fn to_pretty_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports always serialize")
    }

    /// Plain-text rendering: the contingency table, the test results, the
    /// cost table and the optional sweep.
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "Contingency table (rows: AI decision, columns: DAO decision)");
        let _ = writeln!(out);
        let mut header = String::from("|      |");
        let mut sub = String::from("|      |");
        let mut rule = String::from("|------|");
        for m in &self.models {
            let _ = write!(header, " {} |  |", m.label);
            sub.push_str(" DAO Y | DAO N |");
            rule.push_str("---:|---:|");
        }
        let _ = writeln!(out, "{header}\n{rule}\n{sub}");
        for (row, cells) in [("AI Y", [0usize, 1]), ("AI N", [2, 3])] {
            let _ = write!(out, "| {row} |");
            for m in &self.models {
                let t = &m.table;
                let counts = [t.yy, t.yn, t.ny, t.nn];
                for c in cells {
                    let _ = write!(out, " {} |", share(counts[c], t.total()));
                }
            }
            let _ = writeln!(out);
        }
        let _ = writeln!(out);
        for m in &self.models {
            let _ = writeln!(
                out,
                "{}: agreement {:.1}% ({}/{} = {}), McNemar χ²(1, N = {}) = {:.2}, p = {:.2e}{}",
                m.label,
                100.0 * m.agreement_rate,
                m.table.agreeing(),
                m.n,
                m.agreement_rate,
                m.n,
                m.mcnemar.chi_square,
                m.mcnemar.p_value,
                if m.skipped > 0 { format!(", {} skipped", m.skipped) } else { String::new() }
            );
        }
        let _ = writeln!(out);
        let _ = writeln!(out, "Total cost, c = {} · (DAO Y / AI N) + {} · (DAO N / AI Y)", self.fn_weight, self.fp_weight);
        let _ = writeln!(out);
        let _ = writeln!(out, "| Model | DAO N / AI Y | DAO Y / AI N | Total cost |");
        let _ = writeln!(out, "|---|---:|---:|---:|");
        for m in &self.models {
            let _ = writeln!(out, "| {} | {} | {} | {} |", m.label, m.table.yn, m.table.ny, m.cost.total_cost);
        }
        if !self.sweep.is_empty() {
            let _ = writeln!(out);
            let _ = writeln!(out, "Cost by false-positive weight");
            let _ = writeln!(out);
            let mut header = String::from("| fp weight |");
            let mut rule = String::from("|---:|");
            for m in &self.models {
                let _ = write!(header, " {} |", m.label);
                rule.push_str("---:|");
            }
            let _ = writeln!(out, "{header}\n{rule}");
            for row in &self.sweep {
                let _ = write!(out, "| {} |", row.fp_weight);
                for c in &row.costs {
                    let _ = write!(out, " {c} |");
                }
                let _ = writeln!(out);
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reference_tables() -> Vec<(String, ContingencyTable, usize)> {
        vec![
            ("GPT-4-mini".into(), ContingencyTable::new(56, 20, 14, 12), 0),
            ("GPT-5-mini".into(), ContingencyTable::new(32, 8, 38, 24), 0),
            ("GPT-5".into(), ContingencyTable::new(24, 3, 46, 29), 0),
        ]
    }

    #[test]
    fn renders_every_cell_and_cost() {
        let r = emit_stats_report(&reference_tables(), 1.0, 10.0, &[]).unwrap();
        let text = r.render_text();
        for cell in [
            "56 (54.9%)", "20 (19.6%)", "14 (13.7%)", "12 (11.8%)", "32 (31.4%)", "8 (7.8%)", "38 (37.3%)",
            "24 (23.5%)", "24 (23.5%)", "3 (2.9%)", "46 (45.1%)", "29 (28.4%)",
        ] {
            assert!(text.contains(cell), "{cell} missing:\n{text}");
        }
        assert!(text.contains("| GPT-4-mini | 20 | 14 | 214 |"));
        assert!(text.contains("| GPT-5-mini | 8 | 38 | 118 |"));
        assert!(text.contains("| GPT-5 | 3 | 46 | 76 |"));
        assert!(text.contains("χ²(1, N = 102) = 1.06, p = 3.03e-1"));
        assert!(text.contains("χ²(1, N = 102) = 19.57, p = 9.72e-6"));
        assert!(text.contains("χ²(1, N = 102) = 37.73, p = 8.11e-10"));
        assert!(text.contains("agreement 52.0% (53/102 = 0.5196078431372549)"));
    }

    #[test]
    fn sweep_rows() {
        let r = emit_stats_report(&reference_tables()[2..], 1.0, 10.0, &[1.0, 5.0, 10.0]).unwrap();
        let costs: Vec<f64> = r.sweep.iter().map(|s| s.costs[0]).collect();
        assert_eq!(costs, [49.0, 61.0, 76.0]);
        assert!(r.render_text().contains("| 5 | 61 |"));
        assert_eq!(r.models.len(), 1);
        assert_eq!(r.render_text().matches("DAO Y | DAO N").count(), 1);
    }

    #[test]
    fn canonical_json_is_stable() {
        let a = emit_stats_report(&reference_tables(), 1.0, 10.0, &[1.0]).unwrap();
        let b = emit_stats_report(&reference_tables(), 1.0, 10.0, &[1.0]).unwrap();
        assert_eq!(a.to_canonical_json(), b.to_canonical_json());
        let back: StatsReport = serde_json::from_slice(&a.to_canonical_json()).unwrap();
        assert_eq!(back, a);
    }

    #[test]
    fn empty_inputs_rejected() {
        assert!(emit_stats_report(&[], 1.0, 10.0, &[]).is_err());
        assert!(emit_stats_report(&[("x".into(), ContingencyTable::default(), 2)], 1.0, 10.0, &[]).is_err());
    }
}

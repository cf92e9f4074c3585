use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::agents::{AgentSettings, StakeholderGroup};
use crate::engine::{check_criteria, Criterion, CriterionId, WeightVector};
use crate::safeguards::SafeguardConfig;

use super::PipelineError;

/// How far evaluation and decision are delegated to agents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// Humans submit ballots; the aggregate decides.
    HumanOnly,
    /// Agents evaluate; a human records the final decision.
    HumanInTheLoop,
    /// Agents evaluate; the aggregate is final.
    Autonomous,
}

impl Mode {
    pub fn uses_agents(self) -> bool {
        !matches!(self, Mode::HumanOnly)
    }
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "human-only" | "1" => Ok(Mode::HumanOnly),
            "human-in-the-loop" | "hitl" | "2" => Ok(Mode::HumanInTheLoop),
            "autonomous" | "3" => Ok(Mode::Autonomous),
            other => Err(format!("unknown mode {other:?} (expected human-only, human-in-the-loop or autonomous)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportBands {
    /// Winning-option criteria with ē at or above this are strengths.
    pub strength: f64,
    /// Winning-option criteria with ē below this are weaknesses.
    pub weakness: f64,
}

impl Default for ReportBands {
    fn default() -> Self {
        Self { strength: 70.0, weakness: 40.0 }
    }
}

pub const DEFAULT_QUESTION: &str = "Should the DAO approve or support proposal \"{title}\"?";

fn default_question() -> String {
    DEFAULT_QUESTION.to_owned()
}

fn default_true() -> bool {
    true
}

/// Governance configuration file (TOML). See `docs/formats.md`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GovernanceConfig {
    pub mode: Mode,
    #[serde(default = "default_question")]
    pub question: String,
    #[serde(default = "default_true")]
    pub power_weighted: bool,
    pub criteria: Vec<Criterion>,
    pub weights: BTreeMap<CriterionId, f64>,
    #[serde(default)]
    pub safeguard: SafeguardConfig,
    #[serde(default)]
    pub report: ReportBands,
    #[serde(default)]
    pub agents: AgentSettings,
    #[serde(default)]
    pub stakeholder_groups: Vec<StakeholderGroup>,
}

impl GovernanceConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, PipelineError> {
        let config: Self = toml::from_str(text).map_err(|e| PipelineError::Parse(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PipelineError::Io(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            PipelineError::Parse(m) => PipelineError::Parse(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("configuration always serializes")
    }

    pub fn global_weights(&self) -> Result<WeightVector, PipelineError> {
        WeightVector::new(self.weights.clone()).map_err(|e| PipelineError::Validation(vec![e.to_string()]))
    }

    /// Collects every violation instead of stopping at the first.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if let Err(e) = check_criteria(&self.criteria) {
            out.push(e.to_string());
        }
        for c in &self.criteria {
            if !self.weights.contains_key(&c.id) {
                out.push(format!("criterion {} has no weight", c.id));
            }
        }
        for (c, w) in &self.weights {
            if !self.criteria.iter().any(|k| &k.id == c) {
                out.push(format!("weight given for unknown criterion {c}"));
            }
            if !(*w > 0.0 && *w <= 100.0) {
                out.push(format!("weight for criterion {c} must lie in (0, 100], got {w}"));
            }
        }
        if let Err(e) = self.safeguard.validate() {
            out.push(e.to_string());
        }
        if self.report.weakness > self.report.strength {
            out.push(format!(
                "report weakness band {} exceeds strength band {}",
                self.report.weakness, self.report.strength
            ));
        }
        if self.mode.uses_agents() && self.stakeholder_groups.is_empty() {
            out.push("agent modes require at least one stakeholder group".into());
        }
        for g in &self.stakeholder_groups {
            if let Err(e) = g.validate() {
                out.push(e.to_string());
            }
        }
        let mut ids: Vec<&str> = self.stakeholder_groups.iter().map(|g| g.id.as_str()).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            out.push("stakeholder group ids must be unique".into());
        }
        if !matches!(self.agents.backend.as_str(), "mock" | "http") {
            out.push(format!("agents.backend must be \"mock\" or \"http\", got {:?}", self.agents.backend));
        }
        out
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(PipelineError::Validation(v))
        }
    }

    pub fn question_for(&self, title: &str) -> String {
        self.question.replace("{title}", title)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub const SAMPLE: &str = r#"
mode = "autonomous"

[[criteria]]
id = "roi"
label = "Return on investment"

[[criteria]]
id = "feasibility"
label = "Technical feasibility"

[weights]
roi = 60
feasibility = 40

[safeguard]
threshold_k = 2.5

[[stakeholder_groups]]
id = "community"
name = "Community members"
perspective = "Long-term health of the DAO."
"#;

    #[test]
    fn parses_with_defaults() {
        let c = GovernanceConfig::from_toml_str(SAMPLE).unwrap();
        assert_eq!(c.mode, Mode::Autonomous);
        assert!(c.power_weighted);
        assert_eq!(c.safeguard.threshold_k, 2.5);
        assert_eq!(c.safeguard.min_ballots, 3);
        assert_eq!(c.report, ReportBands { strength: 70.0, weakness: 40.0 });
        assert_eq!(c.agents.max_retries, 2);
        assert_eq!(c.agents.temperature, 0.0);
        assert_eq!(c.stakeholder_groups[0].voting_power, 1.0);
        let again = GovernanceConfig::from_toml_str(&c.to_toml_string()).unwrap();
        assert_eq!(again, c);
    }

    #[test]
    fn lists_every_violation() {
        let text = SAMPLE.replace("feasibility = 40", "").replace("threshold_k = 2.5", "threshold_k = -1");
        match GovernanceConfig::from_toml_str(&text) {
            Err(PipelineError::Validation(v)) => {
                assert_eq!(v.len(), 2, "{v:?}");
                assert!(v[0].contains("feasibility"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn agent_modes_need_groups() {
        let text = SAMPLE.split("[[stakeholder_groups]]").next().unwrap();
        assert!(matches!(GovernanceConfig::from_toml_str(text), Err(PipelineError::Validation(_))));
        let human = text.replace("mode = \"autonomous\"", "mode = \"human-only\"");
        assert!(GovernanceConfig::from_toml_str(&human).is_ok());
    }
}

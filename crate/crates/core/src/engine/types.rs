use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::EngineError;

macro_rules! id_newtype {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub String);

        impl $name {
            pub fn new(id: impl Into<String>) -> Self {
                Self(id.into())
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                Self(s.to_owned())
            }
        }

        impl From<String> for $name {
            fn from(s: String) -> Self {
                Self(s)
            }
        }
    };
}

id_newtype!(
    /// Identifier of an option (an answer to the question).
    OptionId
);
id_newtype!(
    /// Identifier of an evaluation criterion.
    CriterionId
);
id_newtype!(
    /// Opaque voter identity. Humans and agents share this namespace.
    VoterId
);

/// Tolerance used for every floating point comparison in the engine.
pub const TOLERANCE: f64 = 1e-9;

/// Lowest and highest admissible support score.
pub const MIN_SCORE: u8 = 0;
pub const MAX_SCORE: u8 = 100;

/// Normalizes a label for merging: trim, case-fold, collapse internal whitespace.
pub fn normalize_label(label: &str) -> String {
    label
        .split_whitespace()
        .map(|w| w.to_lowercase())
        .collect::<Vec<_>>()
        .join(" ")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuestionMode {
    General,
    DaoBinary,
}

impl QuestionMode {
    /// Voting power is applied by default in DAO votes and ignored otherwise.
    pub fn default_power_weighted(self) -> bool {
        matches!(self, QuestionMode::DaoBinary)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Question {
    pub id: String,
    pub text: String,
    pub mode: QuestionMode,
}

impl Question {
    pub fn new(id: impl Into<String>, text: impl Into<String>, mode: QuestionMode) -> Result<Self, EngineError> {
        let text = text.into();
        if text.trim().is_empty() {
            return Err(EngineError::Invalid("question text is empty".into()));
        }
        Ok(Self { id: id.into(), text, mode })
    }

    /// Checks that an option set is admissible for this question.
    pub fn check_options(&self, options: &OptionSet) -> Result<(), EngineError> {
        if self.mode == QuestionMode::DaoBinary && *options != OptionSet::yes_no() {
            return Err(EngineError::Invalid(
                "a DAO binary question requires exactly the options {yes, no}".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OptionEntry {
    pub id: OptionId,
    pub label: String,
}

/// Ordered, duplicate-free list of options. Order decides general-mode ties.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<OptionEntry>", into = "Vec<OptionEntry>")]
pub struct OptionSet {
    options: Vec<OptionEntry>,
}

impl OptionSet {
    pub fn new(options: Vec<OptionEntry>) -> Result<Self, EngineError> {
        if options.len() < 2 {
            return Err(EngineError::Invalid(format!(
                "an option set needs at least 2 options, got {}",
                options.len()
            )));
        }
        let mut labels = BTreeSet::new();
        let mut ids = BTreeSet::new();
        for o in &options {
            if !labels.insert(normalize_label(&o.label)) {
                return Err(EngineError::Invalid(format!("duplicate option label {:?}", o.label)));
            }
            if !ids.insert(o.id.clone()) {
                return Err(EngineError::Invalid(format!("duplicate option id {:?}", o.id.0)));
            }
        }
        Ok(Self { options })
    }

    /// The fixed DAO answer set. `yes` comes first.
    pub fn yes_no() -> Self {
        Self {
            options: vec![
                OptionEntry { id: OptionId::new(YES), label: "Yes".into() },
                OptionEntry { id: OptionId::new(NO), label: "No".into() },
            ],
        }
    }

    pub fn entries(&self) -> &[OptionEntry] {
        &self.options
    }

    pub fn ids(&self) -> impl Iterator<Item = &OptionId> {
        self.options.iter().map(|o| &o.id)
    }

    pub fn len(&self) -> usize {
        self.options.len()
    }

    pub fn is_empty(&self) -> bool {
        self.options.is_empty()
    }

    pub fn position(&self, id: &OptionId) -> Option<usize> {
        self.options.iter().position(|o| &o.id == id)
    }
}

impl TryFrom<Vec<OptionEntry>> for OptionSet {
    type Error = EngineError;

    fn try_from(v: Vec<OptionEntry>) -> Result<Self, Self::Error> {
        Self::new(v)
    }
}

impl From<OptionSet> for Vec<OptionEntry> {
    fn from(s: OptionSet) -> Self {
        s.options
    }
}

pub const YES: &str = "yes";
pub const NO: &str = "no";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Criterion {
    pub id: CriterionId,
    pub label: String,
    #[serde(default)]
    pub description: String,
}

impl Criterion {
    pub fn new(id: impl Into<String>, label: impl Into<String>, description: impl Into<String>) -> Self {
        Self { id: CriterionId::new(id), label: label.into(), description: description.into() }
    }
}

/// Rejects duplicate ids or normalized labels in a criterion list.
pub fn check_criteria(criteria: &[Criterion]) -> Result<(), EngineError> {
    if criteria.is_empty() {
        return Err(EngineError::Invalid("criterion list is empty".into()));
    }
    let mut labels = BTreeSet::new();
    let mut ids = BTreeSet::new();
    for c in criteria {
        if !labels.insert(normalize_label(&c.label)) {
            return Err(EngineError::Invalid(format!("duplicate criterion label {:?}", c.label)));
        }
        if !ids.insert(c.id.clone()) {
            return Err(EngineError::Invalid(format!("duplicate criterion id {:?}", c.id.0)));
        }
    }
    Ok(())
}

/// Criterion weights, each in (0, 100].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BTreeMap<CriterionId, f64>", into = "BTreeMap<CriterionId, f64>")]
pub struct WeightVector {
    weights: BTreeMap<CriterionId, f64>,
}

impl WeightVector {
    pub fn new(weights: BTreeMap<CriterionId, f64>) -> Result<Self, EngineError> {
        if weights.is_empty() {
            return Err(EngineError::Invalid("weight vector is empty".into()));
        }
        for (c, &w) in &weights {
            if !(w > 0.0 && w <= 100.0) {
                return Err(EngineError::Invalid(format!(
                    "weight for criterion {c} must lie in (0, 100], got {w}"
                )));
            }
        }
        Ok(Self { weights })
    }

    pub fn from_pairs<I, K>(pairs: I) -> Result<Self, EngineError>
    where
        I: IntoIterator<Item = (K, f64)>,
        K: Into<CriterionId>,
    {
        Self::new(pairs.into_iter().map(|(k, w)| (k.into(), w)).collect())
    }

    /// Requires the weights to sum to 100.
    pub fn new_normalized(weights: BTreeMap<CriterionId, f64>) -> Result<Self, EngineError> {
        let v = Self::new(weights)?;
        if !v.is_normalized() {
            return Err(EngineError::Invalid(format!(
                "normalized weights must sum to 100, got {}",
                v.total()
            )));
        }
        Ok(v)
    }

    pub fn get(&self, c: &CriterionId) -> Option<f64> {
        self.weights.get(c).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&CriterionId, f64)> {
        self.weights.iter().map(|(k, &v)| (k, v))
    }

    pub fn as_map(&self) -> &BTreeMap<CriterionId, f64> {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.weights.values().sum()
    }

    pub fn is_normalized(&self) -> bool {
        (self.total() - 100.0).abs() <= TOLERANCE
    }

    /// Rescales to sum 100. Never applied implicitly by aggregation.
    pub fn normalized(&self) -> Self {
        let total = self.total();
        Self { weights: self.weights.iter().map(|(k, &w)| (k.clone(), w * 100.0 / total)).collect() }
    }

    /// Errors unless the vector covers exactly `criteria`.
    pub fn check_covers(&self, criteria: &[Criterion]) -> Result<(), EngineError> {
        let expected: BTreeSet<&CriterionId> = criteria.iter().map(|c| &c.id).collect();
        let actual: BTreeSet<&CriterionId> = self.weights.keys().collect();
        CriterionMismatch::between(&expected, &actual).into_result()
    }

    pub(crate) fn from_map_unchecked(weights: BTreeMap<CriterionId, f64>) -> Self {
        Self { weights }
    }
}

impl TryFrom<BTreeMap<CriterionId, f64>> for WeightVector {
    type Error = EngineError;

    fn try_from(m: BTreeMap<CriterionId, f64>) -> Result<Self, Self::Error> {
        Self::new(m)
    }
}

impl From<WeightVector> for BTreeMap<CriterionId, f64> {
    fn from(w: WeightVector) -> Self {
        w.weights
    }
}

/// Missing and extra criterion ids found when comparing two criterion sets.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CriterionMismatch {
    pub missing: Vec<CriterionId>,
    pub extra: Vec<CriterionId>,
}

impl CriterionMismatch {
    pub fn between(expected: &BTreeSet<&CriterionId>, actual: &BTreeSet<&CriterionId>) -> Self {
        Self {
            missing: expected.difference(actual).map(|c| (*c).clone()).collect(),
            extra: actual.difference(expected).map(|c| (*c).clone()).collect(),
        }
    }

    pub fn into_result(self) -> Result<(), EngineError> {
        if self.missing.is_empty() && self.extra.is_empty() {
            Ok(())
        } else {
            Err(EngineError::CriterionMismatch { missing: self.missing, extra: self.extra })
        }
    }
}

/// Integer support scores e(k, j) over a complete option x criterion grid.
///
/// Serialized as `{ option: { criterion: score } }`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "BTreeMap<OptionId, BTreeMap<CriterionId, u8>>", into = "BTreeMap<OptionId, BTreeMap<CriterionId, u8>>")]
pub struct EvaluationMatrix {
    scores: BTreeMap<OptionId, BTreeMap<CriterionId, u8>>,
}

impl EvaluationMatrix {
    pub fn new(scores: BTreeMap<OptionId, BTreeMap<CriterionId, u8>>) -> Result<Self, EngineError> {
        if scores.is_empty() {
            return Err(EngineError::Invalid("evaluation matrix is empty".into()));
        }
        let mut columns: Option<BTreeSet<&CriterionId>> = None;
        for (o, row) in &scores {
            if row.is_empty() {
                return Err(EngineError::Invalid(format!("evaluation row for option {o} is empty")));
            }
            for (c, &s) in row {
                if s > MAX_SCORE {
                    return Err(EngineError::Invalid(format!(
                        "score for ({o}, {c}) must lie in [0, 100], got {s}"
                    )));
                }
            }
            let cols: BTreeSet<&CriterionId> = row.keys().collect();
            match &columns {
                None => columns = Some(cols),
                Some(first) if *first != cols => {
                    return Err(EngineError::Invalid(format!(
                        "evaluation matrix is not rectangular: row {o} has a different criterion set"
                    )))
                }
                Some(_) => {}
            }
        }
        Ok(Self { scores })
    }

    pub fn from_rows<O, C, R>(rows: impl IntoIterator<Item = (O, R)>) -> Result<Self, EngineError>
    where
        O: Into<OptionId>,
        C: Into<CriterionId>,
        R: IntoIterator<Item = (C, u8)>,
    {
        Self::new(
            rows.into_iter()
                .map(|(o, r)| (o.into(), r.into_iter().map(|(c, s)| (c.into(), s)).collect()))
                .collect(),
        )
    }

    pub fn get(&self, option: &OptionId, criterion: &CriterionId) -> Option<u8> {
        self.scores.get(option).and_then(|r| r.get(criterion)).copied()
    }

    pub fn row(&self, option: &OptionId) -> Option<&BTreeMap<CriterionId, u8>> {
        self.scores.get(option)
    }

    pub fn rows(&self) -> impl Iterator<Item = (&OptionId, &BTreeMap<CriterionId, u8>)> {
        self.scores.iter()
    }

    pub fn cells(&self) -> impl Iterator<Item = (&OptionId, &CriterionId, u8)> {
        self.scores.iter().flat_map(|(o, r)| r.iter().map(move |(c, &s)| (o, c, s)))
    }

    pub fn options(&self) -> BTreeSet<&OptionId> {
        self.scores.keys().collect()
    }

    pub fn criteria(&self) -> BTreeSet<&CriterionId> {
        self.scores.values().next().map(|r| r.keys().collect()).unwrap_or_default()
    }

    /// Checks that the matrix covers exactly the given grid.
    pub fn check_grid(&self, options: &OptionSet, criteria: &[Criterion]) -> Result<(), EngineError> {
        let want_o: BTreeSet<&OptionId> = options.ids().collect();
        if want_o != self.options() {
            return Err(EngineError::GridMismatch(format!(
                "expected options {:?}, got {:?}",
                want_o.iter().map(|o| o.as_str()).collect::<Vec<_>>(),
                self.options().iter().map(|o| o.as_str()).collect::<Vec<_>>()
            )));
        }
        let want_c: BTreeSet<&CriterionId> = criteria.iter().map(|c| &c.id).collect();
        let got_c = self.criteria();
        if want_c != got_c {
            let m = CriterionMismatch::between(&want_c, &got_c);
            return Err(EngineError::GridMismatch(format!(
                "criteria differ: missing {:?}, extra {:?}",
                m.missing.iter().map(|c| c.as_str()).collect::<Vec<_>>(),
                m.extra.iter().map(|c| c.as_str()).collect::<Vec<_>>()
            )));
        }
        Ok(())
    }
}

impl TryFrom<BTreeMap<OptionId, BTreeMap<CriterionId, u8>>> for EvaluationMatrix {
    type Error = EngineError;

    fn try_from(m: BTreeMap<OptionId, BTreeMap<CriterionId, u8>>) -> Result<Self, Self::Error> {
        Self::new(m)
    }
}

impl From<EvaluationMatrix> for BTreeMap<OptionId, BTreeMap<CriterionId, u8>> {
    fn from(m: EvaluationMatrix) -> Self {
        m.scores
    }
}

/// One voter's evaluations together with their voting power.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ballot {
    pub voter: VoterId,
    pub voting_power: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight_vector: Option<WeightVector>,
    pub evaluations: EvaluationMatrix,
    pub submitted_at: DateTime<Utc>,
}

impl Ballot {
    pub fn check(&self) -> Result<(), EngineError> {
        if !(self.voting_power >= 0.0 && self.voting_power.is_finite()) {
            return Err(EngineError::Invalid(format!(
                "voting power of {} must be a finite non-negative number, got {}",
                self.voter, self.voting_power
            )));
        }
        Ok(())
    }
}

/// What a single participant contributes to a general-mode question.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContributionSet {
    pub voter: VoterId,
    pub options: Vec<String>,
    pub criteria: Vec<String>,
    pub weight_vector: WeightVector,
}

/// An exclusion key: one voter's evaluation of one cell.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CellRef {
    pub voter: VoterId,
    pub option: OptionId,
    pub criterion: CriterionId,
}

impl CellRef {
    pub fn new(voter: impl Into<VoterId>, option: impl Into<OptionId>, criterion: impl Into<CriterionId>) -> Self {
        Self { voter: voter.into(), option: option.into(), criterion: criterion.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateResult {
    pub mean_weights: BTreeMap<CriterionId, f64>,
    pub mean_evaluations: BTreeMap<OptionId, BTreeMap<CriterionId, f64>>,
    pub option_scores: BTreeMap<OptionId, f64>,
    pub ballot_count: usize,
    pub excluded_evaluations: BTreeSet<CellRef>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Outcome {
    pub winner: OptionId,
    pub tie_broken: bool,
}

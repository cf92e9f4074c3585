//! Direct triple-loop scoring used as a reference for the engine.

use std::collections::{BTreeMap, BTreeSet};

use qoc_core::engine::{
    aggregate, AggregateInput, AggregateResult, Ballot, Criterion, EvaluationMatrix, OptionEntry, OptionId, OptionSet, VoterId,
    WeightSourceMode, WeightVector,
};
use rand::rngs::StdRng;
use rand::Rng;

use super::t0;

pub struct Instance {
    pub options: OptionSet,
    pub criteria: Vec<Criterion>,
    pub weights: WeightVector,
    pub ballots: Vec<Ballot>,
    pub power_weighted: bool,
}

pub fn random_instance(rng: &mut StdRng) -> Instance {
    let n_opt = rng.gen_range(2..=5);
    let n_crit = rng.gen_range(1..=6);
    let n_bal = rng.gen_range(1..=10);
    let options = OptionSet::new(
        (0..n_opt).map(|i| OptionEntry { id: format!("o{i}").into(), label: format!("Option {i}") }).collect(),
    )
    .unwrap();
    let criteria: Vec<Criterion> = (0..n_crit).map(|j| Criterion::new(format!("c{j}"), format!("C{j}"), "")).collect();
    let weights =
        WeightVector::new(criteria.iter().map(|c| (c.id.clone(), rng.gen_range(0.5..100.0))).collect()).unwrap();
    let ballots = (0..n_bal)
        .map(|i| Ballot {
            voter: VoterId::new(format!("v{i:02}")),
            voting_power: rng.gen_range(0.1..50.0),
            weight_vector: None,
            evaluations: EvaluationMatrix::new(
                options
                    .ids()
                    .map(|o| (o.clone(), criteria.iter().map(|c| (c.id.clone(), rng.gen_range(0..=100u8))).collect()))
                    .collect(),
            )
            .unwrap(),
            submitted_at: t0(),
        })
        .collect();
    Instance { options, criteria, weights, ballots, power_weighted: rng.gen_bool(0.5) }
}

pub fn run(inst: &Instance, ballots: &[Ballot]) -> AggregateResult {
    aggregate(&AggregateInput {
        options: &inst.options,
        criteria: &inst.criteria,
        ballots,
        weights: WeightSourceMode::Global(&inst.weights),
        power_weighted: inst.power_weighted,
        exclusions: &BTreeSet::new(),
    })
    .unwrap()
}

/// S(o) = Σ_j w_j · (Σ_i p_i e_ioj / Σ_i p_i), looped literally.
pub fn oracle_scores(inst: &Instance) -> BTreeMap<OptionId, f64> {
    let mut out = BTreeMap::new();
    for o in inst.options.ids() {
        let mut s = 0.0;
        for c in &inst.criteria {
            let (mut num, mut den) = (0.0, 0.0);
            for b in &inst.ballots {
                let p = if inst.power_weighted { b.voting_power } else { 1.0 };
                num += p * f64::from(b.evaluations.get(o, &c.id).unwrap());
                den += p;
            }
            s += inst.weights.get(&c.id).unwrap() * num / den;
        }
        out.insert(o.clone(), s);
    }
    out
}

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

/// P(χ²₁ > x) = 2/√(2π) ∫_{√x}^{∞} e^{-u²/2} du by composite Simpson.
pub fn simpson_tail(x: f64) -> f64 {
    let (a, b) = (x.sqrt(), x.sqrt() + 12.0);
    let n = 20_000;
    let h = (b - a) / n as f64;
    let f = |u: f64| (-u * u / 2.0).exp();
    let mut s = f(a) + f(b);
    for i in 1..n {
        s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0 * 2.0 / (2.0 * std::f64::consts::PI).sqrt()
}

//! Expected-utility evaluation, argmax selection with a total tie-break
//! order, multi-objective weighting and the softmax action distribution.

use std::collections::BTreeMap;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{DenseScenario, ScenarioModel};

/// Two expected utilities closer than this are treated as tied.
pub const TIE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DecisionMode {
    Deterministic,
    Sampled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionReport {
    pub scenario: String,
    pub mode: DecisionMode,
    pub chosen_action: String,
    pub tie: bool,
    pub tied_actions: Vec<String>,
    pub expected_utilities: BTreeMap<String, f64>,
    /// action id -> prescript id -> α_j · U_j(a).
    pub objective_breakdown: BTreeMap<String, BTreeMap<String, f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub temperature: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub action_distribution: Option<BTreeMap<String, f64>>,
}

/// Weighted expected utilities of every action under one context vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    /// Σ_j α_j U_j(a), indexed like `DenseScenario::actions`.
    pub utilities: Vec<f64>,
    /// α_j U_j(a) at `a * m + j`.
    pub contributions: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Selection {
    pub chosen: usize,
    /// Every action within [`TIE_TOLERANCE`] of the maximum, in id order.
    /// Length 1 when there is no tie.
    pub tied: Vec<usize>,
}

/// U_j(a) = Σ_i w(e_j,c_i) P(c_i) P(e_j|c_i) u(a|c_i,e_j), summed over dicta
/// in id order. With `weighted = false` the baseline weights are ignored.
fn objective_partials(d: &DenseScenario, context: &[f64], a: usize, weighted: bool, out: &mut [f64]) {
    for (j, slot) in out.iter_mut().enumerate() {
        let mut acc = 0.0;
        for (i, &pc) in context.iter().enumerate() {
            let joint = pc * d.cond(i, j);
            let joint = if weighted { d.weight(j, i) * joint } else { joint };
            acc += joint * d.util(a, i, j);
        }
        *slot = acc;
    }
}

/// Evaluates every action against an arbitrary context vector.
pub fn evaluate(d: &DenseScenario, context: &[f64]) -> Evaluation {
    let m = d.n_prescripts();
    let mut contributions = vec![0.0; d.n_actions() * m];
    let mut utilities = Vec::with_capacity(d.n_actions());
    for a in 0..d.n_actions() {
        let row = &mut contributions[a * m..(a + 1) * m];
        objective_partials(d, context, a, true, row);
        let mut total = 0.0;
        for (slot, &alpha) in row.iter_mut().zip(&d.alpha) {
            *slot *= alpha;
            total += *slot;
        }
        utilities.push(total);
    }
    Evaluation {
        utilities,
        contributions,
    }
}

/// Argmax with the tie-break order: lowest priority rank of the action's
/// best-contributing prescript, then smallest action id.
pub fn select(d: &DenseScenario, eval: &Evaluation) -> Selection {
    let best = eval
        .utilities
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    let tied: Vec<usize> = (0..d.n_actions())
        .filter(|&a| best - eval.utilities[a] <= TIE_TOLERANCE)
        .collect();
    if tied.len() == 1 {
        return Selection {
            chosen: tied[0],
            tied,
        };
    }
    let m = d.n_prescripts();
    let lead_rank = |a: usize| -> u32 {
        let row = &eval.contributions[a * m..(a + 1) * m];
        let mut best_j = 0;
        for j in 1..m {
            let better = row[j] > row[best_j]
                || (row[j] == row[best_j] && d.ranks[j] < d.ranks[best_j]);
            if better {
                best_j = j;
            }
        }
        d.ranks[best_j]
    };
    // `tied` is in id order, so min_by_key keeps the smallest id on equal rank.
    let chosen = *tied.iter().min_by_key(|&&a| lead_rank(a)).unwrap();
    Selection { chosen, tied }
}

pub(crate) fn check_temperature(temperature: f64) -> Result<()> {
    if temperature.is_finite() && temperature > 0.0 {
        Ok(())
    } else {
        Err(Error::param(
            "temperature",
            format!("must be finite and positive, got {temperature}"),
        ))
    }
}

/// exp(v/τ) / Σ exp(v/τ), shifted by the maximum for stability.
pub fn softmax(values: &[f64], temperature: f64) -> Vec<f64> {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = values
        .iter()
        .map(|v| ((v - max) / temperature).exp())
        .collect();
    let total: f64 = out.iter().sum();
    for p in &mut out {
        *p /= total;
    }
    out
}

fn action_index(d: &DenseScenario, action_id: &str) -> Result<usize> {
    d.action_index(action_id).ok_or_else(|| Error::UnknownId {
        kind: "action",
        id: action_id.to_owned(),
    })
}

/// U(a|C,E) = Σ_i Σ_j P(c_i) P(e_j|c_i) u(a|c_i,e_j). Ignores all weights.
pub fn expected_utility(model: &ScenarioModel, action_id: &str) -> Result<f64> {
    let d = DenseScenario::from_model(model)?;
    let a = action_index(&d, action_id)?;
    let mut partials = vec![0.0; d.n_prescripts()];
    objective_partials(&d, &d.context, a, false, &mut partials);
    Ok(partials.iter().sum())
}

/// Σ_j α_j U_j(a|C,e_j), with baseline weights applied inside U_j.
pub fn weighted_expected_utility(model: &ScenarioModel, action_id: &str) -> Result<f64> {
    let d = DenseScenario::from_model(model)?;
    let a = action_index(&d, action_id)?;
    Ok(evaluate(&d, &d.context).utilities[a])
}

fn build_report(d: &DenseScenario, name: &str, eval: &Evaluation, sel: &Selection) -> DecisionReport {
    let m = d.n_prescripts();
    let expected_utilities = d
        .actions
        .iter()
        .cloned()
        .zip(eval.utilities.iter().copied())
        .collect();
    let objective_breakdown = d
        .actions
        .iter()
        .enumerate()
        .map(|(a, id)| {
            let row = d
                .prescripts
                .iter()
                .cloned()
                .zip(eval.contributions[a * m..(a + 1) * m].iter().copied())
                .collect();
            (id.clone(), row)
        })
        .collect();
    let tie = sel.tied.len() > 1;
    DecisionReport {
        scenario: name.to_owned(),
        mode: DecisionMode::Deterministic,
        chosen_action: d.actions[sel.chosen].clone(),
        tie,
        tied_actions: if tie {
            sel.tied.iter().map(|&a| d.actions[a].clone()).collect()
        } else {
            Vec::new()
        },
        expected_utilities,
        objective_breakdown,
        temperature: None,
        action_distribution: None,
    }
}

/// Deterministic argmax decision with full per-objective breakdown.
pub fn decide(model: &ScenarioModel) -> Result<DecisionReport> {
    let d = DenseScenario::from_model(model)?;
    let eval = evaluate(&d, &d.context);
    let sel = select(&d, &eval);
    Ok(build_report(&d, &model.name, &eval, &sel))
}

/// P(a|C,E) as a softmax over weighted expected utilities.
pub fn action_distribution(model: &ScenarioModel, temperature: f64) -> Result<BTreeMap<String, f64>> {
    check_temperature(temperature)?;
    let d = DenseScenario::from_model(model)?;
    let eval = evaluate(&d, &d.context);
    Ok(d.actions
        .iter()
        .cloned()
        .zip(softmax(&eval.utilities, temperature))
        .collect())
}

/// Generator for draw `index` under `seed`; draw 0 is what [`sample_action`] uses.
fn draw_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

fn draw<R: Rng>(probs: &[f64], rng: &mut R) -> usize {
    // Softmax output always has a positive entry, so the weights are valid.
    WeightedIndex::new(probs)
        .expect("softmax weights are positive")
        .sample(rng)
}

pub fn sample_action(model: &ScenarioModel, temperature: f64, seed: u64) -> Result<String> {
    check_temperature(temperature)?;
    let d = DenseScenario::from_model(model)?;
    let probs = softmax(&evaluate(&d, &d.context).utilities, temperature);
    Ok(d.actions[draw(&probs, &mut draw_rng(seed, 0))].clone())
}

/// Like [`decide`] but the chosen action is drawn from the softmax
/// distribution, which is attached to the report.
pub fn decide_sampled(model: &ScenarioModel, temperature: f64, seed: u64) -> Result<DecisionReport> {
    check_temperature(temperature)?;
    let d = DenseScenario::from_model(model)?;
    let eval = evaluate(&d, &d.context);
    let sel = select(&d, &eval);
    let probs = softmax(&eval.utilities, temperature);
    let mut report = build_report(&d, &model.name, &eval, &sel);
    report.mode = DecisionMode::Sampled;
    report.chosen_action = d.actions[draw(&probs, &mut draw_rng(seed, 0))].clone();
    report.temperature = Some(temperature);
    report.action_distribution = Some(d.actions.iter().cloned().zip(probs).collect());
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleReport {
    pub scenario: String,
    pub temperature: f64,
    pub draws: Vec<String>,
    pub counts: BTreeMap<String, u64>,
    pub distribution: BTreeMap<String, f64>,
}

/// `n` independent draws; draw `k` uses stream `k` of the seeded generator.
pub fn sample_many(model: &ScenarioModel, temperature: f64, seed: u64, n: u64) -> Result<SampleReport> {
    check_temperature(temperature)?;
    let d = DenseScenario::from_model(model)?;
    let probs = softmax(&evaluate(&d, &d.context).utilities, temperature);
    let mut counts: BTreeMap<String, u64> = d.actions.iter().map(|a| (a.clone(), 0)).collect();
    let mut draws = Vec::with_capacity(n as usize);
    for k in 0..n {
        let id = &d.actions[draw(&probs, &mut draw_rng(seed, k))];
        *counts.get_mut(id).unwrap() += 1;
        draws.push(id.clone());
    }
    Ok(SampleReport {
        scenario: model.name.clone(),
        temperature,
        draws,
        counts,
        distribution: d.actions.iter().cloned().zip(probs).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ObjectiveWeights;
    use crate::synth;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;

    fn degenerate(u: f64) -> ScenarioModel {
        let mut m = synth::uniform_scenario(&["c1"], &["e1"], &["a1"]);
        m.utilities.set("a1", "c1", "e1", u);
        m
    }

    #[test]
    fn zero_utilities_give_zero() {
        let m = synth::uniform_scenario(&["c1", "c2"], &["e1", "e2"], &["a1", "a2"]);
        for a in ["a1", "a2"] {
            assert_eq!(expected_utility(&m, a).unwrap(), 0.0);
        }
    }

    #[test]
    fn degenerate_distribution_returns_cell() {
        assert_eq!(expected_utility(&degenerate(5.0), "a1").unwrap(), 5.0);
    }

    #[test]
    fn unknown_action_is_an_error() {
        assert!(matches!(
            expected_utility(&degenerate(1.0), "zz"),
            Err(Error::UnknownId { kind: "action", .. })
        ));
        assert!(weighted_expected_utility(&degenerate(1.0), "zz").is_err());
    }

    fn two_prescripts() -> ScenarioModel {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        synth::random_scenario(&mut rng, 3, 2, 3, 10.0)
    }

    #[test]
    fn unit_weights_reproduce_expected_utility_exactly() {
        let mut m = two_prescripts();
        m.objective_weights = Some(ObjectiveWeights(
            [("e0".into(), 1.0), ("e1".into(), 1.0)].into(),
        ));
        for a in m.action_ids() {
            assert_eq!(
                weighted_expected_utility(&m, a).unwrap(),
                expected_utility(&m, a).unwrap()
            );
        }
    }

    fn partial(m: &ScenarioModel, a: &str, e: &str) -> f64 {
        m.dictum_ids()
            .iter()
            .map(|c| m.context.0[*c] * m.conditional.0[*c][e] * m.utilities.0[a][*c][e])
            .sum()
    }

    #[test]
    fn zeroed_weight_keeps_only_remaining_objective() {
        let mut m = two_prescripts();
        m.objective_weights = Some(ObjectiveWeights(
            [("e0".into(), 2.0), ("e1".into(), 0.0)].into(),
        ));
        for a in m.action_ids() {
            assert_abs_diff_eq!(
                weighted_expected_utility(&m, a).unwrap(),
                2.0 * partial(&m, a, "e0"),
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn fractional_weights_match_direct_sum() {
        let mut m = two_prescripts();
        m.objective_weights = Some(ObjectiveWeights(
            [("e0".into(), 0.3), ("e1".into(), 0.7)].into(),
        ));
        for a in m.action_ids() {
            let oracle = 0.3 * partial(&m, a, "e0") + 0.7 * partial(&m, a, "e1");
            assert_abs_diff_eq!(weighted_expected_utility(&m, a).unwrap(), oracle, epsilon = 1e-12);
        }
    }

    #[test]
    fn identical_rows_tie_to_smallest_id() {
        let mut m = synth::uniform_scenario(&["c1"], &["e1", "e2"], &["b", "a"]);
        for a in ["a", "b"] {
            m.utilities.set(a, "c1", "e1", 3.0);
            m.utilities.set(a, "c1", "e2", -1.0);
        }
        let r = decide(&m).unwrap();
        assert!(r.tie);
        assert_eq!(r.tied_actions, ["a", "b"]);
        assert_eq!(r.chosen_action, "a");
    }

    #[test]
    fn tie_prefers_action_led_by_higher_priority_prescript() {
        // Both total 1.0; `a` gets it from e2 (rank 2), `b` from e1 (rank 1).
        let mut m = synth::uniform_scenario(&["c1"], &["e1", "e2"], &["a", "b"]);
        m.utilities.set("a", "c1", "e2", 2.0);
        m.utilities.set("b", "c1", "e1", 2.0);
        let r = decide(&m).unwrap();
        assert!(r.tie);
        assert_eq!(r.chosen_action, "b");
    }

    #[test]
    fn decide_is_pure() {
        let m = two_prescripts();
        assert_eq!(decide(&m).unwrap(), decide(&m).unwrap());
    }

    fn two_actions(u1: f64, u2: f64) -> ScenarioModel {
        let mut m = synth::uniform_scenario(&["c1"], &["e1"], &["a1", "a2"]);
        m.utilities.set("a1", "c1", "e1", u1);
        m.utilities.set("a2", "c1", "e1", u2);
        m
    }

    #[test]
    fn softmax_examples() {
        let p = action_distribution(&two_actions(0.3, 0.3), 2.5).unwrap();
        assert_eq!(p["a1"], 0.5);
        assert_eq!(p["a2"], 0.5);

        let e = std::f64::consts::E;
        let p = action_distribution(&two_actions(1.0, 0.0), 1.0).unwrap();
        assert_abs_diff_eq!(p["a1"], e / (e + 1.0), epsilon = 1e-12);
        assert_abs_diff_eq!(p["a1"], 0.7311, epsilon = 1e-4);

        let p = action_distribution(&two_actions(0.2, 0.1), 0.001).unwrap();
        assert!(p["a1"] >= 1.0 - 1e-6);
    }

    #[test]
    fn bad_temperature_rejected() {
        for t in [0.0, -1.0, f64::NAN, f64::INFINITY] {
            assert!(action_distribution(&two_actions(1.0, 0.0), t).is_err());
            assert!(sample_action(&two_actions(1.0, 0.0), t, 0).is_err());
        }
    }

    #[test]
    fn single_action_always_sampled() {
        let m = degenerate(1.0);
        for seed in 0..50 {
            assert_eq!(sample_action(&m, 1.0, seed).unwrap(), "a1");
        }
    }

    #[test]
    fn sampling_is_deterministic_per_seed() {
        let m = two_prescripts();
        assert_eq!(
            sample_action(&m, 3.0, 99).unwrap(),
            sample_action(&m, 3.0, 99).unwrap()
        );
        let many = sample_many(&m, 3.0, 99, 5).unwrap();
        assert_eq!(many.draws[0], sample_action(&m, 3.0, 99).unwrap());
    }

    #[test]
    fn fair_coin_frequencies_within_binomial_bound() {
        // sd = sqrt(0.25 / 10_000) = 0.005; the 0.02 band is 4 sd.
        let m = two_actions(0.0, 0.0);
        let hits = (0..10_000u64)
            .filter(|&s| sample_action(&m, 1.0, s).unwrap() == "a1")
            .count();
        let freq = hits as f64 / 10_000.0;
        assert!((freq - 0.5).abs() <= 0.02, "{freq}");
    }

    #[test]
    fn sampled_report_carries_distribution() {
        let r = decide_sampled(&two_actions(1.0, 0.0), 1.0, 3).unwrap();
        assert_eq!(r.mode, DecisionMode::Sampled);
        let dist = r.action_distribution.unwrap();
        assert_abs_diff_eq!(dist.values().sum::<f64>(), 1.0, epsilon = 1e-12);
    }
}

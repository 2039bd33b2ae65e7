//! Empirical checks of the engine's theorem-level guarantees on a concrete
//! scenario: prescript consistency under context perturbation, decision
//! optimality against an independent oracle, robustness of the action
//! distribution, and alignment with a reference decision corpus.
//!
//! Each perturbation trial draws from its own generator stream
//! `(seed, trial_index)`, so a run with more samples replays every trial of a
//! shorter run and reports are reproducible bit for bit.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::decision::{self, check_temperature, decide, evaluate, select, softmax};
use crate::error::{Error, Result};
use crate::model::{DenseScenario, ScenarioModel};
use crate::synth::random_simplex;

/// Largest |A|·|C|·|E| the optimality oracle will enumerate.
pub const OPTIMALITY_CELL_LIMIT: usize = 1_000_000;
pub const OPTIMALITY_TOLERANCE: f64 = 1e-9;
/// Trials whose perturbation is smaller than this (in L1) carry no usable
/// ratio and are skipped.
const MIN_PERTURBATION: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PerturbationMode {
    /// Perturb P(C).
    Context,
    /// Perturb every row of P(E|C).
    Conditional,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerturbationSpec {
    pub mode: PerturbationMode,
    /// L1 budget on the perturbation, at most 2.
    pub magnitude: f64,
    pub samples: u64,
    pub seed: u64,
}

impl PerturbationSpec {
    pub fn context(magnitude: f64, samples: u64, seed: u64) -> Self {
        Self {
            mode: PerturbationMode::Context,
            magnitude,
            samples,
            seed,
        }
    }

    pub fn check(&self) -> Result<()> {
        if !(0.0..=2.0).contains(&self.magnitude) {
            return Err(Error::param(
                "magnitude",
                format!("{} is outside [0, 2]", self.magnitude),
            ));
        }
        if self.samples < 1 {
            return Err(Error::param("samples", "must be at least 1"));
        }
        Ok(())
    }

    fn trial_rng(&self, trial: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(trial);
        rng
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
}

impl Verdict {
    fn from_failures(failures: &[u64]) -> Self {
        if failures.is_empty() {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifierReport {
    pub theorem: u8,
    pub verdict: Verdict,
    pub measured: BTreeMap<String, f64>,
    pub trials: u64,
    /// Trial indices (generator streams under the perturbation seed) that violated
    /// the threshold. For the optimality and alignment checks these are the
    /// offending action or corpus indices.
    pub failures: Vec<u64>,
}

/// A point on the simplex at L1 distance at most `budget` from `base`:
/// `base + λ (q − base)` for a flat-Dirichlet draw `q`, with λ scaled so the
/// L1 length equals a radius drawn uniformly in `(0, budget]`.
/// Returns the displacement vector.
fn simplex_displacement<R: Rng>(rng: &mut R, base: &[f64], budget: f64) -> Vec<f64> {
    let target = random_simplex(rng, base.len());
    let radius = budget * (1.0 - rng.random::<f64>());
    let direction: Vec<f64> = target.iter().zip(base).map(|(q, p)| q - p).collect();
    let length: f64 = direction.iter().map(|x| x.abs()).sum();
    if length <= 0.0 {
        return vec![0.0; base.len()];
    }
    let lambda = (radius / length).min(1.0);
    direction.iter().map(|x| lambda * x).collect()
}

fn l1(v: &[f64]) -> f64 {
    v.iter().map(|x| x.abs()).sum()
}

fn measured(pairs: &[(&str, f64)]) -> BTreeMap<String, f64> {
    pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
}

/// Lipschitz check of the prescript marginal P(E) = Σ_i P(c_i) P(E|c_i).
///
/// Context mode perturbs P(C) and measures ‖ΔP(E)‖₁ / TV(C, C′).
/// Conditional mode perturbs each row of P(E|C) and measures
/// ‖ΔP(E)‖₁ / max_i TV(P(E|c_i), P′(E|c_i)).
pub fn check_consistency(model: &ScenarioModel, pert: &PerturbationSpec, l_max: f64) -> Result<VerifierReport> {
    pert.check()?;
    if l_max.is_nan() || l_max <= 0.0 {
        return Err(Error::param("l_max", "must be positive"));
    }
    let d = DenseScenario::from_model(model)?;
    let (n, m) = (d.n_dicta(), d.n_prescripts());
    let mut worst = 0.0f64;
    let mut trials = 0u64;
    let mut failures = Vec::new();

    if pert.magnitude > 0.0 {
        for t in 0..pert.samples {
            let mut rng = pert.trial_rng(t);
            let (delta_marginal, distance) = match pert.mode {
                PerturbationMode::Context => {
                    let delta = simplex_displacement(&mut rng, &d.context, pert.magnitude);
                    (d.prescript_marginal(&delta), 0.5 * l1(&delta))
                }
                PerturbationMode::Conditional => {
                    let mut out = vec![0.0; m];
                    let mut distance = 0.0f64;
                    for i in 0..n {
                        let row = &d.conditional[i * m..(i + 1) * m];
                        let delta = simplex_displacement(&mut rng, row, pert.magnitude);
                        distance = distance.max(0.5 * l1(&delta));
                        for (slot, dx) in out.iter_mut().zip(&delta) {
                            *slot += d.context[i] * dx;
                        }
                    }
                    (out, distance)
                }
            };
            if 2.0 * distance < MIN_PERTURBATION {
                continue;
            }
            trials += 1;
            let ratio = l1(&delta_marginal) / distance;
            worst = worst.max(ratio);
            if ratio > l_max {
                failures.push(t);
            }
        }
    }

    Ok(VerifierReport {
        theorem: 1,
        verdict: Verdict::from_failures(&failures),
        measured: measured(&[("lipschitz_estimate", worst), ("l_max", l_max)]),
        trials,
        failures,
    })
}

/// Compensated sum, used by the optimality oracle so its accumulation order
/// differs from the engine's.
fn kahan_sum(values: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut carry = 0.0;
    for v in values {
        let y = v - carry;
        let t = sum + y;
        carry = (t - sum) - y;
        sum = t;
    }
    sum
}

/// Oracle expected utility straight from the model's maps: cells visited
/// dictum-major in reverse id order, compensated summation.
pub fn oracle_expected_utility(model: &ScenarioModel, action: &str) -> f64 {
    let dicta = model.dictum_ids();
    let prescripts = model.prescript_ids();
    let cells = dicta.iter().rev().flat_map(|c| {
        prescripts.iter().rev().map(move |e| {
            let u = model.utilities.0[action][*c][*e];
            model.objective_weight(e)
                * model.baseline_weight(e, c)
                * model.context.0[*c]
                * model.conditional.0[*c][*e]
                * u
        })
    });
    kahan_sum(cells)
}

/// Exhaustive check that `decide` returns an oracle-optimal action.
pub fn check_optimality(model: &ScenarioModel) -> Result<VerifierReport> {
    let cells = model.actions.len() * model.dicta.len() * model.prescripts.len();
    if cells > OPTIMALITY_CELL_LIMIT {
        return Err(Error::TooLarge {
            cells,
            limit: OPTIMALITY_CELL_LIMIT,
        });
    }
    let report = decide(model)?;
    let actions = model.action_ids();
    let oracle: Vec<f64> = actions
        .iter()
        .map(|a| oracle_expected_utility(model, a))
        .collect();
    let best = oracle.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let chosen_idx = actions
        .iter()
        .position(|a| *a == report.chosen_action)
        .expect("decide returns a declared action");
    let gap = best - oracle[chosen_idx];
    let failures: Vec<u64> = if gap > OPTIMALITY_TOLERANCE {
        (0..actions.len())
            .filter(|&k| oracle[k] - oracle[chosen_idx] > OPTIMALITY_TOLERANCE)
            .map(|k| k as u64)
            .collect()
    } else {
        Vec::new()
    };
    let engine_gap = (report.expected_utilities[&report.chosen_action] - oracle[chosen_idx]).abs();
    Ok(VerifierReport {
        theorem: 2,
        verdict: Verdict::from_failures(&failures),
        measured: measured(&[
            ("utility_gap", gap),
            ("oracle_max", best),
            ("chosen_utility", oracle[chosen_idx]),
            ("engine_oracle_difference", engine_gap),
        ]),
        trials: actions.len() as u64,
        failures,
    })
}

/// Sensitivity of the softmax action distribution to context perturbations:
/// K̂ = max ‖ΔP(A)‖₁ / ‖ΔP(C)‖₁. Also counts perturbations that change the
/// deterministic argmax.
pub fn check_robustness(
    model: &ScenarioModel,
    pert: &PerturbationSpec,
    k_max: f64,
    temperature: f64,
) -> Result<VerifierReport> {
    pert.check()?;
    check_temperature(temperature)?;
    if pert.mode != PerturbationMode::Context {
        return Err(Error::param(
            "mode",
            "robustness is measured against context perturbations only",
        ));
    }
    if k_max.is_nan() || k_max <= 0.0 {
        return Err(Error::param("k_max", "must be positive"));
    }
    let d = DenseScenario::from_model(model)?;
    let base_eval = evaluate(&d, &d.context);
    let base_choice = select(&d, &base_eval).chosen;
    let base_probs = softmax(&base_eval.utilities, temperature);

    let mut worst = 0.0f64;
    let mut flips = 0u64;
    let mut min_flip = f64::INFINITY;
    let mut trials = 0u64;
    let mut failures = Vec::new();

    if pert.magnitude > 0.0 {
        let mut shifted = vec![0.0; d.n_dicta()];
        for t in 0..pert.samples {
            let mut rng = pert.trial_rng(t);
            let delta = simplex_displacement(&mut rng, &d.context, pert.magnitude);
            let size = l1(&delta);
            if size < MIN_PERTURBATION {
                continue;
            }
            trials += 1;
            for ((s, p), dx) in shifted.iter_mut().zip(&d.context).zip(&delta) {
                *s = (p + dx).max(0.0);
            }
            let eval = evaluate(&d, &shifted);
            let probs = softmax(&eval.utilities, temperature);
            let change: f64 = probs.iter().zip(&base_probs).map(|(a, b)| (a - b).abs()).sum();
            let ratio = change / size;
            worst = worst.max(ratio);
            if ratio > k_max {
                failures.push(t);
            }
            if select(&d, &eval).chosen != base_choice {
                flips += 1;
                min_flip = min_flip.min(size);
            }
        }
    }

    let mut values = vec![
        ("robustness_estimate", worst),
        ("k_max", k_max),
        ("temperature", temperature),
        ("argmax_flips", flips as f64),
    ];
    if flips > 0 {
        values.push(("min_flip_perturbation", min_flip));
    }
    Ok(VerifierReport {
        theorem: 3,
        verdict: Verdict::from_failures(&failures),
        measured: measured(&values),
        trials,
        failures,
    })
}

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx > 0.0 && syy > 0.0 {
        (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0)
    } else if x == y {
        1.0
    } else {
        0.0
    }
}

/// Agreement between `decide` and a reference corpus of (scenario, action).
/// Passes iff the exact-match rate exceeds `theta`.
pub fn check_alignment(reference: &[(ScenarioModel, String)], theta: f64) -> Result<VerifierReport> {
    if reference.is_empty() {
        return Err(Error::Empty("reference corpus"));
    }
    if !(0.0..=1.0).contains(&theta) {
        return Err(Error::param("theta", format!("{theta} is outside [0, 1]")));
    }
    let mut matches = 0u64;
    let mut disagreements = Vec::new();
    let mut reference_utility = Vec::with_capacity(reference.len());
    let mut best_utility = Vec::with_capacity(reference.len());
    for (k, (model, action)) in reference.iter().enumerate() {
        if !model.has_action(action) {
            return Err(Error::UnknownId {
                kind: "action",
                id: action.clone(),
            });
        }
        let report = decision::decide(model)?;
        if &report.chosen_action == action {
            matches += 1;
        } else {
            disagreements.push(k as u64);
        }
        reference_utility.push(report.expected_utilities[action]);
        best_utility.push(report.expected_utilities[&report.chosen_action]);
    }
    let agreement = matches as f64 / reference.len() as f64;
    let verdict = if agreement > theta {
        Verdict::Pass
    } else {
        Verdict::Fail
    };
    // Keep the verdict/failure-list invariant: a failing run always names cases.
    let failures = if verdict == Verdict::Fail && disagreements.is_empty() {
        (0..reference.len() as u64).collect()
    } else if verdict == Verdict::Pass {
        Vec::new()
    } else {
        disagreements
    };
    Ok(VerifierReport {
        theorem: 5,
        verdict,
        measured: measured(&[
            ("agreement", agreement),
            ("pearson", pearson(&reference_utility, &best_utility)),
            ("theta", theta),
            ("disagreements", (reference.len() as u64 - matches) as f64),
        ]),
        trials: reference.len() as u64,
        failures,
    })
}

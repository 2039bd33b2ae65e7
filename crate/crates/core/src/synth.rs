//! Scenario generators for tests, batteries and demos.

use rand::Rng;
use rand_distr::{Distribution, Exp1};

use crate::model::{
    ActionDef, ContextDistribution, Dictum, Prescript, PrescriptConditional, ScenarioModel,
    UtilityTensor, DEFAULT_U_MAX,
};

/// A point drawn uniformly from the probability simplex (flat Dirichlet).
pub fn random_simplex<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<f64> {
    let mut v: Vec<f64> = (0..n).map(|_| Exp1.sample(rng)).collect();
    let total: f64 = v.iter().sum();
    if total > 0.0 {
        for x in &mut v {
            *x /= total;
        }
    } else {
        v.fill(1.0 / n as f64);
    }
    v
}

/// Valid scenario with uniform P(C), uniform P(E|C) and zero utilities.
/// Prescript ranks follow the order given.
pub fn uniform_scenario(dicta: &[&str], prescripts: &[&str], actions: &[&str]) -> ScenarioModel {
    let pc = 1.0 / dicta.len() as f64;
    let pe = 1.0 / prescripts.len() as f64;
    let context = ContextDistribution(dicta.iter().map(|c| (c.to_string(), pc)).collect());
    let conditional = PrescriptConditional(
        dicta
            .iter()
            .map(|c| {
                let row = prescripts.iter().map(|e| (e.to_string(), pe)).collect();
                (c.to_string(), row)
            })
            .collect(),
    );
    let mut utilities = UtilityTensor::default();
    for a in actions {
        for c in dicta {
            for e in prescripts {
                utilities.set(a, c, e, 0.0);
            }
        }
    }
    let mut model = ScenarioModel {
        name: "synthetic".into(),
        description: String::new(),
        u_max: DEFAULT_U_MAX,
        dicta: dicta
            .iter()
            .map(|id| Dictum {
                id: id.to_string(),
                description: String::new(),
                tags: Vec::new(),
            })
            .collect(),
        prescripts: prescripts
            .iter()
            .enumerate()
            .map(|(k, id)| Prescript {
                id: id.to_string(),
                description: String::new(),
                priority_rank: k as u32 + 1,
            })
            .collect(),
        actions: actions
            .iter()
            .map(|id| ActionDef {
                id: id.to_string(),
                description: String::new(),
            })
            .collect(),
        context,
        conditional,
        utilities,
        objective_weights: None,
        baseline_weights: None,
    };
    model.canonicalize();
    model
}

/// Random valid scenario with flat-Dirichlet probabilities and utilities
/// uniform in `[-utility_scale, utility_scale]`.
pub fn random_scenario<R: Rng + ?Sized>(
    rng: &mut R,
    n_dicta: usize,
    n_prescripts: usize,
    n_actions: usize,
    utility_scale: f64,
) -> ScenarioModel {
    let dicta: Vec<String> = (0..n_dicta).map(|i| format!("c{i}")).collect();
    let prescripts: Vec<String> = (0..n_prescripts).map(|j| format!("e{j}")).collect();
    let actions: Vec<String> = (0..n_actions).map(|k| format!("a{k}")).collect();
    let d: Vec<&str> = dicta.iter().map(String::as_str).collect();
    let p: Vec<&str> = prescripts.iter().map(String::as_str).collect();
    let a: Vec<&str> = actions.iter().map(String::as_str).collect();
    let mut model = uniform_scenario(&d, &p, &a);
    model.name = "random".into();
    model.u_max = utility_scale.max(f64::MIN_POSITIVE);

    for (c, pc) in d.iter().zip(random_simplex(rng, n_dicta)) {
        model.context.0.insert(c.to_string(), pc);
    }
    for c in &d {
        let row = p
            .iter()
            .map(|e| e.to_string())
            .zip(random_simplex(rng, n_prescripts))
            .collect();
        model.conditional.0.insert(c.to_string(), row);
    }
    for act in &a {
        for c in &d {
            for e in &p {
                let u = rng.random_range(-utility_scale..=utility_scale);
                model.utilities.set(act, c, e, u);
            }
        }
    }
    for pr in &mut model.prescripts {
        pr.priority_rank = rng.random_range(1..=n_prescripts as u32);
    }
    model
}

/// Random valid scenario whose dimensions are drawn uniformly from `1..=max`.
pub fn random_scenario_up_to<R: Rng + ?Sized>(
    rng: &mut R,
    max_dicta: usize,
    max_prescripts: usize,
    max_actions: usize,
    utility_scale: f64,
) -> ScenarioModel {
    let n = rng.random_range(1..=max_dicta);
    let m = rng.random_range(1..=max_prescripts);
    let k = rng.random_range(1..=max_actions);
    random_scenario(rng, n, m, k, utility_scale)
}

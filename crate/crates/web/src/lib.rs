//! Browser bindings for the trolley demo page in `www/`.
//!
//! Every export returns a JSON string. The `*_json` functions hold the logic
//! and are callable natively; the `#[wasm_bindgen]` wrappers only convert
//! errors to JavaScript exceptions.

use std::collections::BTreeMap;

use serde::Serialize;
use wasm_bindgen::prelude::*;

use ethreason_core::decision::{action_distribution, decide};
use ethreason_core::learning::{run_learning, LearningConfig};
use ethreason_core::model::{ObjectiveWeights, ScenarioModel};
use ethreason_core::scenario_io::{apply_weights, bundled_scenarios, bundled_weights};

const MAX_EPISODES: u32 = 50_000;
const MAX_CURVE_POINTS: u32 = 500;

#[derive(Debug, Serialize)]
struct ScenarioSummary {
    index: usize,
    name: String,
    description: String,
    prescripts: Vec<String>,
    actions: Vec<String>,
    overlays: Vec<String>,
}

#[derive(Debug, Serialize)]
struct Curve {
    actions: Vec<String>,
    temperatures: Vec<f64>,
    /// One row per temperature, columns in `actions` order.
    probabilities: Vec<Vec<f64>>,
}

#[derive(Debug, Serialize)]
struct Trajectory {
    converged: bool,
    convergence_step: Option<u64>,
    final_probability: f64,
    t: Vec<u64>,
    p: Vec<f64>,
}

fn scenario(index: usize) -> Result<ScenarioModel, String> {
    bundled_scenarios()
        .into_iter()
        .nth(index)
        .ok_or_else(|| format!("no bundled scenario at index {index}"))
}

fn to_json<T: Serialize>(value: &T) -> Result<String, String> {
    serde_json::to_string(value).map_err(|e| e.to_string())
}

/// Names, prescripts, actions and available weight overlays of the bundled
/// scenarios.
pub fn scenarios_json() -> Result<String, String> {
    let overlays: Vec<String> = bundled_weights().into_iter().map(|(n, _)| n.to_owned()).collect();
    let list: Vec<ScenarioSummary> = bundled_scenarios()
        .into_iter()
        .enumerate()
        .map(|(index, m)| ScenarioSummary {
            index,
            overlays: overlays
                .iter()
                .filter(|o| o.starts_with(&format!("{}-", m.name)))
                .cloned()
                .collect(),
            prescripts: m.prescript_ids().iter().map(|s| s.to_string()).collect(),
            actions: m.action_ids().iter().map(|s| s.to_string()).collect(),
            name: m.name,
            description: m.description,
        })
        .collect();
    to_json(&list)
}

/// Decision report for a bundled scenario under the given objective weights
/// (prescript id to α) and an optional named overlay ("" for none).
pub fn decide_json(index: usize, alpha: &str, overlay: &str) -> Result<String, String> {
    let mut model = scenario(index)?;
    if !overlay.is_empty() {
        let (_, w) = bundled_weights()
            .into_iter()
            .find(|(n, _)| *n == overlay)
            .ok_or_else(|| format!("unknown overlay `{overlay}`"))?;
        model = apply_weights(&model, &w).map_err(|e| e.to_string())?;
    }
    if !alpha.trim().is_empty() {
        let weights: BTreeMap<String, f64> = serde_json::from_str(alpha).map_err(|e| e.to_string())?;
        let mut merged = model.objective_weights.clone().unwrap_or_default();
        merged.0.extend(weights);
        model.objective_weights = Some(ObjectiveWeights(merged.0));
    }
    let report = decide(&model).map_err(|e| e.to_string())?;
    to_json(&report)
}

/// Softmax action probabilities at `points` log-spaced temperatures.
pub fn softmax_curve_json(index: usize, tau_min: f64, tau_max: f64, points: u32) -> Result<String, String> {
    if !(tau_min > 0.0 && tau_max > tau_min && tau_max.is_finite()) {
        return Err("need 0 < tau_min < tau_max".into());
    }
    if !(2..=MAX_CURVE_POINTS).contains(&points) {
        return Err(format!("points must be in 2..={MAX_CURVE_POINTS}"));
    }
    let model = scenario(index)?;
    let actions: Vec<String> = model.action_ids().iter().map(|s| s.to_string()).collect();
    let (lo, hi) = (tau_min.ln(), tau_max.ln());
    let mut temperatures = Vec::with_capacity(points as usize);
    let mut probabilities = Vec::with_capacity(points as usize);
    for k in 0..points {
        let tau = (lo + (hi - lo) * k as f64 / (points - 1) as f64).exp();
        let dist = action_distribution(&model, tau).map_err(|e| e.to_string())?;
        temperatures.push(tau);
        probabilities.push(actions.iter().map(|a| dist[a]).collect());
    }
    to_json(&Curve {
        actions,
        temperatures,
        probabilities,
    })
}

/// Probability of the optimal action over a seeded learning run.
pub fn learning_json(index: usize, episodes: u32, seed: u32, noise: f64, stride: u32) -> Result<String, String> {
    if episodes == 0 || episodes > MAX_EPISODES {
        return Err(format!("episodes must be in 1..={MAX_EPISODES}"));
    }
    let model = scenario(index)?;
    let config = LearningConfig {
        episodes: episodes.into(),
        seed: seed.into(),
        noise,
        window: u64::from(episodes).min(500),
        record_every: stride.max(1).into(),
        ..LearningConfig::default()
    };
    let r = run_learning(&model, &config).map_err(|e| e.to_string())?;
    to_json(&Trajectory {
        converged: r.converged,
        convergence_step: r.convergence_step,
        final_probability: r.final_probability,
        t: r.trajectory.iter().map(|p| p.t).collect(),
        p: r.trajectory.iter().map(|p| p.p_best).collect(),
    })
}

fn js(r: Result<String, String>) -> Result<String, JsValue> {
    r.map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn scenarios() -> Result<String, JsValue> {
    js(scenarios_json())
}

#[wasm_bindgen(js_name = decideScenario)]
pub fn decide_scenario(index: usize, alpha: &str, overlay: &str) -> Result<String, JsValue> {
    js(decide_json(index, alpha, overlay))
}

#[wasm_bindgen(js_name = softmaxCurve)]
pub fn softmax_curve(index: usize, tau_min: f64, tau_max: f64, points: u32) -> Result<String, JsValue> {
    js(softmax_curve_json(index, tau_min, tau_max, points))
}

#[wasm_bindgen(js_name = learningTrajectory)]
pub fn learning_trajectory(index: usize, episodes: u32, seed: u32, noise: f64, stride: u32) -> Result<String, JsValue> {
    js(learning_json(index, episodes, seed, noise, stride))
}

//! Iterative policy learning used to observe convergence of the decision
//! policy.
//!
//! Each episode samples a dictum from P(C), picks an action by softmax over
//! the per-(dictum, action) preferences, and moves the preference toward the
//! observed reward with step 1/(1 + visits). Exploration temperature decays as
//! max(τ_min, τ₀/√t).

use std::collections::BTreeMap;
use std::io::Write;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::decision::{evaluate, select, softmax};
use crate::error::{Error, Result};
use crate::model::{DenseScenario, ScenarioModel};

#[derive(Debug, Clone, PartialEq)]
pub struct LearningConfig {
    pub episodes: u64,
    pub seed: u64,
    pub eps_conv: f64,
    pub window: u64,
    pub tau0: f64,
    pub tau_min: f64,
    /// Half-width of zero-mean uniform reward noise.
    pub noise: f64,
    /// Keep every n-th (t, p) point in the report trajectory.
    pub record_every: u64,
}

impl Default for LearningConfig {
    fn default() -> Self {
        Self {
            episodes: 10_000,
            seed: 0,
            eps_conv: 0.05,
            window: 500,
            tau0: 1.0,
            tau_min: 0.05,
            noise: 0.0,
            record_every: 1,
        }
    }
}

impl LearningConfig {
    fn check(&self) -> Result<()> {
        if self.episodes == 0 {
            return Err(Error::param("episodes", "must be positive"));
        }
        if self.window == 0 || self.window > self.episodes {
            return Err(Error::param("window", "must be in 1..=episodes"));
        }
        if !(self.eps_conv > 0.0 && self.eps_conv < 1.0) {
            return Err(Error::param("eps_conv", "must be in (0, 1)"));
        }
        if !(self.tau0.is_finite() && self.tau0 > 0.0) {
            return Err(Error::param("tau0", "must be finite and positive"));
        }
        if !(self.tau_min.is_finite() && self.tau_min > 0.0) {
            return Err(Error::param("tau_min", "must be finite and positive"));
        }
        if !(self.noise.is_finite() && self.noise >= 0.0) {
            return Err(Error::param("noise", "must be finite and non-negative"));
        }
        if self.record_every == 0 {
            return Err(Error::param("record_every", "must be positive"));
        }
        Ok(())
    }

    pub fn temperature_at(&self, step: u64) -> f64 {
        (self.tau0 / (step.max(1) as f64).sqrt()).max(self.tau_min)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyState {
    pub dicta: Vec<String>,
    pub actions: Vec<String>,
    /// Visit count per (dictum, action), at `c * |A| + a`.
    pub visits: Vec<u64>,
    /// Accumulated reward per (dictum, action).
    pub reward_sums: Vec<f64>,
    pub preferences: Vec<f64>,
    pub step: u64,
    pub temperature: f64,
}

impl PolicyState {
    fn new(dicta: Vec<String>, actions: Vec<String>, temperature: f64) -> Self {
        let cells = dicta.len() * actions.len();
        Self {
            dicta,
            actions,
            visits: vec![0; cells],
            reward_sums: vec![0.0; cells],
            preferences: vec![0.0; cells],
            step: 0,
            temperature,
        }
    }

    fn row(&self, c: usize) -> std::ops::Range<usize> {
        let k = self.actions.len();
        c * k..(c + 1) * k
    }

    pub fn preference(&self, dictum: &str, action: &str) -> Option<f64> {
        let c = self.dicta.iter().position(|d| d == dictum)?;
        let a = self.actions.iter().position(|x| x == action)?;
        Some(self.preferences[c * self.actions.len() + a])
    }

    /// Softmax action distribution for one dictum at the state's temperature.
    pub fn policy(&self, c: usize) -> Vec<f64> {
        softmax(&self.preferences[self.row(c)], self.temperature)
    }

    /// Highest-preference action per dictum (ties to the smaller id).
    pub fn greedy_policy(&self) -> BTreeMap<String, String> {
        (0..self.dicta.len())
            .map(|c| {
                let row = &self.preferences[self.row(c)];
                let mut best = 0;
                for a in 1..row.len() {
                    if row[a] > row[best] {
                        best = a;
                    }
                }
                (self.dicta[c].clone(), self.actions[best].clone())
            })
            .collect()
    }
}

/// Max over dicta of the L1 distance between the induced softmax policies.
pub fn policy_distance(p1: &PolicyState, p2: &PolicyState) -> Result<f64> {
    if p1.dicta != p2.dicta || p1.actions != p2.actions {
        return Err(Error::ShapeMismatch(
            "policy states cover different dicta or actions".into(),
        ));
    }
    Ok((0..p1.dicta.len())
        .map(|c| {
            p1.policy(c)
                .iter()
                .zip(p2.policy(c))
                .map(|(a, b)| (a - b).abs())
                .sum::<f64>()
        })
        .fold(0.0, f64::max))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub t: u64,
    pub dictum: String,
    pub action: String,
    pub reward: f64,
    pub p_best: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub t: u64,
    pub p_best: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub scenario: String,
    pub converged: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub convergence_step: Option<u64>,
    pub final_probability: f64,
    pub stability_window: u64,
    pub eps_conv: f64,
    pub episodes: u64,
    /// Utility-maximal action per dictum; the learner's target.
    pub targets: BTreeMap<String, String>,
    pub trajectory: Vec<TrajectoryPoint>,
    /// Full per-episode log, exported separately as delimited rows.
    #[serde(skip)]
    pub log: Vec<EpisodeRecord>,
}

/// Step-by-step learner. [`run_learning`] drives one to completion.
pub struct Learner {
    dense: DenseScenario,
    config: LearningConfig,
    state: PolicyState,
    /// Exact per-dictum reward of every action, at `c * |A| + a`.
    rewards: Vec<f64>,
    targets: Vec<usize>,
    context_sampler: WeightedIndex<f64>,
    rng: ChaCha8Rng,
}

impl Learner {
    pub fn new(model: &ScenarioModel, config: LearningConfig) -> Result<Self> {
        config.check()?;
        let dense = DenseScenario::from_model(model)?;
        let (n, k) = (dense.n_dicta(), dense.n_actions());
        let mut rewards = Vec::with_capacity(n * k);
        let mut targets = Vec::with_capacity(n);
        let mut onehot = vec![0.0; n];
        for c in 0..n {
            onehot.fill(0.0);
            onehot[c] = 1.0;
            let eval = evaluate(&dense, &onehot);
            targets.push(select(&dense, &eval).chosen);
            rewards.extend_from_slice(&eval.utilities);
        }
        let context_sampler = WeightedIndex::new(&dense.context)
            .map_err(|e| Error::param("context", e.to_string()))?;
        let state = PolicyState::new(
            dense.dicta.clone(),
            dense.actions.clone(),
            config.temperature_at(1),
        );
        let rng = ChaCha8Rng::seed_from_u64(config.seed);
        Ok(Self {
            dense,
            config,
            state,
            rewards,
            targets,
            context_sampler,
            rng,
        })
    }

    pub fn state(&self) -> &PolicyState {
        &self.state
    }

    /// Utility-maximal action id per dictum.
    pub fn targets(&self) -> BTreeMap<String, String> {
        self.dense
            .dicta
            .iter()
            .zip(&self.targets)
            .map(|(c, &a)| (c.clone(), self.dense.actions[a].clone()))
            .collect()
    }

    /// Runs one episode and returns its record.
    pub fn step(&mut self) -> EpisodeRecord {
        let t = self.state.step + 1;
        let tau = self.config.temperature_at(t);
        self.state.temperature = tau;
        let c = self.context_sampler.sample(&mut self.rng);
        let row = self.state.row(c);

        // Every action is tried once per dictum before softmax exploration.
        let untried: Vec<usize> = (0..self.dense.n_actions())
            .filter(|&a| self.state.visits[row.start + a] == 0)
            .collect();
        let a = if untried.is_empty() {
            let probs = softmax(&self.state.preferences[row.clone()], tau);
            WeightedIndex::new(&probs)
                .expect("softmax weights are positive")
                .sample(&mut self.rng)
        } else {
            untried[self.rng.random_range(0..untried.len())]
        };

        let cell = row.start + a;
        let mut reward = self.rewards[cell];
        if self.config.noise > 0.0 {
            reward += self.rng.random_range(-self.config.noise..=self.config.noise);
        }
        let rate = 1.0 / (1.0 + self.state.visits[cell] as f64);
        self.state.preferences[cell] += rate * (reward - self.state.preferences[cell]);
        self.state.visits[cell] += 1;
        self.state.reward_sums[cell] += reward;
        self.state.step = t;

        let p_best = self.state.policy(c)[self.targets[c]];
        EpisodeRecord {
            t,
            dictum: self.dense.dicta[c].clone(),
            action: self.dense.actions[a].clone(),
            reward,
            p_best,
        }
    }
}

/// Runs `config.episodes` episodes and reports whether the probability of
/// the utility-maximal action stayed at or above 1 − eps_conv for the last
/// `config.window` episodes.
pub fn run_learning(model: &ScenarioModel, config: &LearningConfig) -> Result<ConvergenceReport> {
    let mut learner = Learner::new(model, config.clone())?;
    let threshold = 1.0 - config.eps_conv;
    let mut streak = 0u64;
    let mut streak_complete_at = None;
    let mut trajectory = Vec::new();
    let mut log = Vec::with_capacity(config.episodes as usize);
    let mut last = 0.0;

    for _ in 0..config.episodes {
        let record = learner.step();
        if record.p_best >= threshold {
            streak += 1;
            if streak == config.window {
                streak_complete_at = Some(record.t);
            }
        } else {
            streak = 0;
            streak_complete_at = None;
        }
        if record.t % config.record_every == 0 || record.t == config.episodes {
            trajectory.push(TrajectoryPoint {
                t: record.t,
                p_best: record.p_best,
            });
        }
        last = record.p_best;
        log.push(record);
    }

    let converged = streak >= config.window;
    Ok(ConvergenceReport {
        scenario: model.name.clone(),
        converged,
        convergence_step: if converged { streak_complete_at } else { None },
        final_probability: last,
        stability_window: config.window,
        eps_conv: config.eps_conv,
        episodes: config.episodes,
        targets: learner.targets(),
        trajectory,
        log,
    })
}

/// Writes `t,dictum,action,reward,p_best` rows with a header.
pub fn write_trajectory_csv<W: Write>(records: &[EpisodeRecord], out: W) -> Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    let io = |e: csv::Error| Error::Io {
        path: "trajectory".into(),
        source: std::io::Error::other(e),
    };
    for r in records {
        writer.serialize(r).map_err(io)?;
    }
    writer.flush().map_err(|e| Error::Io {
        path: "trajectory".into(),
        source: e,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decision::decide;
    use crate::model::ContextDistribution;
    use crate::synth;

    fn two_actions(u1: f64, u2: f64) -> ScenarioModel {
        let mut m = synth::uniform_scenario(&["c1"], &["e1"], &["a1", "a2"]);
        m.utilities.set("a1", "c1", "e1", u1);
        m.utilities.set("a2", "c1", "e1", u2);
        m
    }

    #[test]
    fn single_action_converges_at_window() {
        let m = synth::uniform_scenario(&["c1"], &["e1"], &["only"]);
        let cfg = LearningConfig {
            episodes: 800,
            window: 100,
            ..Default::default()
        };
        let r = run_learning(&m, &cfg).unwrap();
        assert!(r.converged);
        assert_eq!(r.convergence_step, Some(100));
        assert_eq!(r.final_probability, 1.0);
    }

    #[test]
    fn unit_gap_converges_to_decided_action() {
        let m = two_actions(1.0, 0.0);
        let target = decide(&m).unwrap().chosen_action;
        let r = run_learning(&m, &LearningConfig::default()).unwrap();
        assert!(r.converged);
        assert_eq!(r.targets["c1"], target);
        assert!(r.final_probability >= 0.99);
    }

    #[test]
    fn indifference_never_converges() {
        let m = two_actions(0.5, 0.5);
        let cfg = LearningConfig {
            eps_conv: 0.01,
            ..Default::default()
        };
        let r = run_learning(&m, &cfg).unwrap();
        assert!(!r.converged);
        assert_eq!(r.convergence_step, None);
        assert!((r.final_probability - 0.5).abs() < 1e-12);
    }

    #[test]
    fn fixed_seed_reproduces_trajectory() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let m = synth::random_scenario(&mut rng, 3, 2, 3, 5.0);
        let cfg = LearningConfig {
            episodes: 2000,
            noise: 0.5,
            seed: 17,
            ..Default::default()
        };
        let a = run_learning(&m, &cfg).unwrap();
        let b = run_learning(&m, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.log, b.log);
    }

    #[test]
    fn invalid_parameters_rejected() {
        let m = two_actions(1.0, 0.0);
        for cfg in [
            LearningConfig { episodes: 0, ..Default::default() },
            LearningConfig { episodes: 10, window: 20, ..Default::default() },
            LearningConfig { eps_conv: 1.0, ..Default::default() },
            LearningConfig { tau_min: 0.0, ..Default::default() },
            LearningConfig { noise: -1.0, ..Default::default() },
        ] {
            assert!(run_learning(&m, &cfg).is_err(), "{cfg:?}");
        }
    }

    #[test]
    fn learning_rate_is_robbins_monro() {
        // Step n (1-based) uses 1/n: the harmonic series diverges, Σ 1/n² < π²/6.
        let rates: Vec<f64> = (0..100_000u64).map(|v| 1.0 / (1.0 + v as f64)).collect();
        let sum: f64 = rates.iter().sum();
        let sq: f64 = rates.iter().map(|r| r * r).sum();
        assert!(sum > 12.0);
        assert!(sq < std::f64::consts::PI.powi(2) / 6.0);
    }

    #[test]
    fn policy_distance_examples() {
        let m = two_actions(1.0, 0.0);
        let mut learner = Learner::new(&m, LearningConfig::default()).unwrap();
        for _ in 0..50 {
            learner.step();
        }
        let s = learner.state().clone();
        assert_eq!(policy_distance(&s, &s).unwrap(), 0.0);

        let mut left = s.clone();
        let mut right = s.clone();
        left.preferences = vec![1.0, 0.0];
        right.preferences = vec![0.0, 1.0];
        left.temperature = 1e-3;
        right.temperature = 1e-3;
        assert!((policy_distance(&left, &right).unwrap() - 2.0).abs() < 1e-12);

        let other = synth::uniform_scenario(&["c1", "c2"], &["e1"], &["a1", "a2"]);
        let foreign = Learner::new(&other, LearningConfig::default()).unwrap();
        assert!(policy_distance(&s, foreign.state()).is_err());
    }

    #[test]
    fn late_successive_states_are_close() {
        let m = two_actions(1.0, 0.0);
        let mut learner = Learner::new(&m, LearningConfig::default()).unwrap();
        for _ in 0..5000 {
            learner.step();
        }
        let before = learner.state().clone();
        learner.step();
        assert!(policy_distance(&before, learner.state()).unwrap() < 1e-3);
    }

    #[test]
    fn policy_updates_shrink_over_time() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let m = synth::random_scenario(&mut rng, 2, 2, 3, 3.0);
        let cfg = LearningConfig {
            noise: 1.0,
            seed: 5,
            ..Default::default()
        };
        let mut learner = Learner::new(&m, cfg).unwrap();
        let mut steps = Vec::new();
        let mut prev = learner.state().clone();
        for _ in 0..10_000 {
            learner.step();
            steps.push(policy_distance(&prev, learner.state()).unwrap());
            prev = learner.state().clone();
        }
        let median = |s: &[f64]| {
            let mut v = s.to_vec();
            v.sort_by(f64::total_cmp);
            v[v.len() / 2]
        };
        assert!(median(&steps[9000..]) < median(&steps[..1000]));
    }

    #[test]
    fn learned_argmax_matches_per_dictum_decision() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut checked = 0;
        for round in 0..40 {
            let mut m = synth::random_scenario(&mut rng, 3, 2, 3, 5.0);
            let n = m.dicta.len() as f64;
            m.context = ContextDistribution(m.dictum_ids().iter().map(|c| (c.to_string(), 1.0 / n)).collect());
            let cfg = LearningConfig { episodes: 3000, seed: round, ..Default::default() };
            let r = run_learning(&m, &cfg).unwrap();
            let mut learner = Learner::new(&m, cfg.clone()).unwrap();
            for _ in 0..cfg.episodes {
                learner.step();
            }
            let learned = learner.state().greedy_policy();
            for c in m.dictum_ids() {
                let only = m.with_context(ContextDistribution(
                    m.dictum_ids().iter().map(|d| (d.to_string(), if *d == c { 1.0 } else { 0.0 })).collect(),
                ));
                let report = decide(&only).unwrap();
                let mut us: Vec<f64> = report.expected_utilities.values().copied().collect();
                us.sort_by(|a, b| b.total_cmp(a));
                if us[0] - us[1] > 0.05 {
                    assert_eq!(learned[c], report.chosen_action, "round {round}, dictum {c}");
                    assert_eq!(r.targets[c], report.chosen_action);
                    checked += 1;
                }
            }
        }
        assert!(checked > 50);
    }

    #[test]
    fn trajectory_csv_has_header_and_rows() {
        let m = two_actions(1.0, 0.0);
        let r = run_learning(&m, &LearningConfig { episodes: 10, window: 5, ..Default::default() }).unwrap();
        let mut buf = Vec::new();
        write_trajectory_csv(&r.log, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("t,dictum,action,reward,p_best"));
        assert_eq!(lines.count(), 10);
    }
}

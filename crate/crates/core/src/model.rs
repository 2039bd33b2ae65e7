//! Scenario data model: circumstantial dicta, ethical prescripts, actions,
//! the context distribution P(C), the conditional table P(E|C), the utility
//! tensor u(a|c,e) and the optional objective/baseline weights.
//!
//! Every collection is keyed by string id and stored in a `BTreeMap` or an
//! id-sorted `Vec`, so iteration order is always lexicographic. Numerical
//! routines work on [`DenseScenario`], an index-based view built once from a
//! validated model.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute tolerance for every normalization constraint.
pub const PROB_TOLERANCE: f64 = 1e-9;
pub const DEFAULT_U_MAX: f64 = 1000.0;
pub const MAX_ID_LEN: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dictum {
    pub id: String,
    #[serde(default)]
    pub description: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tags: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prescript {
    pub id: String,
    #[serde(default)]
    pub description: String,
    /// 1 is the highest priority. Only consulted when breaking ties.
    pub priority_rank: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionDef {
    pub id: String,
    #[serde(default)]
    pub description: String,
}

/// P(C): dictum id -> probability.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ContextDistribution(pub BTreeMap<String, f64>);

/// P(E|C): dictum id -> prescript id -> probability.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PrescriptConditional(pub BTreeMap<String, BTreeMap<String, f64>>);

/// u(a|c,e): action id -> dictum id -> prescript id -> utility.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct UtilityTensor(pub BTreeMap<String, BTreeMap<String, BTreeMap<String, f64>>>);

/// α_j per prescript. Prescripts not listed weigh 1.0.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ObjectiveWeights(pub BTreeMap<String, f64>);

/// w(e, c): prescript id -> dictum id -> weight. Missing cells weigh 1.0.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BaselineWeights(pub BTreeMap<String, BTreeMap<String, f64>>);

impl ContextDistribution {
    pub fn get(&self, dictum: &str) -> Option<f64> {
        self.0.get(dictum).copied()
    }
}

impl PrescriptConditional {
    pub fn get(&self, dictum: &str, prescript: &str) -> Option<f64> {
        self.0.get(dictum).and_then(|row| row.get(prescript)).copied()
    }
}

impl UtilityTensor {
    pub fn get(&self, action: &str, dictum: &str, prescript: &str) -> Option<f64> {
        self.0
            .get(action)
            .and_then(|m| m.get(dictum))
            .and_then(|m| m.get(prescript))
            .copied()
    }

    pub fn set(&mut self, action: &str, dictum: &str, prescript: &str, value: f64) {
        self.0
            .entry(action.to_owned())
            .or_default()
            .entry(dictum.to_owned())
            .or_default()
            .insert(prescript.to_owned(), value);
    }
}

impl ObjectiveWeights {
    pub fn weight(&self, prescript: &str) -> f64 {
        self.0.get(prescript).copied().unwrap_or(1.0)
    }
}

impl BaselineWeights {
    pub fn weight(&self, prescript: &str, dictum: &str) -> f64 {
        self.0
            .get(prescript)
            .and_then(|row| row.get(dictum))
            .copied()
            .unwrap_or(1.0)
    }

    pub fn set(&mut self, prescript: &str, dictum: &str, value: f64) {
        self.0
            .entry(prescript.to_owned())
            .or_default()
            .insert(dictum.to_owned(), value);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioModel {
    pub name: String,
    pub description: String,
    pub u_max: f64,
    pub dicta: Vec<Dictum>,
    pub prescripts: Vec<Prescript>,
    pub actions: Vec<ActionDef>,
    pub context: ContextDistribution,
    pub conditional: PrescriptConditional,
    pub utilities: UtilityTensor,
    pub objective_weights: Option<ObjectiveWeights>,
    pub baseline_weights: Option<BaselineWeights>,
}

impl ScenarioModel {
    /// Sorts the dictum, prescript and action lists by id.
    pub fn canonicalize(&mut self) {
        self.dicta.sort_by(|a, b| a.id.cmp(&b.id));
        self.prescripts.sort_by(|a, b| a.id.cmp(&b.id));
        self.actions.sort_by(|a, b| a.id.cmp(&b.id));
    }

    pub fn action_ids(&self) -> Vec<&str> {
        sorted_ids(self.actions.iter().map(|a| a.id.as_str()))
    }

    pub fn dictum_ids(&self) -> Vec<&str> {
        sorted_ids(self.dicta.iter().map(|d| d.id.as_str()))
    }

    pub fn prescript_ids(&self) -> Vec<&str> {
        sorted_ids(self.prescripts.iter().map(|p| p.id.as_str()))
    }

    pub fn prescript(&self, id: &str) -> Option<&Prescript> {
        self.prescripts.iter().find(|p| p.id == id)
    }

    pub fn has_action(&self, id: &str) -> bool {
        self.actions.iter().any(|a| a.id == id)
    }

    pub fn objective_weight(&self, prescript: &str) -> f64 {
        self.objective_weights
            .as_ref()
            .map_or(1.0, |w| w.weight(prescript))
    }

    pub fn baseline_weight(&self, prescript: &str, dictum: &str) -> f64 {
        self.baseline_weights
            .as_ref()
            .map_or(1.0, |w| w.weight(prescript, dictum))
    }

    /// Returns a copy whose context distribution is replaced.
    pub fn with_context(&self, context: ContextDistribution) -> Self {
        Self {
            context,
            ..self.clone()
        }
    }
}

fn sorted_ids<'a>(ids: impl Iterator<Item = &'a str>) -> Vec<&'a str> {
    let mut v: Vec<&str> = ids.collect();
    v.sort_unstable();
    v
}

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    EmptySet,
    InvalidId,
    DuplicateId,
    InvalidRank,
    InvalidBound,
    ProbabilityRange,
    ContextSum,
    ConditionalSum,
    MissingEntry,
    DanglingReference,
    NonFiniteUtility,
    UtilityBound,
    InvalidWeight,
    ZeroObjectiveWeights,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub kind: ViolationKind,
    /// Offending id or id path (`action/dictum/prescript`).
    pub subject: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub residual: Option<f64>,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    fn push(
        &mut self,
        kind: ViolationKind,
        subject: impl Into<String>,
        residual: Option<f64>,
        message: impl Into<String>,
    ) {
        self.violations.push(Violation {
            kind,
            subject: subject.into(),
            residual,
            message: message.into(),
        });
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            return f.write_str("no violations");
        }
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                f.write_str("; ")?;
            }
            write!(f, "{}", v.message)?;
        }
        Ok(())
    }
}

fn check_ids<'a>(
    report: &mut ValidationReport,
    kind: &str,
    ids: impl Iterator<Item = &'a str>,
) -> BTreeSet<&'a str> {
    let mut seen = BTreeSet::new();
    let mut count = 0usize;
    for id in ids {
        count += 1;
        if id.is_empty() {
            report.push(
                ViolationKind::InvalidId,
                "",
                None,
                format!("{kind} id is empty"),
            );
            continue;
        }
        if !id.is_ascii() || id.len() > MAX_ID_LEN {
            report.push(
                ViolationKind::InvalidId,
                id,
                None,
                format!("{kind} id `{id}` must be ASCII and at most {MAX_ID_LEN} characters"),
            );
        }
        if !seen.insert(id) {
            report.push(
                ViolationKind::DuplicateId,
                id,
                None,
                format!("duplicate {kind} id `{id}`"),
            );
        }
    }
    if count == 0 {
        report.push(
            ViolationKind::EmptySet,
            kind,
            None,
            format!("scenario declares no {kind}"),
        );
    }
    seen
}

fn check_probability(report: &mut ValidationReport, subject: String, p: f64) {
    if !p.is_finite() || !(0.0..=1.0).contains(&p) {
        report.push(
            ViolationKind::ProbabilityRange,
            subject.clone(),
            None,
            format!("probability {p} for `{subject}` is outside [0, 1]"),
        );
    }
}

/// Lists every violated invariant. An empty report means the scenario is valid.
pub fn validate_scenario(model: &ScenarioModel) -> ValidationReport {
    let mut report = ValidationReport::default();

    let dicta = check_ids(&mut report, "dicta", model.dicta.iter().map(|d| d.id.as_str()));
    let prescripts = check_ids(
        &mut report,
        "prescripts",
        model.prescripts.iter().map(|p| p.id.as_str()),
    );
    let actions = check_ids(
        &mut report,
        "actions",
        model.actions.iter().map(|a| a.id.as_str()),
    );

    for p in &model.prescripts {
        if p.priority_rank < 1 {
            report.push(
                ViolationKind::InvalidRank,
                p.id.as_str(),
                None,
                format!("prescript `{}` has priority_rank 0 (must be >= 1)", p.id),
            );
        }
    }

    if !model.u_max.is_finite() || model.u_max <= 0.0 {
        report.push(
            ViolationKind::InvalidBound,
            "u_max",
            None,
            format!("u_max {} must be finite and positive", model.u_max),
        );
    }

    // P(C)
    let mut sum = 0.0;
    for (id, &p) in &model.context.0 {
        if !dicta.contains(id.as_str()) {
            report.push(
                ViolationKind::DanglingReference,
                id.as_str(),
                None,
                format!("context references unknown dictum `{id}`"),
            );
            continue;
        }
        check_probability(&mut report, format!("context/{id}"), p);
        sum += p;
    }
    for id in &dicta {
        if !model.context.0.contains_key(*id) {
            report.push(
                ViolationKind::MissingEntry,
                *id,
                None,
                format!("context has no probability for dictum `{id}`"),
            );
        }
    }
    let residual = (sum - 1.0).abs();
    if !dicta.is_empty() && (residual.is_nan() || residual > PROB_TOLERANCE) {
        report.push(
            ViolationKind::ContextSum,
            "context",
            Some(residual),
            format!("context sum {sum}, residual {residual}"),
        );
    }

    // P(E|C)
    for c in model.conditional.0.keys() {
        if !dicta.contains(c.as_str()) {
            report.push(
                ViolationKind::DanglingReference,
                c.as_str(),
                None,
                format!("conditional table references unknown dictum `{c}`"),
            );
        }
    }
    for c in &dicta {
        let Some(row) = model.conditional.0.get(*c) else {
            report.push(
                ViolationKind::MissingEntry,
                *c,
                None,
                format!("conditional table has no row for dictum `{c}`"),
            );
            continue;
        };
        let mut sum = 0.0;
        for (e, &p) in row {
            if !prescripts.contains(e.as_str()) {
                report.push(
                    ViolationKind::DanglingReference,
                    format!("{c}/{e}"),
                    None,
                    format!("conditional row `{c}` references unknown prescript `{e}`"),
                );
                continue;
            }
            check_probability(&mut report, format!("conditional/{c}/{e}"), p);
            sum += p;
        }
        for e in &prescripts {
            if !row.contains_key(*e) {
                report.push(
                    ViolationKind::MissingEntry,
                    format!("{c}/{e}"),
                    None,
                    format!("conditional row `{c}` has no probability for prescript `{e}`"),
                );
            }
        }
        let residual = (sum - 1.0).abs();
        if !prescripts.is_empty() && (residual.is_nan() || residual > PROB_TOLERANCE) {
            report.push(
                ViolationKind::ConditionalSum,
                *c,
                Some(residual),
                format!("conditional row `{c}` sums to {sum}, residual {residual}"),
            );
        }
    }

    // u(a|c,e)
    for (a, by_dictum) in &model.utilities.0 {
        if !actions.contains(a.as_str()) {
            report.push(
                ViolationKind::DanglingReference,
                a.as_str(),
                None,
                format!("utilities reference unknown action `{a}`"),
            );
            continue;
        }
        for (c, by_prescript) in by_dictum {
            if !dicta.contains(c.as_str()) {
                report.push(
                    ViolationKind::DanglingReference,
                    format!("{a}/{c}"),
                    None,
                    format!("utilities for `{a}` reference unknown dictum `{c}`"),
                );
                continue;
            }
            for (e, &u) in by_prescript {
                let path = format!("{a}/{c}/{e}");
                if !prescripts.contains(e.as_str()) {
                    report.push(
                        ViolationKind::DanglingReference,
                        path,
                        None,
                        format!("utilities for `{a}/{c}` reference unknown prescript `{e}`"),
                    );
                } else if !u.is_finite() {
                    report.push(
                        ViolationKind::NonFiniteUtility,
                        path.clone(),
                        None,
                        format!("utility `{path}` is not finite"),
                    );
                } else if u.abs() > model.u_max {
                    report.push(
                        ViolationKind::UtilityBound,
                        path.clone(),
                        Some(u.abs() - model.u_max),
                        format!("utility `{path}` = {u} exceeds u_max {}", model.u_max),
                    );
                }
            }
        }
    }
    for a in &actions {
        for c in &dicta {
            for e in &prescripts {
                if model.utilities.get(a, c, e).is_none() {
                    report.push(
                        ViolationKind::MissingEntry,
                        format!("{a}/{c}/{e}"),
                        None,
                        format!("no utility for action `{a}` under `{c}` and `{e}`"),
                    );
                }
            }
        }
    }

    if let Some(weights) = &model.objective_weights {
        for (e, &w) in &weights.0 {
            if !prescripts.contains(e.as_str()) {
                report.push(
                    ViolationKind::DanglingReference,
                    e.as_str(),
                    None,
                    format!("objective weights reference unknown prescript `{e}`"),
                );
            } else if !w.is_finite() || w < 0.0 {
                report.push(
                    ViolationKind::InvalidWeight,
                    e.as_str(),
                    None,
                    format!("objective weight for `{e}` is {w} (must be finite and >= 0)"),
                );
            }
        }
        if !prescripts.is_empty() && prescripts.iter().all(|e| weights.weight(e) <= 0.0) {
            report.push(
                ViolationKind::ZeroObjectiveWeights,
                "objective",
                None,
                "every objective weight is zero",
            );
        }
    }

    if let Some(weights) = &model.baseline_weights {
        for (e, row) in &weights.0 {
            if !prescripts.contains(e.as_str()) {
                report.push(
                    ViolationKind::DanglingReference,
                    e.as_str(),
                    None,
                    format!("baseline weights reference unknown prescript `{e}`"),
                );
                continue;
            }
            for (c, &w) in row {
                if !dicta.contains(c.as_str()) {
                    report.push(
                        ViolationKind::DanglingReference,
                        format!("{e}/{c}"),
                        None,
                        format!("baseline weights for `{e}` reference unknown dictum `{c}`"),
                    );
                } else if !w.is_finite() || w < 0.0 {
                    report.push(
                        ViolationKind::InvalidWeight,
                        format!("{e}/{c}"),
                        None,
                        format!("baseline weight for `{e}/{c}` is {w} (must be finite and >= 0)"),
                    );
                }
            }
        }
    }

    report
}

/// Fails with [`Error::Validation`] unless the scenario is valid.
pub fn ensure_valid(model: &ScenarioModel) -> Result<()> {
    let report = validate_scenario(model);
    if report.is_valid() {
        Ok(())
    } else {
        Err(Error::Validation(report))
    }
}

/// P(c, e) = P(c) · P(e|c).
pub fn joint_probability(model: &ScenarioModel, dictum_id: &str, prescript_id: &str) -> Result<f64> {
    let pc = model.context.get(dictum_id).ok_or_else(|| Error::UnknownId {
        kind: "dictum",
        id: dictum_id.to_owned(),
    })?;
    if model.prescript(prescript_id).is_none() {
        return Err(Error::UnknownId {
            kind: "prescript",
            id: prescript_id.to_owned(),
        });
    }
    let pe = model
        .conditional
        .get(dictum_id, prescript_id)
        .ok_or_else(|| Error::UnknownId {
            kind: "prescript",
            id: prescript_id.to_owned(),
        })?;
    Ok(pc * pe)
}

// ---------------------------------------------------------------------------
// Dense view
// ---------------------------------------------------------------------------

/// Index-based copy of a validated scenario. Axes are sorted by id.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseScenario {
    pub actions: Vec<String>,
    pub dicta: Vec<String>,
    pub prescripts: Vec<String>,
    pub ranks: Vec<u32>,
    pub u_max: f64,
    /// P(c_i), length n.
    pub context: Vec<f64>,
    /// P(e_j|c_i) at `i * m + j`.
    pub conditional: Vec<f64>,
    /// u(a|c_i,e_j) at `(a * n + i) * m + j`.
    pub utility: Vec<f64>,
    /// α_j, length m.
    pub alpha: Vec<f64>,
    /// w(e_j, c_i) at `j * n + i`.
    pub baseline: Vec<f64>,
}

impl DenseScenario {
    pub fn from_model(model: &ScenarioModel) -> Result<Self> {
        ensure_valid(model)?;
        Ok(Self::from_valid(model))
    }

    /// Skips validation; the caller guarantees a valid model.
    pub(crate) fn from_valid(model: &ScenarioModel) -> Self {
        let actions: Vec<String> = model.action_ids().into_iter().map(str::to_owned).collect();
        let dicta: Vec<String> = model.dictum_ids().into_iter().map(str::to_owned).collect();
        let prescripts: Vec<String> = model
            .prescript_ids()
            .into_iter()
            .map(str::to_owned)
            .collect();
        let ranks = prescripts
            .iter()
            .map(|e| model.prescript(e).map_or(u32::MAX, |p| p.priority_rank))
            .collect();
        let (n, m) = (dicta.len(), prescripts.len());

        let context = dicta.iter().map(|c| model.context.0[c]).collect();
        let mut conditional = Vec::with_capacity(n * m);
        for c in &dicta {
            for e in &prescripts {
                conditional.push(model.conditional.0[c][e]);
            }
        }
        let mut utility = Vec::with_capacity(actions.len() * n * m);
        for a in &actions {
            for c in &dicta {
                for e in &prescripts {
                    utility.push(model.utilities.0[a][c][e]);
                }
            }
        }
        let alpha = prescripts.iter().map(|e| model.objective_weight(e)).collect();
        let mut baseline = Vec::with_capacity(n * m);
        for e in &prescripts {
            for c in &dicta {
                baseline.push(model.baseline_weight(e, c));
            }
        }

        Self {
            actions,
            dicta,
            prescripts,
            ranks,
            u_max: model.u_max,
            context,
            conditional,
            utility,
            alpha,
            baseline,
        }
    }

    pub fn n_actions(&self) -> usize {
        self.actions.len()
    }

    pub fn n_dicta(&self) -> usize {
        self.dicta.len()
    }

    pub fn n_prescripts(&self) -> usize {
        self.prescripts.len()
    }

    #[inline]
    pub fn cond(&self, i: usize, j: usize) -> f64 {
        self.conditional[i * self.prescripts.len() + j]
    }

    #[inline]
    pub fn util(&self, a: usize, i: usize, j: usize) -> f64 {
        self.utility[(a * self.dicta.len() + i) * self.prescripts.len() + j]
    }

    #[inline]
    pub fn weight(&self, j: usize, i: usize) -> f64 {
        self.baseline[j * self.dicta.len() + i]
    }

    pub fn action_index(&self, id: &str) -> Option<usize> {
        self.actions.binary_search_by(|a| a.as_str().cmp(id)).ok()
    }

    pub fn dictum_index(&self, id: &str) -> Option<usize> {
        self.dicta.binary_search_by(|a| a.as_str().cmp(id)).ok()
    }

    /// Marginal prescript distribution Σ_i P(c_i) P(e_j|c_i) for an arbitrary
    /// context vector.
    pub fn prescript_marginal(&self, context: &[f64]) -> Vec<f64> {
        let m = self.n_prescripts();
        let mut out = vec![0.0; m];
        for (i, &pc) in context.iter().enumerate() {
            for (j, slot) in out.iter_mut().enumerate() {
                *slot += pc * self.cond(i, j);
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth;

    fn two_dicta(p1: f64, p2: f64) -> ScenarioModel {
        let mut m = synth::uniform_scenario(&["c1", "c2"], &["e1"], &["a1"]);
        m.context.0.insert("c1".into(), p1);
        m.context.0.insert("c2".into(), p2);
        m
    }

    #[test]
    fn balanced_context_is_valid() {
        assert!(validate_scenario(&two_dicta(0.5, 0.5)).is_valid());
    }

    #[test]
    fn short_context_sum_reports_residual() {
        let report = validate_scenario(&two_dicta(0.5, 0.4));
        assert_eq!(report.violations.len(), 1, "{report}");
        let v = &report.violations[0];
        assert_eq!(v.kind, ViolationKind::ContextSum);
        assert!((v.residual.unwrap() - 0.1).abs() < 1e-12);
        assert!(v.message.contains("context sum 0.9"), "{}", v.message);
    }

    #[test]
    fn unknown_action_in_utilities_is_one_dangling_reference() {
        let mut m = two_dicta(0.5, 0.5);
        m.utilities.set("a9", "c1", "e1", 1.0);
        let report = validate_scenario(&m);
        assert_eq!(report.violations.len(), 1, "{report}");
        assert_eq!(report.violations[0].kind, ViolationKind::DanglingReference);
        assert_eq!(report.violations[0].subject, "a9");
    }

    #[test]
    fn validation_is_idempotent() {
        let m = two_dicta(0.7, 0.1);
        assert_eq!(validate_scenario(&m), validate_scenario(&m));
    }

    #[test]
    fn detects_duplicates_ranks_bounds_and_weights() {
        let mut m = synth::uniform_scenario(&["c1"], &["e1", "e2"], &["a1", "a2"]);
        m.actions.push(ActionDef {
            id: "a1".into(),
            description: String::new(),
        });
        m.prescripts[0].priority_rank = 0;
        m.utilities.set("a2", "c1", "e2", 5000.0);
        m.objective_weights = Some(ObjectiveWeights(
            [("e1".to_string(), 0.0), ("e2".to_string(), 0.0)].into(),
        ));
        let mut bw = BaselineWeights::default();
        bw.set("e1", "c1", -1.0);
        m.baseline_weights = Some(bw);
        let kinds: Vec<_> = validate_scenario(&m)
            .violations
            .iter()
            .map(|v| v.kind)
            .collect();
        for k in [
            ViolationKind::DuplicateId,
            ViolationKind::InvalidRank,
            ViolationKind::UtilityBound,
            ViolationKind::ZeroObjectiveWeights,
            ViolationKind::InvalidWeight,
        ] {
            assert!(kinds.contains(&k), "missing {k:?} in {kinds:?}");
        }
    }

    #[test]
    fn incomplete_tables_are_reported() {
        let mut m = synth::uniform_scenario(&["c1"], &["e1", "e2"], &["a1"]);
        m.utilities.0.get_mut("a1").unwrap().get_mut("c1").unwrap().remove("e2");
        m.conditional.0.get_mut("c1").unwrap().remove("e2");
        let report = validate_scenario(&m);
        let missing = report
            .violations
            .iter()
            .filter(|v| v.kind == ViolationKind::MissingEntry)
            .count();
        assert_eq!(missing, 2, "{report}");
        assert!(report
            .violations
            .iter()
            .any(|v| v.kind == ViolationKind::ConditionalSum));
    }

    #[test]
    fn joint_probability_examples() {
        let m = synth::uniform_scenario(&["c1"], &["e1"], &["a1"]);
        assert_eq!(joint_probability(&m, "c1", "e1").unwrap(), 1.0);

        let mut m = synth::uniform_scenario(&["c1", "c2"], &["e1", "e2"], &["a1"]);
        m.context.0.insert("c1".into(), 0.5);
        m.context.0.insert("c2".into(), 0.5);
        m.conditional.0.get_mut("c1").unwrap().insert("e1".into(), 0.6);
        m.conditional.0.get_mut("c1").unwrap().insert("e2".into(), 0.4);
        assert!((joint_probability(&m, "c1", "e2").unwrap() - 0.2).abs() < 1e-15);

        assert!(matches!(
            joint_probability(&m, "c9", "e1"),
            Err(Error::UnknownId { kind: "dictum", .. })
        ));
        assert!(matches!(
            joint_probability(&m, "c1", "e9"),
            Err(Error::UnknownId { kind: "prescript", .. })
        ));
    }

    #[test]
    fn dense_axes_are_sorted() {
        let mut m = synth::uniform_scenario(&["zeta", "alpha"], &["y", "x"], &["b", "a"]);
        m.dicta.reverse();
        let d = DenseScenario::from_model(&m).unwrap();
        assert_eq!(d.dicta, ["alpha", "zeta"]);
        assert_eq!(d.prescripts, ["x", "y"]);
        assert_eq!(d.actions, ["a", "b"]);
    }
}

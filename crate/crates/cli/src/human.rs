//! Plain-text renderings for people. Never parsed by tooling.

use std::fmt::Write;

use ethreason_core::decision::{DecisionReport, SampleReport};
use ethreason_core::learning::ConvergenceReport;
use ethreason_core::model::ValidationReport;
use ethreason_core::profiles::{EthicalProfileMatrix, ProfileCollection};
use ethreason_core::verifier::{Verdict, VerifierReport};

use crate::Explanation;

fn width<'a>(ids: impl Iterator<Item = &'a String>) -> usize {
    ids.map(String::len).max().unwrap_or(0)
}

pub fn validation(report: &ValidationReport, scenario: &str) -> String {
    if report.is_valid() {
        return format!("{scenario}: valid\n");
    }
    let mut s = format!("{scenario}: {} violation(s)\n", report.violations.len());
    for v in &report.violations {
        let kind = serde_json::to_value(v.kind).ok().and_then(|k| k.as_str().map(str::to_owned)).unwrap_or_default();
        let _ = writeln!(s, "  [{kind}] {}", v.message);
    }
    s
}

pub fn decision(r: &DecisionReport) -> String {
    let mut s = format!("scenario: {}\nchosen action: {}\n", r.scenario, r.chosen_action);
    if r.tie {
        let _ = writeln!(s, "tie between: {}", r.tied_actions.join(", "));
    }
    let w = width(r.expected_utilities.keys());
    s.push_str("expected utility:\n");
    for (a, u) in &r.expected_utilities {
        let marker = if *a == r.chosen_action { "*" } else { " " };
        let _ = writeln!(s, " {marker} {a:<w$}  {u:>14.6}");
    }
    s.push_str("per-prescript contribution:\n");
    for (a, parts) in &r.objective_breakdown {
        let _ = write!(s, "   {a:<w$} ");
        for (e, v) in parts {
            let _ = write!(s, " {e}={v:.6}");
        }
        s.push('\n');
    }
    if let Some(dist) = &r.action_distribution {
        s.push_str("action distribution:\n");
        for (a, p) in dist {
            let _ = writeln!(s, "   {a:<w$}  {p:.6}");
        }
    }
    s
}

pub fn explanation(x: &Explanation) -> String {
    let mut s = decision(&x.decision);
    s.push_str("prescript marginal P(e):\n");
    for (e, p) in &x.prescript_marginal {
        let _ = writeln!(s, "   {e}  {p:.6}");
    }
    s.push_str("joint P(c, e):\n");
    for (c, row) in &x.joint {
        let _ = write!(s, "   {c}:");
        for (e, p) in row {
            let _ = write!(s, " {e}={p:.6}");
        }
        s.push('\n');
    }
    s
}

pub fn sample(r: &SampleReport) -> String {
    let mut s = format!(
        "scenario: {}\ntemperature: {}\ndraws: {}\n",
        r.scenario,
        r.temperature,
        r.draws.len()
    );
    let w = width(r.distribution.keys());
    for (a, p) in &r.distribution {
        let count = r.counts.get(a).copied().unwrap_or(0);
        let _ = writeln!(s, "   {a:<w$}  p={p:.6}  drawn={count}");
    }
    s
}

pub fn verifier(r: &VerifierReport, scenario: &str) -> String {
    let name = match r.theorem {
        1 => "consistency",
        2 => "optimality",
        3 => "robustness",
        4 => "convergence",
        _ => "alignment",
    };
    let verdict = match r.verdict {
        Verdict::Pass => "PASS",
        Verdict::Fail => "FAIL",
    };
    let mut s = format!("{name} check on {scenario}: {verdict} ({} trials)\n", r.trials);
    for (k, v) in &r.measured {
        let _ = writeln!(s, "   {k} = {v}");
    }
    if !r.failures.is_empty() {
        let shown: Vec<String> = r.failures.iter().take(10).map(u64::to_string).collect();
        let more = if r.failures.len() > 10 { ", ..." } else { "" };
        let _ = writeln!(s, "   failures ({}): {}{more}", r.failures.len(), shown.join(", "));
    }
    s
}

pub fn convergence(r: &ConvergenceReport) -> String {
    let mut s = format!(
        "scenario: {}\nconverged: {}\n",
        r.scenario,
        if r.converged { "yes" } else { "no" }
    );
    if let Some(step) = r.convergence_step {
        let _ = writeln!(s, "convergence step: {step}");
    }
    let _ = writeln!(
        s,
        "final probability of the optimal action: {:.6}\nwindow: {} episodes at eps {}\nepisodes: {}",
        r.final_probability, r.stability_window, r.eps_conv, r.episodes
    );
    for (c, a) in &r.targets {
        let _ = writeln!(s, "   optimal in {c}: {a}");
    }
    s
}

pub fn profile(id: &str, m: &EthicalProfileMatrix) -> String {
    let mut s = format!(
        "profile {id} ({}x{}{})\n",
        m.rows(),
        m.cols(),
        if m.normalized { ", normalized" } else { "" }
    );
    let w = width(m.prescript_ids.iter());
    let _ = write!(s, "   {:<w$}", "");
    for c in &m.dictum_ids {
        let _ = write!(s, "  {c:>12}");
    }
    s.push('\n');
    for (i, e) in m.prescript_ids.iter().enumerate() {
        let _ = write!(s, "   {e:<w$}");
        for j in 0..m.cols() {
            let _ = write!(s, "  {:>12.6}", m.get(i, j));
        }
        s.push('\n');
    }
    s
}

pub fn clusters(c: &ProfileCollection) -> String {
    let mut s = format!(
        "{} profiles in {} clusters, total cost {:.6}\n",
        c.profiles.len(),
        c.clusters.len(),
        c.total_cost()
    );
    for (cid, members) in &c.clusters {
        let _ = writeln!(s, "   {cid} (medoid {}): {}", c.medoids[cid], members.join(", "));
    }
    s
}

//! Ethical-profile matrices: construction from a scenario, global min-max
//! normalization, the elementwise L1 distance, k-medoids clustering of a
//! normalized collection, nearest-profile retrieval, and application of a
//! profile back onto a scenario as baseline weights.
//!
//! Rows are prescripts and columns are dicta, both in id order. Entries are
//! stored row-major.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ensure_valid, BaselineWeights, ScenarioModel};

/// Collections up to this size are searched exhaustively on retrieval.
pub const EXHAUSTIVE_RETRIEVAL_LIMIT: usize = 32;
pub const MAX_CLUSTER_ITERATIONS: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EthicalProfileMatrix {
    pub prescript_ids: Vec<String>,
    pub dictum_ids: Vec<String>,
    pub entries: Vec<f64>,
    pub normalized: bool,
}

fn has_duplicates(ids: &[String]) -> bool {
    let mut sorted: Vec<&String> = ids.iter().collect();
    sorted.sort();
    sorted.windows(2).any(|w| w[0] == w[1])
}

impl EthicalProfileMatrix {
    pub fn new(
        prescript_ids: Vec<String>,
        dictum_ids: Vec<String>,
        entries: Vec<f64>,
        normalized: bool,
    ) -> Result<Self> {
        let m = Self {
            prescript_ids,
            dictum_ids,
            entries,
            normalized,
        };
        m.check()?;
        Ok(m)
    }

    /// Checks the structural invariants of the matrix.
    pub fn check(&self) -> Result<()> {
        if self.entries.len() != self.rows() * self.cols() {
            return Err(Error::ShapeMismatch(format!(
                "{} entries for a {}x{} matrix",
                self.entries.len(),
                self.rows(),
                self.cols()
            )));
        }
        if has_duplicates(&self.prescript_ids) || has_duplicates(&self.dictum_ids) {
            return Err(Error::ShapeMismatch("duplicate row or column id".into()));
        }
        if let Some(x) = self.entries.iter().find(|x| !x.is_finite()) {
            return Err(Error::param("entries", format!("non-finite entry {x}")));
        }
        if self.normalized && self.entries.iter().any(|x| !(0.0..=1.0).contains(x)) {
            return Err(Error::param(
                "entries",
                "normalized matrix has an entry outside [0, 1]",
            ));
        }
        Ok(())
    }

    pub fn rows(&self) -> usize {
        self.prescript_ids.len()
    }

    pub fn cols(&self) -> usize {
        self.dictum_ids.len()
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.entries[row * self.cols() + col]
    }

    /// Entry for a (prescript, dictum) pair by id.
    pub fn lookup(&self, prescript: &str, dictum: &str) -> Option<f64> {
        let i = self.prescript_ids.iter().position(|e| e == prescript)?;
        let j = self.dictum_ids.iter().position(|c| c == dictum)?;
        Some(self.get(i, j))
    }

    fn same_shape(&self, other: &Self) -> bool {
        self.prescript_ids == other.prescript_ids && self.dictum_ids == other.dictum_ids
    }
}

/// m_ij = w(e_i, c_j) · P(e_i | c_j).
pub fn build_matrix(model: &ScenarioModel) -> Result<EthicalProfileMatrix> {
    ensure_valid(model)?;
    let prescripts = model.prescript_ids();
    let dicta = model.dictum_ids();
    let mut entries = Vec::with_capacity(prescripts.len() * dicta.len());
    for e in &prescripts {
        for c in &dicta {
            entries.push(model.baseline_weight(e, c) * model.conditional.0[*c][*e]);
        }
    }
    Ok(EthicalProfileMatrix {
        prescript_ids: prescripts.into_iter().map(str::to_owned).collect(),
        dictum_ids: dicta.into_iter().map(str::to_owned).collect(),
        entries,
        normalized: false,
    })
}

/// Global min-max scaling to [0, 1]. A constant matrix maps to all zeros.
pub fn normalize_matrix(m: &EthicalProfileMatrix) -> Result<EthicalProfileMatrix> {
    if m.entries.is_empty() {
        return Err(Error::Empty("matrix"));
    }
    if let Some(x) = m.entries.iter().find(|x| !x.is_finite()) {
        return Err(Error::param("entries", format!("non-finite entry {x}")));
    }
    let min = m.entries.iter().copied().fold(f64::INFINITY, f64::min);
    let max = m.entries.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let range = max - min;
    let entries = if range > 0.0 {
        // Clamp guards the last ulp; the true quotient is already in [0, 1].
        m.entries
            .iter()
            .map(|x| ((x - min) / range).clamp(0.0, 1.0))
            .collect()
    } else {
        vec![0.0; m.entries.len()]
    };
    Ok(EthicalProfileMatrix {
        prescript_ids: m.prescript_ids.clone(),
        dictum_ids: m.dictum_ids.clone(),
        entries,
        normalized: true,
    })
}

/// d(x, y) = Σ_ij |x_ij − y_ij|.
pub fn matrix_distance(x: &EthicalProfileMatrix, y: &EthicalProfileMatrix) -> Result<f64> {
    if !x.same_shape(y) || x.entries.len() != y.entries.len() {
        return Err(Error::ShapeMismatch(format!(
            "{}x{} vs {}x{} (or different id orderings)",
            x.rows(),
            x.cols(),
            y.rows(),
            y.cols()
        )));
    }
    Ok(l1(&x.entries, &y.entries))
}

fn l1(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b).abs()).sum()
}

// ---------------------------------------------------------------------------
// Collection
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct ProfileCollection {
    pub profiles: BTreeMap<String, EthicalProfileMatrix>,
    pub clusters: BTreeMap<String, Vec<String>>,
    pub medoids: BTreeMap<String, String>,
    /// Total within-cluster distance after each clustering step. Empty for
    /// collections loaded from disk.
    pub cost_history: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Retrieval {
    pub profile_id: String,
    pub cluster_id: String,
    pub distance: f64,
}

fn cluster_name(index: usize) -> String {
    format!("cluster{index:02}")
}

impl ProfileCollection {
    /// Assembles a collection from stored assignments, checking every invariant.
    pub fn from_parts(
        profiles: BTreeMap<String, EthicalProfileMatrix>,
        clusters: BTreeMap<String, Vec<String>>,
        medoids: BTreeMap<String, String>,
    ) -> Result<Self> {
        let collection = Self {
            profiles,
            clusters,
            medoids,
            cost_history: Vec::new(),
        };
        collection.check()?;
        Ok(collection)
    }

    pub fn check(&self) -> Result<()> {
        let mut first: Option<&EthicalProfileMatrix> = None;
        for (id, p) in &self.profiles {
            p.check()?;
            if !p.normalized {
                return Err(Error::param("profiles", format!("profile `{id}` is not normalized")));
            }
            match first {
                Some(f) if !f.same_shape(p) => {
                    return Err(Error::ShapeMismatch(format!(
                        "profile `{id}` has different row/column ids"
                    )))
                }
                None => first = Some(p),
                _ => {}
            }
        }
        let mut owner: BTreeMap<&str, &str> = BTreeMap::new();
        for (cid, members) in &self.clusters {
            for pid in members {
                if !self.profiles.contains_key(pid) {
                    return Err(Error::UnknownId {
                        kind: "profile",
                        id: pid.clone(),
                    });
                }
                if owner.insert(pid, cid).is_some() {
                    return Err(Error::param(
                        "clusters",
                        format!("profile `{pid}` is in more than one cluster"),
                    ));
                }
            }
        }
        if let Some(pid) = self.profiles.keys().find(|p| !owner.contains_key(p.as_str())) {
            return Err(Error::param("clusters", format!("profile `{pid}` has no cluster")));
        }
        if self.medoids.len() != self.clusters.len() {
            return Err(Error::param("medoids", "every cluster needs exactly one medoid"));
        }
        for (cid, pid) in &self.medoids {
            if owner.get(pid.as_str()) != Some(&cid.as_str()) {
                return Err(Error::param(
                    "medoids",
                    format!("medoid `{pid}` is not a member of `{cid}`"),
                ));
            }
        }
        Ok(())
    }

    pub fn cluster_of(&self, profile_id: &str) -> Option<&str> {
        self.clusters
            .iter()
            .find(|(_, members)| members.iter().any(|m| m == profile_id))
            .map(|(cid, _)| cid.as_str())
    }

    /// Σ over profiles of the distance to their cluster's medoid.
    pub fn total_cost(&self) -> f64 {
        self.clusters
            .iter()
            .map(|(cid, members)| {
                let medoid = &self.profiles[&self.medoids[cid]];
                members
                    .iter()
                    .map(|m| l1(&self.profiles[m].entries, &medoid.entries))
                    .sum::<f64>()
            })
            .sum()
    }
}

struct Kmedoids<'a> {
    dist: &'a [f64],
    n: usize,
}

impl Kmedoids<'_> {
    fn d(&self, a: usize, b: usize) -> f64 {
        self.dist[a * self.n + b]
    }

    /// Nearest medoid slot per point. A medoid always owns itself so that no
    /// cluster goes empty when profiles coincide.
    fn assign(&self, medoids: &[usize]) -> Vec<usize> {
        (0..self.n)
            .map(|p| {
                if let Some(slot) = medoids.iter().position(|&m| m == p) {
                    return slot;
                }
                let mut best = 0;
                for slot in 1..medoids.len() {
                    if self.d(p, medoids[slot]) < self.d(p, medoids[best]) {
                        best = slot;
                    }
                }
                best
            })
            .collect()
    }

    fn cost(&self, medoids: &[usize], assignment: &[usize]) -> f64 {
        (0..self.n).map(|p| self.d(p, medoids[assignment[p]])).sum()
    }

    fn init<R: Rng>(&self, k: usize, rng: &mut R) -> Vec<usize> {
        let mut medoids = vec![rng.random_range(0..self.n)];
        while medoids.len() < k {
            let weights: Vec<f64> = (0..self.n)
                .map(|p| {
                    if medoids.contains(&p) {
                        0.0
                    } else {
                        let d = medoids
                            .iter()
                            .map(|&m| self.d(p, m))
                            .fold(f64::INFINITY, f64::min);
                        d * d
                    }
                })
                .collect();
            let total: f64 = weights.iter().sum();
            let pick = if total > 0.0 {
                let mut target = rng.random::<f64>() * total;
                let mut chosen = None;
                for (p, &w) in weights.iter().enumerate() {
                    if w > 0.0 {
                        chosen = Some(p);
                        if target < w {
                            break;
                        }
                        target -= w;
                    }
                }
                chosen.unwrap()
            } else {
                let free: Vec<usize> = (0..self.n).filter(|p| !medoids.contains(p)).collect();
                free[rng.random_range(0..free.len())]
            };
            medoids.push(pick);
        }
        medoids
    }

    /// Alternating refinement followed by greedy medoid swaps. Returns the
    /// medoids, the assignment and the cost after every step.
    fn run(&self, mut medoids: Vec<usize>) -> (Vec<usize>, Vec<usize>, Vec<f64>) {
        let mut assignment = self.assign(&medoids);
        let mut history = vec![self.cost(&medoids, &assignment)];

        for _ in 0..MAX_CLUSTER_ITERATIONS {
            let mut changed = false;
            for (slot, medoid) in medoids.iter_mut().enumerate() {
                let members: Vec<usize> =
                    (0..self.n).filter(|&p| assignment[p] == slot).collect();
                let within = |c: usize| members.iter().map(|&p| self.d(c, p)).sum::<f64>();
                let mut best = *medoid;
                let mut best_cost = within(best);
                for &c in &members {
                    let cost = within(c);
                    if cost < best_cost {
                        best = c;
                        best_cost = cost;
                    }
                }
                if best != *medoid {
                    *medoid = best;
                    changed = true;
                }
            }
            let next = self.assign(&medoids);
            let stable = !changed && next == assignment;
            assignment = next;
            history.push(self.cost(&medoids, &assignment));
            if stable {
                break;
            }
        }

        for _ in 0..MAX_CLUSTER_ITERATIONS {
            let current = *history.last().unwrap();
            let mut best: Option<(usize, usize, f64)> = None;
            for slot in 0..medoids.len() {
                for h in 0..self.n {
                    if medoids.contains(&h) {
                        continue;
                    }
                    let mut trial = medoids.clone();
                    trial[slot] = h;
                    let cost = self.cost(&trial, &self.assign(&trial));
                    if best.is_none_or(|(_, _, c)| cost < c) {
                        best = Some((slot, h, cost));
                    }
                }
            }
            match best {
                Some((slot, h, cost)) if cost < current - 1e-12 * (1.0 + current) => {
                    medoids[slot] = h;
                    assignment = self.assign(&medoids);
                    history.push(self.cost(&medoids, &assignment));
                }
                _ => break,
            }
        }
        (medoids, assignment, history)
    }
}

/// Seeded k-medoids over the L1 matrix distance.
pub fn cluster_collection(
    profiles: Vec<(String, EthicalProfileMatrix)>,
    k: usize,
    seed: u64,
) -> Result<ProfileCollection> {
    if k == 0 {
        return Err(Error::param("k", "must be positive"));
    }
    if k > profiles.len() {
        return Err(Error::param(
            "k",
            format!("{k} clusters requested for {} profiles", profiles.len()),
        ));
    }
    let mut map = BTreeMap::new();
    for (id, p) in profiles {
        if map.insert(id.clone(), p).is_some() {
            return Err(Error::param("profiles", format!("duplicate profile id `{id}`")));
        }
    }
    let ids: Vec<String> = map.keys().cloned().collect();
    let mats: Vec<&EthicalProfileMatrix> = map.values().collect();
    for (id, p) in ids.iter().zip(&mats) {
        p.check()?;
        if !p.normalized {
            return Err(Error::param("profiles", format!("profile `{id}` is not normalized")));
        }
        if !p.same_shape(mats[0]) {
            return Err(Error::ShapeMismatch(format!(
                "profile `{id}` differs in shape or id ordering from `{}`",
                ids[0]
            )));
        }
    }

    let n = ids.len();
    let mut dist = vec![0.0; n * n];
    for a in 0..n {
        for b in (a + 1)..n {
            let d = l1(&mats[a].entries, &mats[b].entries);
            dist[a * n + b] = d;
            dist[b * n + a] = d;
        }
    }
    let km = Kmedoids { dist: &dist, n };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let start = km.init(k, &mut rng);
    let (medoids, assignment, history) = km.run(start);

    // Name clusters by their smallest member id so naming is order-stable.
    let mut slots: Vec<usize> = (0..k).collect();
    slots.sort_by_key(|&s| (0..n).find(|&p| assignment[p] == s).unwrap_or(usize::MAX));
    let mut clusters = BTreeMap::new();
    let mut medoid_map = BTreeMap::new();
    for (index, &slot) in slots.iter().enumerate() {
        let name = cluster_name(index);
        let members = (0..n)
            .filter(|&p| assignment[p] == slot)
            .map(|p| ids[p].clone())
            .collect();
        clusters.insert(name.clone(), members);
        medoid_map.insert(name, ids[medoids[slot]].clone());
    }
    Ok(ProfileCollection {
        profiles: map,
        clusters,
        medoids: medoid_map,
        cost_history: history,
    })
}

fn check_query(collection: &ProfileCollection, query: &EthicalProfileMatrix) -> Result<()> {
    let first = collection
        .profiles
        .values()
        .next()
        .ok_or(Error::Empty("collection"))?;
    if !first.same_shape(query) || query.entries.len() != first.entries.len() {
        return Err(Error::ShapeMismatch(
            "query does not share the collection's row/column ids".into(),
        ));
    }
    Ok(())
}

fn nearest<'a>(
    candidates: impl Iterator<Item = &'a String>,
    collection: &ProfileCollection,
    query: &EthicalProfileMatrix,
) -> Option<(String, f64)> {
    let mut best: Option<(String, f64)> = None;
    let mut ordered: Vec<&String> = candidates.collect();
    ordered.sort();
    for id in ordered {
        let d = l1(&collection.profiles[id].entries, &query.entries);
        if best.as_ref().is_none_or(|(_, bd)| d < *bd) {
            best = Some((id.clone(), d));
        }
    }
    best
}

/// Exact nearest profile by linear scan. Ties go to the smaller profile id.
pub fn retrieve_exhaustive(collection: &ProfileCollection, query: &EthicalProfileMatrix) -> Result<Retrieval> {
    check_query(collection, query)?;
    let (profile_id, distance) = nearest(collection.profiles.keys(), collection, query)
        .ok_or(Error::Empty("collection"))?;
    let cluster_id = collection
        .cluster_of(&profile_id)
        .unwrap_or_default()
        .to_owned();
    Ok(Retrieval {
        profile_id,
        cluster_id,
        distance,
    })
}

/// Nearest medoid first, then the nearest member of that medoid's cluster.
pub fn retrieve_routed(collection: &ProfileCollection, query: &EthicalProfileMatrix) -> Result<Retrieval> {
    check_query(collection, query)?;
    let (medoid, _) = nearest(collection.medoids.values(), collection, query)
        .ok_or(Error::Empty("collection"))?;
    let cluster_id = collection
        .medoids
        .iter()
        .find(|(_, m)| **m == medoid)
        .map(|(c, _)| c.clone())
        .unwrap();
    let (profile_id, distance) =
        nearest(collection.clusters[&cluster_id].iter(), collection, query).unwrap();
    Ok(Retrieval {
        profile_id,
        cluster_id,
        distance,
    })
}

/// Exhaustive search for small collections, medoid routing beyond
/// [`EXHAUSTIVE_RETRIEVAL_LIMIT`] profiles.
pub fn retrieve_profile(collection: &ProfileCollection, query: &EthicalProfileMatrix) -> Result<Retrieval> {
    if collection.profiles.len() <= EXHAUSTIVE_RETRIEVAL_LIMIT {
        retrieve_exhaustive(collection, query)
    } else {
        retrieve_routed(collection, query)
    }
}

/// Replaces the scenario's baseline weights with w(e, c) = 1 + m(e, c).
pub fn apply_profile(model: &ScenarioModel, profile: &EthicalProfileMatrix) -> Result<ScenarioModel> {
    profile.check()?;
    let mut weights = BaselineWeights::default();
    for e in model.prescript_ids() {
        for c in model.dictum_ids() {
            let m = profile.lookup(e, c).ok_or_else(|| {
                let missing_row = !profile.prescript_ids.iter().any(|p| p == e);
                Error::UnknownId {
                    kind: if missing_row { "prescript" } else { "dictum" },
                    id: if missing_row { e.to_owned() } else { c.to_owned() },
                }
            })?;
            weights.set(e, c, 1.0 + m);
        }
    }
    let mut out = model.clone();
    out.baseline_weights = Some(weights);
    ensure_valid(&out)?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decision::decide;
    use crate::synth;
    use proptest::prelude::*;
    use rand::Rng;

    fn mat(rows: &[&[f64]]) -> EthicalProfileMatrix {
        let prescript_ids = (0..rows.len()).map(|i| format!("e{i}")).collect();
        let dictum_ids = (0..rows[0].len()).map(|j| format!("c{j}")).collect();
        let entries = rows.iter().flat_map(|r| r.iter().copied()).collect();
        EthicalProfileMatrix::new(prescript_ids, dictum_ids, entries, false).unwrap()
    }

    fn normalized(rows: &[&[f64]]) -> EthicalProfileMatrix {
        EthicalProfileMatrix {
            normalized: true,
            ..mat(rows)
        }
    }

    #[test]
    fn unit_weights_give_transposed_conditional() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let m = synth::random_scenario(&mut rng, 4, 3, 2, 1.0);
        let p = build_matrix(&m).unwrap();
        assert_eq!((p.rows(), p.cols()), (3, 4));
        for (i, e) in p.prescript_ids.iter().enumerate() {
            for (j, c) in p.dictum_ids.iter().enumerate() {
                assert_eq!(p.get(i, j), m.conditional.0[c][e]);
            }
        }
        assert!(!p.normalized);
    }

    #[test]
    fn baseline_weight_scales_entry() {
        let mut m = synth::uniform_scenario(&["c1", "c2"], &["e1", "e2"], &["a1"]);
        m.conditional.0.get_mut("c1").unwrap().insert("e1".into(), 0.4);
        m.conditional.0.get_mut("c1").unwrap().insert("e2".into(), 0.6);
        let mut w = BaselineWeights::default();
        w.set("e1", "c1", 2.0);
        m.baseline_weights = Some(w);
        let p = build_matrix(&m).unwrap();
        assert!((p.lookup("e1", "c1").unwrap() - 0.8).abs() < 1e-15);
    }

    #[test]
    fn random_matrix_matches_elementwise_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let mut m = synth::random_scenario(&mut rng, 4, 3, 1, 1.0);
        let mut w = BaselineWeights::default();
        for e in m.prescript_ids() {
            for c in m.dictum_ids() {
                w.set(e, c, rng.random_range(0.0..3.0));
            }
        }
        m.baseline_weights = Some(w.clone());
        let p = build_matrix(&m).unwrap();
        for e in m.prescript_ids() {
            for c in m.dictum_ids() {
                let oracle = w.0[e][c] * m.conditional.0[c][e];
                assert_eq!(p.lookup(e, c).unwrap(), oracle);
            }
        }
    }

    #[test]
    fn normalization_hand_case() {
        let n = normalize_matrix(&mat(&[&[1.0, 2.0], &[3.0, 5.0]])).unwrap();
        assert_eq!(n.entries, [0.0, 0.25, 0.5, 1.0]);
        assert!(n.normalized);
    }

    #[test]
    fn constant_matrix_normalizes_to_zero() {
        let n = normalize_matrix(&mat(&[&[3.5, 3.5]])).unwrap();
        assert_eq!(n.entries, [0.0, 0.0]);
    }

    #[test]
    fn normalizing_unit_range_is_identity() {
        let m = mat(&[&[0.0, 0.3], &[1.0, 0.7]]);
        assert_eq!(normalize_matrix(&m).unwrap().entries, m.entries);
    }

    #[test]
    fn empty_matrix_rejected() {
        let m = EthicalProfileMatrix {
            prescript_ids: vec![],
            dictum_ids: vec![],
            entries: vec![],
            normalized: false,
        };
        assert!(matches!(normalize_matrix(&m), Err(Error::Empty(_))));
    }

    #[test]
    fn distance_examples() {
        let a = normalized(&[&[0.0, 1.0]]);
        let b = normalized(&[&[1.0, 0.0]]);
        assert_eq!(matrix_distance(&a, &a).unwrap(), 0.0);
        assert_eq!(matrix_distance(&a, &b).unwrap(), 2.0);
        let c = normalized(&[&[1.0], &[0.0]]);
        assert!(matches!(matrix_distance(&a, &c), Err(Error::ShapeMismatch(_))));
    }

    fn random_profiles(rng: &mut ChaCha8Rng, n: usize, rows: usize, cols: usize) -> Vec<(String, EthicalProfileMatrix)> {
        (0..n)
            .map(|k| {
                let entries: Vec<Vec<f64>> = (0..rows)
                    .map(|_| (0..cols).map(|_| rng.random::<f64>()).collect())
                    .collect();
                let refs: Vec<&[f64]> = entries.iter().map(Vec::as_slice).collect();
                (format!("p{k:02}"), normalized(&refs))
            })
            .collect()
    }

    #[test]
    fn k_equal_n_gives_singletons() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let profiles = random_profiles(&mut rng, 5, 2, 3);
        let c = cluster_collection(profiles, 5, 9).unwrap();
        assert_eq!(c.clusters.len(), 5);
        for (cid, members) in &c.clusters {
            assert_eq!(members.len(), 1);
            assert_eq!(c.medoids[cid], members[0]);
        }
        assert_eq!(c.total_cost(), 0.0);
    }

    #[test]
    fn single_cluster_medoid_minimizes_summed_distance() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let profiles = random_profiles(&mut rng, 7, 2, 2);
        let c = cluster_collection(profiles.clone(), 1, 4).unwrap();
        let sum_from = |x: &EthicalProfileMatrix| -> f64 {
            profiles.iter().map(|(_, p)| l1(&p.entries, &x.entries)).sum()
        };
        let best = profiles.iter().map(|(_, p)| sum_from(p)).fold(f64::INFINITY, f64::min);
        let medoid = &c.profiles[&c.medoids["cluster00"]];
        assert_eq!(sum_from(medoid), best);
    }

    #[test]
    fn clustering_errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let profiles = random_profiles(&mut rng, 3, 2, 2);
        assert!(cluster_collection(profiles.clone(), 4, 0).is_err());
        assert!(cluster_collection(profiles.clone(), 0, 0).is_err());
        let mut mixed = profiles;
        mixed.push(("odd".into(), normalized(&[&[0.0, 1.0, 0.5]])));
        assert!(matches!(cluster_collection(mixed, 2, 0), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn clustering_is_seed_deterministic_and_locally_optimal() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let profiles = random_profiles(&mut rng, 12, 3, 3);
        let a = cluster_collection(profiles.clone(), 3, 42).unwrap();
        let b = cluster_collection(profiles, 3, 42).unwrap();
        assert_eq!(a, b);
        assert!(a.check().is_ok());
        for w in a.cost_history.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "{:?}", a.cost_history);
        }
        // No single profile can move to another medoid and lower its distance.
        for (pid, p) in &a.profiles {
            let own = l1(&p.entries, &a.profiles[&a.medoids[a.cluster_of(pid).unwrap()]].entries);
            for mid in a.medoids.values() {
                assert!(own <= l1(&p.entries, &a.profiles[mid].entries) + 1e-12);
            }
        }
    }

    #[test]
    fn retrieval_identity_and_tie_rule() {
        let profiles = vec![
            ("b".to_string(), normalized(&[&[0.0, 0.0]])),
            ("a".to_string(), normalized(&[&[1.0, 1.0]])),
            ("c".to_string(), normalized(&[&[0.0, 1.0]])),
        ];
        let c = cluster_collection(profiles, 2, 1).unwrap();
        let r = retrieve_profile(&c, &normalized(&[&[0.0, 1.0]])).unwrap();
        assert_eq!((r.profile_id.as_str(), r.distance), ("c", 0.0));
        assert_eq!(r.cluster_id, c.cluster_of("c").unwrap());

        // Equidistant (1.0) from all three.
        let r = retrieve_profile(&c, &normalized(&[&[0.5, 0.5]])).unwrap();
        assert_eq!(r.profile_id, "a");
    }

    #[test]
    fn retrieval_errors() {
        let empty = ProfileCollection::from_parts(BTreeMap::new(), BTreeMap::new(), BTreeMap::new()).unwrap();
        assert!(matches!(
            retrieve_profile(&empty, &normalized(&[&[0.0]])),
            Err(Error::Empty(_))
        ));
        let c = cluster_collection(vec![("a".into(), normalized(&[&[0.0, 1.0]]))], 1, 0).unwrap();
        assert!(matches!(
            retrieve_profile(&c, &normalized(&[&[0.0]])),
            Err(Error::ShapeMismatch(_))
        ));
    }

    #[test]
    fn routed_retrieval_finds_stored_members() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for round in 0..50 {
            let profiles = random_profiles(&mut rng, 8, 2, 3);
            let c = cluster_collection(profiles, 3, round).unwrap();
            // Every member is assigned to its nearest medoid, so routing a
            // stored profile lands in its own cluster.
            for (pid, p) in &c.profiles {
                let routed = retrieve_routed(&c, p).unwrap();
                assert_eq!(routed.distance, 0.0, "round {round}, {pid}");
            }
            let query = random_profiles(&mut rng, 1, 2, 3).pop().unwrap().1;
            let routed = retrieve_routed(&c, &query).unwrap();
            let exact = retrieve_exhaustive(&c, &query).unwrap();
            assert!(routed.distance >= exact.distance);
            assert_eq!(retrieve_profile(&c, &query).unwrap(), exact);
        }
    }

    #[test]
    fn from_parts_rejects_broken_invariants() {
        let mut profiles = BTreeMap::new();
        profiles.insert("a".to_string(), normalized(&[&[0.0]]));
        profiles.insert("b".to_string(), normalized(&[&[1.0]]));
        let clusters: BTreeMap<String, Vec<String>> =
            [("k".to_string(), vec!["a".to_string()])].into();
        let medoids: BTreeMap<String, String> = [("k".to_string(), "a".to_string())].into();
        assert!(ProfileCollection::from_parts(profiles.clone(), clusters, medoids.clone()).is_err());
        let clusters: BTreeMap<String, Vec<String>> =
            [("k".to_string(), vec!["a".to_string(), "b".to_string()])].into();
        assert!(ProfileCollection::from_parts(profiles, clusters, medoids).is_ok());
    }

    #[test]
    fn zero_profile_is_neutral() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let m = synth::random_scenario(&mut rng, 3, 3, 3, 10.0);
        let zero = normalize_matrix(&EthicalProfileMatrix {
            entries: vec![0.5; 9],
            ..build_matrix(&m).unwrap()
        })
        .unwrap();
        let applied = apply_profile(&m, &zero).unwrap();
        for e in m.prescript_ids() {
            for c in m.dictum_ids() {
                assert_eq!(applied.baseline_weight(e, c), 1.0);
            }
        }
        assert_eq!(decide(&applied).unwrap(), decide(&m).unwrap());
    }

    #[test]
    fn unit_row_doubles_objective_contribution() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let m = synth::random_scenario(&mut rng, 3, 2, 2, 10.0);
        let base = build_matrix(&m).unwrap();
        let entries = base
            .prescript_ids
            .iter()
            .flat_map(|e| {
                let v = if e == "e0" { 1.0 } else { 0.0 };
                std::iter::repeat_n(v, base.cols())
            })
            .collect();
        let profile = EthicalProfileMatrix {
            entries,
            normalized: true,
            ..base
        };
        let before = decide(&m).unwrap();
        let after = decide(&apply_profile(&m, &profile).unwrap()).unwrap();
        for a in m.action_ids() {
            // Oracle: recompute the e0 partial sum with doubled weight directly.
            let direct: f64 = m
                .dictum_ids()
                .iter()
                .map(|c| 2.0 * m.context.0[*c] * m.conditional.0[*c]["e0"] * m.utilities.0[a][*c]["e0"])
                .sum();
            let got = after.objective_breakdown[a]["e0"];
            assert!((got - direct).abs() < 1e-12);
            assert!((got - 2.0 * before.objective_breakdown[a]["e0"]).abs() < 1e-12);
            assert_eq!(after.objective_breakdown[a]["e1"], before.objective_breakdown[a]["e1"]);
        }
    }

    #[test]
    fn apply_then_build_composes() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let m = synth::random_scenario(&mut rng, 3, 3, 1, 1.0);
        let profile = normalize_matrix(&EthicalProfileMatrix {
            entries: (0..9).map(|_| rng.random::<f64>()).collect(),
            ..build_matrix(&m).unwrap()
        })
        .unwrap();
        let rebuilt = build_matrix(&apply_profile(&m, &profile).unwrap()).unwrap();
        for e in m.prescript_ids() {
            for c in m.dictum_ids() {
                let expected = (1.0 + profile.lookup(e, c).unwrap()) * m.conditional.0[c][e];
                assert_eq!(rebuilt.lookup(e, c).unwrap(), expected);
            }
        }
    }

    #[test]
    fn apply_requires_id_coverage() {
        let m = synth::uniform_scenario(&["c1", "c2"], &["e1"], &["a1"]);
        let narrow = EthicalProfileMatrix::new(vec!["e1".into()], vec!["c1".into()], vec![0.0], true).unwrap();
        assert!(matches!(
            apply_profile(&m, &narrow),
            Err(Error::UnknownId { kind: "dictum", .. })
        ));
    }

    fn unit_matrix(len: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(0.0f64..=1.0, len)
    }

    proptest! {
        #[test]
        fn normalized_output_in_unit_interval(v in prop::collection::vec(-1e6f64..1e6, 1..24)) {
            let m = EthicalProfileMatrix::new(vec!["e".into()], (0..v.len()).map(|j| format!("c{j}")).collect(), v, false).unwrap();
            let once = normalize_matrix(&m).unwrap();
            prop_assert!(once.entries.iter().all(|x| (0.0..=1.0).contains(x)));
            let min = once.entries.iter().copied().fold(f64::INFINITY, f64::min);
            let max = once.entries.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if max > min {
                prop_assert_eq!(min, 0.0);
                prop_assert_eq!(max, 1.0);
                prop_assert_eq!(normalize_matrix(&once).unwrap(), once);
            }
        }

        #[test]
        fn distance_is_a_metric(x in unit_matrix(6), y in unit_matrix(6), z in unit_matrix(6)) {
            let wrap = |v: Vec<f64>| EthicalProfileMatrix::new(
                vec!["e0".into(), "e1".into()], vec!["c0".into(), "c1".into(), "c2".into()], v, true).unwrap();
            let (x, y, z) = (wrap(x), wrap(y), wrap(z));
            let dxy = matrix_distance(&x, &y).unwrap();
            prop_assert!(dxy >= 0.0);
            prop_assert_eq!(dxy, matrix_distance(&y, &x).unwrap());
            prop_assert_eq!(matrix_distance(&x, &x).unwrap(), 0.0);
            if x.entries != y.entries { prop_assert!(dxy > 0.0); }
            let dxz = matrix_distance(&x, &z).unwrap();
            let dyz = matrix_distance(&y, &z).unwrap();
            prop_assert!(dxz <= dxy + dyz + 1e-12);
        }
    }
}

use ethreason_core::decision::{action_distribution, decide, expected_utility};
use ethreason_core::profiles::{
    apply_profile, build_matrix, cluster_collection, normalize_matrix, retrieve_profile,
};
use ethreason_core::scenario_io::{
    bundled_scenarios, parse_index, parse_scenario, serialize_index, serialize_scenario,
};
use ethreason_core::synth;
use ethreason_core::verifier::{check_optimality, oracle_expected_utility, Verdict};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn bundled_scenarios_survive_text_round_trip_and_decide_identically() {
    for m in bundled_scenarios() {
        let again = parse_scenario(&serialize_scenario(&m).unwrap()).unwrap();
        assert_eq!(decide(&m).unwrap(), decide(&again).unwrap());
        assert_eq!(check_optimality(&again).unwrap().verdict, Verdict::Pass);
    }
}

#[test]
fn profile_store_retrieves_and_reweights() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let scenarios: Vec<_> = (0..12)
        .map(|_| synth::random_scenario(&mut rng, 3, 2, 2, 10.0))
        .collect();
    let profiles: Vec<_> = scenarios
        .iter()
        .enumerate()
        .map(|(i, m)| (format!("s{i:02}"), normalize_matrix(&build_matrix(m).unwrap()).unwrap()))
        .collect();
    let collection = cluster_collection(profiles.clone(), 3, 4).unwrap();
    let stored = parse_index(&serialize_index(&collection).unwrap()).unwrap();
    assert_eq!(stored, collection);

    for (id, p) in &profiles {
        let hit = retrieve_profile(&stored, p).unwrap();
        assert_eq!(hit.distance, 0.0);
        assert_eq!(&hit.profile_id, id);
    }

    let weighted = apply_profile(&scenarios[0], &profiles[5].1).unwrap();
    let report = decide(&weighted).unwrap();
    assert!(weighted.has_action(&report.chosen_action));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn chosen_action_maximizes_expected_utility(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = synth::random_scenario_up_to(&mut rng, 5, 4, 4, 50.0);
        let r = decide(&m).unwrap();
        let best = r.expected_utilities[&r.chosen_action];
        for (a, u) in &r.expected_utilities {
            prop_assert!(*u <= best + 1e-9, "{a}: {u} > {best}");
            prop_assert!((expected_utility(&m, a).unwrap() - oracle_expected_utility(&m, a)).abs() <= 1e-9);
        }
    }

    #[test]
    fn softmax_policy_is_a_distribution(seed in any::<u64>(), tau in 1e-3f64..1e3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = synth::random_scenario_up_to(&mut rng, 4, 4, 5, 100.0);
        let dist = action_distribution(&m, tau).unwrap();
        let total: f64 = dist.values().sum();
        prop_assert!((total - 1.0).abs() < 1e-9);
        prop_assert!(dist.values().all(|p| (0.0..=1.0).contains(p)));
        // Higher expected utility never gets lower probability.
        let eu = decide(&m).unwrap().expected_utilities;
        for (a, pa) in &dist {
            for (b, pb) in &dist {
                if eu[a] > eu[b] {
                    prop_assert!(pa >= pb);
                }
            }
        }
    }
}

//! Property tests for structural invariants.

use proptest::prelude::*;

use nrf_core::cart::{best_cut, criterion, grow_tree, StoppingRule};
use nrf_core::data::{split_dataset, synth_sine, Dataset};
use nrf_core::forest::{fit_forest, ForestParams, Resample};
use nrf_core::netcompile::{compile_tree, NetworkParams};
use nrf_core::rng::{next_unit, rng_from_seed};

fn random_dataset(n: usize, d: usize, seed: u64) -> Dataset {
    let mut rng = rng_from_seed(seed);
    let mut features = Vec::with_capacity(n * d);
    let mut target = Vec::with_capacity(n);
    for _ in 0..n {
        for _ in 0..d {
            features.push(next_unit(&mut rng));
        }
        target.push(10.0 * next_unit(&mut rng) - 5.0);
    }
    let names = (0..d).map(|j| format!("x{j}")).collect();
    Dataset::new(features, target, names).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn split_partitions_exactly(n in 4usize..300, seed in 0u64..1000) {
        let ds = synth_sine(n, 2, 0.1, 7).unwrap();
        let s = split_dataset(&ds, seed).unwrap();
        prop_assert_eq!(s.train.len(), n / 2);
        prop_assert_eq!(s.val.len(), n / 4);
        prop_assert_eq!(s.train.len() + s.val.len() + s.test.len(), n);
        let mut seen = vec![false; n];
        for &i in s.train.iter().chain(&s.val).chain(&s.test) {
            prop_assert!(!seen[i], "index {} appears twice", i);
            seen[i] = true;
        }
        prop_assert!(seen.iter().all(|&b| b));
    }

    #[test]
    fn admissible_cuts_never_have_negative_gain(n in 2usize..40, d in 1usize..4, seed in 0u64..500) {
        let ds = random_dataset(n, d, seed);
        let samples: Vec<usize> = (0..n).collect();
        for j in 0..d {
            let mut vals: Vec<f64> = samples.iter().map(|&i| ds.value(i, j)).collect();
            vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
            vals.dedup();
            for w in vals.windows(2) {
                let alpha = 0.5 * (w[0] + w[1]);
                if !(alpha > w[0]) {
                    continue;
                }
                let gain = criterion(&ds, &samples, j, alpha).unwrap();
                prop_assert!(gain >= 0.0, "gain {} at ({}, {})", gain, j, alpha);
            }
        }
    }

    #[test]
    fn best_cut_gain_is_positive_when_some(n in 2usize..40, seed in 0u64..500) {
        let ds = random_dataset(n, 2, seed);
        let samples: Vec<usize> = (0..n).collect();
        if let Some(s) = best_cut(&ds, &samples, &[0, 1]) {
            prop_assert!(s.gain > 0.0);
            prop_assert_eq!(criterion(&ds, &samples, s.feature, s.threshold).unwrap(), s.gain);
        }
    }

    #[test]
    fn per_node_feature_subsets_have_mtry_members(seed in 0u64..200, mtry in 1usize..4) {
        // Indirect check through determinism: a forest grown with mtry = d
        // must be invariant to the seed of the subset draws only when the
        // subsets cover everything; here we just re-grow and compare.
        let ds = random_dataset(40, 3, seed);
        let train: Vec<usize> = (0..40).collect();
        let params = ForestParams {
            trees: 2,
            resample: Resample::Subsample(20),
            mtry,
            stop: StoppingRule::MaxDepth(3),
            seed,
        };
        let a = fit_forest(&ds, &train, params).unwrap();
        let b = fit_forest(&ds, &train, params).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn network_text_round_trip(seed in 0u64..300) {
        let ds = random_dataset(48, 2, seed);
        let samples: Vec<usize> = (0..48).collect();
        let tree = grow_tree(&ds, &samples, StoppingRule::MaxDepth(4), 1, seed);
        let net = compile_tree(&tree, 100.0, 1.0);
        let back = NetworkParams::from_text(&net.to_text()).unwrap();
        prop_assert_eq!(net, back);
        let tree_back = nrf_core::cart::RegressionTree::from_text(&tree.to_text()).unwrap();
        prop_assert_eq!(tree, tree_back);
    }
}

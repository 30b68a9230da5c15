//! Split-search correctness against an independent brute-force oracle.
//!
//! The oracle evaluates the literal before/after sum-of-squared-errors
//! difference at every admissible midpoint, with the same tie-break
//! (lowest feature, then lowest threshold). The library's sweep must agree
//! on the chosen cut exactly and on the gain to 1e-12.

use nrf_core::cart::{best_cut, criterion, grow_tree, predict_tree, StoppingRule};
use nrf_core::data::Dataset;
use nrf_core::rng::{next_index, next_unit, rng_from_seed, Rng};

fn sse(ys: &[f64]) -> f64 {
    let mean = ys.iter().sum::<f64>() / ys.len() as f64;
    ys.iter().map(|y| (y - mean) * (y - mean)).sum()
}

/// Literal evaluation of the variance-decrease criterion at one cut.
fn oracle_gain(ds: &Dataset, samples: &[usize], feature: usize, alpha: f64) -> f64 {
    let node: Vec<f64> = samples.iter().map(|&i| ds.target(i)).collect();
    let left: Vec<f64> = samples
        .iter()
        .filter(|&&i| ds.value(i, feature) < alpha)
        .map(|&i| ds.target(i))
        .collect();
    let right: Vec<f64> = samples
        .iter()
        .filter(|&&i| ds.value(i, feature) >= alpha)
        .map(|&i| ds.target(i))
        .collect();
    assert!(!left.is_empty() && !right.is_empty());
    (sse(&node) - sse(&left) - sse(&right)) / samples.len() as f64
}

/// Exhaustive scan over all (feature, midpoint) pairs.
fn oracle_best(ds: &Dataset, samples: &[usize], features: &[usize]) -> Option<(usize, f64, f64)> {
    let mut best: Option<(usize, f64, f64)> = None;
    for &j in features {
        let mut vals: Vec<f64> = samples.iter().map(|&i| ds.value(i, j)).collect();
        vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
        vals.dedup();
        for w in vals.windows(2) {
            let alpha = 0.5 * (w[0] + w[1]);
            if !(alpha > w[0]) {
                continue;
            }
            let gain = oracle_gain(ds, samples, j, alpha);
            if gain > best.map_or(0.0, |(_, _, g)| g) {
                best = Some((j, alpha, gain));
            }
        }
    }
    best
}

fn random_node(rng: &mut Rng, max_n: usize, max_d: usize) -> (Dataset, Vec<usize>) {
    let n = 2 + next_index(rng, max_n - 1);
    let d = 1 + next_index(rng, max_d);
    let mut features = Vec::with_capacity(n * d);
    let mut target = Vec::with_capacity(n);
    for _ in 0..n {
        for _ in 0..d {
            features.push(next_unit(rng));
        }
        target.push(4.0 * next_unit(rng) - 2.0);
    }
    let names = (0..d).map(|j| format!("x{j}")).collect();
    let ds = Dataset::new(features, target, names).unwrap();
    let samples = (0..n).collect();
    (ds, samples)
}

#[test]
fn best_cut_matches_brute_force_on_random_nodes() {
    let mut rng = rng_from_seed(0xCA57);
    for case in 0..300 {
        let (ds, samples) = random_node(&mut rng, 50, 4);
        let features: Vec<usize> = (0..ds.n_features()).collect();
        let ours = best_cut(&ds, &samples, &features);
        let oracle = oracle_best(&ds, &samples, &features);
        match (ours, oracle) {
            (None, None) => {}
            (Some(s), Some((j, alpha, gain))) => {
                assert_eq!(s.feature, j, "case {case}: feature mismatch");
                assert_eq!(s.threshold, alpha, "case {case}: threshold mismatch");
                assert!(
                    (s.gain - gain).abs() <= 1e-12,
                    "case {case}: gain {} vs oracle {gain}",
                    s.gain
                );
            }
            (a, b) => panic!("case {case}: {a:?} vs oracle {b:?}"),
        }
    }
}

#[test]
fn best_cut_matches_oracle_on_restricted_subsets() {
    let mut rng = rng_from_seed(0x5EED);
    for _ in 0..100 {
        let (ds, samples) = random_node(&mut rng, 40, 4);
        if ds.n_features() < 2 {
            continue;
        }
        // Exclude a feature; the search must still match the restricted scan.
        let excluded = next_index(&mut rng, ds.n_features());
        let features: Vec<usize> = (0..ds.n_features()).filter(|&j| j != excluded).collect();
        let ours = best_cut(&ds, &samples, &features);
        let oracle = oracle_best(&ds, &samples, &features);
        match (ours, oracle) {
            (None, None) => {}
            (Some(s), Some((j, alpha, gain))) => {
                assert_eq!((s.feature, s.threshold), (j, alpha));
                assert!((s.gain - gain).abs() <= 1e-12);
            }
            (a, b) => panic!("{a:?} vs oracle {b:?}"),
        }
    }
}

#[test]
fn criterion_agrees_with_literal_sse_difference() {
    let mut rng = rng_from_seed(0xFACE);
    for _ in 0..200 {
        let (ds, samples) = random_node(&mut rng, 30, 3);
        let j = next_index(&mut rng, ds.n_features());
        let mut vals: Vec<f64> = samples.iter().map(|&i| ds.value(i, j)).collect();
        vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
        vals.dedup();
        if vals.len() < 2 {
            continue;
        }
        let w = next_index(&mut rng, vals.len() - 1);
        let alpha = 0.5 * (vals[w] + vals[w + 1]);
        if !(alpha > vals[w]) {
            continue;
        }
        let ours = criterion(&ds, &samples, j, alpha).unwrap();
        let oracle = oracle_gain(&ds, &samples, j, alpha);
        assert!((ours - oracle).abs() <= 1e-12, "{ours} vs {oracle}");
        assert!(ours >= 0.0);
    }
}

#[test]
fn training_point_predictions_reproduce_leaf_means() {
    // Partition oracle: grouping training rows by reached leaf and averaging
    // targets must match the stored means.
    let mut rng = rng_from_seed(0xBEEF);
    for _ in 0..40 {
        let (ds, samples) = random_node(&mut rng, 60, 3);
        let depth = 1 + next_index(&mut rng, 5);
        let tree = grow_tree(&ds, &samples, StoppingRule::MaxDepth(depth), ds.n_features(), 7);

        let mut sums: std::collections::HashMap<usize, (f64, usize)> = Default::default();
        for &i in &samples {
            let leaf = tree.leaf_of(ds.row(i));
            let e = sums.entry(leaf).or_insert((0.0, 0));
            e.0 += ds.target(i);
            e.1 += 1;
        }
        assert_eq!(sums.len(), tree.leaf_count());
        for (&leaf, &(sum, count)) in &sums {
            let recomputed = sum / count as f64;
            match tree.node(leaf) {
                nrf_core::cart::Node::Leaf { mean, count: c, .. } => {
                    assert_eq!(*c, count);
                    let denom = mean.abs().max(1.0);
                    assert!((mean - recomputed).abs() / denom <= 1e-12);
                }
                _ => panic!("leaf_of returned an internal node"),
            }
        }
        for &i in &samples {
            let leaf = tree.leaf_of(ds.row(i));
            if let nrf_core::cart::Node::Leaf { mean, .. } = tree.node(leaf) {
                assert_eq!(predict_tree(&tree, ds.row(i)), *mean);
            }
        }
    }
}

#[test]
fn stopping_rules_hold() {
    let mut rng = rng_from_seed(0xD00D);
    for _ in 0..40 {
        let (ds, samples) = random_node(&mut rng, 64, 3);
        let k = 2 + next_index(&mut rng, 12);
        let tree = grow_tree(&ds, &samples, StoppingRule::ExactLeaves(k), ds.n_features(), 3);
        assert!(tree.leaf_count() <= k);
        if tree.leaf_count() < k {
            // Growth stopped early, so no leaf may admit a positive cut.
            let features: Vec<usize> = (0..ds.n_features()).collect();
            for &i in &samples {
                let leaf = tree.leaf_of(ds.row(i));
                let members: Vec<usize> = samples
                    .iter()
                    .copied()
                    .filter(|&s| tree.leaf_of(ds.row(s)) == leaf)
                    .collect();
                assert!(best_cut(&ds, &members, &features).is_none());
            }
        }

        let depth = 1 + next_index(&mut rng, 6);
        let tree = grow_tree(&ds, &samples, StoppingRule::MaxDepth(depth), ds.n_features(), 3);
        for node in tree.nodes() {
            assert!(node.depth() <= depth);
            if !node.is_leaf() {
                assert!(node.depth() < depth);
            }
        }
    }
}

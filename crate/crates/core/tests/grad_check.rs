//! Analytic gradients against central finite differences.
//!
//! The oracle differentiates the batch-mean squared error through the
//! batched prediction path only; it never touches the backward code.
//! Comparison rule: relative error at most 1e-5 where the analytic
//! gradient is at least 1e-8 in magnitude, absolute error at most 1e-8
//! below that.
//!
//! To make that rule attainable at every coordinate, the oracle must be
//! accurate to well under 1e-5 relative at |grad| = 1e-8, i.e. to ~1e-13
//! absolute. A plain central difference cannot do that (roundoff noise
//! eps*|loss|/2h is ~1e-11 at h = 1e-6), so the oracle uses the
//! fourth-order five-point stencil at h = 3e-5 and batches whose targets
//! sit close to the predictions, keeping |loss| small. Contrasts are kept
//! moderate for the same reason; the backward code is identical at any
//! contrast.

use nrf_core::baselines::MlpSpec;
use nrf_core::cart::{grow_tree, StoppingRule};
use nrf_core::data::Dataset;
use nrf_core::netcompile::{compile_tree, concat_networks, NetworkParams};
use nrf_core::rng::{next_index, next_standard_normal, next_unit, rng_from_seed, Rng};
use nrf_core::train::{MaskedNet, Mode, Trainable};

fn batch_loss<M: Trainable>(model: &M, xs: &[f64], ys: &[f64]) -> f64 {
    let mut out = vec![0.0; ys.len()];
    model.predict_batch_into(xs, &mut out);
    out.iter()
        .zip(ys)
        .map(|(o, y)| (o - y) * (o - y))
        .sum::<f64>()
        / ys.len() as f64
}

fn perturbed<M: Trainable>(model: &M, coord: usize, h: f64) -> M {
    let mut copy = model.clone();
    let mut idx = 0;
    copy.visit_params_mut(|p| {
        if idx == coord {
            *p += h;
        }
        idx += 1;
    });
    copy
}

/// Central finite differences (five-point stencil), restricted to `live`
/// coordinates.
fn check_gradients<M: Trainable>(model: &M, xs: &[f64], ys: &[f64], live: &[bool], label: &str) {
    let h = 3e-5;
    let mut grad = vec![0.0; model.param_count()];
    model.batch_gradient_into(xs, ys, &mut grad);
    assert_eq!(live.len(), grad.len());
    for (i, (&g, &is_live)) in grad.iter().zip(live).enumerate() {
        if !is_live {
            assert_eq!(g, 0.0, "{label}: masked coordinate {i} must have zero gradient");
            continue;
        }
        let l = |step: f64| batch_loss(&perturbed(model, i, step), xs, ys);
        let fd = (-l(2.0 * h) + 8.0 * l(h) - 8.0 * l(-h) + l(-2.0 * h)) / (12.0 * h);
        if g.abs() < 1e-8 {
            assert!(
                (g - fd).abs() <= 1e-8,
                "{label}: coord {i}: analytic {g}, fd {fd}"
            );
        } else {
            let rel = (g - fd).abs() / g.abs().max(fd.abs());
            assert!(rel <= 1e-5, "{label}: coord {i}: analytic {g}, fd {fd}, rel {rel}");
        }
    }
}

fn live_mask(net: &NetworkParams, mode: Mode) -> Vec<bool> {
    let mut live = Vec::with_capacity(net.param_count());
    match mode {
        Mode::Sparse => {
            live.extend(net.mask1.iter().copied());
            live.extend(std::iter::repeat(true).take(net.b1.len()));
            live.extend(net.mask2.iter().copied());
            live.extend(std::iter::repeat(true).take(net.b2.len() + net.w_out.len() + 1));
        }
        Mode::FullyConnected => live.extend(std::iter::repeat(true).take(net.param_count())),
    }
    live
}

fn random_instance(rng: &mut Rng, n: usize, d: usize, depth: usize, seed: u64) -> (Dataset, NetworkParams) {
    let mut features = Vec::with_capacity(n * d);
    let mut target = Vec::with_capacity(n);
    for _ in 0..n {
        for _ in 0..d {
            features.push(next_unit(rng));
        }
        target.push(3.0 * next_unit(rng) - 1.5);
    }
    let names = (0..d).map(|j| format!("x{j}")).collect();
    let ds = Dataset::new(features, target, names).unwrap();
    let samples: Vec<usize> = (0..n).collect();
    let tree = grow_tree(&ds, &samples, StoppingRule::MaxDepth(depth), d, seed);
    // Moderate contrasts keep the loss surface within the reach of central
    // differences at h = 1e-6.
    let gamma1 = 1.0 + 4.0 * next_unit(rng);
    let gamma2 = 0.5 + next_unit(rng);
    (ds.clone(), compile_tree(&tree, gamma1, gamma2))
}

/// Random batch plus a parameter jiggle so gradients are well scaled.
fn jiggled(net: &NetworkParams, rng: &mut Rng, amount: f64) -> NetworkParams {
    let mut out = net.clone();
    let mut shaken = MaskedNet::new(out.clone(), Mode::FullyConnected);
    shaken.visit_params_mut(|p| *p += amount * next_standard_normal(rng));
    out = shaken.params;
    out
}

/// Random inputs with targets a small residual away from the model's own
/// predictions, keeping the loss (and thus finite-difference roundoff)
/// small without shrinking the gradients' direction structure.
fn random_batch<M: Trainable>(rng: &mut Rng, model: &M, b: usize, d: usize) -> (Vec<f64>, Vec<f64>) {
    let mut xs = Vec::with_capacity(b * d);
    for _ in 0..b {
        for _ in 0..d {
            xs.push(next_unit(rng));
        }
    }
    let mut ys = vec![0.0; b];
    model.predict_batch_into(&xs, &mut ys);
    for y in ys.iter_mut() {
        *y += 0.05 * next_standard_normal(rng);
    }
    (xs, ys)
}

#[test]
fn small_networks_pass_both_modes() {
    let mut rng = rng_from_seed(0x6AAD);
    for case in 0..8 {
        let d = 1 + next_index(&mut rng, 3);
        let (_, net) = random_instance(&mut rng, 24, d, 3, case);
        let net = jiggled(&net, &mut rng, 0.05);
        let probe = MaskedNet::new(net.clone(), Mode::FullyConnected);
        let (xs, ys) = random_batch(&mut rng, &probe, 6, d);
        for mode in [Mode::Sparse, Mode::FullyConnected] {
            let model = MaskedNet::new(net.clone(), mode);
            let live = live_mask(&net, mode);
            check_gradients(&model, &xs, &ys, &live, &format!("small case {case} {mode:?}"));
        }
    }
}

#[test]
fn concatenated_networks_pass_both_modes() {
    let mut rng = rng_from_seed(0xB16);
    for case in 0..4 {
        let d = 1 + next_index(&mut rng, 2);
        let members: Vec<NetworkParams> = (0..3)
            .map(|i| {
                let (_, mut net) = random_instance(&mut rng, 20, d, 2, case * 10 + i);
                // Members must share contrasts to concatenate.
                net.gamma1 = 3.0;
                net.gamma2 = 0.8;
                net
            })
            .collect();
        let big = concat_networks(&members).unwrap();
        let net = jiggled(&big.params, &mut rng, 0.05);
        let probe = MaskedNet::new(net.clone(), Mode::FullyConnected);
        let (xs, ys) = random_batch(&mut rng, &probe, 5, d);
        for mode in [Mode::Sparse, Mode::FullyConnected] {
            let model = MaskedNet::new(net.clone(), mode);
            let live = live_mask(&net, mode);
            check_gradients(&model, &xs, &ys, &live, &format!("big case {case} {mode:?}"));
        }
    }
}

#[test]
fn baseline_mlps_pass_at_every_depth() {
    let mut rng = rng_from_seed(0x3A11);
    for depth in 1..=3 {
        let d = 2;
        let spec = MlpSpec {
            layer_sizes: vec![6, 5, 4][..depth].to_vec(),
            contrasts: vec![2.0, 1.0, 1.0][..depth].to_vec(),
            seed: depth as u64,
        };
        let mlp = spec.init(d);
        let (xs, ys) = random_batch(&mut rng, &mlp, 6, d);
        let live = vec![true; mlp.param_count()];
        check_gradients(&mlp, &xs, &ys, &live, &format!("mlp depth {depth}"));
    }
}

#[test]
fn zero_residual_batches_have_zero_gradient() {
    let mut rng = rng_from_seed(0x0);
    let (_, net) = random_instance(&mut rng, 30, 2, 3, 1);
    let model = MaskedNet::new(net, Mode::FullyConnected);
    let (xs, _) = random_batch(&mut rng, &model, 8, 2);
    let mut ys = vec![0.0; 8];
    model.predict_batch_into(&xs, &mut ys);
    let mut grad = vec![0.0; model.param_count()];
    model.batch_gradient_into(&xs, &ys, &mut grad);
    assert!(grad.iter().all(|&g| g == 0.0));
}

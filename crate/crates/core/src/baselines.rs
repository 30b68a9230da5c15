//! Plain fully connected feed-forward baselines (NN1, NN2, NN3), sized to
//! match the concatenated network of a fitted forest and initialized with
//! standard Gaussian draws. They train through the same epoch loop as the
//! compiled networks; no fallback rule applies.

use alloc::vec;
use alloc::vec::Vec;

use crate::forest::ForestModel;
use crate::num;
use crate::rng;
use crate::train::Trainable;

/// Architecture of a baseline network: hidden widths, per-layer tanh
/// contrasts, and the Gaussian init seed.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpSpec {
    pub layer_sizes: Vec<usize>,
    pub contrasts: Vec<f64>,
    pub seed: u64,
}

/// Baseline widths copied from the concatenated network of `forest`:
/// one hidden layer uses the total internal-node count, two layers add the
/// total leaf count, and a third layer repeats the leaf count.
///
/// Layer 1 uses the first contrast, deeper layers the second, mirroring
/// the compiled networks.
pub fn mlp_from_forest_shape(
    forest: &ForestModel,
    depth_choice: usize,
    gamma1: f64,
    gamma2: f64,
    seed: u64,
) -> MlpSpec {
    assert!(
        (1..=3).contains(&depth_choice),
        "baselines have one to three hidden layers"
    );
    let h1 = forest.total_internal_nodes();
    let h2 = forest.total_leaves();
    let layer_sizes = match depth_choice {
        1 => vec![h1],
        2 => vec![h1, h2],
        _ => vec![h1, h2, h2],
    };
    let contrasts = layer_sizes
        .iter()
        .enumerate()
        .map(|(l, _)| if l == 0 { gamma1 } else { gamma2 })
        .collect();
    MlpSpec {
        layer_sizes,
        contrasts,
        seed,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpLayer {
    /// Row-major `in x out`.
    pub w: Vec<f64>,
    pub b: Vec<f64>,
    pub gamma: f64,
}

/// Fully connected tanh network with a linear scalar output.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub d: usize,
    pub layers: Vec<MlpLayer>,
    pub w_out: Vec<f64>,
    pub b_out: f64,
}

impl MlpSpec {
    /// Instantiates the network with every weight and bias drawn i.i.d.
    /// from the standard Gaussian, in layer order.
    pub fn init(&self, d: usize) -> Mlp {
        let mut r = rng::rng_from_seed(self.seed);
        let mut layers = Vec::with_capacity(self.layer_sizes.len());
        let mut fan_in = d;
        for (&width, &gamma) in self.layer_sizes.iter().zip(&self.contrasts) {
            let mut w = vec![0.0; fan_in * width];
            for v in w.iter_mut() {
                *v = rng::next_standard_normal(&mut r);
            }
            let mut b = vec![0.0; width];
            for v in b.iter_mut() {
                *v = rng::next_standard_normal(&mut r);
            }
            layers.push(MlpLayer { w, b, gamma });
            fan_in = width;
        }
        let mut w_out = vec![0.0; fan_in];
        for v in w_out.iter_mut() {
            *v = rng::next_standard_normal(&mut r);
        }
        let b_out = rng::next_standard_normal(&mut r);
        Mlp {
            d,
            layers,
            w_out,
            b_out,
        }
    }
}

impl Mlp {
    fn widths(&self) -> Vec<usize> {
        self.layers.iter().map(|l| l.b.len()).collect()
    }

    /// Forward pass saving every activation matrix (batch-major).
    fn forward_batch(&self, xs: &[f64], n: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
        let mut acts: Vec<Vec<f64>> = Vec::with_capacity(self.layers.len());
        let mut input = xs;
        let mut fan_in = self.d;
        for layer in &self.layers {
            let width = layer.b.len();
            let mut pre = vec![0.0; n * width];
            crate::kernel::forward_affine(input, n, fan_in, &layer.w, &layer.b, &mut pre);
            let mut act = vec![0.0; n * width];
            crate::kernel::tanh_map(layer.gamma, &pre, &mut act);
            acts.push(act);
            input = acts.last().unwrap();
            fan_in = width;
        }
        let last = acts.last().map(|a| a.as_slice()).unwrap_or(xs);
        let width = fan_in;
        let mut out = vec![0.0; n];
        for b in 0..n {
            let zrow = &last[b * width..(b + 1) * width];
            let mut acc = 0.0;
            for (&w, &z) in self.w_out.iter().zip(zrow) {
                acc += w * z;
            }
            out[b] = acc + self.b_out;
        }
        (acts, out)
    }
}

impl Trainable for Mlp {
    fn input_dim(&self) -> usize {
        self.d
    }

    fn param_count(&self) -> usize {
        let mut count = self.w_out.len() + 1;
        for layer in &self.layers {
            count += layer.w.len() + layer.b.len();
        }
        count
    }

    fn predict(&self, x: &[f64]) -> f64 {
        let (_, out) = self.forward_batch(x, 1);
        out[0]
    }

    fn predict_batch_into(&self, xs: &[f64], out: &mut [f64]) {
        let (_, o) = self.forward_batch(xs, out.len());
        out.copy_from_slice(&o);
    }

    fn batch_gradient_into(&self, xs: &[f64], ys: &[f64], grad: &mut [f64]) {
        let n = ys.len();
        assert!(n > 0, "gradient of an empty batch");
        assert_eq!(grad.len(), self.param_count());
        let (acts, out) = self.forward_batch(xs, n);
        let widths = self.widths();
        let last_width = *widths.last().expect("at least one hidden layer");

        // Split the flat gradient into per-layer segments.
        let mut segments: Vec<(&mut [f64], &mut [f64])> = Vec::with_capacity(self.layers.len());
        let mut rest = grad;
        let mut fan_in = self.d;
        for &width in &widths {
            let (gw, r) = rest.split_at_mut(fan_in * width);
            let (gb, r) = r.split_at_mut(width);
            segments.push((gw, gb));
            rest = r;
            fan_in = width;
        }
        let (gwout, gbout) = rest.split_at_mut(last_width);

        let scale = 2.0 / n as f64;
        let last_act = acts.last().unwrap();
        gwout.fill(0.0);
        gbout[0] = 0.0;
        // delta at the deepest hidden layer
        let mut delta = vec![0.0; n * last_width];
        for b in 0..n {
            let r = scale * (out[b] - ys[b]);
            gbout[0] += r;
            let zrow = &last_act[b * last_width..(b + 1) * last_width];
            let gamma = self.layers.last().unwrap().gamma;
            for k in 0..last_width {
                gwout[k] += r * zrow[k];
                delta[b * last_width + k] = r * self.w_out[k] * gamma * (1.0 - zrow[k] * zrow[k]);
            }
        }

        for l in (0..self.layers.len()).rev() {
            let width = widths[l];
            let (gw, gb) = &mut segments[l];
            gb.fill(0.0);
            crate::kernel::grad_bias(&delta, n, width, gb);
            if l > 0 {
                let prev_width = widths[l - 1];
                let gamma = self.layers[l - 1].gamma;
                let prev_act = &acts[l - 1];
                // One fused stream over the layer weights yields both the
                // weight gradient and the backpropagated signal.
                let mut back = vec![0.0; n * prev_width];
                crate::kernel::backward_fused(
                    prev_act,
                    n,
                    prev_width,
                    width,
                    &self.layers[l].w,
                    &delta,
                    gw,
                    &mut back,
                );
                let mut next_delta = vec![0.0; n * prev_width];
                for (nd, (&bk, &z)) in next_delta.iter_mut().zip(back.iter().zip(prev_act.iter()))
                {
                    *nd = bk * gamma * (1.0 - z * z);
                }
                delta = next_delta;
            } else {
                gw.fill(0.0);
                crate::kernel::grad_narrow(xs, n, self.d, &delta, width, gw);
            }
        }
    }

    fn visit_params_mut<F: FnMut(&mut f64)>(&mut self, mut f: F) {
        for layer in self.layers.iter_mut() {
            for v in layer.w.iter_mut() {
                f(v);
            }
            for v in layer.b.iter_mut() {
                f(v);
            }
        }
        for v in self.w_out.iter_mut() {
            f(v);
        }
        f(&mut self.b_out);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cart::StoppingRule;
    use crate::data::{split_dataset, synth_sine};
    use crate::forest::{fit_forest, ForestParams, Resample};
    use crate::train::{train_network, DataView, TrainConfig};

    fn forest_fixture() -> (crate::data::Dataset, crate::data::SplitIndices, ForestModel) {
        let ds = synth_sine(80, 2, 0.05, 21).unwrap();
        let split = split_dataset(&ds, 0).unwrap();
        let forest = fit_forest(
            &ds,
            &split.train,
            ForestParams {
                trees: 2,
                resample: Resample::Bootstrap,
                mtry: 1,
                stop: StoppingRule::MaxDepth(3),
                seed: 21,
            },
        )
        .unwrap();
        (ds, split, forest)
    }

    #[test]
    fn widths_follow_forest_counts() {
        let (_, _, forest) = forest_fixture();
        let h1 = forest.total_internal_nodes();
        let h2 = forest.total_leaves();
        assert_eq!(
            mlp_from_forest_shape(&forest, 1, 100.0, 1.0, 0).layer_sizes,
            alloc::vec![h1]
        );
        assert_eq!(
            mlp_from_forest_shape(&forest, 2, 100.0, 1.0, 0).layer_sizes,
            alloc::vec![h1, h2]
        );
        // The third layer repeats the second's width.
        assert_eq!(
            mlp_from_forest_shape(&forest, 3, 100.0, 1.0, 0).layer_sizes,
            alloc::vec![h1, h2, h2]
        );
        let spec = mlp_from_forest_shape(&forest, 3, 100.0, 1.0, 0);
        assert_eq!(spec.contrasts, alloc::vec![100.0, 1.0, 1.0]);
    }

    #[test]
    fn init_is_seeded_and_gaussian_scaled() {
        let spec = MlpSpec {
            layer_sizes: alloc::vec![16, 8],
            contrasts: alloc::vec![100.0, 1.0],
            seed: 5,
        };
        let a = spec.init(4);
        let b = spec.init(4);
        assert_eq!(a, b);
        // Standard normal draws should not all be tiny or huge.
        let spread = a.layers[0].w.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
        assert!(spread > 0.5 && spread < 10.0);
    }

    #[test]
    fn baseline_trains_through_the_shared_loop() {
        let (ds, split, forest) = forest_fixture();
        let spec = mlp_from_forest_shape(&forest, 2, 100.0, 1.0, 3);
        let mlp = spec.init(ds.n_features());
        let (tx, ty) = crate::train::gather_matrix(&ds, &split.train);
        let (vx, vy) = crate::train::gather_matrix(&ds, &split.val);
        let cfg = TrainConfig {
            epochs: 5,
            seed: 2,
            ..TrainConfig::default()
        };
        let (best, history) = train_network(
            &mlp,
            DataView::new(&tx, &ty, 2),
            DataView::new(&vx, &vy, 2),
            &cfg,
        )
        .unwrap();
        assert_eq!(history.len(), 6);
        let min = history.iter().map(|r| r.val_rmse).fold(f64::INFINITY, f64::min);
        let mut preds = alloc::vec![0.0; vy.len()];
        best.predict_batch_into(&vx, &mut preds);
        assert_eq!(crate::metrics::rmse(&preds, &vy), min);
    }
}

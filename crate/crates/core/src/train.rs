//! Gradient refinement of compiled networks.
//!
//! Minibatch Adam on the batch-mean squared error, epochwise reshuffling,
//! per-epoch train/validation RMSE monitoring, and selection of the epoch
//! snapshot with minimum validation RMSE. Sparse mode restricts training to
//! the tree-derived connections by zeroing gradients outside the masks;
//! fully connected mode trains every entry, with the non-tree entries warm
//! started at zero.
//!
//! Models that outlive their warm start are guarded by the forest fallback:
//! if a trained model's validation RMSE never beats the forest's at any
//! epoch, the forest's predictions are kept instead.

use alloc::vec;
use alloc::vec::Vec;

use crate::data::{Dataset, SplitIndices};
use crate::kernel;
use crate::forest::{predict_forest, ForestModel};
use crate::metrics::rmse;
use crate::netcompile::{compile_tree, concat_networks, BigNetworkParams, NetworkParams};
use crate::num;
use crate::rng;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TrainError {
    BadConfig(&'static str),
    ShapeMismatch(&'static str),
    EmptySet,
}

impl core::fmt::Display for TrainError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            TrainError::BadConfig(what) => write!(f, "invalid training config: {what}"),
            TrainError::ShapeMismatch(what) => write!(f, "shape mismatch: {what}"),
            TrainError::EmptySet => write!(f, "training and validation sets must be non-empty"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for TrainError {}

/// Which weights the optimizer may move.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Only tree-derived connections are trainable.
    Sparse,
    /// Every entry is trainable; non-tree entries start at zero.
    FullyConnected,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub mode: Mode,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 100,
            batch_size: 32,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            mode: Mode::Sparse,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if self.epochs == 0 {
            return Err(TrainError::BadConfig("epochs must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(TrainError::BadConfig("batch size must be at least 1"));
        }
        if !(self.learning_rate > 0.0) && self.learning_rate != 0.0 {
            return Err(TrainError::BadConfig("learning rate must be nonnegative"));
        }
        if !(0.0 < self.beta1 && self.beta1 < 1.0 && 0.0 < self.beta2 && self.beta2 < 1.0) {
            return Err(TrainError::BadConfig("betas must lie in (0, 1)"));
        }
        if !(self.eps > 0.0) {
            return Err(TrainError::BadConfig("eps must be positive"));
        }
        Ok(())
    }
}

/// Borrowed row-major design matrix with targets.
#[derive(Clone, Copy)]
pub struct DataView<'a> {
    pub x: &'a [f64],
    pub y: &'a [f64],
    pub d: usize,
}

impl<'a> DataView<'a> {
    pub fn new(x: &'a [f64], y: &'a [f64], d: usize) -> Self {
        debug_assert_eq!(x.len(), y.len() * d);
        DataView { x, y, d }
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn row(&self, i: usize) -> &'a [f64] {
        &self.x[i * self.d..(i + 1) * self.d]
    }
}

/// Copies the rows of `idx` out of a dataset into a dense matrix.
pub fn gather_matrix(ds: &Dataset, idx: &[usize]) -> (Vec<f64>, Vec<f64>) {
    let d = ds.n_features();
    let mut x = Vec::with_capacity(idx.len() * d);
    let mut y = Vec::with_capacity(idx.len());
    for &i in idx {
        x.extend_from_slice(ds.row(i));
        y.push(ds.target(i));
    }
    (x, y)
}

/// A model trainable by minibatch gradient descent. Parameters expose a
/// fixed flat order shared by gradients and optimizer state.
pub trait Trainable: Clone {
    fn input_dim(&self) -> usize;
    fn param_count(&self) -> usize;
    fn predict(&self, x: &[f64]) -> f64;
    /// Batched prediction; bit-identical to per-row `predict`.
    fn predict_batch_into(&self, xs: &[f64], out: &mut [f64]);
    /// Gradient of the batch-mean squared error, overwriting `grad`.
    fn batch_gradient_into(&self, xs: &[f64], ys: &[f64], grad: &mut [f64]);
    /// Visits every parameter in flat order.
    fn visit_params_mut<F: FnMut(&mut f64)>(&mut self, f: F);
}

// ---------------------------------------------------------------------
// Compiled-network model
// ---------------------------------------------------------------------

/// A compiled network together with its training mode.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskedNet {
    pub params: NetworkParams,
    pub mode: Mode,
}

impl MaskedNet {
    pub fn new(params: NetworkParams, mode: Mode) -> Self {
        MaskedNet { params, mode }
    }
}

struct NetScratch {
    pre: Vec<f64>,
    z1: Vec<f64>,
    z2: Vec<f64>,
    out: Vec<f64>,
    delta2: Vec<f64>,
    delta1: Vec<f64>,
}

impl MaskedNet {
    fn forward_batch(&self, xs: &[f64], n: usize, s: &mut NetScratch) {
        let p = &self.params;
        s.pre.resize(n * p.h1.max(p.h2), 0.0);
        s.z1.resize(n * p.h1, 0.0);
        s.z2.resize(n * p.h2, 0.0);
        s.out.resize(n, 0.0);
        kernel::forward_affine(xs, n, p.d, &p.w1, &p.b1, &mut s.pre[..n * p.h1]);
        kernel::tanh_map(p.gamma1, &s.pre[..n * p.h1], &mut s.z1);
        kernel::forward_affine(&s.z1, n, p.h1, &p.w2, &p.b2, &mut s.pre[..n * p.h2]);
        kernel::tanh_map(p.gamma2, &s.pre[..n * p.h2], &mut s.z2);
        for b in 0..n {
            let zrow = &s.z2[b * p.h2..(b + 1) * p.h2];
            let mut acc = 0.0;
            for (&w, &z) in p.w_out.iter().zip(zrow) {
                acc += w * z;
            }
            s.out[b] = acc + p.b_out;
        }
    }
}

impl Trainable for MaskedNet {
    fn input_dim(&self) -> usize {
        self.params.d
    }

    fn param_count(&self) -> usize {
        self.params.param_count()
    }

    fn predict(&self, x: &[f64]) -> f64 {
        crate::netcompile::forward_tanh(&self.params, x)
    }

    fn predict_batch_into(&self, xs: &[f64], out: &mut [f64]) {
        let mut s = NetScratch {
            pre: Vec::new(),
            z1: Vec::new(),
            z2: Vec::new(),
            out: Vec::new(),
            delta2: Vec::new(),
            delta1: Vec::new(),
        };
        self.forward_batch(xs, out.len(), &mut s);
        out.copy_from_slice(&s.out);
    }

    fn batch_gradient_into(&self, xs: &[f64], ys: &[f64], grad: &mut [f64]) {
        let p = &self.params;
        let n = ys.len();
        assert!(n > 0, "gradient of an empty batch");
        assert_eq!(grad.len(), self.param_count());
        let mut s = NetScratch {
            pre: Vec::new(),
            z1: Vec::new(),
            z2: Vec::new(),
            out: Vec::new(),
            delta2: vec![0.0; n * p.h2],
            delta1: vec![0.0; n * p.h1],
        };
        self.forward_batch(xs, n, &mut s);

        let (gw1, rest) = grad.split_at_mut(p.w1.len());
        let (gb1, rest) = rest.split_at_mut(p.b1.len());
        let (gw2, rest) = rest.split_at_mut(p.w2.len());
        let (gb2, rest) = rest.split_at_mut(p.b2.len());
        let (gwout, gbout) = rest.split_at_mut(p.w_out.len());

        // d(mean squared error)/d(output_b)
        let scale = 2.0 / n as f64;
        gwout.fill(0.0);
        gbout[0] = 0.0;
        for b in 0..n {
            let r = scale * (s.out[b] - ys[b]);
            gbout[0] += r;
            let zrow = &s.z2[b * p.h2..(b + 1) * p.h2];
            let drow = &mut s.delta2[b * p.h2..(b + 1) * p.h2];
            for kp in 0..p.h2 {
                gwout[kp] += r * zrow[kp];
                let dz = p.gamma2 * (1.0 - zrow[kp] * zrow[kp]);
                drow[kp] = r * p.w_out[kp] * dz;
            }
        }

        if p.h1 > 0 {
            // back[b, k] = sum_kp w2[k, kp] delta2[b, kp]; gw2 written in the
            // same stream.
            let mut back = vec![0.0; n * p.h1];
            kernel::backward_fused(&s.z1, n, p.h1, p.h2, &p.w2, &s.delta2, gw2, &mut back);
            for b in 0..n {
                for k in 0..p.h1 {
                    let z = s.z1[b * p.h1 + k];
                    s.delta1[b * p.h1 + k] = back[b * p.h1 + k] * p.gamma1 * (1.0 - z * z);
                }
            }
            gw1.fill(0.0);
            kernel::grad_narrow(xs, n, p.d, &s.delta1, p.h1, gw1);
            gb1.fill(0.0);
            kernel::grad_bias(&s.delta1, n, p.h1, gb1);
        }
        gb2.fill(0.0);
        kernel::grad_bias(&s.delta2, n, p.h2, gb2);

        if self.mode == Mode::Sparse {
            for (g, &m) in gw1.iter_mut().zip(&p.mask1) {
                if !m {
                    *g = 0.0;
                }
            }
            for (g, &m) in gw2.iter_mut().zip(&p.mask2) {
                if !m {
                    *g = 0.0;
                }
            }
        }
    }

    fn visit_params_mut<F: FnMut(&mut f64)>(&mut self, mut f: F) {
        let p = &mut self.params;
        for v in p.w1.iter_mut() {
            f(v);
        }
        for v in p.b1.iter_mut() {
            f(v);
        }
        for v in p.w2.iter_mut() {
            f(v);
        }
        for v in p.b2.iter_mut() {
            f(v);
        }
        for v in p.w_out.iter_mut() {
            f(v);
        }
        f(&mut p.b_out);
    }
}

// ---------------------------------------------------------------------
// Public gradient / Adam operations on the compiled-network shape
// ---------------------------------------------------------------------

/// Parameter-shaped gradient of the batch-mean squared error.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
    pub w_out: Vec<f64>,
    pub b_out: f64,
}

impl Gradients {
    pub fn flatten(&self) -> Vec<f64> {
        let mut flat =
            Vec::with_capacity(self.w1.len() + self.b1.len() + self.w2.len() + self.b2.len() + self.w_out.len() + 1);
        flat.extend_from_slice(&self.w1);
        flat.extend_from_slice(&self.b1);
        flat.extend_from_slice(&self.w2);
        flat.extend_from_slice(&self.b2);
        flat.extend_from_slice(&self.w_out);
        flat.push(self.b_out);
        flat
    }

    fn from_flat(p: &NetworkParams, flat: &[f64]) -> Self {
        let (w1, rest) = flat.split_at(p.w1.len());
        let (b1, rest) = rest.split_at(p.b1.len());
        let (w2, rest) = rest.split_at(p.w2.len());
        let (b2, rest) = rest.split_at(p.b2.len());
        let (w_out, b_out) = rest.split_at(p.w_out.len());
        Gradients {
            w1: w1.to_vec(),
            b1: b1.to_vec(),
            w2: w2.to_vec(),
            b2: b2.to_vec(),
            w_out: w_out.to_vec(),
            b_out: b_out[0],
        }
    }
}

/// Analytic gradient of the batch-mean squared error through the smooth
/// forward pass. `batch` holds `(x, y)` pairs.
pub fn gradients(params: &NetworkParams, batch: &[(&[f64], f64)], mode: Mode) -> Gradients {
    assert!(!batch.is_empty(), "gradient of an empty batch");
    let d = params.d;
    let mut xs = Vec::with_capacity(batch.len() * d);
    let mut ys = Vec::with_capacity(batch.len());
    for (x, y) in batch {
        assert_eq!(x.len(), d);
        xs.extend_from_slice(x);
        ys.push(*y);
    }
    let net = MaskedNet::new(params.clone(), mode);
    let mut flat = vec![0.0; net.param_count()];
    net.batch_gradient_into(&xs, &ys, &mut flat);
    Gradients::from_flat(params, &flat)
}

/// Adam optimizer state over a flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
    beta1_pow: f64,
    beta2_pow: f64,
}

impl AdamState {
    pub fn new(param_count: usize) -> Self {
        AdamState {
            m: vec![0.0; param_count],
            v: vec![0.0; param_count],
            t: 0,
            beta1_pow: 1.0,
            beta2_pow: 1.0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    /// One bias-corrected update of `model` in place.
    pub fn step<M: Trainable>(&mut self, model: &mut M, grad: &[f64], cfg: &TrainConfig) {
        assert_eq!(grad.len(), self.m.len(), "gradient/state shape mismatch");
        assert_eq!(model.param_count(), self.m.len(), "model/state shape mismatch");
        self.t += 1;
        self.beta1_pow *= cfg.beta1;
        self.beta2_pow *= cfg.beta2;
        let m_corr = 1.0 / (1.0 - self.beta1_pow);
        let v_corr = 1.0 / (1.0 - self.beta2_pow);
        let lr = cfg.learning_rate;
        let (m, v) = (&mut self.m, &mut self.v);
        let mut i = 0;
        model.visit_params_mut(|p| {
            let g = grad[i];
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
            let m_hat = m[i] * m_corr;
            let v_hat = v[i] * v_corr;
            *p -= lr * m_hat / (num::sqrt(v_hat) + cfg.eps);
            i += 1;
        });
        debug_assert_eq!(i, grad.len());
    }
}

/// One Adam step on a compiled network with a parameter-shaped gradient.
pub fn adam_step(
    state: &mut AdamState,
    params: &mut NetworkParams,
    grad: &Gradients,
    cfg: &TrainConfig,
) -> Result<(), TrainError> {
    let flat = grad.flatten();
    if flat.len() != params.param_count() {
        return Err(TrainError::ShapeMismatch("gradient does not match parameters"));
    }
    if flat.len() != state.m.len() {
        return Err(TrainError::ShapeMismatch("state does not match parameters"));
    }
    // The mode is irrelevant for the update itself.
    let mut net = MaskedNet::new(params.clone(), Mode::FullyConnected);
    state.step(&mut net, &flat, cfg);
    *params = net.params;
    Ok(())
}

// ---------------------------------------------------------------------
// Epoch loop
// ---------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_rmse: f64,
    pub val_rmse: f64,
}

pub type History = Vec<EpochRecord>;

fn eval_rmse<M: Trainable>(model: &M, view: DataView<'_>) -> f64 {
    const CHUNK: usize = 512;
    let n = view.n();
    let mut preds = vec![0.0; n];
    let mut start = 0;
    while start < n {
        let end = (start + CHUNK).min(n);
        model.predict_batch_into(
            &view.x[start * view.d..end * view.d],
            &mut preds[start..end],
        );
        start = end;
    }
    rmse(&preds, view.y)
}

/// Runs the full minibatch-Adam protocol and returns the epoch snapshot
/// with minimum validation RMSE (earliest epoch on ties) along with the
/// per-epoch history. Epoch 0 records the untrained model.
pub fn train_network<M: Trainable>(
    init: &M,
    train: DataView<'_>,
    val: DataView<'_>,
    cfg: &TrainConfig,
) -> Result<(M, History), TrainError> {
    cfg.validate()?;
    if train.n() == 0 || val.n() == 0 {
        return Err(TrainError::EmptySet);
    }

    let mut model = init.clone();
    let mut history = Vec::with_capacity(cfg.epochs + 1);
    let train_rmse0 = eval_rmse(&model, train);
    let val_rmse0 = eval_rmse(&model, val);
    history.push(EpochRecord {
        epoch: 0,
        train_rmse: train_rmse0,
        val_rmse: val_rmse0,
    });
    let mut best = model.clone();
    let mut best_val = val_rmse0;

    let mut rng = rng::rng_from_seed(cfg.seed);
    let mut order: Vec<usize> = (0..train.n()).collect();
    let mut state = AdamState::new(model.param_count());
    let mut grad = vec![0.0; model.param_count()];
    let d = train.d;
    let mut xb = vec![0.0; cfg.batch_size * d];
    let mut yb = vec![0.0; cfg.batch_size];

    for epoch in 1..=cfg.epochs {
        rng::shuffle(&mut rng, &mut order);
        for batch in order.chunks(cfg.batch_size) {
            let bn = batch.len();
            for (slot, &i) in batch.iter().enumerate() {
                xb[slot * d..(slot + 1) * d].copy_from_slice(train.row(i));
                yb[slot] = train.y[i];
            }
            model.batch_gradient_into(&xb[..bn * d], &yb[..bn], &mut grad);
            state.step(&mut model, &grad, cfg);
        }
        let train_rmse = eval_rmse(&model, train);
        let val_rmse = eval_rmse(&model, val);
        history.push(EpochRecord {
            epoch,
            train_rmse,
            val_rmse,
        });
        if val_rmse < best_val {
            best_val = val_rmse;
            best = model.clone();
        }
    }
    Ok((best, history))
}

// ---------------------------------------------------------------------
// Neural random forest estimates
// ---------------------------------------------------------------------

/// A trained neural random forest, either as an ensemble of independently
/// trained per-tree networks (method 1) or one jointly trained
/// concatenated network (method 2). Fallen-back members delegate to the
/// stored forest.
#[derive(Debug, Clone, PartialEq)]
pub enum NrfModel {
    Method1 {
        members: Vec<NetworkParams>,
        fallbacks: Vec<bool>,
        forest: ForestModel,
        mode: Mode,
    },
    Method2 {
        net: BigNetworkParams,
        fallback: bool,
        forest: ForestModel,
        mode: Mode,
    },
}

impl NrfModel {
    pub fn method(&self) -> u8 {
        match self {
            NrfModel::Method1 { .. } => 1,
            NrfModel::Method2 { .. } => 2,
        }
    }

    pub fn mode(&self) -> Mode {
        match self {
            NrfModel::Method1 { mode, .. } | NrfModel::Method2 { mode, .. } => *mode,
        }
    }

    pub fn forest(&self) -> &ForestModel {
        match self {
            NrfModel::Method1 { forest, .. } | NrfModel::Method2 { forest, .. } => forest,
        }
    }
}

/// Fit result: the model plus per-member training histories (one entry for
/// method 2) and the forest's validation RMSE the fallback rule compared
/// against.
#[derive(Debug, Clone)]
pub struct NrfFit {
    pub model: NrfModel,
    pub histories: Vec<History>,
    pub forest_val_rmse: f64,
}

fn forest_rmse(forest: &ForestModel, view: DataView<'_>) -> f64 {
    let preds: Vec<f64> = (0..view.n()).map(|i| predict_forest(forest, view.row(i))).collect();
    rmse(&preds, view.y)
}

fn min_val(history: &History) -> f64 {
    history
        .iter()
        .map(|r| r.val_rmse)
        .fold(f64::INFINITY, f64::min)
}

/// Method 1: compile and train each tree's network independently on the
/// full training set; predictions average the members. A member whose
/// validation RMSE stays above the forest's at every epoch is replaced by
/// the forest's predictions.
pub fn fit_nrf_method1(
    forest: &ForestModel,
    ds: &Dataset,
    split: &SplitIndices,
    gamma1: f64,
    gamma2: f64,
    cfg: &TrainConfig,
) -> Result<NrfFit, TrainError> {
    let (tx, ty) = gather_matrix(ds, &split.train);
    let (vx, vy) = gather_matrix(ds, &split.val);
    let train = DataView::new(&tx, &ty, ds.n_features());
    let val = DataView::new(&vx, &vy, ds.n_features());
    let forest_val_rmse = forest_rmse(forest, val);

    let mut members = Vec::with_capacity(forest.trees.len());
    let mut fallbacks = Vec::with_capacity(forest.trees.len());
    let mut histories = Vec::with_capacity(forest.trees.len());
    for (m, tree) in forest.trees.iter().enumerate() {
        let compiled = compile_tree(tree, gamma1, gamma2);
        let mut member_cfg = *cfg;
        member_cfg.seed = rng::derive_seed(cfg.seed, m as u64);
        let (best, history) = train_network(
            &MaskedNet::new(compiled, cfg.mode),
            train,
            val,
            &member_cfg,
        )?;
        fallbacks.push(min_val(&history) > forest_val_rmse);
        members.push(best.params);
        histories.push(history);
    }
    Ok(NrfFit {
        model: NrfModel::Method1 {
            members,
            fallbacks,
            forest: forest.clone(),
            mode: cfg.mode,
        },
        histories,
        forest_val_rmse,
    })
}

/// Method 2: concatenate the compiled networks and train the joint
/// parameterization in one run, with the same selection and fallback rule.
pub fn fit_nrf_method2(
    forest: &ForestModel,
    ds: &Dataset,
    split: &SplitIndices,
    gamma1: f64,
    gamma2: f64,
    cfg: &TrainConfig,
) -> Result<NrfFit, TrainError> {
    let (tx, ty) = gather_matrix(ds, &split.train);
    let (vx, vy) = gather_matrix(ds, &split.val);
    let train = DataView::new(&tx, &ty, ds.n_features());
    let val = DataView::new(&vx, &vy, ds.n_features());
    let forest_val_rmse = forest_rmse(forest, val);

    let compiled: Vec<NetworkParams> = forest
        .trees
        .iter()
        .map(|t| compile_tree(t, gamma1, gamma2))
        .collect();
    let big = concat_networks(&compiled)
        .map_err(|_| TrainError::ShapeMismatch("trees compile to incompatible networks"))?;
    let blocks = (big.block_h1.clone(), big.block_h2.clone());
    let (best, history) = train_network(&MaskedNet::new(big.params, cfg.mode), train, val, cfg)?;
    let fallback = min_val(&history) > forest_val_rmse;
    Ok(NrfFit {
        model: NrfModel::Method2 {
            net: BigNetworkParams {
                params: best.params,
                block_h1: blocks.0,
                block_h2: blocks.1,
            },
            fallback,
            forest: forest.clone(),
            mode: cfg.mode,
        },
        histories: vec![history],
        forest_val_rmse,
    })
}

/// Prediction under the trained model, honoring fallback flags.
pub fn predict_nrf(model: &NrfModel, x: &[f64]) -> f64 {
    match model {
        NrfModel::Method1 {
            members,
            fallbacks,
            forest,
            ..
        } => {
            let mut sum = 0.0;
            for (net, &fb) in members.iter().zip(fallbacks) {
                sum += if fb {
                    predict_forest(forest, x)
                } else {
                    crate::netcompile::forward_tanh(net, x)
                };
            }
            sum / members.len() as f64
        }
        NrfModel::Method2 {
            net,
            fallback,
            forest,
            ..
        } => {
            if *fallback {
                predict_forest(forest, x)
            } else {
                crate::netcompile::forward_tanh(&net.params, x)
            }
        }
    }
}

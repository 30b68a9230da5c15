//! Randomized CART ensembles: per-tree resampling, per-node feature
//! subsampling, averaged prediction.

use alloc::vec::Vec;

use crate::cart::{self, RegressionTree, StoppingRule};
use crate::num;
use crate::data::Dataset;
use crate::rng::{self, Rng};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ForestError {
    BadParams(&'static str),
    TooFewSamples,
}

impl core::fmt::Display for ForestError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            ForestError::BadParams(what) => write!(f, "invalid forest parameters: {what}"),
            ForestError::TooFewSamples => write!(f, "need at least two training samples"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for ForestError {}

/// Per-tree resampling scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Resample {
    /// Every tree sees the full training set.
    Full,
    /// n draws with replacement (the common library default).
    Bootstrap,
    /// `a_n` distinct draws without replacement; 0 means the
    /// `ceil(0.632 n)` convention that mimics the bootstrap's expected
    /// distinct fraction.
    Subsample(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForestParams {
    pub trees: usize,
    pub resample: Resample,
    /// Features drawn per node; 0 means the `max(1, d/3)` default.
    pub mtry: usize,
    pub stop: StoppingRule,
    pub seed: u64,
}

impl ForestParams {
    pub fn validate(&self, n: usize, d: usize) -> Result<(), ForestError> {
        if self.trees == 0 {
            return Err(ForestError::BadParams("tree count must be positive"));
        }
        if self.mtry > d {
            return Err(ForestError::BadParams("mtry exceeds feature count"));
        }
        if let Resample::Subsample(a) = self.resample {
            if a != 0 && (a < 2 || a > n) {
                return Err(ForestError::BadParams("subsample size outside 2..=n"));
            }
        }
        Ok(())
    }
}

pub fn default_mtry(d: usize) -> usize {
    (d / 3).max(1)
}

pub fn default_subsample(n: usize) -> usize {
    // ceil(0.632 n), clamped into the admissible range.
    let a = num::ceil(0.632 * n as f64) as usize;
    a.clamp(2, n)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForestModel {
    pub trees: Vec<RegressionTree>,
    pub params: ForestParams,
    /// Training indices each tree actually saw.
    pub resamples: Vec<Vec<usize>>,
    pub n_features: usize,
}

impl ForestModel {
    pub fn predict(&self, x: &[f64]) -> f64 {
        predict_forest(self, x)
    }

    /// Sum over trees of (leaf count - 1); the first hidden layer width of
    /// the concatenated network.
    pub fn total_internal_nodes(&self) -> usize {
        self.trees.iter().map(|t| t.internal_count()).sum()
    }

    pub fn total_leaves(&self) -> usize {
        self.trees.iter().map(|t| t.leaf_count()).sum()
    }
}

fn draw_resample(
    rng: &mut Rng,
    train: &[usize],
    resample: Resample,
) -> Vec<usize> {
    match resample {
        Resample::Full => train.to_vec(),
        Resample::Bootstrap => (0..train.len())
            .map(|_| train[rng::next_index(rng, train.len())])
            .collect(),
        Resample::Subsample(a) => {
            let a = if a == 0 { default_subsample(train.len()) } else { a };
            rng::sample_without_replacement(rng, train.len(), a)
                .into_iter()
                .map(|i| train[i])
                .collect()
        }
    }
}

/// Fits `params.trees` randomized trees. Tree `m` draws from an independent
/// ChaCha8 stream of `params.seed`, so the model is reproducible and trees
/// may be grown in any order.
pub fn fit_forest(
    ds: &Dataset,
    train: &[usize],
    params: ForestParams,
) -> Result<ForestModel, ForestError> {
    params.validate(ds.n_rows(), ds.n_features())?;
    if train.len() < 2 {
        return Err(ForestError::TooFewSamples);
    }
    let mtry = if params.mtry == 0 {
        default_mtry(ds.n_features())
    } else {
        params.mtry
    };
    let mut trees = Vec::with_capacity(params.trees);
    let mut resamples = Vec::with_capacity(params.trees);
    for m in 0..params.trees {
        let mut rng = rng::rng_from_seed(params.seed);
        rng.set_stream(m as u64 + 1);
        let sample = draw_resample(&mut rng, train, params.resample);
        let tree = cart::grow_tree_with_rng(ds, &sample, params.stop, mtry, &mut rng);
        trees.push(tree);
        resamples.push(sample);
    }
    Ok(ForestModel {
        trees,
        params,
        resamples,
        n_features: ds.n_features(),
    })
}

/// Arithmetic mean of the tree predictions, accumulated in tree index
/// order.
pub fn predict_forest(model: &ForestModel, x: &[f64]) -> f64 {
    let mut sum = 0.0;
    for tree in &model.trees {
        sum += tree.predict(x);
    }
    sum / model.trees.len() as f64
}

//! Datasets, deterministic train/validation/test splits, and the synthetic
//! sine benchmark generator.

use alloc::string::String;
use alloc::vec::Vec;

use crate::num;
use crate::rng;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DataError {
    /// Row/column geometry is inconsistent or empty.
    BadShape(&'static str),
    /// A feature or target entry is NaN or infinite.
    NonFinite,
    /// Fewer rows than a 50/25/25 split can populate.
    TooFewRows { n: usize, min: usize },
}

impl core::fmt::Display for DataError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            DataError::BadShape(what) => write!(f, "bad dataset shape: {what}"),
            DataError::NonFinite => write!(f, "dataset contains non-finite entries"),
            DataError::TooFewRows { n, min } => {
                write!(f, "dataset has {n} rows, need at least {min}")
            }
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for DataError {}

/// Immutable numeric table: `n` rows of `d` features plus one target column.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Vec<f64>, // row-major, n * d
    target: Vec<f64>,
    feature_names: Vec<String>,
    n: usize,
    d: usize,
}

impl Dataset {
    pub fn new(
        features: Vec<f64>,
        target: Vec<f64>,
        feature_names: Vec<String>,
    ) -> Result<Self, DataError> {
        let n = target.len();
        let d = feature_names.len();
        if n == 0 {
            return Err(DataError::BadShape("no rows"));
        }
        if d == 0 {
            return Err(DataError::BadShape("no feature columns"));
        }
        if features.len() != n * d {
            return Err(DataError::BadShape("feature buffer is not n * d"));
        }
        if features.iter().chain(target.iter()).any(|v| !v.is_finite()) {
            return Err(DataError::NonFinite);
        }
        Ok(Dataset {
            features,
            target,
            feature_names,
            n,
            d,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.n
    }

    pub fn n_features(&self) -> usize {
        self.d
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.d..(i + 1) * self.d]
    }

    pub fn value(&self, row: usize, feature: usize) -> f64 {
        self.features[row * self.d + feature]
    }

    pub fn target(&self, i: usize) -> f64 {
        self.target[i]
    }

    pub fn targets(&self) -> &[f64] {
        &self.target
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    /// Largest |target| value; the natural budget scale for the weight
    /// constraint check.
    pub fn target_abs_max(&self) -> f64 {
        self.target.iter().fold(0.0, |acc, y| acc.max(num::abs(*y)))
    }
}

/// A 50/25/25 partition of `0..n` (floor rule for train and validation,
/// remainder to test).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
    pub seed: u64,
}

pub fn split_dataset(ds: &Dataset, seed: u64) -> Result<SplitIndices, DataError> {
    let n = ds.n_rows();
    if n < 4 {
        return Err(DataError::TooFewRows { n, min: 4 });
    }
    let mut order: Vec<usize> = (0..n).collect();
    let mut r = rng::rng_from_seed(seed);
    rng::shuffle(&mut r, &mut order);
    let n_train = n / 2;
    let n_val = n / 4;
    let val_end = n_train + n_val;
    Ok(SplitIndices {
        train: order[..n_train].to_vec(),
        val: order[n_train..val_end].to_vec(),
        test: order[val_end..].to_vec(),
        seed,
    })
}

/// Noise-free value of the synthetic target at `x`.
pub fn sine_target(x: &[f64]) -> f64 {
    x.iter().map(|&v| num::sin(20.0 * v - 10.0)).sum()
}

/// Synthetic regression data: features uniform on `[0,1]^d`, target
/// `sum_j sin(20 x_j - 10)` plus centered Gaussian noise of the given
/// standard deviation.
pub fn synth_sine(n: usize, d: usize, sigma: f64, seed: u64) -> Result<Dataset, DataError> {
    if n == 0 || d == 0 {
        return Err(DataError::BadShape("n and d must be positive"));
    }
    if !(sigma >= 0.0) {
        return Err(DataError::NonFinite);
    }
    let mut r = rng::rng_from_seed(seed);
    let mut features = Vec::with_capacity(n * d);
    let mut target = Vec::with_capacity(n);
    for _ in 0..n {
        let start = features.len();
        for _ in 0..d {
            features.push(rng::next_unit(&mut r));
        }
        let noise = if sigma > 0.0 {
            sigma * rng::next_standard_normal(&mut r)
        } else {
            0.0
        };
        target.push(sine_target(&features[start..]) + noise);
    }
    let names = (0..d)
        .map(|j| alloc::format!("x{j}"))
        .collect::<Vec<String>>();
    Dataset::new(features, target, names)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_counts_follow_floor_rule() {
        let ds = synth_sine(398, 3, 0.0, 0).unwrap();
        let s = split_dataset(&ds, 0).unwrap();
        assert_eq!(s.train.len(), 199);
        assert_eq!(s.val.len(), 99);
        assert_eq!(s.test.len(), 100);
    }

    #[test]
    fn smallest_admissible_split() {
        let ds = synth_sine(4, 1, 0.0, 1).unwrap();
        let s = split_dataset(&ds, 9).unwrap();
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (2, 1, 1));
        assert!(split_dataset(&synth_sine(3, 1, 0.0, 1).unwrap(), 0).is_err());
    }

    #[test]
    fn split_is_deterministic() {
        let ds = synth_sine(57, 2, 0.1, 5).unwrap();
        assert_eq!(split_dataset(&ds, 3).unwrap(), split_dataset(&ds, 3).unwrap());
    }

    #[test]
    fn sine_target_zero_at_half() {
        assert_eq!(sine_target(&[0.5, 0.5]), 0.0);
        assert_eq!(sine_target(&[0.5]), 0.0);
    }

    #[test]
    fn noise_free_targets_match_formula() {
        let ds = synth_sine(200, 2, 0.0, 42).unwrap();
        for i in 0..ds.n_rows() {
            assert_eq!(ds.target(i), sine_target(ds.row(i)));
        }
    }

    #[test]
    fn synth_is_deterministic_and_noise_changes_targets() {
        let a = synth_sine(50, 2, 0.01, 7).unwrap();
        let b = synth_sine(50, 2, 0.01, 7).unwrap();
        assert_eq!(a, b);
        let c = synth_sine(50, 2, 0.0, 7).unwrap();
        assert_ne!(a, c);
    }
}

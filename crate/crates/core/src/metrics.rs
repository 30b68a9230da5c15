//! Error metrics.

use crate::num;

/// Root mean squared error, accumulated in index order.
pub fn rmse(predictions: &[f64], targets: &[f64]) -> f64 {
    assert_eq!(predictions.len(), targets.len());
    assert!(!predictions.is_empty());
    let mut acc = 0.0;
    for (&p, &y) in predictions.iter().zip(targets) {
        let r = p - y;
        acc += r * r;
    }
    num::sqrt(acc / predictions.len() as f64)
}

// Rough timing probe for the joint-training path; not part of the test suite.
use std::time::Instant;

use nrf_core::cart::StoppingRule;
use nrf_core::data::{split_dataset, synth_sine};
use nrf_core::forest::{fit_forest, predict_forest, ForestParams, Resample};
use nrf_core::metrics::rmse;
use nrf_core::train::{fit_nrf_method2, predict_nrf, Mode, TrainConfig};

fn main() {
    let train_size: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(2048);
    let epochs: usize = std::env::args().nth(2).and_then(|s| s.parse().ok()).unwrap_or(10);
    let n = train_size * 2;
    let ds = synth_sine(n, 2, 0.01, 0).unwrap();
    let split = split_dataset(&ds, 0).unwrap();

    let t0 = Instant::now();
    let forest = fit_forest(
        &ds,
        &split.train,
        ForestParams {
            trees: 30,
            resample: Resample::Bootstrap,
            mtry: 0,
            stop: StoppingRule::MaxDepth(6),
            seed: 1,
        },
    )
    .unwrap();
    println!("forest fit: {:.2}s, total leaves {}", t0.elapsed().as_secs_f64(), forest.total_leaves());

    let test_preds: Vec<f64> = split.test.iter().map(|&i| predict_forest(&forest, ds.row(i))).collect();
    let test_y: Vec<f64> = split.test.iter().map(|&i| ds.target(i)).collect();
    println!("rf test rmse: {:.4}", rmse(&test_preds, &test_y));

    let cfg = TrainConfig {
        epochs,
        mode: Mode::FullyConnected,
        seed: 2,
        ..TrainConfig::default()
    };
    let t1 = Instant::now();
    let fit = fit_nrf_method2(&forest, &ds, &split, 100.0, 1.0, &cfg).unwrap();
    let dt = t1.elapsed().as_secs_f64();
    println!("nrf2-full {} epochs: {:.2}s ({:.2}s/epoch)", epochs, dt, dt / epochs as f64);
    let h = &fit.histories[0];
    println!("epoch0 val {:.4} -> last val {:.4}, forest val {:.4}", h[0].val_rmse, h.last().unwrap().val_rmse, fit.forest_val_rmse);
    let nrf_preds: Vec<f64> = split.test.iter().map(|&i| predict_nrf(&fit.model, ds.row(i))).collect();
    println!("nrf2-full test rmse after {} epochs: {:.4}", epochs, rmse(&nrf_preds, &test_y));
}

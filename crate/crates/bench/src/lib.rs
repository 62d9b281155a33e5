//! Shared fixtures for the criterion benches.

use journey_risk_core::model::{ModelParams, Variant};
use journey_risk_core::{DenseMatrix, Rng};

/// A freshly initialized model and one fully observed `n × t` journey in
/// the paper_scale range.
pub fn fixture(n: usize, t: usize, hidden: usize, variant: Variant, seed: u64) -> (ModelParams, DenseMatrix) {
    let p = ModelParams::init(n, hidden, 3, seed, variant).expect("valid shape");
    let mut rng = Rng::derive(seed, 0xBE);
    let x = DenseMatrix::from_fn(n, t, |_, _| rng.uniform(0.3, 1.0));
    (p, x)
}

/// `n` random scores with alternating labels.
pub fn scores(n: usize, seed: u64) -> (Vec<f64>, Vec<u8>) {
    let mut rng = Rng::new(seed);
    let s = (0..n).map(|_| rng.uniform(0.0, 1.0)).collect();
    let l = (0..n).map(|i| (i % 3 == 0) as u8).collect();
    (s, l)
}

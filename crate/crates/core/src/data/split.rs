use super::Dataset;
use crate::error::{Error, Result};
use crate::numerics::Rng;

pub const DEFAULT_RATIOS: (f64, f64, f64) = (0.70, 0.15, 0.15);
pub const MIN_SPLIT_SIZE: usize = 10;

/// Cut points of a seeded permutation of `p` journeys: train is
/// `[0, ⌊r₀·p⌋)`, validation `[⌊r₀·p⌋, ⌊(r₀+r₁)·p⌋)`, test the rest.
pub fn split_indices(p: usize, ratios: (f64, f64, f64), seed: u64) -> Result<[Vec<usize>; 3]> {
    if p < MIN_SPLIT_SIZE {
        return Err(Error::TooFewJourneys {
            found: p,
            required: MIN_SPLIT_SIZE,
        });
    }
    let (a, b, c) = ratios;
    if [a, b, c].iter().any(|r| !(0.0..=1.0).contains(r)) || (a + b + c - 1.0).abs() > 1e-9 {
        return Err(Error::Invalid(format!("split ratios {ratios:?} must be in [0,1] and sum to 1")));
    }
    // Small epsilon so 0.85 * 100 lands on 85 rather than 84.99999.
    let cut1 = (a * p as f64 + 1e-9).floor() as usize;
    let cut2 = ((a + b) * p as f64 + 1e-9).floor() as usize;
    let perm = Rng::derive(seed, 0x5_0117).permutation(p);
    Ok([
        perm[..cut1].to_vec(),
        perm[cut1..cut2].to_vec(),
        perm[cut2..].to_vec(),
    ])
}

/// Seeded train/validation/test partition.
pub fn split_dataset(ds: &Dataset, ratios: (f64, f64, f64), seed: u64) -> Result<(Dataset, Dataset, Dataset)> {
    let [tr, va, te] = split_indices(ds.len(), ratios, seed)?;
    Ok((ds.subset(&tr)?, ds.subset(&va)?, ds.subset(&te)?))
}

//! Approximate randomization test for paired per-example metrics.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Result, TrainError};

/// Two-sided approximate randomization test on paired per-example scores.
///
/// Each round swaps every pair with probability one half; the p-value is
/// `(1 + #{rounds with |mean difference| >= |observed|}) / (1 + rounds)`.
/// Deterministic for a fixed seed.
pub fn approx_randomization_test(a: &[f64], b: &[f64], rounds: usize, seed: u64) -> Result<f64> {
    if a.len() != b.len() {
        return Err(TrainError::Config(format!(
            "paired score vectors differ in length: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    if a.is_empty() {
        return Err(TrainError::Config("paired score vectors are empty".into()));
    }
    let n = a.len() as f64;
    let observed = (a.iter().sum::<f64>() - b.iter().sum::<f64>()).abs() / n;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut at_least_as_extreme = 0usize;
    for _ in 0..rounds {
        let mut delta = 0.0;
        for (&x, &y) in a.iter().zip(b) {
            if rng.random::<bool>() {
                delta += y - x;
            } else {
                delta += x - y;
            }
        }
        if (delta / n).abs() >= observed {
            at_least_as_extreme += 1;
        }
    }
    Ok((1 + at_least_as_extreme) as f64 / (1 + rounds) as f64)
}

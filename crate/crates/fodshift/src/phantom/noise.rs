use rand::prelude::*;
use rand_distr::Normal;

use crate::error::{Error, Result};
use crate::seed;

/// Magnitude-MRI noise: out_i = √((S_i + n1)² + n2²) with
/// n1, n2 ~ N(0, (s0/snr)²). Deterministic per seed.
pub fn add_rician_noise(signal: &[f64], s0: f64, snr: f64, rng_seed: u64) -> Result<Vec<f64>> {
    if !(snr > 0.0) {
        return Err(Error::invalid(format!("snr must be > 0, got {snr}")));
    }
    let sigma = s0 / snr;
    if sigma == 0.0 {
        return Ok(signal.to_vec());
    }
    let mut rng = seed::rng(rng_seed, "rician", 0);
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::invalid(e.to_string()))?;
    Ok(signal
        .iter()
        .map(|&s| {
            let n1: f64 = normal.sample(&mut rng);
            let n2: f64 = normal.sample(&mut rng);
            ((s + n1) * (s + n1) + n2 * n2).sqrt()
        })
        .collect())
}

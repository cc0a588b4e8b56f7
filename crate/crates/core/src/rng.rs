//! Deterministic sub-stream derivation for simulation.
//!
//! Every random quantity draws from a ChaCha8 generator keyed by a
//! splitmix64 chain over (seed, purpose, unit, replicate). Distinct purposes
//! or units never share a stream, so adding replicates or variables leaves
//! earlier draws untouched.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Normal};

use crate::error::{Error, Result};

/// Stream purposes; the values are part of the reproducibility contract.
pub(crate) const STREAM_PARAMS: u64 = 0x5052;
pub(crate) const STREAM_NOISE: u64 = 0x4e4f;

fn splitmix64(state: u64) -> u64 {
    let mut z = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Generator for one (purpose, unit, replicate) cell of a seeded simulation.
pub(crate) fn substream(seed: u64, purpose: u64, unit: u64, replicate: u64) -> ChaCha8Rng {
    let mut key = splitmix64(seed);
    for tag in [purpose, unit, replicate] {
        key = splitmix64(key ^ splitmix64(tag));
    }
    ChaCha8Rng::seed_from_u64(key)
}

/// N(mean, sd²) draw via rand_distr's ziggurat sampler.
pub(crate) fn draw_normal<R: Rng>(rng: &mut R, mean: f64, sd: f64) -> Result<f64> {
    let dist = Normal::new(mean, sd)
        .map_err(|e| Error::InvalidParam(format!("normal sampler: {e}")))?;
    Ok(dist.sample(rng))
}

/// Inverse-gamma(shape, rate) draw as the reciprocal of a gamma draw:
/// ψ = 1/g with g ~ Gamma(shape, scale = 1/rate).
pub(crate) fn draw_inv_gamma<R: Rng>(rng: &mut R, shape: f64, rate: f64) -> Result<f64> {
    let dist = Gamma::new(shape, 1.0 / rate)
        .map_err(|e| Error::InvalidParam(format!("gamma sampler: {e}")))?;
    Ok(1.0 / dist.sample(rng))
}

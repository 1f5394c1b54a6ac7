//! Synthetic measurement data from a known relaxation rate.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dynamics::{differential_map, occupancy_map, OccupancyMap, PulseSchedule};
use crate::error::{InferenceError, ParamError};
use crate::qubit::QubitParams;
use crate::rate::RelaxationRate;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthData {
    /// Noise-free n̄.
    pub occupancy: OccupancyMap,
    /// dn/dε̄ with noise added; `sigma` holds the noise level when nonzero.
    pub differential: OccupancyMap,
    pub noise_sigma: f64,
    pub seed: u64,
}

/// Forward-models n̄ on the grid, differentiates it, and adds i.i.d.
/// Gaussian noise of standard deviation `noise_sigma` (1/meV) drawn from a
/// ChaCha8 stream seeded with `seed`, in frequency-major order.
pub fn synth_data<R: RelaxationRate + ?Sized>(
    rate: &R,
    qubit: &QubitParams,
    template: &PulseSchedule,
    offsets: &[f64],
    freqs: &[f64],
    noise_sigma: f64,
    seed: u64,
) -> Result<SynthData, InferenceError> {
    if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
        return Err(ParamError::new("synth.noise_sigma", "must be finite and non-negative").into());
    }
    let occupancy = occupancy_map(offsets, freqs, rate, qubit, template)?;
    let mut differential = differential_map(&occupancy)?;
    if noise_sigma > 0.0 {
        let normal = Normal::new(0.0, noise_sigma).map_err(|e| ParamError::new("synth.noise_sigma", e.to_string()))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for v in &mut differential.values {
            *v += normal.sample(&mut rng);
        }
        differential.sigma = Some(vec![noise_sigma; differential.values.len()]);
    }
    Ok(SynthData {
        occupancy,
        differential,
        noise_sigma,
        seed,
    })
}

/// `fraction` of the largest |dn/dε̄| in a noise-free differential map.
pub fn relative_noise_sigma(differential: &OccupancyMap, fraction: f64) -> f64 {
    fraction * differential.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

/// Independent child seed for stream `index` of a master seed (SplitMix64
/// finalizer).
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut z = master ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

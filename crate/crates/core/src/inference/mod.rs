//! Inverse problem: smoothing differential data, misfit, spline fits of
//! Γ_r(ε), confidence regions, parameter fits and synthetic data.

mod fit;
mod forward;
pub mod optim;
mod params;
mod smooth;
mod synth;

use serde::{Deserialize, Serialize};

use crate::dynamics::{OccupancyMap, PulseSchedule};
use crate::error::{InferenceError, ParamError};

pub use fit::{
    confidence_regions, estimate_delta_misfit, fit_rate_curve, profile_bands, ConfidenceSettings, FitResult,
    FitSettings, KnotBand,
};
pub use forward::{knot_band, ForwardModel, GridSpec};
pub use params::{
    fit_electron_temperature, fit_micro_params, fit_phenom_params, micro_misfit, micro_rate_curve, MicroFit,
    MicroFitSettings, Orientation, PhenomFit, TemperatureFit,
};
pub use smooth::{difference_matrix, smooth_to_occupancy, smooth_trace, SmoothedTrace, TraceFilter};
pub use synth::{derive_seed, relative_noise_sigma, synth_data, SynthData};

/// Lever arm in eV/V used to convert gate voltage to detuning.
pub const LEVER_ARM: f64 = 0.021;
/// Relative uncertainty of [`LEVER_ARM`].
pub const LEVER_ARM_UNCERTAINTY: f64 = 0.1;

/// Smoothed occupancy data at one toggle amplitude. `schedule` is the
/// template whose offset and toggle frequency are replaced per grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub schedule: PulseSchedule,
    pub occupancy: OccupancyMap,
    /// Per-trace smoothers that produced `occupancy`, if it came from
    /// differential data.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub filters: Option<Vec<TraceFilter>>,
}

impl Series {
    pub fn grid(&self) -> GridSpec {
        GridSpec {
            schedule: self.schedule,
            offsets: self.occupancy.offsets.clone(),
            freqs: self.occupancy.freqs.clone(),
        }
    }
}

/// Measured differential traces dn/dε̄ (1/meV) at one toggle amplitude,
/// offsets already in meV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasuredSet {
    pub schedule: PulseSchedule,
    pub differential: OccupancyMap,
    /// eV/V applied when the offsets were read; recorded, not refitted.
    pub lever_arm: f64,
    pub lever_arm_uncertainty: f64,
}

impl MeasuredSet {
    pub fn new(schedule: PulseSchedule, differential: OccupancyMap) -> Self {
        Self {
            schedule,
            differential,
            lever_arm: LEVER_ARM,
            lever_arm_uncertainty: LEVER_ARM_UNCERTAINTY,
        }
    }

    pub fn validate(&self) -> Result<(), InferenceError> {
        self.differential.validate_shape()?;
        if let Some(s) = &self.differential.sigma {
            if s.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
                return Err(ParamError::new("data.sigma", "must be positive").into());
            }
        }
        if self.differential.values.iter().any(|v| !v.is_finite()) {
            return Err(ParamError::new("data.values", "must be finite").into());
        }
        Ok(())
    }

    /// Smooths every trace into an occupancy curve.
    pub fn smooth(&self, n_modes: usize) -> Result<(Series, Vec<SmoothedTrace>), InferenceError> {
        self.validate()?;
        let (occupancy, traces) = smooth_to_occupancy(&self.differential, n_modes)?;
        Ok((
            Series {
                schedule: self.schedule,
                occupancy,
                filters: Some(traces.iter().map(|t| t.filter.clone()).collect()),
            },
            traces,
        ))
    }
}

/// M = Σ (n₁ − n₂)² over a shared grid.
pub fn misfit(a: &OccupancyMap, b: &OccupancyMap) -> Result<f64, InferenceError> {
    if a.offsets != b.offsets {
        return Err(InferenceError::GridMismatch("offset grids differ".into()));
    }
    if a.freqs != b.freqs {
        return Err(InferenceError::GridMismatch("frequency grids differ".into()));
    }
    if a.values.len() != b.values.len() {
        return Err(InferenceError::GridMismatch("value counts differ".into()));
    }
    Ok(sum_sq_diff(&a.values, &b.values))
}

pub(crate) fn sum_sq_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Whether each rate (1/ns) lies within [0.1·f_min, 10·f_max] of the probed
/// toggle frequencies (Hz), i.e. where the data constrain it.
pub fn informative_mask(rates: &[f64], freqs: &[f64]) -> Vec<bool> {
    let fmin = freqs.iter().cloned().fold(f64::INFINITY, f64::min);
    let fmax = freqs.iter().cloned().fold(0.0, f64::max);
    rates
        .iter()
        .map(|r| {
            let hz = crate::units::per_ns_to_hz(*r);
            hz >= 0.1 * fmin && hz <= 10.0 * fmax
        })
        .collect()
}

/// Largest |ε| reached by any waveform of the given grids (meV).
pub fn max_abs_detuning(grids: &[GridSpec]) -> f64 {
    grids
        .iter()
        .flat_map(|g| {
            let reach = 0.5 * g.schedule.toggle_amplitude + g.schedule.dither_amplitude;
            g.offsets.iter().map(move |o| o.abs() + reach)
        })
        .fold(0.0, f64::max)
}

/// Default knot grid: `n` knots uniform in |ε| over the detuning range the
/// data's waveforms reach.
pub fn default_knots(grids: &[GridSpec], n: usize) -> Vec<f64> {
    crate::rate::RateCurve::uniform_knots(n, max_abs_detuning(grids))
}

/// Stable order of series by schedule, so results do not depend on the order
/// in which the caller lists them.
pub(crate) fn canonical_order(schedules: &[PulseSchedule]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..schedules.len()).collect();
    idx.sort_by(|&i, &j| {
        let (a, b) = (&schedules[i], &schedules[j]);
        a.toggle_amplitude
            .total_cmp(&b.toggle_amplitude)
            .then(a.dither_amplitude.total_cmp(&b.dither_amplitude))
            .then(a.dither_freq.total_cmp(&b.dither_freq))
            .then(a.steps_per_period.cmp(&b.steps_per_period))
            .then(i.cmp(&j))
    });
    idx
}

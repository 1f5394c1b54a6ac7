//! Rate-equation model of the pulsed qubit: piecewise-constant detuning,
//! population transfer matrices, the periodic fixed point and time-averaged
//! charge occupancy.
//!
//! Populations live in the instantaneous energy eigenbasis as (ρ₀₀, ρ₁₁).
//! Coherences are assumed to vanish within each interval, so every map is a
//! 2×2 column-stochastic matrix.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{DynamicsError, ParamError};
use crate::qubit::{energy_gap, ground_leakage, QubitParams};
use crate::rate::RelaxationRate;

/// How populations are carried across a change of detuning between
/// consecutive intervals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BasisChange {
    /// Sudden projection only where the square wave switches; the slow dither
    /// between switches is followed adiabatically.
    #[default]
    EdgesOnly,
    /// Sudden projection between every pair of consecutive intervals.
    Sudden,
}

/// Periodic detuning ε(t) = ε̄ + (δε/2)h(ft) + A sin(2πνt) over one dither
/// period. Energies in meV, frequencies in Hz, ramp time in ns.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PulseSchedule {
    pub offset: f64,
    pub toggle_amplitude: f64,
    pub toggle_freq: f64,
    pub dither_amplitude: f64,
    pub dither_freq: f64,
    pub ramp_time: f64,
    pub steps_per_period: usize,
    #[serde(default)]
    pub basis_change: BasisChange,
}

impl PulseSchedule {
    /// Experimental envelope: A = 0.06 meV at ν = 43 Hz, 16 ns ramps.
    pub fn experimental(offset: f64, toggle_amplitude: f64, toggle_freq: f64) -> Self {
        let mut s = Self {
            offset,
            toggle_amplitude,
            toggle_freq,
            dither_amplitude: 0.06,
            dither_freq: 43.0,
            ramp_time: 16.0,
            steps_per_period: 0,
            basis_change: BasisChange::EdgesOnly,
        };
        s.steps_per_period = steps_for(DEFAULT_STEPS, s.toggles_per_period());
        s
    }

    /// m = f/ν rounded to the nearest integer.
    pub fn toggles_per_period(&self) -> usize {
        (self.toggle_freq / self.dither_freq).round().max(1.0) as usize
    }

    /// Dither period T = 1/ν in ns.
    pub fn period(&self) -> f64 {
        1.0e9 / self.dither_freq
    }

    pub fn validate(&self) -> Result<(), ParamError> {
        let finite = [
            (self.offset, "offset"),
            (self.toggle_amplitude, "toggle_amplitude"),
            (self.dither_amplitude, "dither_amplitude"),
            (self.ramp_time, "ramp_time"),
        ];
        for (v, name) in finite {
            if !v.is_finite() {
                return Err(ParamError::new(format!("schedule.{name}"), "must be finite"));
            }
        }
        if self.toggle_amplitude < 0.0 || self.dither_amplitude < 0.0 || self.ramp_time < 0.0 {
            return Err(ParamError::new(
                "schedule",
                "amplitudes and ramp time must be non-negative",
            ));
        }
        if !(self.dither_freq > 0.0 && self.dither_freq.is_finite()) {
            return Err(ParamError::new("schedule.dither_freq", "must be positive"));
        }
        if !(self.toggle_freq > 0.0 && self.toggle_freq.is_finite()) {
            return Err(ParamError::new("schedule.toggle_freq", "must be positive"));
        }
        let ratio = self.toggle_freq / self.dither_freq;
        if ratio < 0.5 || (ratio - ratio.round()).abs() > 1e-9 * ratio {
            return Err(ParamError::new(
                "schedule.toggle_freq",
                format!(
                    "{} Hz is not an integer multiple of the dither frequency {} Hz",
                    self.toggle_freq, self.dither_freq
                ),
            ));
        }
        let wait = 0.5e9 / self.toggle_freq;
        if self.ramp_time >= 0.1 * wait {
            return Err(ParamError::new(
                "schedule.ramp_time",
                format!("{} ns is not small against the waiting time {wait} ns", self.ramp_time),
            ));
        }
        let two_m = 2 * self.toggles_per_period();
        if self.steps_per_period < 64 || !self.steps_per_period.is_multiple_of(two_m) {
            return Err(ParamError::new(
                "schedule.steps_per_period",
                format!(
                    "{} must be at least 64 and a multiple of 2·f/ν = {two_m}",
                    self.steps_per_period
                ),
            ));
        }
        Ok(())
    }

    /// Copy at another offset.
    pub fn with_offset(&self, offset: f64) -> Self {
        Self { offset, ..*self }
    }

    /// Copy at another toggle frequency; `steps_per_period` of `self` is
    /// treated as a lower bound and rounded up to the next valid count.
    pub fn with_toggle_freq(&self, toggle_freq: f64) -> Self {
        let mut s = Self { toggle_freq, ..*self };
        s.steps_per_period = steps_for(self.steps_per_period.max(64), s.toggles_per_period());
        s
    }
}

/// Default lower bound on steps per dither period.
pub const DEFAULT_STEPS: usize = 4096;

/// Smallest multiple of 2m that is at least `min_steps`.
pub fn steps_for(min_steps: usize, toggles_per_period: usize) -> usize {
    let two_m = 2 * toggles_per_period.max(1);
    min_steps.div_ceil(two_m).max(1) * two_m
}

/// Piecewise-constant samples of one dither period.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    /// ε_k at the interval midpoints t_k = (k − ½)δt, meV.
    pub epsilon: Vec<f64>,
    /// Detuning just after the start and just before the end of each
    /// interval (square-wave level held, dither continuous).
    pub start: Vec<f64>,
    pub end: Vec<f64>,
    /// Whether the square wave switches between interval k and k+1
    /// (cyclically).
    pub edge_after: Vec<bool>,
    /// δt in ns.
    pub dt: f64,
    pub basis_change: BasisChange,
}

impl Waveform {
    pub fn len(&self) -> usize {
        self.epsilon.len()
    }

    pub fn is_empty(&self) -> bool {
        self.epsilon.is_empty()
    }

    /// Same cycle starting at interval `shift`.
    pub fn rotated(&self, shift: usize) -> Self {
        let shift = shift % self.len();
        let rot = |v: &Vec<f64>| {
            let mut v = v.clone();
            v.rotate_left(shift);
            v
        };
        let mut edge_after = self.edge_after.clone();
        edge_after.rotate_left(shift);
        Self {
            epsilon: rot(&self.epsilon),
            start: rot(&self.start),
            end: rot(&self.end),
            edge_after,
            dt: self.dt,
            basis_change: self.basis_change,
        }
    }
}

/// Samples ε(t) at interval midpoints. Assumes the schedule is valid; the
/// square wave is h = +1 on the first half of each toggle period.
pub fn discretize_waveform(schedule: &PulseSchedule) -> Waveform {
    let n = schedule.steps_per_period;
    let m = schedule.toggles_per_period();
    let half = (n / (2 * m)).max(1);
    let dt = schedule.period() / n as f64;
    let h = |k: usize| if (k / half).is_multiple_of(2) { 1.0 } else { -1.0 };
    let at = |k: usize, pos: f64| {
        let phase = std::f64::consts::TAU * (k as f64 + pos) / n as f64;
        schedule.offset + 0.5 * schedule.toggle_amplitude * h(k) + schedule.dither_amplitude * phase.sin()
    };
    Waveform {
        epsilon: (0..n).map(|k| at(k, 0.5)).collect(),
        start: (0..n).map(|k| at(k, 0.0)).collect(),
        end: (0..n).map(|k| at(k, 1.0)).collect(),
        edge_after: (0..n).map(|k| h(k) != h((k + 1) % n)).collect(),
        dt,
        basis_change: schedule.basis_change,
    }
}

/// Ground and excited populations in the local energy eigenbasis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PopulationPair {
    pub rho00: f64,
    pub rho11: f64,
}

impl PopulationPair {
    pub fn total(&self) -> f64 {
        self.rho00 + self.rho11
    }
}

/// Column-stochastic map [[1 − b, a], [b, 1 − a]], stored by its
/// off-diagonal entries so columns sum to one exactly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransferMatrix {
    /// Excited → ground transfer, entry (0, 1).
    a: f64,
    /// Ground → excited transfer, entry (1, 0).
    b: f64,
}

impl TransferMatrix {
    pub fn from_off_diagonal(a: f64, b: f64) -> Self {
        Self { a, b }
    }

    pub fn identity() -> Self {
        Self { a: 0.0, b: 0.0 }
    }

    /// Rows of the full matrix.
    pub fn entries(&self) -> [[f64; 2]; 2] {
        [[1.0 - self.b, self.a], [self.b, 1.0 - self.a]]
    }

    pub fn off_diagonal(&self) -> (f64, f64) {
        (self.a, self.b)
    }

    pub fn column_sums(&self) -> [f64; 2] {
        let e = self.entries();
        [e[0][0] + e[1][0], e[0][1] + e[1][1]]
    }

    pub fn apply(&self, p: PopulationPair) -> PopulationPair {
        let up = self.a * p.rho11;
        let down = self.b * p.rho00;
        PopulationPair {
            rho00: p.rho00 - down + up,
            rho11: p.rho11 + down - up,
        }
    }

    /// `next · self`: first `self`, then `next`.
    pub fn then(&self, next: &TransferMatrix) -> TransferMatrix {
        TransferMatrix {
            a: (1.0 - next.b) * self.a + next.a * (1.0 - self.a),
            b: next.b * (1.0 - self.b) + (1.0 - next.a) * self.b,
        }
    }
}

/// Thermal excited-state population (1 + e^{βħΩ})⁻¹.
fn thermal_excited(gap: f64, beta: f64) -> f64 {
    1.0 / (1.0 + (beta * gap).exp())
}

/// 1 − e^{−x}.
fn decay_complement(x: f64) -> f64 {
    -(-x).exp_m1()
}

/// 1 − (1 − e^{−x})/x, the complement of the interval-averaged decay factor.
fn averaged_decay_complement(x: f64) -> f64 {
    if x < 1e-3 {
        x * (0.5 - x * (1.0 / 6.0 - x * (1.0 / 24.0 - x / 120.0)))
    } else {
        (x + (-x).exp_m1()) / x
    }
}

/// Relaxation toward equilibrium at fixed ε with rate Γ (1/ns) over δt.
fn relax_from_rate(epsilon: f64, dt: f64, gamma: f64, qubit: &QubitParams, as_average: bool) -> TransferMatrix {
    let x = gamma * dt;
    let w = if as_average {
        averaged_decay_complement(x)
    } else {
        decay_complement(x)
    };
    let p1 = thermal_excited(energy_gap(epsilon, qubit.delta), qubit.beta());
    TransferMatrix {
        a: w * (1.0 - p1),
        b: w * p1,
    }
}

/// R(ε, δt) with decay factor e^{−Γδt}, or its interval average R̄ with
/// (1 − e^{−Γδt})/(Γδt) when `as_average` is set.
pub fn relax_matrix<R: RelaxationRate + ?Sized>(
    epsilon: f64,
    dt: f64,
    rate: &R,
    qubit: &QubitParams,
    as_average: bool,
) -> TransferMatrix {
    relax_from_rate(epsilon, dt, rate.rate(epsilon), qubit, as_average)
}

/// B(ε₁, ε₀): sudden projection of populations from the eigenbasis at
/// `epsilon_from` onto the eigenbasis at `epsilon_to`.
pub fn basis_change_matrix(epsilon_from: f64, epsilon_to: f64, qubit: &QubitParams) -> TransferMatrix {
    let leak = ground_leakage(epsilon_from, epsilon_to, qubit.delta);
    TransferMatrix { a: leak, b: leak }
}

struct Step {
    relax: TransferMatrix,
    average: TransferMatrix,
    cross: Option<TransferMatrix>,
    /// ε/ħΩ over the interval and ½(1 − ε/ħΩ), the latter kept separately
    /// to avoid cancellation when ε ≫ Δ.
    cos2theta: f64,
    left_offset: f64,
}

/// ε − √(ε² + Δ²) without cancellation.
fn eps_minus_gap(eps: f64, delta: f64) -> f64 {
    let gap = energy_gap(eps, delta);
    if eps > 0.0 {
        -delta * delta / (gap + eps)
    } else {
        eps - gap
    }
}

/// (ε/ħΩ, ½(1 − ε/ħΩ)) at a point.
fn charge_weights(eps: f64, delta: f64) -> (f64, f64) {
    let gap = energy_gap(eps, delta);
    (eps / gap, -0.5 * eps_minus_gap(eps, delta) / gap)
}

/// Exact averages of (ε/ħΩ, ½(1 − ε/ħΩ)) over a linear sweep from `e1` to
/// `e2`, using ∫ε/ħΩ dε = ħΩ.
fn swept_charge_weights(e1: f64, e2: f64, delta: f64) -> (f64, f64) {
    let de = e2 - e1;
    if de.abs() <= 1e-12 * (e1.abs() + delta) {
        return charge_weights(0.5 * (e1 + e2), delta);
    }
    let c = (energy_gap(e2, delta) - energy_gap(e1, delta)) / de;
    let off = 0.5 * (eps_minus_gap(e2, delta) - eps_minus_gap(e1, delta)) / de;
    (c, off)
}

/// Rate-independent part of one interval.
#[derive(Debug, Clone)]
struct PreparedStep {
    epsilon: f64,
    excited: f64,
    cross: Option<TransferMatrix>,
    cos2theta: f64,
    left_offset: f64,
}

/// A waveform with everything that does not depend on Γ_r precomputed for
/// fixed qubit parameters. Reusable across many rate curves.
#[derive(Debug, Clone)]
pub struct PreparedWaveform {
    dt: f64,
    steps: Vec<PreparedStep>,
}

impl PreparedWaveform {
    pub fn new(wave: &Waveform, qubit: &QubitParams) -> Self {
        let n = wave.len();
        let beta = qubit.beta();
        let steps = (0..n)
            .map(|k| {
                let eps = wave.epsilon[k];
                let next = (k + 1) % n;
                let (cross, (cos2theta, left_offset)) = match wave.basis_change {
                    BasisChange::Sudden => (
                        Some(basis_change_matrix(eps, wave.epsilon[next], qubit)),
                        charge_weights(eps, qubit.delta),
                    ),
                    BasisChange::EdgesOnly => (
                        wave.edge_after[k].then(|| basis_change_matrix(wave.end[k], wave.start[next], qubit)),
                        swept_charge_weights(wave.start[k], wave.end[k], qubit.delta),
                    ),
                };
                PreparedStep {
                    epsilon: eps,
                    excited: thermal_excited(energy_gap(eps, qubit.delta), beta),
                    cross,
                    cos2theta,
                    left_offset,
                }
            })
            .collect();
        Self { dt: wave.dt, steps }
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    fn with_rate<R: RelaxationRate + ?Sized>(&self, rate: &R) -> Vec<Step> {
        self.steps
            .iter()
            .map(|p| {
                let x = rate.rate(p.epsilon) * self.dt;
                let w = decay_complement(x);
                let wa = averaged_decay_complement(x);
                Step {
                    relax: TransferMatrix {
                        a: w * (1.0 - p.excited),
                        b: w * p.excited,
                    },
                    average: TransferMatrix {
                        a: wa * (1.0 - p.excited),
                        b: wa * p.excited,
                    },
                    cross: p.cross,
                    cos2theta: p.cos2theta,
                    left_offset: p.left_offset,
                }
            })
            .collect()
    }

    /// Λ_N for this waveform.
    pub fn period_map<R: RelaxationRate + ?Sized>(&self, rate: &R) -> TransferMatrix {
        compose(&self.with_rate(rate))
    }

    /// n̄_L for this waveform.
    pub fn mean_left_occupancy<R: RelaxationRate + ?Sized>(&self, rate: &R) -> Result<f64, DynamicsError> {
        let steps = self.with_rate(rate);
        let mut rho = fixed_point(&compose(&steps))?;
        let mut acc = 0.0;
        for s in &steps {
            let mean = s.average.apply(rho);
            acc += s.left_offset + s.cos2theta * mean.rho00;
            rho = s.relax.apply(rho);
            if let Some(b) = &s.cross {
                rho = b.apply(rho);
            }
        }
        Ok((acc / steps.len() as f64).clamp(0.0, 1.0))
    }
}

fn compose(steps: &[Step]) -> TransferMatrix {
    steps.iter().fold(TransferMatrix::identity(), |acc, s| {
        let acc = acc.then(&s.relax);
        match &s.cross {
            Some(b) => acc.then(b),
            None => acc,
        }
    })
}

/// Λ_N = B(ε₁, ε_N)R(ε_N)···B(ε₂, ε₁)R(ε₁) for one dither period.
pub fn period_map<R: RelaxationRate + ?Sized>(
    schedule: &PulseSchedule,
    rate: &R,
    qubit: &QubitParams,
) -> Result<TransferMatrix, DynamicsError> {
    schedule.validate()?;
    qubit.validate()?;
    Ok(period_map_waveform(&discretize_waveform(schedule), rate, qubit))
}

pub fn period_map_waveform<R: RelaxationRate + ?Sized>(
    wave: &Waveform,
    rate: &R,
    qubit: &QubitParams,
) -> TransferMatrix {
    PreparedWaveform::new(wave, qubit).period_map(rate)
}

/// Stationary populations of a column-stochastic map, (a, b)/(a + b).
pub fn fixed_point(map: &TransferMatrix) -> Result<PopulationPair, DynamicsError> {
    let s = map.a + map.b;
    if !(s >= 1e-14) {
        return Err(DynamicsError::DegenerateMap);
    }
    Ok(PopulationPair {
        rho00: map.a / s,
        rho11: map.b / s,
    })
}

/// Time-averaged left-well occupancy n̄_L over one dither period in
/// dynamical equilibrium.
pub fn mean_left_occupancy<R: RelaxationRate + ?Sized>(
    schedule: &PulseSchedule,
    rate: &R,
    qubit: &QubitParams,
) -> Result<f64, DynamicsError> {
    schedule.validate()?;
    qubit.validate()?;
    mean_left_occupancy_waveform(&discretize_waveform(schedule), rate, qubit)
}

pub fn mean_left_occupancy_waveform<R: RelaxationRate + ?Sized>(
    wave: &Waveform,
    rate: &R,
    qubit: &QubitParams,
) -> Result<f64, DynamicsError> {
    PreparedWaveform::new(wave, qubit).mean_left_occupancy(rate)
}

/// Occupancy (or derivative) values on an (offset × frequency) grid, stored
/// frequency-major: `values[fi * offsets.len() + oi]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccupancyMap {
    pub offsets: Vec<f64>,
    pub freqs: Vec<f64>,
    pub values: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<Vec<f64>>,
}

impl OccupancyMap {
    pub fn new(
        offsets: Vec<f64>,
        freqs: Vec<f64>,
        values: Vec<f64>,
        sigma: Option<Vec<f64>>,
    ) -> Result<Self, ParamError> {
        let m = Self {
            offsets,
            freqs,
            values,
            sigma,
        };
        m.validate_shape()?;
        Ok(m)
    }

    /// Grid and length checks; values are not range-checked so derivative
    /// maps can share the type.
    pub fn validate_shape(&self) -> Result<(), ParamError> {
        check_grid(&self.offsets, "map.offsets")?;
        check_grid(&self.freqs, "map.freqs")?;
        let n = self.offsets.len() * self.freqs.len();
        if self.values.len() != n {
            return Err(ParamError::new(
                "map.values",
                format!("expected {n} values, got {}", self.values.len()),
            ));
        }
        if let Some(s) = &self.sigma {
            if s.len() != n {
                return Err(ParamError::new(
                    "map.sigma",
                    format!("expected {n} values, got {}", s.len()),
                ));
            }
        }
        Ok(())
    }

    /// Full check for an occupancy map: shape plus n ∈ [0, 1].
    pub fn validate(&self) -> Result<(), ParamError> {
        self.validate_shape()?;
        if self.values.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(ParamError::new("map.values", "occupancies must lie in [0, 1]"));
        }
        Ok(())
    }

    pub fn get(&self, freq_index: usize, offset_index: usize) -> f64 {
        self.values[freq_index * self.offsets.len() + offset_index]
    }

    /// The trace n(ε̄) at one frequency.
    pub fn trace(&self, freq_index: usize) -> &[f64] {
        let n = self.offsets.len();
        &self.values[freq_index * n..(freq_index + 1) * n]
    }
}

fn check_grid(grid: &[f64], field: &str) -> Result<(), ParamError> {
    if grid.is_empty() {
        return Err(ParamError::new(field, "grid is empty"));
    }
    if grid.iter().any(|v| !v.is_finite()) || grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(ParamError::new(field, "grid must be finite and strictly increasing"));
    }
    Ok(())
}

/// n̄_L at every (offset, frequency) pair. `template` supplies the amplitudes,
/// dither and ramp; its `steps_per_period` is a lower bound that is rounded
/// up per frequency. Points are evaluated in parallel; output order is fixed.
pub fn occupancy_map<R: RelaxationRate + ?Sized>(
    offsets: &[f64],
    freqs: &[f64],
    rate: &R,
    qubit: &QubitParams,
    template: &PulseSchedule,
) -> Result<OccupancyMap, DynamicsError> {
    check_grid(offsets, "map.offsets")?;
    check_grid(freqs, "map.freqs")?;
    qubit.validate()?;
    let schedules: Vec<PulseSchedule> = freqs.iter().map(|&f| template.with_toggle_freq(f)).collect();
    for s in &schedules {
        s.validate()?;
    }
    let values: Vec<Result<f64, DynamicsError>> = (0..freqs.len() * offsets.len())
        .into_par_iter()
        .map(|i| {
            let (fi, oi) = (i / offsets.len(), i % offsets.len());
            let wave = discretize_waveform(&schedules[fi].with_offset(offsets[oi]));
            mean_left_occupancy_waveform(&wave, rate, qubit).map_err(|e| DynamicsError::GridPoint {
                offset: offsets[oi],
                freq: freqs[fi],
                source: Box::new(e),
            })
        })
        .collect();
    let values = values.into_iter().collect::<Result<Vec<_>, _>>()?;
    Ok(OccupancyMap {
        offsets: offsets.to_vec(),
        freqs: freqs.to_vec(),
        values,
        sigma: None,
    })
}

/// dn/dε̄ per frequency trace: central differences inside, one-sided at the
/// two ends.
pub fn differential_map(map: &OccupancyMap) -> Result<OccupancyMap, DynamicsError> {
    let n = map.offsets.len();
    if n < 3 {
        return Err(DynamicsError::TooFewPoints { needed: 3, got: n });
    }
    let x = &map.offsets;
    let mut values = Vec::with_capacity(map.values.len());
    for fi in 0..map.freqs.len() {
        let y = map.trace(fi);
        values.push((y[1] - y[0]) / (x[1] - x[0]));
        for i in 1..n - 1 {
            values.push((y[i + 1] - y[i - 1]) / (x[i + 1] - x[i - 1]));
        }
        values.push((y[n - 1] - y[n - 2]) / (x[n - 1] - x[n - 2]));
    }
    Ok(OccupancyMap {
        offsets: map.offsets.clone(),
        freqs: map.freqs.clone(),
        values,
        sigma: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qubit::{equilibrium_ground_population, equilibrium_occupancy_l};
    use crate::rate::ConstantRate;
    use proptest::prelude::*;

    fn qubit() -> QubitParams {
        QubitParams::new(1e-3, 0.3).unwrap()
    }

    #[test]
    fn square_wave_samples() {
        let s = PulseSchedule {
            offset: 0.1,
            toggle_amplitude: 0.2,
            toggle_freq: 43.0,
            dither_amplitude: 0.0,
            dither_freq: 43.0,
            ramp_time: 16.0,
            steps_per_period: 4,
            basis_change: BasisChange::EdgesOnly,
        };
        let w = discretize_waveform(&s);
        assert_eq!(w.epsilon, vec![0.2, 0.2, 0.0, 0.0]);
        assert_eq!(w.edge_after, vec![false, true, false, true]);
    }

    #[test]
    fn swept_weights_match_quadrature() {
        let delta = 1e-3;
        for &(e1, e2) in &[(-0.02, 0.03), (0.1, 0.1001), (-0.4, -0.3999), (2e-4, -5e-4)] {
            let (c, off) = swept_charge_weights(e1, e2, delta);
            let opts = crate::quad::QuadOptions {
                rel_tol: 1e-12,
                abs_tol: 1e-15,
                max_subdivisions: 1000,
            };
            let avg = |f: &dyn Fn(f64) -> f64| {
                let (lo, hi) = if e1 < e2 { (e1, e2) } else { (e2, e1) };
                crate::quad::integrate(f, lo, hi, &opts).unwrap().value / (hi - lo)
            };
            let want_c = avg(&|e| e / energy_gap(e, delta));
            let want_off = avg(&|e| 0.5 * delta * delta / (energy_gap(e, delta) * (energy_gap(e, delta) + e)));
            assert!((c - want_c).abs() < 1e-10, "{e1} {e2}: {c} vs {want_c}");
            assert!(
                (off - want_off).abs() < 1e-10 * want_off.max(1e-3),
                "{e1} {e2}: {off} vs {want_off}"
            );
        }
    }

    #[test]
    fn samples_average_to_offset() {
        for &f in &[215.0, 989.0, 12943.0] {
            let s = PulseSchedule::experimental(0.037, 0.53, f);
            s.validate().unwrap();
            let w = discretize_waveform(&s);
            let mean = w.epsilon.iter().sum::<f64>() / w.epsilon.len() as f64;
            assert!((mean - 0.037).abs() < 1e-12);
        }
    }

    #[test]
    fn schedule_validation() {
        let s = PulseSchedule::experimental(0.0, 0.21, 215.0);
        assert!(s.validate().is_ok());
        assert!(PulseSchedule {
            toggle_freq: 200.0,
            ..s
        }
        .validate()
        .is_err());
        assert!(PulseSchedule {
            steps_per_period: 4095,
            ..s
        }
        .validate()
        .is_err());
        assert!(PulseSchedule { ramp_time: 1e6, ..s }.validate().is_err());
        assert_eq!(steps_for(4096, 301), 4214);
        assert_eq!(s.with_toggle_freq(12943.0).steps_per_period, 4214);
    }

    #[test]
    fn relax_limits() {
        let q = qubit();
        let full = relax_matrix(0.05, 1.0, &ConstantRate(1e9), &q, false);
        let p0 = equilibrium_ground_population(0.05, q.delta, q.temperature);
        let e = full.entries();
        assert!((e[0][0] - p0).abs() < 1e-15 && (e[0][1] - p0).abs() < 1e-15);
        for avg in [false, true] {
            assert_eq!(
                relax_matrix(0.05, 1.0, &ConstantRate(0.0), &q, avg),
                TransferMatrix::identity()
            );
        }
    }

    #[test]
    fn unit_decay_factor() {
        let q = qubit();
        let eps = 0.02;
        let p1 = thermal_excited(energy_gap(eps, q.delta), q.beta());
        let r = relax_matrix(eps, 2.0, &ConstantRate(0.5), &q, false);
        let nu = 1.0 - r.off_diagonal().1 / p1;
        assert!((nu - (-1.0f64).exp()).abs() < 1e-15);
        let rbar = relax_matrix(eps, 2.0, &ConstantRate(0.5), &q, true);
        let nubar = 1.0 - rbar.off_diagonal().1 / p1;
        assert!((nubar - (1.0 - (-1.0f64).exp())).abs() < 1e-15);
        // R̄ = (1/δt)∫R(t)dt by quadrature over t
        let opts = crate::quad::QuadOptions::default();
        let integral = crate::quad::integrate(
            |t| relax_matrix(eps, t, &ConstantRate(0.5), &q, false).off_diagonal().0,
            0.0,
            2.0,
            &opts,
        )
        .unwrap()
        .value
            / 2.0;
        assert!((integral - rbar.off_diagonal().0).abs() < 1e-12);
    }

    #[test]
    fn averaged_decay_branches_agree() {
        let x = 1e-3;
        let series = averaged_decay_complement(x * (1.0 - 1e-12));
        let direct = (x + (-x).exp_m1()) / x;
        assert!((series - direct).abs() < 1e-12 * direct);
    }

    #[test]
    fn basis_change_cases() {
        let q = qubit();
        assert_eq!(basis_change_matrix(0.1, 0.1, &q), TransferMatrix::identity());
        let swap = basis_change_matrix(10.0, -10.0, &q);
        assert!(swap.off_diagonal().0 > 1.0 - 1e-8);
        let b = basis_change_matrix(0.3, -0.01, &q);
        assert_eq!(b.off_diagonal().0, b.off_diagonal().1);
    }

    #[test]
    fn fixed_point_closed_form() {
        let m = TransferMatrix::from_off_diagonal(0.3, 0.1);
        let p = fixed_point(&m).unwrap();
        assert!((p.rho00 - 0.75).abs() < 1e-15 && (p.rho11 - 0.25).abs() < 1e-15);
        assert_eq!(
            fixed_point(&TransferMatrix::identity()),
            Err(DynamicsError::DegenerateMap)
        );
    }

    #[test]
    fn static_schedule_matches_equilibrium() {
        let q = qubit();
        let base = PulseSchedule {
            toggle_amplitude: 0.0,
            dither_amplitude: 0.0,
            ..PulseSchedule::experimental(0.0, 0.0, 215.0)
        };
        for i in 0..21 {
            let eps = -0.5 + 0.05 * i as f64;
            let n = mean_left_occupancy(&base.with_offset(eps), &ConstantRate(1e-5), &q).unwrap();
            assert!((n - equilibrium_occupancy_l(eps, q.delta, q.temperature)).abs() < 1e-9);
        }
    }

    #[test]
    fn symmetric_point_is_half() {
        let q = qubit();
        for &f in &[215.0, 4085.0] {
            let s = PulseSchedule::experimental(0.0, 0.21, f);
            let n = mean_left_occupancy(&s, &ConstantRate(1e-5), &q).unwrap();
            assert!((n - 0.5).abs() < 1e-12, "{n}");
        }
    }

    #[test]
    fn zero_rate_orbit_has_uniform_fixed_point() {
        let q = qubit();
        let s = PulseSchedule::experimental(0.02, 0.21, 473.0);
        let map = period_map(&s, &ConstantRate(0.0), &q).unwrap();
        let p = fixed_point(&map).unwrap();
        assert!((p.rho00 - 0.5).abs() < 1e-12);
    }

    #[test]
    fn static_period_map_is_single_relaxation() {
        let q = qubit();
        let s = PulseSchedule {
            toggle_amplitude: 0.0,
            dither_amplitude: 0.0,
            ..PulseSchedule::experimental(0.07, 0.0, 215.0)
        };
        let map = period_map(&s, &ConstantRate(2e-9), &q).unwrap();
        let direct = relax_matrix(0.07, s.period(), &ConstantRate(2e-9), &q, false);
        let (a1, b1) = map.off_diagonal();
        let (a2, b2) = direct.off_diagonal();
        assert!((a1 - a2).abs() < 1e-12 && (b1 - b2).abs() < 1e-12);
    }

    #[test]
    fn fixed_point_agrees_with_power_iteration() {
        let q = qubit();
        let s = PulseSchedule::experimental(0.08, 0.21, 989.0);
        let map = period_map(&s, &ConstantRate(1e-5), &q).unwrap();
        let fp = fixed_point(&map).unwrap();
        let mut p = PopulationPair { rho00: 1.0, rho11: 0.0 };
        for _ in 0..10_000 {
            p = map.apply(p);
        }
        assert!((p.rho00 - fp.rho00).abs() < 1e-12);
    }

    #[test]
    fn start_phase_does_not_matter() {
        let q = qubit();
        let s = PulseSchedule::experimental(0.09, 0.21, 989.0);
        let w = discretize_waveform(&s);
        let rate = |e: f64| 1e-6 * (1.0 + 30.0 * e * e);
        let n0 = mean_left_occupancy_waveform(&w, &rate, &q).unwrap();
        for shift in [1, 17, 1000, 3000] {
            let n = mean_left_occupancy_waveform(&w.rotated(shift), &rate, &q).unwrap();
            assert!((n - n0).abs() < 1e-10, "shift {shift}: {n} vs {n0}");
        }
    }

    #[test]
    fn differential_of_linear_is_constant() {
        let offsets: Vec<f64> = (0..7).map(|i| -0.3 + 0.1 * i as f64).collect();
        let values: Vec<f64> = offsets.iter().map(|x| 0.5 + 0.4 * x).collect();
        let map = OccupancyMap::new(offsets, vec![215.0], values, None).unwrap();
        let d = differential_map(&map).unwrap();
        assert!(d.values.iter().all(|v| (v - 0.4).abs() < 1e-12));
        let short = OccupancyMap::new(vec![0.0, 1.0], vec![1.0], vec![0.0, 1.0], None).unwrap();
        assert_eq!(
            differential_map(&short),
            Err(DynamicsError::TooFewPoints { needed: 3, got: 2 })
        );
    }

    #[test]
    fn differential_of_symmetric_curve_is_symmetric() {
        let offsets: Vec<f64> = (0..11).map(|i| -0.5 + 0.1 * i as f64).collect();
        let values: Vec<f64> = offsets.iter().map(|x| 0.5 - 0.3 * (4.0 * x).tanh()).collect();
        let d = differential_map(&OccupancyMap::new(offsets, vec![215.0], values, None).unwrap()).unwrap();
        for i in 0..11 {
            assert!((d.values[i] - d.values[10 - i]).abs() < 1e-12);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn products_conserve_population(
            eps in proptest::collection::vec(-0.6f64..0.6, 1..40),
            rates in proptest::collection::vec(0.0f64..1e-3, 40),
            dt in 1.0f64..1e6,
            start in 0.0f64..1.0,
        ) {
            let q = qubit();
            let mut p = PopulationPair { rho00: start, rho11: 1.0 - start };
            let mut map = TransferMatrix::identity();
            for (i, e) in eps.iter().enumerate() {
                let r = relax_matrix(*e, dt, &ConstantRate(rates[i]), &q, i % 2 == 0);
                let b = basis_change_matrix(*e, eps[(i + 1) % eps.len()], &q);
                p = b.apply(r.apply(p));
                map = map.then(&r).then(&b);
                for m in [r, b, map] {
                    let c = m.column_sums();
                    prop_assert!((c[0] - 1.0).abs() < 1e-12 && (c[1] - 1.0).abs() < 1e-12);
                    let e = m.entries();
                    prop_assert!(e.iter().flatten().all(|v| (-1e-15..=1.0 + 1e-15).contains(v)));
                }
                prop_assert!((p.total() - 1.0).abs() < 1e-10);
            }
        }
    }
}

//! Forward model over one or more occupancy grids with cached waveforms.

use std::sync::{Arc, Mutex};

use rayon::prelude::*;

use crate::dynamics::{discretize_waveform, OccupancyMap, PreparedWaveform, PulseSchedule, Waveform};
use crate::error::{DynamicsError, InferenceError};
use crate::qubit::QubitParams;
use crate::rate::RelaxationRate;

/// The (offset × frequency) grid of one toggle amplitude.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub schedule: PulseSchedule,
    pub offsets: Vec<f64>,
    pub freqs: Vec<f64>,
}

impl GridSpec {
    pub fn len(&self) -> usize {
        self.offsets.len() * self.freqs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

struct Point {
    wave: Waveform,
    offset: f64,
    freq: f64,
    /// |ε| ranges visited by the two square-wave levels.
    spans: [(f64, f64); 2],
}

/// n̄ at every point of several grids, concatenated grid by grid in
/// frequency-major order. Waveforms are discretized once and prepared once
/// per qubit parameter set.
pub struct ForwardModel {
    grids: Vec<GridSpec>,
    points: Vec<Point>,
    prepared: Mutex<Option<Arc<(QubitParams, Vec<PreparedWaveform>)>>>,
}

fn abs_span(lo: f64, hi: f64) -> (f64, f64) {
    if lo <= 0.0 && hi >= 0.0 {
        (0.0, lo.abs().max(hi.abs()))
    } else {
        (lo.abs().min(hi.abs()), lo.abs().max(hi.abs()))
    }
}

impl ForwardModel {
    /// `shift` is added to every offset before modelling.
    pub fn new(grids: &[GridSpec], shift: f64) -> Result<Self, InferenceError> {
        let mut points = Vec::new();
        for g in grids {
            for &f in &g.freqs {
                let sched = g.schedule.with_toggle_freq(f);
                sched.validate()?;
                for &o in &g.offsets {
                    let s = sched.with_offset(o + shift);
                    let a = s.dither_amplitude;
                    let h = 0.5 * s.toggle_amplitude;
                    let c = s.offset;
                    points.push(Point {
                        wave: discretize_waveform(&s),
                        offset: o,
                        freq: f,
                        spans: [abs_span(c + h - a, c + h + a), abs_span(c - h - a, c - h + a)],
                    });
                }
            }
        }
        Ok(Self {
            grids: grids.to_vec(),
            points,
            prepared: Mutex::new(None),
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Largest |ε| any waveform reaches.
    pub fn max_abs_detuning(&self) -> f64 {
        self.points
            .iter()
            .map(|p| p.spans[0].1.max(p.spans[1].1))
            .fold(0.0, f64::max)
    }

    fn prepare(&self, qubit: &QubitParams) -> Result<Arc<(QubitParams, Vec<PreparedWaveform>)>, InferenceError> {
        qubit.validate()?;
        let mut guard = self.prepared.lock().unwrap_or_else(|e| e.into_inner());
        if let Some(p) = guard.as_ref() {
            if p.0 == *qubit {
                return Ok(Arc::clone(p));
            }
        }
        let waves = self
            .points
            .par_iter()
            .map(|p| PreparedWaveform::new(&p.wave, qubit))
            .collect();
        let p = Arc::new((*qubit, waves));
        *guard = Some(Arc::clone(&p));
        Ok(p)
    }

    fn point<R: RelaxationRate + ?Sized>(
        &self,
        i: usize,
        wave: &PreparedWaveform,
        rate: &R,
    ) -> Result<f64, InferenceError> {
        wave.mean_left_occupancy(rate).map_err(|e| {
            let p = &self.points[i];
            DynamicsError::GridPoint {
                offset: p.offset,
                freq: p.freq,
                source: Box::new(e),
            }
            .into()
        })
    }

    pub fn evaluate<R: RelaxationRate + ?Sized>(
        &self,
        rate: &R,
        qubit: &QubitParams,
    ) -> Result<Vec<f64>, InferenceError> {
        let prep = self.prepare(qubit)?;
        let v: Vec<Result<f64, InferenceError>> = (0..self.points.len())
            .into_par_iter()
            .map(|i| self.point(i, &prep.1[i], rate))
            .collect();
        v.into_iter().collect()
    }

    /// Re-evaluates only points whose waveform visits |ε| ∈ [lo, hi]; the
    /// rest are copied from `base`, which must be the values for a rate that
    /// agrees with `rate` outside that band.
    pub fn evaluate_band<R: RelaxationRate + ?Sized>(
        &self,
        rate: &R,
        qubit: &QubitParams,
        base: &[f64],
        band: (f64, f64),
    ) -> Result<Vec<f64>, InferenceError> {
        let prep = self.prepare(qubit)?;
        let touched = |p: &Point| p.spans.iter().any(|&(a, b)| a <= band.1 && b >= band.0);
        let v: Vec<Result<f64, InferenceError>> = (0..self.points.len())
            .into_par_iter()
            .map(|i| {
                if touched(&self.points[i]) {
                    self.point(i, &prep.1[i], rate)
                } else {
                    Ok(base[i])
                }
            })
            .collect();
        v.into_iter().collect()
    }

    /// Splits concatenated values back into one map per grid.
    pub fn to_maps(&self, values: &[f64]) -> Vec<OccupancyMap> {
        let mut out = Vec::with_capacity(self.grids.len());
        let mut start = 0;
        for g in &self.grids {
            let n = g.len();
            out.push(OccupancyMap {
                offsets: g.offsets.clone(),
                freqs: g.freqs.clone(),
                values: values[start..start + n].to_vec(),
                sigma: None,
            });
            start += n;
        }
        out
    }
}

/// |ε| band over which a monotone cubic in |ε| changes when knot `i` moves:
/// the four surrounding intervals, extended to 0 or ∞ where the end slopes
/// depend on the knot.
pub fn knot_band(knots: &[f64], i: usize) -> (f64, f64) {
    let n = knots.len();
    let lo = if i <= 2 { 0.0 } else { knots[i - 2] };
    let hi = if i + 3 >= n { f64::INFINITY } else { knots[i + 2] };
    (lo, hi)
}

//! Even-mode smoothing of differential traces into occupancy curves.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dynamics::OccupancyMap;
use crate::error::{InferenceError, ParamError};

/// The linear smoother applied to one trace: a weighted least-squares fit of
/// dn/dε̄ by cos(kπε̄/W), k < `modes`, W = max |ε̄|, integrated analytically
/// with n(0) = ½. Being linear, it can be applied to model curves as well.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceFilter {
    pub modes: usize,
    /// 1/σ per point, if the data carried sigma.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
}

struct FilterParts {
    /// Maps a differential trace to n − ½.
    operator: DMatrix<f64>,
    /// Coefficient covariance per unit noise variance, (AᵀWᵀWA)⁻¹.
    covariance: DMatrix<f64>,
    /// Mode integrals at the offsets (n × k) and modes themselves.
    integrals: DMatrix<f64>,
    modes: DMatrix<f64>,
}

impl TraceFilter {
    fn parts(&self, offsets: &[f64]) -> Result<FilterParts, InferenceError> {
        let n = offsets.len();
        let k = self.modes;
        let width = offsets.iter().fold(0.0f64, |m, e| m.max(e.abs()));
        let w = self.weights.clone().unwrap_or_else(|| vec![1.0; n]);
        let modes = DMatrix::from_fn(n, k, |i, j| mode(j, offsets[i], width));
        let weighted = DMatrix::from_fn(n, k, |i, j| w[i] * modes[(i, j)]);
        let pinv = weighted
            .svd(true, true)
            .pseudo_inverse(1e-13)
            .map_err(|e| ParamError::new("smoothing", e.to_string()))?;
        let integrals = DMatrix::from_fn(n, k, |i, j| mode_integral(j, offsets[i], width));
        let mut coef_map = pinv.clone();
        for (c, wi) in w.iter().enumerate() {
            coef_map.column_mut(c).scale_mut(*wi);
        }
        Ok(FilterParts {
            operator: &integrals * coef_map,
            covariance: &pinv * pinv.transpose(),
            integrals,
            modes,
        })
    }

    /// The n × n matrix taking a differential trace to n − ½.
    pub fn matrix(&self, offsets: &[f64]) -> Result<DMatrix<f64>, InferenceError> {
        Ok(self.parts(offsets)?.operator)
    }

    /// Smoothed n for a differential trace.
    pub fn apply(&self, offsets: &[f64], differential: &[f64]) -> Result<Vec<f64>, InferenceError> {
        let op = self.matrix(offsets)?;
        Ok((op * DVector::from_column_slice(differential))
            .iter()
            .map(|v| 0.5 + v)
            .collect())
    }
}

/// Outcome of smoothing one trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothedTrace {
    /// n(ε̄) at the trace's offsets.
    pub occupancy: Vec<f64>,
    /// The smoother used; its mode count may be below the request.
    pub filter: TraceFilter,
    /// Root-mean-square of (data − fit) on the differential.
    pub residual_rms: f64,
    /// Residual standard error √(RSS/(n − modes)), an estimate of the
    /// per-point differential noise.
    pub noise_estimate: f64,
    /// Largest standard error of the smoothed n.
    pub max_standard_error: f64,
}

/// Smooths one trace of dn/dε̄. The mode count starts at `n_modes` and is
/// reduced while the curve leaves [0, 1] by more than three of its own
/// standard errors at any grid point; the curve itself is never clipped.
/// Standard errors use the per-point sigma when given, otherwise the
/// residual standard error.
pub fn smooth_trace(
    offsets: &[f64],
    differential: &[f64],
    sigma: Option<&[f64]>,
    n_modes: usize,
) -> Result<SmoothedTrace, InferenceError> {
    let n = offsets.len();
    if differential.len() != n || sigma.is_some_and(|s| s.len() != n) {
        return Err(InferenceError::GridMismatch(format!(
            "{n} offsets but {} differential values",
            differential.len()
        )));
    }
    if n_modes < 2 {
        return Err(ParamError::new("smoothing.n_modes", "need at least two modes").into());
    }
    if n < n_modes + 1 {
        return Err(ParamError::new(
            "smoothing.n_modes",
            format!("{n_modes} modes need more than {n_modes} points, trace has {n}"),
        )
        .into());
    }
    let lo = offsets.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = offsets.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !(lo <= 0.0 && hi >= 0.0) {
        return Err(ParamError::new("smoothing", "trace must span zero detuning").into());
    }
    if !(lo < hi) {
        return Err(ParamError::new("smoothing", "trace has zero width").into());
    }
    if let Some(s) = sigma {
        if s.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(ParamError::new("data.sigma", "must be positive").into());
        }
    }
    let weights = sigma.map(|s| s.iter().map(|v| 1.0 / v).collect::<Vec<f64>>());
    let d = DVector::from_column_slice(differential);

    for k in (2..=n_modes).rev() {
        let filter = TraceFilter {
            modes: k,
            weights: weights.clone(),
        };
        let parts = filter.parts(offsets)?;
        let occupancy: Vec<f64> = (&parts.operator * &d).iter().map(|v| 0.5 + v).collect();
        // coefficients from n − ½ would lose the constant; refit them
        let w = weights.clone().unwrap_or_else(|| vec![1.0; n]);
        let aw = DMatrix::from_fn(n, k, |i, j| w[i] * parts.modes[(i, j)]);
        let bw = DVector::from_fn(n, |i, _| w[i] * differential[i]);
        let coef = &parts.covariance * aw.transpose() * &bw;
        let fitted = &parts.modes * &coef;
        let rss: f64 = (0..n).map(|i| (differential[i] - fitted[i]).powi(2)).sum();
        let noise_estimate = (rss / (n - k) as f64).sqrt();
        // covariance of the coefficients
        let scale = match sigma {
            Some(_) => 1.0,
            None => noise_estimate * noise_estimate,
        };
        let se: Vec<f64> = (0..n)
            .map(|i| {
                let g = parts.integrals.row(i);
                (scale * (g * &parts.covariance * g.transpose())[(0, 0)])
                    .max(0.0)
                    .sqrt()
            })
            .collect();
        let inside = occupancy
            .iter()
            .zip(&se)
            .all(|(v, s)| *v >= -3.0 * s && *v <= 1.0 + 3.0 * s);
        if inside {
            return Ok(SmoothedTrace {
                occupancy,
                filter,
                residual_rms: (rss / n as f64).sqrt(),
                noise_estimate,
                max_standard_error: se.iter().cloned().fold(0.0, f64::max),
            });
        }
    }
    Err(InferenceError::NormalizationInfeasible { requested: n_modes })
}

fn mode(k: usize, e: f64, width: f64) -> f64 {
    (k as f64 * std::f64::consts::PI * e / width).cos()
}

fn mode_integral(k: usize, e: f64, width: f64) -> f64 {
    if k == 0 {
        e
    } else {
        let w = k as f64 * std::f64::consts::PI / width;
        (w * e).sin() / w
    }
}

/// Smooths every frequency trace of a differential map (dn/dε̄ in 1/meV).
/// The per-point sigma of the map, when present, weights the fit.
pub fn smooth_to_occupancy(
    differential: &OccupancyMap,
    n_modes: usize,
) -> Result<(OccupancyMap, Vec<SmoothedTrace>), InferenceError> {
    differential.validate_shape()?;
    let no = differential.offsets.len();
    let mut values = Vec::with_capacity(differential.values.len());
    let mut traces = Vec::with_capacity(differential.freqs.len());
    for fi in 0..differential.freqs.len() {
        let sigma = differential.sigma.as_ref().map(|s| &s[fi * no..(fi + 1) * no]);
        let t = smooth_trace(&differential.offsets, differential.trace(fi), sigma, n_modes)?;
        values.extend_from_slice(&t.occupancy);
        traces.push(t);
    }
    let map = OccupancyMap {
        offsets: differential.offsets.clone(),
        freqs: differential.freqs.clone(),
        values,
        sigma: None,
    };
    Ok((map, traces))
}

/// The finite-difference operator of [`crate::dynamics::differential_map`]
/// as a matrix.
pub fn difference_matrix(offsets: &[f64]) -> DMatrix<f64> {
    let n = offsets.len();
    let mut d = DMatrix::zeros(n, n);
    if n < 2 {
        return d;
    }
    let h0 = offsets[1] - offsets[0];
    d[(0, 0)] = -1.0 / h0;
    d[(0, 1)] = 1.0 / h0;
    for i in 1..n - 1 {
        let h = offsets[i + 1] - offsets[i - 1];
        d[(i, i - 1)] = -1.0 / h;
        d[(i, i + 1)] = 1.0 / h;
    }
    let hn = offsets[n - 1] - offsets[n - 2];
    d[(n - 1, n - 2)] = -1.0 / hn;
    d[(n - 1, n - 1)] = 1.0 / hn;
    d
}

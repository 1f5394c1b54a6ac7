//! Spline fit of Γ_r(ε) to occupancy maps and its confidence bands.

use std::cell::RefCell;

use nalgebra::{DMatrix, DVector};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::forward::{knot_band, ForwardModel, GridSpec};
use super::optim::{gauss_newton, GaussNewtonOptions};
use super::smooth::difference_matrix;
use super::{canonical_order, derive_seed, sum_sq_diff, MeasuredSet, Series};
use crate::error::{InferenceError, ParamError};
use crate::qubit::QubitParams;
use crate::rate::RateCurve;
use crate::units::hz_to_per_ns;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitSettings {
    pub n_knots: usize,
    /// Constant rate the optimizer starts from, Hz.
    pub seed_rate_hz: f64,
    pub max_iterations: usize,
    /// Relative misfit decrease below which the fit counts as converged.
    pub f_tol: f64,
    /// Converged once no log-knot can lower M faster than `g_tol·M` per unit.
    pub g_tol: f64,
    /// Box on every knot's rate, Hz. Knots the data cannot see stop here.
    pub min_rate_hz: f64,
    pub max_rate_hz: f64,
    /// Relative forward-difference step on the log-knots.
    pub fd_rel_step: f64,
    /// Largest change of any log-knot per iteration.
    pub max_log_step: f64,
    /// Also fit a rigid shift of the detuning axis.
    pub fit_epsilon_offset: bool,
    /// Largest |shift| (meV) allowed when fitting it.
    pub max_epsilon_offset: f64,
    /// Pass modelled n̄ through the same differencing and smoothing as the
    /// data before comparing, when the series carry their filters.
    pub filter_model: bool,
}

impl Default for FitSettings {
    fn default() -> Self {
        Self {
            n_knots: 12,
            seed_rate_hz: 1.0e4,
            max_iterations: 200,
            f_tol: 1e-9,
            g_tol: 1e-6,
            min_rate_hz: 1e-3,
            max_rate_hz: 1e12,
            fd_rel_step: 1e-4,
            max_log_step: 2.0,
            fit_epsilon_offset: false,
            max_epsilon_offset: 0.1,
            filter_model: true,
        }
    }
}

/// Rate bounds (1/ns) at one knot; `None` marks a direction in which the
/// misfit never reaches the contour within the allowed excursion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KnotBand {
    pub lower: Option<f64>,
    pub upper: Option<f64>,
}

impl KnotBand {
    /// Whether `rate` lies inside, treating open ends as unbounded.
    pub fn contains(&self, rate: f64) -> bool {
        self.lower.is_none_or(|l| rate >= l) && self.upper.is_none_or(|u| rate <= u)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub best_fit: RateCurve,
    pub misfit_min: f64,
    /// Fitted shift of the detuning axis (meV), zero unless enabled.
    pub epsilon_offset: f64,
    /// Whether the model was filtered like the data in the misfit.
    pub filter_model: bool,
    pub confidence_68: Option<Vec<KnotBand>>,
    pub confidence_95: Option<Vec<KnotBand>>,
    /// δM used for the bands.
    pub delta_misfit: Option<f64>,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
    pub gradient_norm: f64,
    /// Misfit after every accepted iteration.
    pub misfit_history: Vec<f64>,
}

struct Problem<'a> {
    grids: Vec<GridSpec>,
    data: Vec<f64>,
    knots: &'a [f64],
    /// Per grid, per trace: the matrix taking modelled n̄ to its smoothed
    /// derivative-and-integral counterpart, minus ½.
    operators: Vec<Option<Vec<DMatrix<f64>>>>,
}

impl Problem<'_> {
    fn new<'a>(series: &[Series], knots: &'a [f64], filter_model: bool) -> Result<Problem<'a>, InferenceError> {
        if series.is_empty() {
            return Err(ParamError::new("data", "no occupancy series").into());
        }
        let order = canonical_order(&series.iter().map(|s| s.schedule).collect::<Vec<_>>());
        let mut grids = Vec::new();
        let mut data = Vec::new();
        let mut operators = Vec::new();
        for &i in &order {
            let s = &series[i];
            s.occupancy.validate_shape()?;
            if s.occupancy.values.iter().any(|v| !v.is_finite()) {
                return Err(ParamError::new("data.values", "must be finite").into());
            }
            if s.occupancy.freqs.len() < 3 {
                return Err(ParamError::new("data.freqs", "need at least three toggle frequencies").into());
            }
            grids.push(s.grid());
            data.extend_from_slice(&s.occupancy.values);
            operators.push(match (&s.filters, filter_model) {
                (Some(f), true) => {
                    if f.len() != s.occupancy.freqs.len() {
                        return Err(InferenceError::GridMismatch(format!(
                            "{} filters for {} traces",
                            f.len(),
                            s.occupancy.freqs.len()
                        )));
                    }
                    let d = difference_matrix(&s.occupancy.offsets);
                    let ops = f
                        .iter()
                        .map(|t| t.matrix(&s.occupancy.offsets).map(|m| m * &d))
                        .collect::<Result<Vec<_>, _>>()?;
                    Some(ops)
                }
                _ => None,
            });
        }
        let reach = grids
            .iter()
            .flat_map(|g| g.offsets.iter().map(|o| o.abs()))
            .fold(0.0, f64::max);
        if knots.last().is_some_and(|&k| k < reach) {
            return Err(ParamError::new(
                "fit.knots",
                format!(
                    "knots end at {} meV but the data reach |ε̄| = {reach} meV",
                    knots.last().unwrap_or(&0.0)
                ),
            )
            .into());
        }
        Ok(Problem {
            grids,
            data,
            knots,
            operators,
        })
    }

    /// Model values as they would appear in the data.
    fn observe(&self, mut values: Vec<f64>) -> Vec<f64> {
        let mut start = 0;
        for (g, ops) in self.grids.iter().zip(&self.operators) {
            let no = g.offsets.len();
            if let Some(ops) = ops {
                for (fi, op) in ops.iter().enumerate() {
                    let a = start + fi * no;
                    let n = DVector::from_column_slice(&values[a..a + no]);
                    let out = op * n;
                    for (v, o) in values[a..a + no].iter_mut().zip(out.iter()) {
                        *v = 0.5 + o;
                    }
                }
            }
            start += g.len();
        }
        values
    }

    fn misfit(&self, model: Vec<f64>) -> f64 {
        sum_sq_diff(&self.observe(model), &self.data)
    }

    fn residuals(&self, model: Vec<f64>) -> Vec<f64> {
        self.observe(model).iter().zip(&self.data).map(|(m, d)| m - d).collect()
    }

    fn curve(&self, logs: &[f64]) -> Result<RateCurve, InferenceError> {
        Ok(RateCurve::new(self.knots.to_vec(), logs.to_vec())?)
    }
}

/// Minimizes the misfit between modelled n̄ and the data over the log-rates
/// at `knots`, starting from a constant rate. Forward differences with step
/// `fd_rel_step·max(|x|, 1)` give the Jacobian of the residuals, hence the
/// gradient; steps are damped Gauss–Newton, accepted only when M decreases.
pub fn fit_rate_curve(
    data: &[Series],
    qubit: &QubitParams,
    knots: &[f64],
    settings: &FitSettings,
) -> Result<FitResult, InferenceError> {
    qubit.validate()?;
    let seed = hz_to_per_ns(settings.seed_rate_hz);
    if !(seed > 0.0 && seed.is_finite()) {
        return Err(ParamError::new("fit.seed_rate_hz", "must be positive").into());
    }
    RateCurve::constant(knots.to_vec(), seed)?;
    let problem = Problem::new(data, knots, settings.filter_model)?;
    let nk = knots.len();

    // the shift changes every waveform, so models are rebuilt per shift
    let models: RefCell<Vec<(f64, ForwardModel)>> = RefCell::new(vec![(0.0, ForwardModel::new(&problem.grids, 0.0)?)]);
    let with_model = |shift: f64, f: &mut dyn FnMut(&ForwardModel) -> Result<Vec<f64>, InferenceError>| {
        let mut ms = models.borrow_mut();
        let pos = match ms.iter().position(|(s, _)| *s == shift) {
            Some(p) => p,
            None => {
                if ms.len() > 3 {
                    ms.remove(1);
                }
                ms.push((shift, ForwardModel::new(&problem.grids, shift)?));
                ms.len() - 1
            }
        };
        f(&ms[pos].1)
    };
    let split = |x: &[f64]| -> (Vec<f64>, f64) {
        let shift = if settings.fit_epsilon_offset { x[nk] } else { 0.0 };
        (x[..nk].to_vec(), shift)
    };
    let cache: RefCell<Option<(Vec<f64>, Vec<f64>)>> = RefCell::new(None);
    let model_values = |x: &[f64]| -> Result<Vec<f64>, InferenceError> {
        if let Some((cx, cv)) = cache.borrow().as_ref() {
            if cx.as_slice() == x {
                return Ok(cv.clone());
            }
        }
        let (logs, shift) = split(x);
        let curve = problem.curve(&logs)?;
        let v = with_model(shift, &mut |m| m.evaluate(&curve, qubit))?;
        *cache.borrow_mut() = Some((x.to_vec(), v.clone()));
        Ok(v)
    };
    let residuals = |x: &[f64]| -> Result<Vec<f64>, InferenceError> { Ok(problem.residuals(model_values(x)?)) };
    let jacobian = |x: &[f64], r: &[f64]| -> Result<DMatrix<f64>, InferenceError> {
        let base = model_values(x)?;
        let (logs, shift) = split(x);
        let mut jac = DMatrix::zeros(r.len(), x.len());
        let mut column = |j: usize, v: Vec<f64>, step: f64| {
            for (k, (a, b)) in problem.residuals(v).iter().zip(r).enumerate() {
                jac[(k, j)] = (a - b) / step;
            }
        };
        for i in 0..nk {
            let h = settings.fd_rel_step * logs[i].abs().max(1.0);
            let mut l = logs.clone();
            l[i] += h;
            let step = l[i] - logs[i];
            let curve = problem.curve(&l)?;
            let band = knot_band(knots, i);
            column(
                i,
                with_model(shift, &mut |m| m.evaluate_band(&curve, qubit, &base, band))?,
                step,
            );
        }
        if settings.fit_epsilon_offset {
            let h = settings.fd_rel_step * shift.abs().max(1.0) * 1e-1;
            let curve = problem.curve(&logs)?;
            column(nk, with_model(shift + h, &mut |m| m.evaluate(&curve, qubit))?, h);
        }
        Ok(jac)
    };

    let mut x0 = vec![seed.ln(); nk];
    if settings.fit_epsilon_offset {
        x0.push(0.0);
    }
    let (lo, hi) = (hz_to_per_ns(settings.min_rate_hz), hz_to_per_ns(settings.max_rate_hz));
    if !(lo > 0.0 && lo < seed && seed < hi) {
        return Err(ParamError::new("fit.min_rate_hz", "need 0 < min_rate_hz < seed_rate_hz < max_rate_hz").into());
    }
    let mut lower = vec![lo.ln(); nk];
    let mut upper = vec![hi.ln(); nk];
    if settings.fit_epsilon_offset {
        lower.push(-settings.max_epsilon_offset);
        upper.push(settings.max_epsilon_offset);
    }
    let opts = GaussNewtonOptions {
        max_iterations: settings.max_iterations,
        f_tol: settings.f_tol,
        g_tol: settings.g_tol,
        max_step: settings.max_log_step,
        ..Default::default()
    };
    let m = gauss_newton(&x0, &lower, &upper, residuals, jacobian, &opts)?;
    if !m.converged {
        return Err(InferenceError::NotConverged {
            iterations: m.iterations,
            objective: m.f,
            gradient_norm: m.gradient_norm,
            best: m.x,
        });
    }
    let (logs, shift) = split(&m.x);
    Ok(FitResult {
        best_fit: problem.curve(&logs)?,
        misfit_min: m.f,
        epsilon_offset: shift,
        filter_model: settings.filter_model,
        confidence_68: None,
        confidence_95: None,
        delta_misfit: None,
        iterations: m.iterations,
        evaluations: m.evaluations,
        converged: true,
        gradient_norm: m.gradient_norm,
        misfit_history: m.history,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ConfidenceSettings {
    /// Noise realizations used to estimate δM.
    pub n_realizations: usize,
    pub seed: u64,
    /// Modes used when smoothing each realization; should match the data.
    pub n_modes: usize,
    /// Largest log-excursion searched before a bound is declared open.
    pub max_log_excursion: f64,
    /// Bisection stops when the bracket is narrower than this (log units).
    pub log_tol: f64,
    /// First trial excursion; doubled until the contour is crossed.
    pub initial_step: f64,
    /// Differential noise (1/meV) overriding both the measured sigma and
    /// the residual estimate.
    pub noise_sigma: Option<f64>,
}

impl Default for ConfidenceSettings {
    fn default() -> Self {
        Self {
            n_realizations: 64,
            seed: 0,
            n_modes: 20,
            max_log_excursion: 1.0e3f64.ln(),
            log_tol: 1e-3,
            initial_step: 0.05,
            noise_sigma: None,
        }
    }
}

/// δM: the sample standard deviation, over synthetic noise realizations, of
/// the misfit between the best-fit model and smoothed noisy copies of its own
/// differential. Per-point noise is the explicit setting, else the measured
/// sigma, else the smoothing residual estimate of that trace. Realizations go through the
/// same per-trace smoothers as the data.
pub fn estimate_delta_misfit(
    fit: &FitResult,
    measured: &[MeasuredSet],
    qubit: &QubitParams,
    settings: &ConfidenceSettings,
) -> Result<f64, InferenceError> {
    if settings.n_realizations < 2 {
        return Err(ParamError::new("confidence.n_realizations", "need at least two").into());
    }
    let order = canonical_order(&measured.iter().map(|m| m.schedule).collect::<Vec<_>>());
    // per trace: smoother, noiseless model differential, reference curve, noise
    let mut traces: Vec<(DMatrix<f64>, DVector<f64>, DVector<f64>, Vec<f64>)> = Vec::new();
    for &i in &order {
        let m = &measured[i];
        let (series, smoothed) = m.smooth(settings.n_modes)?;
        let grid = series.grid();
        let fm = ForwardModel::new(std::slice::from_ref(&grid), fit.epsilon_offset)?;
        let model = fm.evaluate(&fit.best_fit, qubit)?;
        let no = grid.offsets.len();
        let d = difference_matrix(&grid.offsets);
        for (fi, st) in smoothed.iter().enumerate() {
            let f = st.filter.matrix(&grid.offsets)?;
            let n = DVector::from_column_slice(&model[fi * no..(fi + 1) * no]);
            let diff = &d * &n;
            let reference = if fit.filter_model {
                (&f * &diff).add_scalar(0.5)
            } else {
                n
            };
            let noise = match (settings.noise_sigma, &m.differential.sigma) {
                (Some(s), _) => vec![s; no],
                (None, Some(s)) => s[fi * no..(fi + 1) * no].to_vec(),
                (None, None) => vec![st.noise_estimate; no],
            };
            traces.push((f, diff, reference, noise));
        }
    }

    let mut samples = Vec::with_capacity(settings.n_realizations);
    for r in 0..settings.n_realizations {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(settings.seed, r as u64));
        let mut total = 0.0;
        for (f, diff, reference, noise) in &traces {
            let mut noisy = diff.clone();
            for (v, s) in noisy.iter_mut().zip(noise) {
                if *s > 0.0 {
                    *v += Normal::new(0.0, *s)
                        .map_err(|e| ParamError::new("noise", e.to_string()))?
                        .sample(&mut rng);
                }
            }
            let smoothed = (f * noisy).add_scalar(0.5);
            total += (smoothed - reference).norm_squared();
        }
        samples.push(total);
    }
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok(var.sqrt())
}

/// For each misfit increment in `increments` (ascending), the per-knot band
/// where M(x̂ ± t·e_i) stays below M_min + increment, found by doubling the
/// excursion and then bisecting.
pub fn profile_bands(
    fit: &FitResult,
    series: &[Series],
    qubit: &QubitParams,
    increments: &[f64],
    settings: &ConfidenceSettings,
) -> Result<Vec<Vec<KnotBand>>, InferenceError> {
    if increments.windows(2).any(|w| w[1] < w[0]) || increments.iter().any(|d| !(*d >= 0.0)) {
        return Err(ParamError::new("confidence.levels", "increments must be non-negative and ascending").into());
    }
    let knots = fit.best_fit.knots();
    let best = fit.best_fit.log_values();
    let problem = Problem::new(series, knots, fit.filter_model)?;
    let fm = ForwardModel::new(&problem.grids, fit.epsilon_offset)?;
    let base = fm.evaluate(&fit.best_fit, qubit)?;
    let m_min = problem.misfit(base.clone());
    let mut out = vec![Vec::with_capacity(knots.len()); increments.len()];

    for i in 0..knots.len() {
        let band = knot_band(knots, i);
        let mut bounds = vec![(None, None); increments.len()];
        for dir in [-1.0, 1.0] {
            let eval = |t: f64| -> Result<f64, InferenceError> {
                let mut l = best.to_vec();
                l[i] += dir * t;
                let c = problem.curve(&l)?;
                Ok(problem.misfit(fm.evaluate_band(&c, qubit, &base, band)?))
            };
            // (t, M) samples along the ray, starting at the optimum
            let mut ray = vec![(0.0, m_min)];
            let mut t = 0.0;
            let top = m_min + increments.last().copied().unwrap_or(0.0);
            while ray.last().is_some_and(|p| p.1 <= top) && t < settings.max_log_excursion {
                t = if t == 0.0 {
                    settings.initial_step
                } else {
                    (2.0 * t).min(settings.max_log_excursion)
                };
                ray.push((t, eval(t)?));
            }
            for (k, inc) in increments.iter().enumerate() {
                let level = m_min + inc;
                let bound = if *inc == 0.0 {
                    Some(0.0)
                } else {
                    match ray.iter().position(|p| p.1 > level) {
                        None => None,
                        Some(j) => {
                            let (mut lo, mut hi) = (ray[j - 1].0, ray[j].0);
                            while hi - lo > settings.log_tol {
                                let mid = 0.5 * (lo + hi);
                                if eval(mid)? > level {
                                    hi = mid;
                                } else {
                                    lo = mid;
                                }
                            }
                            Some(0.5 * (lo + hi))
                        }
                    }
                };
                let rate = bound.map(|t| (best[i] + dir * t).exp());
                if dir < 0.0 {
                    bounds[k].0 = rate;
                } else {
                    bounds[k].1 = rate;
                }
            }
        }
        for (k, (lower, upper)) in bounds.into_iter().enumerate() {
            out[k].push(KnotBand { lower, upper });
        }
    }
    Ok(out)
}

/// Adds 68% and 95% bands at M_min + δM and M_min + 4δM.
pub fn confidence_regions(
    fit: FitResult,
    measured: &[MeasuredSet],
    qubit: &QubitParams,
    settings: &ConfidenceSettings,
) -> Result<FitResult, InferenceError> {
    if !fit.converged {
        return Err(ParamError::new("fit", "confidence regions need a converged fit").into());
    }
    let dm = estimate_delta_misfit(&fit, measured, qubit, settings)?;
    let series = measured
        .iter()
        .map(|m| m.smooth(settings.n_modes).map(|s| s.0))
        .collect::<Result<Vec<_>, _>>()?;
    let mut bands = profile_bands(&fit, &series, qubit, &[dm, 4.0 * dm], settings)?;
    let b95 = bands.pop();
    let b68 = bands.pop();
    Ok(FitResult {
        confidence_68: b68,
        confidence_95: b95,
        delta_misfit: Some(dm),
        ..fit
    })
}

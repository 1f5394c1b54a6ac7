//! Fits of model parameters: phenomenological J to a rate curve, dot
//! geometry to occupancy data, and electron temperature to a static trace.

use serde::{Deserialize, Serialize};

use super::forward::{ForwardModel, GridSpec};
use super::optim::{brent_minimize, levenberg_marquardt, nelder_mead, LmOptions, NelderMeadOptions};
use super::{canonical_order, max_abs_detuning, sum_sq_diff, Series};
use crate::dotgeom::{tunnel_coupling, DotGeometry};
use crate::error::{InferenceError, ParamError};
use crate::qubit::{equilibrium_occupancy_l, QubitParams};
use crate::rate::{PhenomRate, RateCurve, RelaxationRate};
use crate::spectral::{Material, MicroSpectral, PhenomSpectral, SpectralModel};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhenomFit {
    pub model: PhenomSpectral,
    /// RMS of ln Γ_model − ln Γ_target over the knots.
    pub rms_log_residual: f64,
    pub iterations: usize,
}

/// Least squares in log-rate over the knots of `target`, in the variables
/// (s, ln α, ln ω_c), by Levenberg–Marquardt from `init`.
pub fn fit_phenom_params(
    target: &RateCurve,
    qubit: &QubitParams,
    init: &PhenomSpectral,
) -> Result<PhenomFit, InferenceError> {
    qubit.validate()?;
    init.validate()?;
    let knots = target.knots();
    let logs = target.log_values();
    let residuals = |p: &[f64]| -> Result<Vec<f64>, InferenceError> {
        let Ok(model) = PhenomSpectral::new(p[0], p[1].exp(), p[2].exp()) else {
            return Ok(vec![1e3; knots.len()]);
        };
        let rate = PhenomRate { qubit: *qubit, model };
        Ok(knots
            .iter()
            .zip(logs)
            .map(|(&e, &l)| {
                let r = rate.rate(e).ln();
                if r.is_finite() {
                    r - l
                } else {
                    1e3
                }
            })
            .collect())
    };
    let x0 = [init.s_exponent, init.coupling_alpha.ln(), init.omega_c.ln()];
    let m = levenberg_marquardt(&x0, residuals, &LmOptions::default())?;
    if !m.converged {
        return Err(InferenceError::NotConverged {
            iterations: m.iterations,
            objective: m.f,
            gradient_norm: m.gradient_norm,
            best: m.x,
        });
    }
    Ok(PhenomFit {
        model: PhenomSpectral::new(m.x[0], m.x[1].exp(), m.x[2].exp())?,
        rms_log_residual: (2.0 * m.f / knots.len() as f64).sqrt(),
        iterations: m.iterations,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MicroFitSettings {
    /// Knots of the tabulated microscopic rate used in the forward model.
    pub n_rate_knots: usize,
    pub max_evaluations: usize,
    /// Convergence tolerance on ln E₀ and ln L.
    pub x_tol: f64,
    /// Initial simplex size in ln E₀ and ln L.
    pub initial_step: f64,
}

impl Default for MicroFitSettings {
    fn default() -> Self {
        Self {
            n_rate_knots: 48,
            max_evaluations: 200,
            x_tol: 1e-4,
            initial_step: 0.08,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MicroFit {
    pub e0: f64,
    pub half_separation: f64,
    /// Δ(ε = 0) in meV at the fitted geometry.
    pub implied_delta: f64,
    pub misfit: f64,
    pub evaluations: usize,
}

/// Γ_r(ε) of the acoustic-phonon model for a geometry, tabulated on `knots`,
/// together with the qubit whose Δ the geometry implies.
pub fn micro_rate_curve(
    geometry: &DotGeometry,
    material: &Material,
    temperature: f64,
    knots: Vec<f64>,
) -> Result<(RateCurve, QubitParams), InferenceError> {
    let delta = tunnel_coupling(geometry, 0.0)?;
    let qubit = QubitParams::new(delta, temperature)?;
    let model = SpectralModel::Microscopic(MicroSpectral::new(*geometry, *material)?);
    Ok((RateCurve::from_model(knots, &qubit, &model)?, qubit))
}

/// Two-parameter misfit minimization over (E₀, L) with Δ and Γ_r rebuilt
/// from the geometry at every iterate. Nelder–Mead in (ln E₀, ln L).
pub fn fit_micro_params(
    data: &[Series],
    temperature: f64,
    material: &Material,
    ez: f64,
    init: (f64, f64),
    settings: &MicroFitSettings,
) -> Result<MicroFit, InferenceError> {
    material.validate()?;
    if data.is_empty() {
        return Err(ParamError::new("data", "no occupancy series").into());
    }
    let order = canonical_order(&data.iter().map(|s| s.schedule).collect::<Vec<_>>());
    let grids: Vec<GridSpec> = order.iter().map(|&i| data[i].grid()).collect();
    let values: Vec<f64> = order
        .iter()
        .flat_map(|&i| data[i].occupancy.values.iter().copied())
        .collect();
    let fm = ForwardModel::new(&grids, 0.0)?;
    let knots = RateCurve::uniform_knots(settings.n_rate_knots.max(2), max_abs_detuning(&grids));

    let objective = |x: &[f64]| -> Result<f64, InferenceError> {
        let geometry = DotGeometry::new(x[0].exp(), ez, x[1].exp(), 0.0)?;
        let (rate, qubit) = micro_rate_curve(&geometry, material, temperature, knots.clone())?;
        Ok(sum_sq_diff(&fm.evaluate(&rate, &qubit)?, &values))
    };
    let x0 = [init.0.ln(), init.1.ln()];
    // fails loudly on an invalid starting geometry
    objective(&x0)?;
    let bounded = |x: &[f64]| -> Result<f64, InferenceError> {
        match objective(x) {
            Err(InferenceError::Param(_)) | Err(InferenceError::Geometry(_)) => Ok(f64::INFINITY),
            other => other,
        }
    };
    let opts = NelderMeadOptions {
        max_evaluations: settings.max_evaluations,
        x_tol: settings.x_tol,
        f_tol: 1e-6,
        initial_step: settings.initial_step,
        ..Default::default()
    };
    let m = nelder_mead(&x0, bounded, &opts)?;
    if !m.converged {
        return Err(InferenceError::NotConverged {
            iterations: m.iterations,
            objective: m.f,
            gradient_norm: m.gradient_norm,
            best: m.x,
        });
    }
    let geometry = DotGeometry::new(m.x[0].exp(), ez, m.x[1].exp(), 0.0)?;
    Ok(MicroFit {
        e0: geometry.e0,
        half_separation: geometry.half_separation,
        implied_delta: tunnel_coupling(&geometry, 0.0)?,
        misfit: m.f,
        evaluations: m.evaluations,
    })
}

/// The objective [`fit_micro_params`] minimizes, at one (E₀, L).
pub fn micro_misfit(
    data: &[Series],
    temperature: f64,
    material: &Material,
    ez: f64,
    e0: f64,
    half_separation: f64,
    n_rate_knots: usize,
) -> Result<f64, InferenceError> {
    material.validate()?;
    let order = canonical_order(&data.iter().map(|s| s.schedule).collect::<Vec<_>>());
    let grids: Vec<GridSpec> = order.iter().map(|&i| data[i].grid()).collect();
    let values: Vec<f64> = order
        .iter()
        .flat_map(|&i| data[i].occupancy.values.iter().copied())
        .collect();
    let knots = RateCurve::uniform_knots(n_rate_knots.max(2), max_abs_detuning(&grids));
    let geometry = DotGeometry::new(e0, ez, half_separation, 0.0)?;
    let (rate, qubit) = micro_rate_curve(&geometry, material, temperature, knots)?;
    Ok(sum_sq_diff(
        &ForwardModel::new(&grids, 0.0)?.evaluate(&rate, &qubit)?,
        &values,
    ))
}

/// Which well the trace measures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    /// n rises with ε (left-well occupancy).
    Left,
    /// n falls with ε (right-well occupancy).
    Right,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TemperatureFit {
    pub temperature: f64,
    pub orientation: Orientation,
    pub rms_residual: f64,
}

/// 1-D least squares of the equilibrium occupancy formula over T, trying
/// both orientations of the trace.
pub fn fit_electron_temperature(offsets: &[f64], trace: &[f64], delta: f64) -> Result<TemperatureFit, InferenceError> {
    if offsets.len() != trace.len() || offsets.len() < 3 {
        return Err(ParamError::new("trace", "need at least three (ε, n) pairs of equal length").into());
    }
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(ParamError::new("qubit.delta", "must be positive and finite").into());
    }
    let (lo, hi) = offsets
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &e| (a.min(e), b.max(e)));
    if !(lo < 0.0 && hi > 0.0) {
        return Err(ParamError::new("trace", "must span the transition at ε = 0").into());
    }
    let sse = |orientation: Orientation, ln_t: f64| -> f64 {
        let t = ln_t.exp();
        offsets
            .iter()
            .zip(trace)
            .map(|(&e, &n)| {
                let e = if orientation == Orientation::Left { e } else { -e };
                (equilibrium_occupancy_l(e, delta, t) - n).powi(2)
            })
            .sum()
    };
    let (ln_lo, ln_hi) = (1e-3f64.ln(), 1e2f64.ln());
    let scan = 96;
    let mut best: Option<TemperatureFit> = None;
    for orientation in [Orientation::Left, Orientation::Right] {
        let grid: Vec<f64> = (0..=scan)
            .map(|i| ln_lo + (ln_hi - ln_lo) * i as f64 / scan as f64)
            .collect();
        let vals: Vec<f64> = grid.iter().map(|&u| sse(orientation, u)).collect();
        let k = (0..vals.len())
            .min_by(|&a, &b| vals[a].total_cmp(&vals[b]))
            .unwrap_or(0);
        let a = grid[k.saturating_sub(1)];
        let b = grid[(k + 1).min(scan)];
        let m = brent_minimize(a, b, |u| Ok::<_, InferenceError>(sse(orientation, u)), 1e-12, 200)?;
        if !m.converged {
            return Err(InferenceError::NotConverged {
                iterations: m.iterations,
                objective: m.f,
                gradient_norm: 0.0,
                best: m.x,
            });
        }
        let fit = TemperatureFit {
            temperature: m.x[0].exp(),
            orientation,
            rms_residual: (m.f / trace.len() as f64).sqrt(),
        };
        if best.is_none_or(|b| fit.rms_residual < b.rms_residual) {
            best = Some(fit);
        }
    }
    best.ok_or_else(|| ParamError::new("trace", "empty").into())
}

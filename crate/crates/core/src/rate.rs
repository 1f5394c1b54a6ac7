//! Relaxation-rate functions Γ_r(ε) consumed by the dynamics engine.

use serde::{Deserialize, Serialize};

use crate::error::{ParamError, SpectralError};
use crate::interp::MonotoneCubic;
use crate::qubit::QubitParams;
use crate::spectral::{j_phenom, rate_from_j, relaxation_rate, PhenomSpectral, SpectralModel};
use crate::units::HBAR;

/// Anything that yields Γ_r (1/ns) at a detuning ε (meV).
pub trait RelaxationRate: Sync {
    fn rate(&self, epsilon: f64) -> f64;
}

impl<F: Fn(f64) -> f64 + Sync> RelaxationRate for F {
    fn rate(&self, epsilon: f64) -> f64 {
        self(epsilon)
    }
}

/// Γ_r independent of detuning.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantRate(pub f64);

impl RelaxationRate for ConstantRate {
    fn rate(&self, _epsilon: f64) -> f64 {
        self.0
    }
}

/// Closed-form Γ_r from the phenomenological spectral density.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhenomRate {
    pub qubit: QubitParams,
    pub model: PhenomSpectral,
}

impl RelaxationRate for PhenomRate {
    fn rate(&self, epsilon: f64) -> f64 {
        let gap = epsilon.hypot(self.qubit.delta);
        rate_from_j(gap, j_phenom(gap / HBAR, &self.model), &self.qubit)
    }
}

/// Γ_r(ε) = exp(spline(|ε|)): a monotone cubic through log-rates at knots in
/// |ε|, extended linearly in log-rate past the end knots. Strictly positive
/// and even in ε by construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RateCurveData", into = "RateCurveData")]
pub struct RateCurve {
    curve: MonotoneCubic,
}

#[derive(Serialize, Deserialize)]
struct RateCurveData {
    knots: Vec<f64>,
    log_values: Vec<f64>,
}

impl TryFrom<RateCurveData> for RateCurve {
    type Error = ParamError;
    fn try_from(d: RateCurveData) -> Result<Self, ParamError> {
        RateCurve::new(d.knots, d.log_values)
    }
}

impl From<RateCurve> for RateCurveData {
    fn from(r: RateCurve) -> Self {
        RateCurveData {
            knots: r.knots().to_vec(),
            log_values: r.log_values().to_vec(),
        }
    }
}

impl RateCurve {
    /// `knots` are |ε| values in meV (non-negative, strictly increasing, at
    /// least two); `log_values` are ln Γ_r with Γ_r in 1/ns.
    pub fn new(knots: Vec<f64>, log_values: Vec<f64>) -> Result<Self, ParamError> {
        validate_knots(&knots)?;
        if log_values.len() != knots.len() {
            return Err(ParamError::new(
                "rate.log_values",
                format!("{} values for {} knots", log_values.len(), knots.len()),
            ));
        }
        if log_values.iter().any(|v| !v.is_finite()) {
            return Err(ParamError::new("rate.log_values", "must be finite"));
        }
        Ok(Self {
            curve: MonotoneCubic::new(knots, log_values),
        })
    }

    pub fn constant(knots: Vec<f64>, rate: f64) -> Result<Self, ParamError> {
        if !(rate > 0.0 && rate.is_finite()) {
            return Err(ParamError::new("rate", "must be positive"));
        }
        let n = knots.len();
        Self::new(knots, vec![rate.ln(); n])
    }

    pub fn from_fn(knots: Vec<f64>, f: impl Fn(f64) -> f64) -> Result<Self, ParamError> {
        let logs = knots.iter().map(|&e| f(e).ln()).collect();
        Self::new(knots, logs)
    }

    /// Γ_r(ε) of a spectral model, sampled at the knots.
    pub fn from_model(knots: Vec<f64>, qubit: &QubitParams, model: &SpectralModel) -> Result<Self, SpectralError> {
        let logs = knots
            .iter()
            .map(|&e| relaxation_rate(e, qubit, model).map(f64::ln))
            .collect::<Result<Vec<_>, _>>()?;
        for v in &logs {
            if !v.is_finite() {
                return Err(ParamError::new("rate", "model rate is zero or non-finite at a knot").into());
            }
        }
        Ok(Self::new(knots, logs)?)
    }

    /// n knots uniform on [0, max_abs_detuning].
    pub fn uniform_knots(n: usize, max_abs_detuning: f64) -> Vec<f64> {
        (0..n).map(|i| max_abs_detuning * i as f64 / (n - 1) as f64).collect()
    }

    pub fn knots(&self) -> &[f64] {
        self.curve.xs()
    }

    pub fn log_values(&self) -> &[f64] {
        self.curve.ys()
    }

    /// Copy with new log-values on the same knots.
    pub fn with_log_values(&self, log_values: Vec<f64>) -> Result<Self, ParamError> {
        Self::new(self.knots().to_vec(), log_values)
    }

    pub fn eval(&self, epsilon: f64) -> f64 {
        self.curve.eval(epsilon.abs()).exp()
    }

    /// Γ_r as a function of the gap ħΩ rather than ε, for the given Δ.
    pub fn eval_at_gap(&self, gap: f64, delta: f64) -> f64 {
        let eps = (gap * gap - delta * delta).max(0.0).sqrt();
        self.eval(eps)
    }
}

impl RelaxationRate for RateCurve {
    fn rate(&self, epsilon: f64) -> f64 {
        self.eval(epsilon)
    }
}

fn validate_knots(knots: &[f64]) -> Result<(), ParamError> {
    if knots.len() < 2 {
        return Err(ParamError::new("rate.knots", "need at least two knots"));
    }
    if knots.iter().any(|k| !(k.is_finite() && *k >= 0.0)) {
        return Err(ParamError::new(
            "rate.knots",
            "knots are |ε| values and must be finite and non-negative",
        ));
    }
    if knots.windows(2).any(|w| w[1] <= w[0]) {
        return Err(ParamError::new("rate.knots", "must be strictly increasing"));
    }
    Ok(())
}

//! Two-level-system fundamentals for the charge qubit H = −(εσ_z + Δσ_x)/2.
//!
//! Eigenstates are |E₀⟩ = cos θ |L⟩ + sin θ |R⟩ and |E₁⟩ = sin θ |L⟩ − cos θ |R⟩
//! with θ = ½·atan2(Δ, ε) ∈ [0, π/2]. The ground state tends to |L⟩ for ε → +∞.

use serde::{Deserialize, Serialize};

use crate::error::ParamError;
use crate::units::{E_CHARGE, HBAR, KB};

/// State-independent qubit parameters: tunnel coupling Δ (meV) and bath
/// temperature T (K).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QubitParams {
    pub delta: f64,
    pub temperature: f64,
}

impl QubitParams {
    pub fn new(delta: f64, temperature: f64) -> Result<Self, ParamError> {
        let q = Self { delta, temperature };
        q.validate()?;
        Ok(q)
    }

    pub fn validate(&self) -> Result<(), ParamError> {
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return Err(ParamError::new("qubit.delta", "must be positive and finite"));
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(ParamError::new("qubit.temperature", "must be positive and finite"));
        }
        Ok(())
    }

    /// Inverse temperature β = 1/k_B T in 1/meV.
    pub fn beta(&self) -> f64 {
        1.0 / (KB * self.temperature)
    }

    pub fn geometry(&self, epsilon: f64) -> EigenGeometry {
        EigenGeometry {
            gap: energy_gap(epsilon, self.delta),
            theta: mixing_angle(epsilon, self.delta),
        }
    }
}

/// Energy gap and mixing angle at one detuning.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EigenGeometry {
    pub gap: f64,
    pub theta: f64,
}

/// ħΩ = √(ε² + Δ²).
#[inline]
pub fn energy_gap(epsilon: f64, delta: f64) -> f64 {
    epsilon.hypot(delta)
}

/// θ = ½·atan2(Δ, ε), continuous across ε = 0.
#[inline]
pub fn mixing_angle(epsilon: f64, delta: f64) -> f64 {
    0.5 * delta.atan2(epsilon)
}

/// μ(ε₁, ε₀) = |⟨E₀(ε₁)|E₀(ε₀)⟩|² = cos²(θ₁ − θ₀).
pub fn ground_overlap(epsilon_from: f64, epsilon_to: f64, delta: f64) -> f64 {
    1.0 - ground_leakage(epsilon_from, epsilon_to, delta)
}

/// 1 − μ = sin²(θ₁ − θ₀), computed without atan2 and without the
/// cancellation of 1 − cos² for nearby detunings.
pub fn ground_leakage(epsilon_from: f64, epsilon_to: f64, delta: f64) -> f64 {
    let g0 = energy_gap(epsilon_from, delta);
    let g1 = energy_gap(epsilon_to, delta);
    // φ = 2θ₁ − 2θ₀; cos 2θ = ε/ħΩ, sin 2θ = Δ/ħΩ.
    let cos_phi = (epsilon_from * epsilon_to + delta * delta) / (g0 * g1);
    let sin_phi = delta * (epsilon_from - epsilon_to) / (g0 * g1);
    let cos_phi = cos_phi.clamp(-1.0, 1.0);
    if cos_phi >= 0.0 {
        // (1 − cos φ)/2 = sin²φ / (2(1 + cos φ))
        sin_phi * sin_phi / (2.0 * (1.0 + cos_phi))
    } else {
        0.5 * (1.0 - cos_phi)
    }
}

/// Equilibrium probability of |R⟩: P_R = ½[1 − (ε/ħΩ)·tanh(ħΩ/2k_BT)].
pub fn equilibrium_occupancy_r(epsilon: f64, delta: f64, temperature: f64) -> f64 {
    let gap = energy_gap(epsilon, delta);
    0.5 * (1.0 - epsilon / gap * (gap / (2.0 * KB * temperature)).tanh())
}

/// Equilibrium probability of |L⟩, 1 − P_R, written so that ε ↔ −ε
/// antisymmetry holds to rounding.
pub fn equilibrium_occupancy_l(epsilon: f64, delta: f64, temperature: f64) -> f64 {
    equilibrium_occupancy_r(-epsilon, delta, temperature)
}

/// Thermal ground-state population ρ₀₀ = (1 + e^{−βħΩ})⁻¹.
pub fn equilibrium_ground_population(epsilon: f64, delta: f64, temperature: f64) -> f64 {
    let x = energy_gap(epsilon, delta) / (KB * temperature);
    1.0 / (1.0 + (-x).exp())
}

/// Longest ramp time τ (ns) that still counts as diabatic for a toggle of
/// amplitude δε: τ_max = 2ħδε/(πΔ²).
pub fn diabaticity_threshold(toggle_amplitude: f64, delta: f64) -> f64 {
    2.0 * HBAR * toggle_amplitude / (std::f64::consts::PI * delta * delta)
}

/// Whether a ramp of duration `ramp_time` (ns) is diabatic.
pub fn is_diabatic(ramp_time: f64, toggle_amplitude: f64, delta: f64) -> bool {
    ramp_time < diabaticity_threshold(toggle_amplitude, delta)
}

/// Charge-sensor back-action rate γ = (√I₁ − √I₂)²/(2πe), currents in A,
/// result in Hz.
pub fn backaction_rate(current_1: f64, current_2: f64) -> f64 {
    let d = current_1.sqrt() - current_2.sqrt();
    d * d / (2.0 * std::f64::consts::PI * E_CHARGE)
}

/// Left-well charge expectation for a given ground population:
/// n_L = ½(1 − ε/ħΩ) + (ε/ħΩ)·ρ₀₀.
#[inline]
pub fn left_occupancy(epsilon: f64, delta: f64, rho00: f64) -> f64 {
    let c = epsilon / energy_gap(epsilon, delta);
    0.5 * (1.0 - c) + c * rho00
}

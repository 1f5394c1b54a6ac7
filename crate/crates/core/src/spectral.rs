//! Bath spectral densities J(ω) and the Born–Markov relaxation rate.
//!
//! J carries units of meV²·ns so that Γ_r = (2π/ħ²)(Δ/ħω)² J(ω) coth(βħω/2)
//! comes out in 1/ns.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::dotgeom::DotGeometry;
use crate::error::{ParamError, SpectralError};
use crate::interp::MonotoneCubic;
use crate::quad::{gauss_legendre, integrate, QuadOptions};
use crate::qubit::{energy_gap, QubitParams};
use crate::special::one_minus_j0;
use crate::units::{HBAR, KG_PER_M3, MEV_PER_EV};

/// J_ph(ω) = αħ²ω(ω/ω_c)^{s−1} exp(−ω²/2ω_c²).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhenomSpectral {
    pub s_exponent: f64,
    pub coupling_alpha: f64,
    /// ω_c in rad/ns.
    pub omega_c: f64,
}

impl PhenomSpectral {
    pub fn new(s_exponent: f64, coupling_alpha: f64, omega_c: f64) -> Result<Self, ParamError> {
        let p = Self {
            s_exponent,
            coupling_alpha,
            omega_c,
        };
        p.validate()?;
        Ok(p)
    }

    /// Same as [`PhenomSpectral::new`] with the cutoff given as ħω_c in meV.
    pub fn from_cutoff_energy(s_exponent: f64, coupling_alpha: f64, cutoff_energy: f64) -> Result<Self, ParamError> {
        Self::new(s_exponent, coupling_alpha, cutoff_energy / HBAR)
    }

    /// ħω_c in meV.
    pub fn cutoff_energy(&self) -> f64 {
        self.omega_c * HBAR
    }

    pub fn validate(&self) -> Result<(), ParamError> {
        if !(self.s_exponent >= 1.0 && self.s_exponent.is_finite()) {
            return Err(ParamError::new("spectral.s_exponent", "must be at least 1"));
        }
        if !(self.coupling_alpha > 0.0 && self.coupling_alpha.is_finite()) {
            return Err(ParamError::new("spectral.coupling_alpha", "must be positive"));
        }
        if !(self.omega_c > 0.0 && self.omega_c.is_finite()) {
            return Err(ParamError::new("spectral.omega_c", "must be positive"));
        }
        Ok(())
    }
}

/// Deformation-potential and elastic constants, in the units they are
/// usually quoted in (eV, kg/m³, m/s).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Material {
    pub xi_d: f64,
    pub xi_u: f64,
    pub mass_density: f64,
    pub c_long: f64,
    pub c_trans: f64,
}

impl Material {
    pub fn silicon() -> Self {
        Self {
            xi_d: -10.7,
            xi_u: 9.29,
            mass_density: 2.33e3,
            c_long: 9.0e3,
            c_trans: 5.41e3,
        }
    }

    pub fn validate(&self) -> Result<(), ParamError> {
        for (v, name) in [
            (self.mass_density, "mass_density"),
            (self.c_long, "c_long"),
            (self.c_trans, "c_trans"),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(ParamError::new(format!("material.{name}"), "must be positive"));
            }
        }
        if !self.xi_d.is_finite() || !self.xi_u.is_finite() {
            return Err(ParamError::new("material.xi", "deformation potentials must be finite"));
        }
        Ok(())
    }
}

impl Default for Material {
    fn default() -> Self {
        Self::silicon()
    }
}

/// Acoustic-phonon spectral density of the double dot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MicroSpectral {
    pub geometry: DotGeometry,
    pub material: Material,
    #[serde(default = "default_quadrature_tol")]
    pub quadrature_tol: f64,
}

fn default_quadrature_tol() -> f64 {
    1e-8
}

impl MicroSpectral {
    pub fn new(geometry: DotGeometry, material: Material) -> Result<Self, ParamError> {
        let m = Self {
            geometry,
            material,
            quadrature_tol: default_quadrature_tol(),
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<(), ParamError> {
        self.geometry.validate()?;
        self.material.validate()?;
        if !(self.quadrature_tol > 0.0 && self.quadrature_tol <= 1e-4) {
            return Err(ParamError::new("spectral.quadrature_tol", "must lie in (0, 1e-4]"));
        }
        Ok(())
    }
}

/// Which acoustic branch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    Longitudinal,
    Transverse,
}

/// Branch constants in internal units: Ξ in meV, ρ in meV·ns²/nm⁵, c in nm/ns.
struct BranchConsts {
    c: f64,
    rho: f64,
    xi_d: f64,
    xi_u: f64,
    l: f64,
    a: f64,
    b: f64,
}

impl BranchConsts {
    fn new(model: &MicroSpectral, branch: Branch) -> Self {
        let mat = &model.material;
        let geo = &model.geometry;
        Self {
            c: match branch {
                Branch::Longitudinal => mat.c_long,
                Branch::Transverse => mat.c_trans,
            },
            rho: mat.mass_density * KG_PER_M3,
            xi_d: mat.xi_d * MEV_PER_EV,
            xi_u: mat.xi_u * MEV_PER_EV,
            l: geo.half_separation,
            a: geo.dot_radius(),
            b: geo.thickness(),
        }
    }

    /// ħω³/(8π²ρc⁵).
    fn prefactor(&self, omega: f64) -> f64 {
        HBAR * omega.powi(3) / (8.0 * PI * PI * self.rho * self.c.powi(5))
    }

    /// Angular coupling as a function of v = cos θ.
    fn coupling(&self, branch: Branch, v: f64) -> f64 {
        let v2 = v * v;
        match branch {
            Branch::Longitudinal => (self.xi_d + self.xi_u * v2).powi(2),
            Branch::Transverse => self.xi_u * self.xi_u * v2 * (1.0 - v2),
        }
    }
}

fn check_omega(omega: f64) -> Result<(), SpectralError> {
    if !(omega >= 0.0 && omega.is_finite()) {
        return Err(ParamError::new("omega", "must be finite and non-negative").into());
    }
    Ok(())
}

fn j_branch(omega: f64, model: &MicroSpectral, branch: Branch) -> Result<f64, SpectralError> {
    check_omega(omega)?;
    if omega == 0.0 {
        return Ok(0.0);
    }
    let k = BranchConsts::new(model, branch);
    // q = ω/c; ω/ω_{·,X} = qX
    let q = omega / k.c;
    let ql = q * k.l;
    let qa2 = (q * k.a).powi(2);
    let qb2 = (q * k.b).powi(2);
    let integrand = |v: f64| {
        let sin_theta = (1.0 - v * v).max(0.0).sqrt();
        k.coupling(branch, v) * one_minus_j0(2.0 * ql * sin_theta) * (-0.5 * v * v * (qb2 - qa2)).exp()
    };
    let opts = QuadOptions {
        rel_tol: model.quadrature_tol,
        abs_tol: 0.0,
        max_subdivisions: 500,
    };
    let res = integrate(integrand, 0.0, 1.0, &opts)?;
    Ok(k.prefactor(omega) * (-0.5 * qa2).exp() * res.value)
}

/// Longitudinal acoustic phonon contribution J_L(ω), ω in rad/ns.
pub fn j_long(omega: f64, model: &MicroSpectral) -> Result<f64, SpectralError> {
    j_branch(omega, model, Branch::Longitudinal)
}

/// Transverse acoustic phonon contribution J_T(ω), ω in rad/ns.
pub fn j_trans(omega: f64, model: &MicroSpectral) -> Result<f64, SpectralError> {
    j_branch(omega, model, Branch::Transverse)
}

/// J = J_L + J_T.
pub fn j_micro(omega: f64, model: &MicroSpectral) -> Result<f64, SpectralError> {
    Ok(j_long(omega, model)? + j_trans(omega, model)?)
}

/// Reference evaluation of J_L + J_T from the two-dimensional angular
/// integral over (cos θ, φ), before the azimuthal integral is done in closed
/// form. Composite Gauss–Legendre in both variables; slow, meant as a check.
pub fn j_micro_bruteforce(omega: f64, model: &MicroSpectral) -> Result<f64, SpectralError> {
    check_omega(omega)?;
    if omega == 0.0 {
        return Ok(0.0);
    }
    const PANELS: usize = 24;
    const ORDER: usize = 20;
    let (t, w) = gauss_legendre(ORDER);
    let rule = |lo: f64, hi: f64| -> Vec<(f64, f64)> {
        let h = (hi - lo) / PANELS as f64;
        let mut out = Vec::with_capacity(PANELS * ORDER);
        for p in 0..PANELS {
            let a = lo + h * p as f64;
            for (ti, wi) in t.iter().zip(&w) {
                out.push((a + 0.5 * h * (ti + 1.0), 0.5 * h * wi));
            }
        }
        out
    };
    // the integrand is even in cos θ and in φ about 0 and π, so the full
    // domain [−1, 1] × [0, 2π] is 8 copies of [0, 1] × [0, π/2]
    let u_rule = rule(0.0, 1.0);
    let phi_rule = rule(0.0, 0.5 * PI);
    let mut total = 0.0;
    for branch in [Branch::Longitudinal, Branch::Transverse] {
        let k = BranchConsts::new(model, branch);
        let q = omega / k.c;
        let mut sum = 0.0;
        for &(u, wu) in &u_rule {
            let sin_theta = (1.0 - u * u).max(0.0).sqrt();
            let radial = k.coupling(branch, u)
                * (-0.5 * (q * k.a).powi(2) * sin_theta * sin_theta).exp()
                * (-0.5 * (q * k.b).powi(2) * u * u).exp();
            let mut ang = 0.0;
            for &(phi, wphi) in &phi_rule {
                ang += wphi * (q * k.l * sin_theta * phi.cos()).sin().powi(2);
            }
            sum += wu * radial * ang;
        }
        // ħω³/(16π³ρc⁵) × 8
        total += k.prefactor(omega) / (2.0 * PI) * 8.0 * sum;
    }
    Ok(total)
}

/// Phenomenological J_ph(ω) in meV²·ns.
pub fn j_phenom(omega: f64, model: &PhenomSpectral) -> f64 {
    if omega <= 0.0 {
        return 0.0;
    }
    let x = omega / model.omega_c;
    model.coupling_alpha * HBAR * HBAR * omega * x.powf(model.s_exponent - 1.0) * (-0.5 * x * x).exp()
}

/// J(ω) tabulated on a grid, interpolated by a monotone cubic in
/// (ln ω, ln J) with linear extrapolation of the log-log slope.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralTable {
    omega: Vec<f64>,
    values: Vec<f64>,
    curve: MonotoneCubic,
}

impl SpectralTable {
    pub fn new(omega: Vec<f64>, values: Vec<f64>) -> Result<Self, SpectralError> {
        if omega.len() < 2 || omega.len() != values.len() {
            return Err(SpectralError::InvalidTable(format!(
                "{} frequencies vs {} values (need at least two)",
                omega.len(),
                values.len()
            )));
        }
        if omega.iter().any(|w| !(*w > 0.0 && w.is_finite())) || omega.windows(2).any(|p| p[1] <= p[0]) {
            return Err(SpectralError::InvalidTable(
                "frequencies must be positive and strictly increasing".into(),
            ));
        }
        if values.iter().any(|j| !(*j > 0.0 && j.is_finite())) {
            return Err(SpectralError::InvalidTable(
                "log-log interpolation requires J > 0 at every node".into(),
            ));
        }
        let curve = MonotoneCubic::new(
            omega.iter().map(|w| w.ln()).collect(),
            values.iter().map(|j| j.ln()).collect(),
        );
        Ok(Self { omega, values, curve })
    }

    pub fn omega(&self) -> &[f64] {
        &self.omega
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn eval(&self, omega: f64) -> f64 {
        if omega <= 0.0 {
            return 0.0;
        }
        self.curve.eval(omega.ln()).exp()
    }
}

/// Any bath spectral density the rest of the crate can consume.
#[derive(Debug, Clone, PartialEq)]
pub enum SpectralModel {
    Phenomenological(PhenomSpectral),
    Microscopic(MicroSpectral),
    Tabulated(SpectralTable),
}

impl SpectralModel {
    /// J(ω) in meV²·ns for ω in rad/ns.
    pub fn j(&self, omega: f64) -> Result<f64, SpectralError> {
        match self {
            SpectralModel::Phenomenological(p) => {
                check_omega(omega)?;
                Ok(j_phenom(omega, p))
            }
            SpectralModel::Microscopic(m) => j_micro(omega, m),
            SpectralModel::Tabulated(t) => {
                check_omega(omega)?;
                Ok(t.eval(omega))
            }
        }
    }

    /// Samples J on `omega` into a table.
    pub fn tabulate(&self, omega: &[f64]) -> Result<SpectralTable, SpectralError> {
        let values = omega.iter().map(|&w| self.j(w)).collect::<Result<Vec<_>, _>>()?;
        SpectralTable::new(omega.to_vec(), values)
    }
}

/// Γ_r(ε) = (2π/ħ²)(Δ/ħΩ)² J(Ω) coth(βħΩ/2) in 1/ns, with ħΩ = √(ε² + Δ²).
pub fn relaxation_rate(epsilon: f64, qubit: &QubitParams, model: &SpectralModel) -> Result<f64, SpectralError> {
    qubit.validate()?;
    let gap = energy_gap(epsilon, qubit.delta);
    let j = model.j(gap / HBAR)?;
    Ok(rate_from_j(gap, j, qubit))
}

/// Γ_r for a known J at gap ħΩ.
pub fn rate_from_j(gap: f64, j: f64, qubit: &QubitParams) -> f64 {
    let ratio = qubit.delta / gap;
    2.0 * PI / (HBAR * HBAR) * ratio * ratio * j / (0.5 * qubit.beta() * gap).tanh()
}

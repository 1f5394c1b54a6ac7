//! Physical constants and unit conventions.
//!
//! Energies are in meV, times in ns, lengths in nm, temperatures in K and
//! rates in 1/ns. Conversion to Hz (or volts, for detuning) happens only at
//! the I/O boundary.

/// Reduced Planck constant in meV·ns.
pub const HBAR: f64 = 6.582_119_569e-4;
/// Boltzmann constant in meV/K.
pub const KB: f64 = 8.617_333_262e-2;
/// Elementary charge in C.
pub const E_CHARGE: f64 = 1.602_176_634e-19;
/// Reduced Planck constant in J·s.
pub const HBAR_SI: f64 = 1.054_571_817e-34;
/// Electron rest mass in kg.
pub const ELECTRON_MASS: f64 = 9.109_383_701_5e-31;
/// meV per joule.
pub const MEV_PER_JOULE: f64 = 1.0e3 / E_CHARGE;

/// ħ²/mₑ in meV·nm².
pub const HBAR2_OVER_ME: f64 = HBAR_SI * HBAR_SI / ELECTRON_MASS * MEV_PER_JOULE * 1.0e18;

/// Converts a mass density in kg/m³ to meV·ns²/nm⁵.
pub const KG_PER_M3: f64 = MEV_PER_JOULE * 1.0e18 * 1.0e-45;

/// Converts meV to eV-based inputs: deformation potentials are quoted in eV.
pub const MEV_PER_EV: f64 = 1.0e3;

/// Read-only bundle of the constants used throughout the crate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysConstants {
    hbar: f64,
    kb: f64,
    e_charge: f64,
}

impl PhysConstants {
    pub const fn codata() -> Self {
        Self {
            hbar: HBAR,
            kb: KB,
            e_charge: E_CHARGE,
        }
    }

    /// ħ in meV·ns.
    pub fn hbar(&self) -> f64 {
        self.hbar
    }

    /// k_B in meV/K.
    pub fn kb(&self) -> f64 {
        self.kb
    }

    /// e in C.
    pub fn e_charge(&self) -> f64 {
        self.e_charge
    }
}

impl Default for PhysConstants {
    fn default() -> Self {
        Self::codata()
    }
}

/// Rate in 1/ns to Hz.
#[inline]
pub fn per_ns_to_hz(rate: f64) -> f64 {
    rate * 1.0e9
}

/// Rate or frequency in Hz to 1/ns.
#[inline]
pub fn hz_to_per_ns(rate: f64) -> f64 {
    rate * 1.0e-9
}

/// Energy in meV to angular frequency in rad/ns.
#[inline]
pub fn energy_to_omega(energy: f64) -> f64 {
    energy / HBAR
}

/// Angular frequency in rad/ns to energy in meV.
#[inline]
pub fn omega_to_energy(omega: f64) -> f64 {
    omega * HBAR
}

/// Gate voltage (V) to detuning (meV) for a lever arm given in eV/V.
#[inline]
pub fn volts_to_mev(volts: f64, lever_arm_ev_per_v: f64) -> f64 {
    volts * lever_arm_ev_per_v * MEV_PER_EV
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn hbar2_over_me_matches_hbar_c_route() {
        // (ħc)² / (mₑc²) with ħc = 197.3269804 eV·nm and mₑc² = 510998.95 eV.
        let expected = 197.326_980_4_f64.powi(2) / 510_998.95 * 1.0e3;
        assert_relative_eq!(HBAR2_OVER_ME, expected, max_relative = 1e-8);
    }

    #[test]
    fn hbar_si_and_mev_ns_agree() {
        assert_relative_eq!(HBAR_SI * MEV_PER_JOULE * 1.0e9, HBAR, max_relative = 1e-9);
    }

    #[test]
    fn density_conversion() {
        // 1 kg/m³ = 1 J·s²/m⁵.
        assert_relative_eq!(KG_PER_M3, 6.241_509_074e-6, max_relative = 1e-9);
    }
}

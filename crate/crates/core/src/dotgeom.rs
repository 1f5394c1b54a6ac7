//! Harmonic double-well model of the device: Fock–Darwin ground orbitals in
//! each dot, their overlap, and the tunnel coupling Δ(E₀, L, ε).

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{GeometryError, ParamError};
use crate::special::{erf, erfc};
use crate::units::{ELECTRON_MASS, E_CHARGE, HBAR2_OVER_ME, HBAR_SI, MEV_PER_JOULE};

/// In-plane effective mass m⊥ in units of mₑ.
pub const M_PERP: f64 = 0.19;
/// Out-of-plane effective mass m∥ in units of mₑ.
pub const M_PAR: f64 = 0.98;

/// ħe/mₑ in meV/T.
const HBAR_E_OVER_ME: f64 = HBAR_SI * E_CHARGE / ELECTRON_MASS * MEV_PER_JOULE;
/// e/ħ in 1/(T·nm²).
const E_OVER_HBAR_NM2: f64 = E_CHARGE / HBAR_SI * 1.0e-18;

/// Two identical harmonic wells at x = ±L with in-plane confinement E₀,
/// vertical confinement E_z and perpendicular field B.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DotGeometry {
    /// E₀ in meV.
    pub e0: f64,
    /// E_z in meV.
    pub ez: f64,
    /// L in nm.
    pub half_separation: f64,
    /// B in T.
    #[serde(default)]
    pub b_field: f64,
}

impl DotGeometry {
    pub fn new(e0: f64, ez: f64, half_separation: f64, b_field: f64) -> Result<Self, ParamError> {
        let g = Self {
            e0,
            ez,
            half_separation,
            b_field,
        };
        g.validate()?;
        Ok(g)
    }

    /// Geometry with the vertical confinement given as a thickness b in nm.
    pub fn with_thickness(e0: f64, thickness: f64, half_separation: f64, b_field: f64) -> Result<Self, ParamError> {
        if !(thickness > 0.0 && thickness.is_finite()) {
            return Err(ParamError::new("geometry.thickness", "must be positive and finite"));
        }
        Self::new(
            e0,
            HBAR2_OVER_ME / (M_PAR * thickness * thickness),
            half_separation,
            b_field,
        )
    }

    pub fn validate(&self) -> Result<(), ParamError> {
        let positive = |v: f64, name: &str| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(ParamError::new(
                    format!("geometry.{name}"),
                    "must be positive and finite",
                ))
            }
        };
        positive(self.e0, "e0")?;
        positive(self.ez, "ez")?;
        positive(self.half_separation, "half_separation")?;
        if !self.b_field.is_finite() {
            return Err(ParamError::new("geometry.b_field", "must be finite"));
        }
        if self.thickness() >= self.dot_radius() / 3.0 {
            return Err(ParamError::new(
                "geometry.ez",
                format!(
                    "thickness b = {:.3} nm must be below a/3 = {:.3} nm",
                    self.thickness(),
                    self.dot_radius() / 3.0
                ),
            ));
        }
        Ok(())
    }

    /// a = √(ħ²/m⊥E₀) in nm.
    pub fn dot_radius(&self) -> f64 {
        (HBAR2_OVER_ME / (M_PERP * self.e0)).sqrt()
    }

    /// b = √(ħ²/m∥E_z) in nm.
    pub fn thickness(&self) -> f64 {
        (HBAR2_OVER_ME / (M_PAR * self.ez)).sqrt()
    }

    /// ħω_c = ħeB/m⊥ in meV.
    pub fn larmor_energy(&self) -> f64 {
        HBAR_E_OVER_ME * self.b_field.abs() / M_PERP
    }

    /// Fock–Darwin length l₀ in nm.
    pub fn magnetic_length(&self) -> f64 {
        let half = 0.5 * self.larmor_energy();
        let eff = (half * half + self.e0 * self.e0).sqrt();
        (HBAR2_OVER_ME / (M_PERP * eff)).sqrt()
    }

    /// α_x = m⊥E₀²/2ħ² in meV/nm².
    pub fn alpha_x(&self) -> f64 {
        let a = self.dot_radius();
        self.e0 / (2.0 * a * a)
    }

    /// Same geometry with B = 0.
    pub fn without_field(&self) -> Self {
        Self { b_field: 0.0, ..*self }
    }
}

/// (a, b, l₀) in nm.
pub fn length_scales(geometry: &DotGeometry) -> (f64, f64, f64) {
    (geometry.dot_radius(), geometry.thickness(), geometry.magnetic_length())
}

/// s = ⟨φ_L|φ_R⟩ = exp(−[(L/l₀)² + (eBLl₀/2ħ)²]).
pub fn overlap(geometry: &DotGeometry) -> f64 {
    let l0 = geometry.magnetic_length();
    let l = geometry.half_separation;
    let mag = 0.5 * E_OVER_HBAR_NM2 * geometry.b_field * l * l0;
    (-((l / l0).powi(2) + mag * mag)).exp()
}

/// g = (1 − √(1 − s²))/s, written to stay accurate for small s.
pub fn orthogonalization_g(s: f64) -> f64 {
    s / (1.0 + (1.0 - s * s).sqrt())
}

/// Matrix elements of δV between the (non-orthogonal) dot orbitals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeltaV {
    pub ll: f64,
    pub rr: f64,
    pub lr: f64,
}

/// Well crossing x₀ = ε/(4α_x L) in nm, checked to lie inside (−L, L).
fn crossing_point(geometry: &DotGeometry, epsilon: f64) -> Result<f64, GeometryError> {
    let l = geometry.half_separation;
    let x0 = epsilon / (4.0 * geometry.alpha_x() * l);
    if !(x0.abs() < l) {
        return Err(GeometryError::DetuningOutOfRange {
            epsilon,
            x0,
            half_separation: l,
        });
    }
    Ok(x0)
}

/// δV_LL, δV_RR, δV_LR in meV for the potential difference
/// δV = sgn(x − x₀)(ε/2 − 2α_x L x).
pub fn delta_v_elements(geometry: &DotGeometry, epsilon: f64) -> Result<DeltaV, GeometryError> {
    geometry.validate()?;
    let x0 = crossing_point(geometry, epsilon)?;
    let l = geometry.half_separation;
    let l0 = geometry.magnetic_length();
    let alpha = geometry.alpha_x();
    let c = 2.0 * alpha * l * l0 / PI.sqrt();
    let p = (l + x0) / l0;
    let m = (l - x0) / l0;
    let q = x0 / l0;
    Ok(DeltaV {
        ll: -(0.5 * epsilon + 2.0 * alpha * l * l) * erf(p) - c * (-p * p).exp(),
        rr: (0.5 * epsilon - 2.0 * alpha * l * l) * erf(m) - c * (-m * m).exp(),
        lr: -overlap(geometry) * (0.5 * epsilon * erf(q) + c * (-q * q).exp()),
    })
}

/// E_L = ⟨φ_L|H_L|φ_L⟩ = E₀ + E_z/2 in meV (field neglected).
pub fn single_dot_energy(geometry: &DotGeometry) -> f64 {
    geometry.e0 + 0.5 * geometry.ez
}

/// Tunnel coupling Δ in meV from the orthogonalized two-orbital projection.
///
/// The field is neglected (l₀ = a, Peierls phases dropped). The sum
/// 4α_xL² + δV_LL + δV_RR is assembled from erfc terms so that the small
/// result does not come from cancelling O(E₀) numbers.
pub fn tunnel_coupling(geometry: &DotGeometry, epsilon: f64) -> Result<f64, GeometryError> {
    let geo = geometry.without_field();
    let dv = delta_v_elements(&geo, epsilon)?;
    let x0 = crossing_point(&geo, epsilon)?;
    let l = geo.half_separation;
    let l0 = geo.magnetic_length();
    let alpha = geo.alpha_x();
    let c = 2.0 * alpha * l * l0 / PI.sqrt();
    let p = (l + x0) / l0;
    let m = (l - x0) / l0;
    let diag_sum = 2.0 * alpha * l * l * (erfc(p) + erfc(m))
        - 0.5 * epsilon * (erfc(m) - erfc(p))
        - c * ((-p * p).exp() + (-m * m).exp());

    let s = overlap(&geo);
    let g = orthogonalization_g(s);
    let e_l = single_dot_energy(&geo);
    let e_r = e_l + epsilon;
    let bracket = 0.5 * (e_l + e_r) * (s * (1.0 + g * g) - 2.0 * g) + (1.0 + g * g) * dv.lr - g * diag_sum;
    Ok(-2.0 / (1.0 - 2.0 * s * g + g * g) * bracket)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quad::{gauss_legendre, integrate, QuadOptions};
    use proptest::prelude::*;

    fn reference_geometry() -> DotGeometry {
        DotGeometry::with_thickness(1.7, 3.0, 45.0, 0.0).unwrap()
    }

    #[test]
    fn length_scales_at_zero_field() {
        let g = reference_geometry();
        let (a, b, l0) = length_scales(&g);
        assert_eq!(a, l0);
        assert!((b - 3.0).abs() < 1e-12);
        // 2a ≈ 30 nm
        assert!((2.0 * a - 30.72).abs() < 0.05, "2a = {}", 2.0 * a);
    }

    #[test]
    fn larmor_energy_at_100_mt() {
        let g = DotGeometry::with_thickness(1.7, 3.0, 45.0, 0.1).unwrap();
        let larmor = g.larmor_energy();
        assert!((larmor - 0.0609).abs() < 1e-3, "{larmor}");
        let shift = 1.0 - g.magnetic_length() / g.dot_radius();
        assert!(shift > 0.0 && shift < 1e-3, "{shift}");
    }

    #[test]
    fn overlap_values() {
        let mut g = reference_geometry();
        g.half_separation = 0.0;
        assert_eq!(overlap(&g), 1.0);
        g.half_separation = 3.0 * g.dot_radius();
        assert!((overlap(&g) - (-9.0f64).exp()).abs() < 1e-16);
        assert!((overlap(&g) - 1.234e-4).abs() < 1e-7);
        let s0 = overlap(&g);
        g.b_field = 0.5;
        let s1 = overlap(&g);
        g.b_field = 1.0;
        let s2 = overlap(&g);
        assert!(s0 > s1 && s1 > s2);
    }

    #[test]
    fn g_series_and_bound() {
        let s = 1e-3;
        assert!((orthogonalization_g(s) - s / 2.0).abs() < 1e-8);
        for &s in &[0.01, 0.3, 0.9, 0.999] {
            let g = orthogonalization_g(s);
            assert!(g < s && g > 0.0);
            let naive = (1.0 - (1.0 - s * s).sqrt()) / s;
            assert!((g - naive).abs() < 1e-12);
        }
        assert!((orthogonalization_g(1.0) - 1.0).abs() < 1e-15);
    }

    // |L⟩ = (φ_L − gφ_R)/√(1 − 2sg + g²), |R⟩ = (φ_R − gφ_L)/√(1 − 2sg + g²)
    #[test]
    fn orthogonalized_basis_is_orthonormal() {
        for &s in &[1e-6, 1e-3, 0.2, 0.7, 0.95] {
            let g = orthogonalization_g(s);
            let norm2 = 1.0 - 2.0 * s * g + g * g;
            let gram = |u: [f64; 2], v: [f64; 2]| u[0] * v[0] + u[1] * v[1] + s * (u[0] * v[1] + u[1] * v[0]);
            let l = [1.0, -g];
            let r = [-g, 1.0];
            assert!(gram(l, r).abs() / norm2 < 1e-12);
            assert!((gram(l, l) / norm2 - 1.0).abs() < 1e-12);
            assert!((gram(r, r) / norm2 - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn delta_v_at_zero_detuning() {
        let g = reference_geometry();
        let dv = delta_v_elements(&g, 0.0).unwrap();
        let a = g.dot_radius();
        let alpha = g.alpha_x();
        let l = g.half_separation;
        let c = 2.0 * alpha * l * a / PI.sqrt();
        let want = -2.0 * alpha * l * l * erf(l / a) - c * (-(l / a).powi(2)).exp();
        assert_eq!(dv.ll, dv.rr);
        assert!((dv.ll - want).abs() < 1e-14 * want.abs());
        assert!((dv.lr + overlap(&g) * c).abs() < 1e-15);
    }

    #[test]
    fn detuning_out_of_range_is_an_error() {
        let g = reference_geometry();
        // x0 = ε/(4α L) reaches L at ε = 4αL²
        let limit = 4.0 * g.alpha_x() * g.half_separation.powi(2);
        assert!(delta_v_elements(&g, 0.99 * limit).is_ok());
        assert!(matches!(
            tunnel_coupling(&g, -1.01 * limit),
            Err(GeometryError::DetuningOutOfRange { .. })
        ));
    }

    /// δV matrix elements by quadrature over x; the y and z marginals are
    /// Gaussian and integrate to one (LL, RR) or to the field factor of s (LR).
    fn delta_v_oracle(geometry: &DotGeometry, epsilon: f64) -> DeltaV {
        let l = geometry.half_separation;
        let l0 = geometry.magnetic_length();
        let alpha = geometry.alpha_x();
        let x0 = epsilon / (4.0 * alpha * l);
        let dv = |x: f64| (x - x0).signum() * (0.5 * epsilon - 2.0 * alpha * l * x);
        let phi2 = |c: f64, x: f64| (-(x - c).powi(2) / (l0 * l0)).exp() / (PI.sqrt() * l0);
        let mag = 0.5 * E_OVER_HBAR_NM2 * geometry.b_field * l * l0;
        let y_factor = (-mag * mag).exp();
        let opts = QuadOptions {
            rel_tol: 1e-13,
            abs_tol: 1e-300,
            max_subdivisions: 4000,
        };
        let span = 12.0 * l0;
        let int = |f: &dyn Fn(f64) -> f64| {
            let lo = -l - span;
            let hi = l + span;
            integrate(f, lo, x0, &opts).unwrap().value + integrate(f, x0, hi, &opts).unwrap().value
        };
        let ll = int(&|x| dv(x) * phi2(-l, x));
        let rr = int(&|x| dv(x) * phi2(l, x));
        let lr = y_factor * int(&|x| dv(x) * (-(x * x + l * l) / (l0 * l0)).exp() / (PI.sqrt() * l0));
        DeltaV { ll, rr, lr }
    }

    #[test]
    fn delta_v_matches_quadrature_at_reference_geometry() {
        let g = reference_geometry();
        let got = delta_v_elements(&g, 0.1).unwrap();
        let want = delta_v_oracle(&g, 0.1);
        for (a, b) in [(got.ll, want.ll), (got.rr, want.rr), (got.lr, want.lr)] {
            assert!((a - b).abs() <= 1e-8 * b.abs(), "{a} vs {b}");
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(5))]
        #[test]
        fn delta_v_matches_quadrature(
            e0 in 0.8f64..4.0,
            l in 15.0f64..70.0,
            b_field in 0.0f64..0.5,
            frac in -0.5f64..0.5,
        ) {
            let g = DotGeometry::with_thickness(e0, 2.0, l, b_field).unwrap();
            let eps = frac * 4.0 * g.alpha_x() * l * l;
            let got = delta_v_elements(&g, eps).unwrap();
            let want = delta_v_oracle(&g, eps);
            for (a, b) in [(got.ll, want.ll), (got.rr, want.rr), (got.lr, want.lr)] {
                prop_assert!((a - b).abs() <= 1e-8 * b.abs(), "{} vs {}", a, b);
            }
        }
    }

    /// Lowest two levels of −(ħ²/2m⊥)ψ'' + min{α(x+L)², α(x−L)²}ψ on a
    /// finite-difference grid. The potential is even, so the even and odd
    /// ground states are the lowest eigenvalues of the half-line problem with
    /// Neumann and Dirichlet conditions at x = 0.
    pub(crate) fn fd_doublet(geometry: &DotGeometry, h: f64) -> (f64, f64) {
        let l = geometry.half_separation;
        let a = geometry.dot_radius();
        let alpha = geometry.alpha_x();
        let kin = HBAR2_OVER_ME / M_PERP / (2.0 * h * h);
        let n = ((l + 10.0 * a) / h).ceil() as usize;
        let pot = |i: usize| {
            let x = i as f64 * h;
            alpha * (x - l).powi(2)
        };
        // even sector: node 0 is x = 0 with mirror ghost ψ₋₁ = ψ₁
        // odd sector: node 0 is x = h (ψ₀ = 0 eliminated)
        let even_diag: Vec<f64> = (0..n).map(|i| 2.0 * kin + pot(i)).collect();
        let mut even_off = vec![-kin; n - 1];
        // symmetrize the Neumann row by scaling ψ₀ with √2
        even_off[0] = -kin * 2f64.sqrt();
        let odd_diag: Vec<f64> = (1..=n).map(|i| 2.0 * kin + pot(i)).collect();
        let odd_off = vec![-kin; n - 1];
        (
            lowest_eigenvalue(&even_diag, &even_off),
            lowest_eigenvalue(&odd_diag, &odd_off),
        )
    }

    /// Smallest eigenvalue of a symmetric tridiagonal matrix by Sturm bisection.
    fn lowest_eigenvalue(diag: &[f64], off: &[f64]) -> f64 {
        let count_below = |lam: f64| {
            let mut count = 0;
            let mut q = diag[0] - lam;
            if q < 0.0 {
                count += 1;
            }
            for i in 1..diag.len() {
                let qprev = if q == 0.0 { 1e-300 } else { q };
                q = diag[i] - lam - off[i - 1] * off[i - 1] / qprev;
                if q < 0.0 {
                    count += 1;
                }
            }
            count
        };
        let mut lo =
            diag.iter().cloned().fold(f64::INFINITY, f64::min) - 2.0 * off.iter().map(|o| o.abs()).fold(0.0, f64::max);
        let mut hi = diag.iter().cloned().fold(f64::INFINITY, f64::min);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if count_below(mid) >= 1 {
                hi = mid;
            } else {
                lo = mid;
            }
            if hi - lo < 1e-15 * hi.abs().max(1.0) {
                break;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn fd_oracle_recovers_harmonic_level() {
        // Widely separated wells: both levels approach ħω/2 = E₀/2.
        let g = DotGeometry::with_thickness(1.7, 3.0, 150.0, 0.0).unwrap();
        let (e_even, e_odd) = fd_doublet(&g, 0.1);
        assert!((e_even - 0.85).abs() < 1e-4, "{e_even}");
        assert!((e_odd - e_even).abs() < 1e-12);
    }

    #[test]
    fn tunnel_coupling_at_fit_geometry() {
        let g = reference_geometry();
        let delta = tunnel_coupling(&g, 0.0).unwrap();
        assert!(delta > 0.5e-3 && delta < 2e-3, "Δ = {delta}");
        let (e_even, e_odd) = fd_doublet(&g, 0.05);
        let split = e_odd - e_even;
        assert!(
            (delta - split).abs() < 0.2 * split,
            "Δ = {delta}, FD splitting = {split}"
        );
        for &eps in &[-0.3, -0.2, -0.1, 0.1, 0.2, 0.3] {
            let r = tunnel_coupling(&g, eps).unwrap() / delta;
            assert!((0.99..=1.01).contains(&r), "ε = {eps}: ratio {r}");
        }
    }

    #[test]
    fn tunnel_coupling_is_even_near_zero() {
        let g = reference_geometry();
        let d0 = tunnel_coupling(&g, 0.0).unwrap();
        let dp = tunnel_coupling(&g, 1e-3).unwrap();
        let dm = tunnel_coupling(&g, -1e-3).unwrap();
        assert!((dp - dm).abs() / d0 < 1e-6);
    }

    #[test]
    fn tunnel_coupling_ignores_field() {
        let g = reference_geometry();
        let mut gb = g;
        gb.b_field = 0.1;
        assert_eq!(tunnel_coupling(&g, 0.05).unwrap(), tunnel_coupling(&gb, 0.05).unwrap());
    }

    #[test]
    fn single_dot_energy_sum_rule() {
        let g = DotGeometry::new(1.7, 20.0, 45.0, 0.0).unwrap();
        assert!((single_dot_energy(&g) - 11.7).abs() < 1e-12);
        let mut far = g;
        far.half_separation = 90.0;
        assert_eq!(single_dot_energy(&g), single_dot_energy(&far));
    }

    /// ⟨φ|H|φ⟩ for the product Gaussian by tensor Gauss–Legendre quadrature in
    /// three dimensions. Kinetic terms use |∇φ|² (integration by parts).
    #[test]
    fn single_dot_energy_matches_quadrature() {
        for &(e0, ez) in &[(1.7, 8.64), (1.0, 20.0), (3.0, 30.0)] {
            let g = DotGeometry::new(e0, ez, 45.0, 0.0).unwrap();
            let a = g.dot_radius();
            let b = g.thickness();
            let alpha = g.alpha_x();
            let alpha_z = M_PAR * ez * ez / (2.0 * HBAR2_OVER_ME);
            let (t, w) = gauss_legendre(48);
            let (ux, uz) = (9.0 * a, 9.0 * b);
            let mut num = 0.0;
            let mut den = 0.0;
            for (xi, wx) in t.iter().zip(&w) {
                let x = ux * xi;
                for (yi, wy) in t.iter().zip(&w) {
                    let y = ux * yi;
                    for (zi, wz) in t.iter().zip(&w) {
                        let z = uz * zi;
                        let phi = (-(x * x + y * y) / (2.0 * a * a) - z * z / (2.0 * b * b)).exp();
                        let grad_perp2 = (x * x + y * y) / a.powi(4) * phi * phi;
                        let grad_z2 = z * z / b.powi(4) * phi * phi;
                        let kinetic = HBAR2_OVER_ME / 2.0 * (grad_perp2 / M_PERP + grad_z2 / M_PAR);
                        let potential = (alpha * (x * x + y * y) + alpha_z * z * z) * phi * phi;
                        let weight = wx * wy * wz;
                        num += weight * (kinetic + potential);
                        den += weight * phi * phi;
                    }
                }
            }
            let e = num / den;
            assert!(
                (e - single_dot_energy(&g)).abs() < 1e-8 * e,
                "{e} vs {}",
                single_dot_energy(&g)
            );
        }
    }

    #[test]
    fn rejects_thick_dots() {
        assert!(DotGeometry::with_thickness(1.7, 6.0, 45.0, 0.0).is_err());
        assert!(DotGeometry::new(-1.0, 10.0, 45.0, 0.0).is_err());
    }
}

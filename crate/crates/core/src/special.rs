//! Special functions: the Bessel function J₀ and the error function.

use std::f64::consts::{FRAC_PI_4, PI};

const SERIES_LIMIT: f64 = 2.0;
const ASYMPTOTIC_LIMIT: f64 = 25.0;

/// Bessel function of the first kind of order zero.
///
/// Power series for |x| ≤ 2, periodic trapezoid sum of the integral
/// representation for 2 < |x| < 25 (exponentially convergent), and the
/// Hankel asymptotic expansion beyond.
pub fn bessel_j0(x: f64) -> f64 {
    let x = x.abs();
    if x <= SERIES_LIMIT {
        1.0 - one_minus_j0_series(x)
    } else if x < ASYMPTOTIC_LIMIT {
        j0_trapezoid(x)
    } else {
        j0_hankel(x)
    }
}

/// 1 − J₀(x) without the cancellation of the direct difference at small x.
pub fn one_minus_j0(x: f64) -> f64 {
    let x = x.abs();
    if x < 1e-3 {
        let x2 = x * x;
        x2 / 4.0 - x2 * x2 / 64.0 + x2 * x2 * x2 / 2304.0
    } else if x <= SERIES_LIMIT {
        one_minus_j0_series(x)
    } else {
        1.0 - bessel_j0(x)
    }
}

/// Σ_{k≥1} −(−x²/4)^k/(k!)².
fn one_minus_j0_series(x: f64) -> f64 {
    let q = -0.25 * x * x;
    let mut term = 1.0;
    let mut sum = 0.0;
    for k in 1..60 {
        let kf = k as f64;
        term *= q / (kf * kf);
        sum -= term;
        if term.abs() < 1e-18 * sum.abs().max(1e-300) {
            break;
        }
    }
    sum
}

/// (1/M) Σ_j cos(x sin(πj/M)); the aliasing error is 2Σ_k J_{2kM}(x).
fn j0_trapezoid(x: f64) -> f64 {
    let m = x.ceil() as usize + 16;
    let h = PI / m as f64;
    let sum: f64 = (0..m).map(|j| (x * (h * j as f64).sin()).cos()).sum();
    sum / m as f64
}

fn j0_hankel(x: f64) -> f64 {
    // a_k = Π_{j=1..k} (2j−1)² / (8j); P = Σ (−1)^k a_{2k}/x^{2k}, Q = Σ (−1)^k a_{2k+1}/x^{2k+1}
    let mut p = 1.0;
    let mut q = 0.0;
    let mut term = 1.0;
    for k in 1..200 {
        let kf = k as f64;
        let next = term * (2.0 * kf - 1.0).powi(2) / (8.0 * kf * x);
        if next.abs() > term.abs() || next.abs() < 1e-18 {
            break;
        }
        term = next;
        // for order zero the k-th Hankel coefficient carries sign (−1)^k,
        // on top of the alternation within P and Q
        match k % 4 {
            1 => q -= term,
            2 => p -= term,
            3 => q += term,
            _ => p += term,
        }
    }
    let phase = x - FRAC_PI_4;
    (2.0 / (PI * x)).sqrt() * (p * phase.cos() - q * phase.sin())
}

/// Error function (musl implementation, < 1 ulp).
#[inline]
pub fn erf(x: f64) -> f64 {
    libm::erf(x)
}

/// Complementary error function.
#[inline]
pub fn erfc(x: f64) -> f64 {
    libm::erfc(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quad::{gauss_legendre, integrate, QuadOptions};

    // The integrand is entire, so a high-order Gauss rule on [0, π] is
    // accurate to rounding for the arguments used here.
    fn j0_integral(x: f64) -> f64 {
        let (nodes, weights) = gauss_legendre(256);
        let half = 0.5 * PI;
        let sum: f64 = nodes
            .iter()
            .zip(&weights)
            .map(|(t, w)| w * (x * (half * (t + 1.0)).sin()).cos())
            .sum();
        sum * half / PI
    }

    #[test]
    fn gauss_oracle_agrees_with_adaptive() {
        let opts = QuadOptions {
            rel_tol: 1e-11,
            abs_tol: 1e-13,
            max_subdivisions: 2000,
        };
        for &x in &[0.7, 13.0, 90.0] {
            let adaptive = integrate(|t| (x * t.sin()).cos(), 0.0, PI, &opts).unwrap().value / PI;
            assert!((adaptive - j0_integral(x)).abs() < 1e-12);
        }
    }

    #[test]
    fn j0_at_zero() {
        assert_eq!(bessel_j0(0.0), 1.0);
        assert_eq!(one_minus_j0(0.0), 0.0);
    }

    #[test]
    fn first_zero() {
        assert!(bessel_j0(2.404_825_557_695_773).abs() < 1e-9);
        assert!(j0_integral(2.404_825_557_695_773).abs() < 1e-9);
    }

    #[test]
    fn small_argument_series() {
        for &x in &[1e-4, 1e-3, 0.01, 0.05] {
            let approx = 1.0 - x * x / 4.0;
            assert!((bessel_j0(x) - approx).abs() <= 0.1 * x.powi(4));
        }
    }

    #[test]
    fn one_minus_j0_branches_agree() {
        // Across the 1e-3 switch the two forms agree to full relative precision.
        let a = one_minus_j0(0.999_999e-3);
        let b = one_minus_j0_series(0.999_999e-3);
        assert!((a - b).abs() / b < 1e-14);
        for &x in &[0.3, 1.9, 2.1, 7.9, 20.0, 30.0] {
            let direct = 1.0 - j0_integral(x);
            assert!((one_minus_j0(x) - direct).abs() < 1e-12 * direct.abs().max(1.0));
        }
    }

    #[test]
    fn matches_integral_definition() {
        let mut x = 0.05;
        while x < 120.0 {
            let want = j0_integral(x);
            let got = bessel_j0(x);
            let err = (got - want).abs();
            // relative 1e-10, with an absolute floor where J0 nearly vanishes
            assert!(err <= 1e-10 * want.abs().max(1e-3), "x = {x}: {got} vs {want}");
            x *= 1.07;
        }
    }

    #[test]
    fn branches_continuous() {
        let x = SERIES_LIMIT;
        assert!((1.0 - one_minus_j0_series(x) - j0_trapezoid(x)).abs() < 1e-14);
        let x = ASYMPTOTIC_LIMIT;
        assert!((j0_trapezoid(x) - j0_hankel(x)).abs() < 1e-14);
    }

    #[test]
    fn erf_reference_values() {
        assert!((erf(0.5) - 0.520_499_877_813_046_5).abs() < 1e-15);
        assert!((erfc(3.0) - 2.209_049_699_858_544e-5).abs() < 1e-19);
        assert_eq!(erf(0.0), 0.0);
    }
}

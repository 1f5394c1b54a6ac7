//! Small deterministic optimizers used by the fitting routines.

use nalgebra::{DMatrix, DVector};

/// Outcome of a minimization.
#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub f: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
    /// ∞-norm of the last gradient (zero for derivative-free methods).
    pub gradient_norm: f64,
    /// Objective after every accepted iteration, starting with f(x₀).
    pub history: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BfgsOptions {
    pub max_iterations: usize,
    /// Stop when an accepted step lowers f by less than `f_tol·max(f, f_floor)`.
    pub f_tol: f64,
    pub f_floor: f64,
    /// Stop when the gradient ∞-norm drops below this.
    pub g_tol: f64,
    /// Largest change of any coordinate in one step.
    pub max_step: f64,
}

impl Default for BfgsOptions {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            f_tol: 1e-9,
            f_floor: 1e-12,
            g_tol: 1e-12,
            max_step: 2.0,
        }
    }
}

/// Quasi-Newton minimization with an inverse-Hessian BFGS update and Armijo
/// backtracking. `gradient(x, f(x))` supplies ∇f. Every accepted step
/// strictly lowers f. If no descent is found even along −∇f the iterate is
/// taken as converged to working precision.
pub fn bfgs<E>(
    x0: &[f64],
    mut objective: impl FnMut(&[f64]) -> Result<f64, E>,
    mut gradient: impl FnMut(&[f64], f64) -> Result<Vec<f64>, E>,
    opts: &BfgsOptions,
) -> Result<Minimum, E> {
    let n = x0.len();
    let mut x = DVector::from_column_slice(x0);
    let mut f = objective(x.as_slice())?;
    let mut evaluations = 1;
    let mut g = DVector::from_vec(gradient(x.as_slice(), f)?);
    let mut h = DMatrix::<f64>::identity(n, n);
    let mut scaled = false;
    let mut history = vec![f];
    let mut iterations = 0;
    let mut converged = false;

    while iterations < opts.max_iterations {
        if g.amax() <= opts.g_tol {
            converged = true;
            break;
        }
        let mut accepted = None;
        for attempt in 0..2 {
            let mut p = if attempt == 0 { -(&h * &g) } else { -g.clone() };
            let mut slope = g.dot(&p);
            if !(slope < 0.0) {
                p = -g.clone();
                slope = -g.norm_squared();
            }
            let big = p.amax();
            if big > opts.max_step {
                p *= opts.max_step / big;
                slope *= opts.max_step / big;
            }
            let mut alpha = 1.0;
            for _ in 0..40 {
                let trial = &x + alpha * &p;
                let ft = objective(trial.as_slice())?;
                evaluations += 1;
                if ft.is_finite() && ft <= f + 1e-4 * alpha * slope && ft < f {
                    accepted = Some((trial, ft));
                    break;
                }
                alpha *= 0.5;
                if alpha * big < 1e-12 * (1.0 + x.amax()) {
                    break;
                }
            }
            if accepted.is_some() {
                break;
            }
            h = DMatrix::identity(n, n);
        }
        let Some((x_new, f_new)) = accepted else {
            converged = true;
            break;
        };
        iterations += 1;
        let g_new = DVector::from_vec(gradient(x_new.as_slice(), f_new)?);
        let s = &x_new - &x;
        let y = &g_new - &g;
        let sy = s.dot(&y);
        if sy > 1e-12 * s.norm() * y.norm() {
            if !scaled {
                h *= sy / y.norm_squared();
                scaled = true;
            }
            let rho = 1.0 / sy;
            let hy = &h * &y;
            let yhy = y.dot(&hy);
            h += (rho * rho * yhy + rho) * (&s * s.transpose()) - rho * (&hy * s.transpose() + &s * hy.transpose());
        }
        let decrease = f - f_new;
        x = x_new;
        f = f_new;
        g = g_new;
        history.push(f);
        if decrease <= opts.f_tol * f.max(opts.f_floor) {
            converged = true;
            break;
        }
    }
    Ok(Minimum {
        x: x.as_slice().to_vec(),
        f,
        iterations,
        evaluations,
        converged,
        gradient_norm: g.amax(),
        history,
    })
}

/// Forward-difference gradient with step h_i = rel·max(|x_i|, 1).
pub fn forward_gradient<E>(
    x: &[f64],
    fx: f64,
    rel: f64,
    mut objective: impl FnMut(&[f64]) -> Result<f64, E>,
) -> Result<Vec<f64>, E> {
    let mut g = Vec::with_capacity(x.len());
    let mut xp = x.to_vec();
    for i in 0..x.len() {
        let h = rel * x[i].abs().max(1.0);
        xp[i] = x[i] + h;
        let step = xp[i] - x[i];
        g.push((objective(&xp)? - fx) / step);
        xp[i] = x[i];
    }
    Ok(g)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NelderMeadOptions {
    pub max_evaluations: usize,
    /// Stop when the simplex spans less than this in every coordinate and
    /// the objective spread is below `f_tol·max(|f|, f_floor)`.
    pub x_tol: f64,
    pub f_tol: f64,
    pub f_floor: f64,
    /// Initial simplex edge along each axis.
    pub initial_step: f64,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        Self {
            max_evaluations: 400,
            x_tol: 1e-5,
            f_tol: 1e-8,
            f_floor: 1e-12,
            initial_step: 0.1,
        }
    }
}

/// Standard Nelder–Mead (reflection 1, expansion 2, contraction ½,
/// shrink ½).
pub fn nelder_mead<E>(
    x0: &[f64],
    mut objective: impl FnMut(&[f64]) -> Result<f64, E>,
    opts: &NelderMeadOptions,
) -> Result<Minimum, E> {
    let n = x0.len();
    let mut simplex: Vec<Vec<f64>> = vec![x0.to_vec()];
    for i in 0..n {
        let mut v = x0.to_vec();
        v[i] += opts.initial_step;
        simplex.push(v);
    }
    let mut values = Vec::with_capacity(n + 1);
    for v in &simplex {
        values.push(objective(v)?);
    }
    let mut evaluations = n + 1;
    let mut iterations = 0;
    let mut history = vec![values[0]];
    let mut converged = false;

    let combine =
        |a: &[f64], b: &[f64], t: f64| -> Vec<f64> { a.iter().zip(b).map(|(p, q)| p + t * (q - p)).collect() };

    while evaluations < opts.max_evaluations {
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&i, &j| values[i].total_cmp(&values[j]).then(i.cmp(&j)));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        values = order.iter().map(|&i| values[i]).collect();

        let spread_x = (0..n)
            .map(|d| {
                let (lo, hi) = simplex.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
                    (lo.min(v[d]), hi.max(v[d]))
                });
                hi - lo
            })
            .fold(0.0, f64::max);
        let spread_f = values[n] - values[0];
        if spread_x < opts.x_tol && spread_f <= opts.f_tol * values[0].abs().max(opts.f_floor) {
            converged = true;
            break;
        }
        iterations += 1;

        let centroid: Vec<f64> = (0..n)
            .map(|d| simplex[..n].iter().map(|v| v[d]).sum::<f64>() / n as f64)
            .collect();
        let worst = simplex[n].clone();
        let xr = combine(&centroid, &worst, -1.0);
        let fr = objective(&xr)?;
        evaluations += 1;
        if fr < values[0] {
            let xe = combine(&centroid, &worst, -2.0);
            let fe = objective(&xe)?;
            evaluations += 1;
            if fe < fr {
                simplex[n] = xe;
                values[n] = fe;
            } else {
                simplex[n] = xr;
                values[n] = fr;
            }
        } else if fr < values[n - 1] {
            simplex[n] = xr;
            values[n] = fr;
        } else {
            let (xc, fc) = if fr < values[n] {
                let xc = combine(&centroid, &xr, 0.5);
                let fc = objective(&xc)?;
                (xc, fc)
            } else {
                let xc = combine(&centroid, &worst, 0.5);
                let fc = objective(&xc)?;
                (xc, fc)
            };
            evaluations += 1;
            if fc < values[n].min(fr) {
                simplex[n] = xc;
                values[n] = fc;
            } else {
                for i in 1..=n {
                    simplex[i] = combine(&simplex[0], &simplex[i], 0.5);
                    values[i] = objective(&simplex[i])?;
                    evaluations += 1;
                }
            }
        }
        let best = values.iter().cloned().fold(f64::INFINITY, f64::min);
        history.push(best);
    }
    let best = (0..=n).min_by(|&i, &j| values[i].total_cmp(&values[j])).unwrap_or(0);
    Ok(Minimum {
        x: simplex[best].clone(),
        f: values[best],
        iterations,
        evaluations,
        converged,
        gradient_norm: 0.0,
        history,
    })
}

/// Brent's parabolic-interpolation minimizer on [a, b].
pub fn brent_minimize<E>(
    a: f64,
    b: f64,
    mut f: impl FnMut(f64) -> Result<f64, E>,
    tol: f64,
    max_iterations: usize,
) -> Result<Minimum, E> {
    const GOLD: f64 = 0.381_966_011_250_105_1;
    let (mut a, mut b) = (a.min(b), a.max(b));
    let mut x = a + GOLD * (b - a);
    let (mut w, mut v) = (x, x);
    let mut fx = f(x)?;
    let (mut fw, mut fv) = (fx, fx);
    let mut d: f64 = 0.0;
    let mut e: f64 = 0.0;
    let mut evaluations = 1;
    let mut history = vec![fx];
    for it in 0..max_iterations {
        let m = 0.5 * (a + b);
        let tol1 = tol * x.abs() + 1e-12;
        let tol2 = 2.0 * tol1;
        if (x - m).abs() <= tol2 - 0.5 * (b - a) {
            return Ok(Minimum {
                x: vec![x],
                f: fx,
                iterations: it,
                evaluations,
                converged: true,
                gradient_norm: 0.0,
                history,
            });
        }
        let mut golden = true;
        if e.abs() > tol1 {
            let r = (x - w) * (fx - fv);
            let mut q = (x - v) * (fx - fw);
            let mut p = (x - v) * q - (x - w) * r;
            q = 2.0 * (q - r);
            if q > 0.0 {
                p = -p;
            }
            q = q.abs();
            if p.abs() < (0.5 * q * e).abs() && p > q * (a - x) && p < q * (b - x) {
                e = d;
                d = p / q;
                let u = x + d;
                if u - a < tol2 || b - u < tol2 {
                    d = if x < m { tol1 } else { -tol1 };
                }
                golden = false;
            }
        }
        if golden {
            e = if x < m { b - x } else { a - x };
            d = GOLD * e;
        }
        let u = if d.abs() >= tol1 { x + d } else { x + tol1.copysign(d) };
        let fu = f(u)?;
        evaluations += 1;
        if fu <= fx {
            if u < x {
                b = x;
            } else {
                a = x;
            }
            v = w;
            fv = fw;
            w = x;
            fw = fx;
            x = u;
            fx = fu;
        } else {
            if u < x {
                a = u;
            } else {
                b = u;
            }
            if fu <= fw || w == x {
                v = w;
                fv = fw;
                w = u;
                fw = fu;
            } else if fu <= fv || v == x || v == w {
                v = u;
                fv = fu;
            }
        }
        history.push(fx);
    }
    Ok(Minimum {
        x: vec![x],
        f: fx,
        iterations: max_iterations,
        evaluations,
        converged: false,
        gradient_norm: 0.0,
        history,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LmOptions {
    pub max_iterations: usize,
    /// Stop when the relative parameter change falls below this.
    pub x_tol: f64,
    pub f_tol: f64,
    pub fd_step: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            x_tol: 1e-12,
            f_tol: 1e-15,
            fd_step: 1e-7,
        }
    }
}

/// Levenberg–Marquardt on a residual vector, with a forward-difference
/// Jacobian and Marquardt's diagonal scaling. The objective is ½‖r‖².
pub fn levenberg_marquardt<E>(
    x0: &[f64],
    mut residuals: impl FnMut(&[f64]) -> Result<Vec<f64>, E>,
    opts: &LmOptions,
) -> Result<Minimum, E> {
    let n = x0.len();
    let mut x = DVector::from_column_slice(x0);
    let mut r = DVector::from_vec(residuals(x.as_slice())?);
    let mut f = 0.5 * r.norm_squared();
    let mut evaluations = 1;
    let mut lambda = 1e-3;
    let mut history = vec![f];
    let mut iterations = 0;
    let mut converged = false;
    let mut grad_norm = f64::INFINITY;

    while iterations < opts.max_iterations {
        iterations += 1;
        let mut jac = DMatrix::zeros(r.len(), n);
        for j in 0..n {
            let mut xp = x.clone();
            let h = opts.fd_step * x[j].abs().max(1.0);
            xp[j] += h;
            let rp = DVector::from_vec(residuals(xp.as_slice())?);
            evaluations += 1;
            jac.set_column(j, &((rp - &r) / (xp[j] - x[j])));
        }
        let jtj = jac.transpose() * &jac;
        let jtr = jac.transpose() * &r;
        grad_norm = jtr.amax();
        if f == 0.0 || grad_norm == 0.0 {
            converged = true;
            break;
        }
        let mut improved = false;
        for _ in 0..30 {
            let mut a = jtj.clone();
            for i in 0..n {
                a[(i, i)] += lambda * jtj[(i, i)].max(1e-12);
            }
            let Some(step) = a.lu().solve(&(-&jtr)) else {
                lambda *= 10.0;
                continue;
            };
            let xn = &x + &step;
            let rn = DVector::from_vec(residuals(xn.as_slice())?);
            evaluations += 1;
            let fn_ = 0.5 * rn.norm_squared();
            if fn_.is_finite() && fn_ < f {
                let small_step = step.amax() <= opts.x_tol * (1.0 + x.amax());
                let small_drop = f - fn_ <= opts.f_tol * f;
                x = xn;
                r = rn;
                f = fn_;
                lambda = (lambda * 0.3).max(1e-15);
                improved = true;
                history.push(f);
                if small_step || small_drop {
                    converged = true;
                }
                break;
            }
            lambda *= 10.0;
        }
        if !improved {
            converged = true;
        }
        if converged {
            break;
        }
    }
    Ok(Minimum {
        x: x.as_slice().to_vec(),
        f,
        iterations,
        evaluations,
        converged,
        gradient_norm: grad_norm,
        history,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussNewtonOptions {
    pub max_iterations: usize,
    /// Stop when an accepted step lowers ‖r‖² by less than this fraction.
    pub f_tol: f64,
    /// Stop when ‖r‖² falls below this.
    pub f_floor: f64,
    /// Stop when the largest projected gradient component is below
    /// `g_tol·f`.
    pub g_tol: f64,
    /// Largest change of any coordinate per step.
    pub max_step: f64,
}

impl Default for GaussNewtonOptions {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            f_tol: 1e-9,
            f_floor: 1e-24,
            g_tol: 1e-6,
            max_step: 2.0,
        }
    }
}

/// Damped Gauss–Newton on f = ‖r‖² with a caller-supplied Jacobian
/// `jacobian(x, r(x))`, inside the box `lower ≤ x ≤ upper`. Steps solve
/// (JᵀJ + λD)δ = −Jᵀr over the coordinates not pinned at a bound, with D the
/// diagonal of JᵀJ floored at 1% of its largest entry so poorly constrained
/// coordinates do not wander. λ is raised until no coordinate moves more
/// than `max_step`; steps are accepted only if f decreases.
pub fn gauss_newton<E>(
    x0: &[f64],
    lower: &[f64],
    upper: &[f64],
    mut residuals: impl FnMut(&[f64]) -> Result<Vec<f64>, E>,
    mut jacobian: impl FnMut(&[f64], &[f64]) -> Result<DMatrix<f64>, E>,
    opts: &GaussNewtonOptions,
) -> Result<Minimum, E> {
    let n = x0.len();
    assert!(
        lower.len() == n && upper.len() == n,
        "bounds must match the parameter count"
    );
    let clamp = |v: DVector<f64>| DVector::from_fn(n, |i, _| v[i].clamp(lower[i], upper[i]));
    let mut x = clamp(DVector::from_column_slice(x0));
    let mut r = DVector::from_vec(residuals(x.as_slice())?);
    let mut f = r.norm_squared();
    let mut evaluations = 1;
    let mut lambda = 1e-3;
    let mut history = vec![f];
    let mut iterations = 0;
    let mut converged = false;
    let mut grad_norm = f64::INFINITY;

    while iterations < opts.max_iterations {
        if f <= opts.f_floor {
            converged = true;
            break;
        }
        iterations += 1;
        let jac = jacobian(x.as_slice(), r.as_slice())?;
        evaluations += n;
        let g = 2.0 * jac.transpose() * &r;
        let free: Vec<usize> = (0..n)
            .filter(|&i| !((x[i] <= lower[i] && g[i] > 0.0) || (x[i] >= upper[i] && g[i] < 0.0)))
            .collect();
        grad_norm = free.iter().map(|&i| g[i].abs()).fold(0.0, f64::max);
        if grad_norm <= opts.g_tol * f {
            converged = true;
            break;
        }
        let jf = jac.select_columns(&free);
        let jtj = jf.transpose() * &jf;
        let jtr = jf.transpose() * &r;
        let m = free.len();
        let floor = 1e-2 * (0..m).map(|i| jtj[(i, i)]).fold(0.0, f64::max);
        let mut improved = false;
        for _ in 0..60 {
            let mut a = jtj.clone();
            for i in 0..m {
                a[(i, i)] += lambda * jtj[(i, i)].max(floor);
            }
            let Some(reduced) = a.cholesky().map(|c| c.solve(&(-&jtr))) else {
                lambda *= 10.0;
                continue;
            };
            // trust region: damp harder rather than shrink the step
            if !(reduced.amax() <= opts.max_step) {
                lambda *= 10.0;
                continue;
            }
            let mut step = DVector::zeros(n);
            for (k, &i) in free.iter().enumerate() {
                step[i] = reduced[k];
            }
            let xn = clamp(&x + &step);
            let rn = DVector::from_vec(residuals(xn.as_slice())?);
            evaluations += 1;
            let fn_ = rn.norm_squared();
            if fn_.is_finite() && fn_ < f {
                let small_drop = f - fn_ <= opts.f_tol * f;
                x = xn;
                r = rn;
                f = fn_;
                lambda = (lambda * 0.3).max(1e-12);
                improved = true;
                history.push(f);
                converged = small_drop;
                break;
            }
            lambda *= 10.0;
        }
        // no decrease even along a tiny gradient step: stationary to within
        // the resolution of the Jacobian
        if !improved || converged {
            converged = true;
            break;
        }
    }
    Ok(Minimum {
        x: x.as_slice().to_vec(),
        f,
        iterations,
        evaluations,
        converged,
        gradient_norm: grad_norm,
        history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::convert::Infallible;

    fn rosenbrock(x: &[f64]) -> Result<f64, Infallible> {
        Ok((1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2))
    }

    #[test]
    fn bfgs_finds_rosenbrock_minimum() {
        let opts = BfgsOptions {
            f_tol: 0.0,
            g_tol: 1e-9,
            max_iterations: 500,
            ..Default::default()
        };
        let grad = |x: &[f64], _f: f64| -> Result<Vec<f64>, Infallible> {
            Ok(vec![
                -2.0 * (1.0 - x[0]) - 400.0 * x[0] * (x[1] - x[0] * x[0]),
                200.0 * (x[1] - x[0] * x[0]),
            ])
        };
        let m = bfgs(&[-1.2, 1.0], rosenbrock, grad, &opts).unwrap();
        assert!(m.converged);
        assert!((m.x[0] - 1.0).abs() < 1e-6 && (m.x[1] - 1.0).abs() < 1e-6, "{:?}", m.x);
        assert!(m.history.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn bfgs_with_forward_differences() {
        let quad = |x: &[f64]| -> Result<f64, Infallible> {
            Ok((x[0] - 3.0).powi(2) + 4.0 * (x[1] + 1.0).powi(2) + x[0] * x[1])
        };
        let m = bfgs(
            &[0.0, 0.0],
            quad,
            |x, f| forward_gradient(x, f, 1e-7, quad),
            &BfgsOptions::default(),
        )
        .unwrap();
        // minimum of the quadratic: [2 1; 1 8] x = [6; -8]
        let det = 15.0;
        let (xs, ys) = ((6.0 * 8.0 + 8.0) / det, (2.0 * -8.0 - 6.0) / det);
        assert!((m.x[0] - xs).abs() < 1e-4 && (m.x[1] - ys).abs() < 1e-4, "{:?}", m.x);
    }

    #[test]
    fn nelder_mead_finds_rosenbrock_minimum() {
        let opts = NelderMeadOptions {
            max_evaluations: 2000,
            x_tol: 1e-8,
            f_tol: 1e-10,
            ..Default::default()
        };
        let m = nelder_mead(&[-1.2, 1.0], rosenbrock, &opts).unwrap();
        assert!(m.converged);
        assert!((m.x[0] - 1.0).abs() < 1e-4 && (m.x[1] - 1.0).abs() < 1e-4, "{:?}", m.x);
    }

    #[test]
    fn brent_finds_parabola_and_cosine_minima() {
        let m = brent_minimize(-3.0, 5.0, |x| Ok::<_, Infallible>((x - 1.25).powi(2) + 2.0), 1e-10, 100).unwrap();
        assert!(m.converged && (m.x[0] - 1.25).abs() < 1e-8);
        let m = brent_minimize(2.0, 4.5, |x: f64| Ok::<_, Infallible>(x.cos()), 1e-10, 100).unwrap();
        assert!((m.x[0] - std::f64::consts::PI).abs() < 1e-7);
    }

    #[test]
    fn levenberg_marquardt_fits_exponential() {
        let t: Vec<f64> = (0..20).map(|i| i as f64 * 0.25).collect();
        let y: Vec<f64> = t.iter().map(|t| 2.5 * (-0.7 * t).exp() + 0.3).collect();
        let res = |p: &[f64]| -> Result<Vec<f64>, Infallible> {
            Ok(t.iter()
                .zip(&y)
                .map(|(t, y)| p[0] * (-p[1] * t).exp() + p[2] - y)
                .collect())
        };
        let m = levenberg_marquardt(&[1.0, 0.1, 0.0], res, &LmOptions::default()).unwrap();
        assert!(m.converged);
        for (got, want) in m.x.iter().zip([2.5, 0.7, 0.3]) {
            assert!((got - want).abs() < 1e-8, "{:?}", m.x);
        }
    }

    #[test]
    fn gauss_newton_with_analytic_jacobian_is_monotone() {
        let t: Vec<f64> = (0..20).map(|i| i as f64 * 0.25).collect();
        let y: Vec<f64> = t.iter().map(|t| 2.5 * (-0.7 * t).exp() + 0.3).collect();
        let res = |p: &[f64]| -> Result<Vec<f64>, Infallible> {
            Ok(t.iter()
                .zip(&y)
                .map(|(t, y)| p[0] * (-p[1] * t).exp() + p[2] - y)
                .collect())
        };
        let jac = |p: &[f64], _: &[f64]| -> Result<DMatrix<f64>, Infallible> {
            Ok(DMatrix::from_fn(t.len(), 3, |i, j| match j {
                0 => (-p[1] * t[i]).exp(),
                1 => -p[0] * t[i] * (-p[1] * t[i]).exp(),
                _ => 1.0,
            }))
        };
        let m = gauss_newton(
            &[1.0, 0.1, 0.0],
            &[f64::NEG_INFINITY; 3],
            &[f64::INFINITY; 3],
            res,
            jac,
            &GaussNewtonOptions::default(),
        )
        .unwrap();
        assert!(m.converged);
        assert!(m.history.windows(2).all(|w| w[1] < w[0]));
        for (got, want) in m.x.iter().zip([2.5, 0.7, 0.3]) {
            assert!((got - want).abs() < 1e-8, "{:?}", m.x);
        }
    }

    #[test]
    fn gauss_newton_respects_bounds() {
        // minimum of (x − 3)² + (y + 1)² restricted to x ≤ 2, y ≥ 0
        let res = |p: &[f64]| -> Result<Vec<f64>, Infallible> { Ok(vec![p[0] - 3.0, p[1] + 1.0]) };
        let jac = |_: &[f64], _: &[f64]| -> Result<DMatrix<f64>, Infallible> { Ok(DMatrix::identity(2, 2)) };
        let m = gauss_newton(
            &[0.0, 1.0],
            &[-10.0, 0.0],
            &[2.0, 10.0],
            res,
            jac,
            &GaussNewtonOptions::default(),
        )
        .unwrap();
        assert!(m.converged);
        assert_eq!(m.x, vec![2.0, 0.0]);
        assert!((m.f - 2.0).abs() < 1e-12);
    }
}

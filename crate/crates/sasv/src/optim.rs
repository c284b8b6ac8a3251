//! Dense BFGS minimizer with a strong-Wolfe line search.
//!
//! Small fixed-dimension unconstrained minimization for the calibration fit.
//! Fully deterministic: no randomness, sequential arithmetic, and a fixed
//! evaluation order, so identical inputs give bit-identical results.

use thiserror::Error;

/// Sufficient-decrease constant of the Wolfe conditions.
const WOLFE_C1: f64 = 1e-4;
/// Curvature constant of the strong Wolfe conditions.
const WOLFE_C2: f64 = 0.9;
/// Cap on the bracketing step length.
const MAX_STEP: f64 = 1e6;
/// Iteration caps for bracketing and zooming inside one line search.
const MAX_BRACKET_ITERS: usize = 40;
const MAX_ZOOM_ITERS: usize = 60;

#[derive(Debug, Error)]
pub enum OptimError {
    #[error("objective is non-finite at the starting point {x:?}")]
    NonFiniteStart { x: Vec<f64> },
}

/// Stopping parameters for [`minimize`].
#[derive(Debug, Clone, Copy)]
pub struct MinimizeSettings {
    /// Converged when the gradient infinity-norm falls below this.
    pub gradient_tolerance: f64,
    /// Hard cap on accepted quasi-Newton steps.
    pub max_iterations: usize,
}

impl Default for MinimizeSettings {
    fn default() -> Self {
        MinimizeSettings {
            gradient_tolerance: 1e-8,
            max_iterations: 1000,
        }
    }
}

/// Result of a minimization run.
#[derive(Debug, Clone)]
pub struct Minimum<const N: usize> {
    pub x: [f64; N],
    pub value: f64,
    pub initial_value: f64,
    /// Gradient infinity-norm at the final iterate.
    pub gradient_norm: f64,
    /// Number of accepted quasi-Newton steps.
    pub iterations: usize,
    pub converged: bool,
    /// Objective value at the start and after every accepted step.
    pub trace: Vec<f64>,
}

fn dot<const N: usize>(a: &[f64; N], b: &[f64; N]) -> f64 {
    let mut sum = 0.0;
    for i in 0..N {
        sum += a[i] * b[i];
    }
    sum
}

fn inf_norm<const N: usize>(a: &[f64; N]) -> f64 {
    a.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

fn identity<const N: usize>() -> [[f64; N]; N] {
    let mut m = [[0.0; N]; N];
    for (i, row) in m.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    m
}

fn mat_vec<const N: usize>(m: &[[f64; N]; N], v: &[f64; N]) -> [f64; N] {
    let mut out = [0.0; N];
    for i in 0..N {
        out[i] = dot(&m[i], v);
    }
    out
}

/// One point evaluated along the search direction.
#[derive(Clone)]
struct LinePoint<const N: usize> {
    alpha: f64,
    value: f64,
    /// Directional derivative g(x + alpha d) . d; NaN when value is non-finite.
    slope: f64,
    gradient: [f64; N],
    x: [f64; N],
}

/// Minimize `eval` (which returns the objective value and its gradient)
/// starting from `x0` using BFGS with a strong-Wolfe line search.
///
/// The returned value never exceeds the starting value; the trace of accepted
/// objective values is non-increasing by construction of the line search.
pub fn minimize<const N: usize, F>(
    mut eval: F,
    x0: [f64; N],
    settings: &MinimizeSettings,
) -> Result<Minimum<N>, OptimError>
where
    F: FnMut(&[f64; N]) -> (f64, [f64; N]),
{
    let (f0, g0) = eval(&x0);
    if !f0.is_finite() || g0.iter().any(|v| !v.is_finite()) {
        return Err(OptimError::NonFiniteStart { x: x0.to_vec() });
    }

    let mut x = x0;
    let mut f = f0;
    let mut g = g0;
    let mut inverse_hessian = identity::<N>();
    let mut trace = vec![f0];
    let mut iterations = 0;
    let mut converged = inf_norm(&g) < settings.gradient_tolerance;

    while !converged && iterations < settings.max_iterations {
        let mut direction = mat_vec(&inverse_hessian, &g);
        for d in direction.iter_mut() {
            *d = -*d;
        }
        let mut slope0 = dot(&g, &direction);
        if slope0 >= 0.0 {
            // The approximation lost positive definiteness; fall back to
            // steepest descent.
            inverse_hessian = identity::<N>();
            direction = g.map(|v| -v);
            slope0 = dot(&g, &direction);
            if slope0 >= 0.0 {
                break;
            }
        }

        let accepted = match line_search(&mut eval, &x, &direction, f, slope0) {
            Some(p) => p,
            None => break,
        };

        let mut s = [0.0; N];
        let mut y = [0.0; N];
        for i in 0..N {
            s[i] = accepted.x[i] - x[i];
            y[i] = accepted.gradient[i] - g[i];
        }
        let sy = dot(&s, &y);
        if iterations == 0 {
            // Scale the initial inverse Hessian to the first curvature pair.
            let yy = dot(&y, &y);
            if sy > 0.0 && yy > 0.0 {
                let scale = sy / yy;
                inverse_hessian = identity::<N>();
                for (i, row) in inverse_hessian.iter_mut().enumerate() {
                    row[i] = scale;
                }
            }
        }
        if sy > 1e-12 * inf_norm(&s).max(1e-300) * inf_norm(&y).max(1e-300) {
            bfgs_update(&mut inverse_hessian, &s, &y, sy);
        }

        x = accepted.x;
        f = accepted.value;
        g = accepted.gradient;
        iterations += 1;
        trace.push(f);
        converged = inf_norm(&g) < settings.gradient_tolerance;
    }

    Ok(Minimum {
        x,
        value: f,
        initial_value: f0,
        gradient_norm: inf_norm(&g),
        iterations,
        converged,
        trace,
    })
}

/// `H <- (I - rho s y^T) H (I - rho y s^T) + rho s s^T` with `rho = 1/(s.y)`.
fn bfgs_update<const N: usize>(h: &mut [[f64; N]; N], s: &[f64; N], y: &[f64; N], sy: f64) {
    let rho = 1.0 / sy;
    let hy = mat_vec(h, y);
    let yhy = dot(y, &hy);
    for i in 0..N {
        for j in 0..N {
            h[i][j] += -rho * (s[i] * hy[j] + hy[i] * s[j])
                + (rho * rho * yhy + rho) * s[i] * s[j];
        }
    }
}

/// Strong-Wolfe line search: bracket a step, then zoom.
///
/// Non-finite trial values are treated as infinitely bad, which steers the
/// bracket back toward the current iterate.
fn line_search<const N: usize, F>(
    eval: &mut F,
    x: &[f64; N],
    direction: &[f64; N],
    f0: f64,
    slope0: f64,
) -> Option<LinePoint<N>>
where
    F: FnMut(&[f64; N]) -> (f64, [f64; N]),
{
    let mut probe = |alpha: f64| -> LinePoint<N> {
        let mut trial = *x;
        for i in 0..N {
            trial[i] += alpha * direction[i];
        }
        let (value, gradient) = eval(&trial);
        let slope = if value.is_finite() {
            dot(&gradient, direction)
        } else {
            f64::NAN
        };
        LinePoint {
            alpha,
            value: if value.is_finite() { value } else { f64::INFINITY },
            slope,
            gradient,
            x: trial,
        }
    };

    let mut prev = LinePoint {
        alpha: 0.0,
        value: f0,
        slope: slope0,
        gradient: [0.0; N],
        x: *x,
    };
    let mut alpha = 1.0;

    for iter in 0..MAX_BRACKET_ITERS {
        let point = probe(alpha);
        let armijo = f0 + WOLFE_C1 * point.alpha * slope0;
        if point.value > armijo || (iter > 0 && point.value >= prev.value) {
            return zoom(&mut probe, f0, slope0, prev, point);
        }
        if point.slope.abs() <= -WOLFE_C2 * slope0 {
            return Some(point);
        }
        if point.slope >= 0.0 {
            return zoom(&mut probe, f0, slope0, point.clone(), prev);
        }
        if alpha >= MAX_STEP {
            return Some(point);
        }
        prev = point;
        alpha = (alpha * 2.0).min(MAX_STEP);
    }
    None
}

/// Shrink the bracket `[lo, hi]` until the strong Wolfe conditions hold at an
/// interior point. `lo` always satisfies the sufficient-decrease condition.
fn zoom<const N: usize, F>(
    probe: &mut F,
    f0: f64,
    slope0: f64,
    mut lo: LinePoint<N>,
    mut hi: LinePoint<N>,
) -> Option<LinePoint<N>>
where
    F: FnMut(f64) -> LinePoint<N>,
{
    for _ in 0..MAX_ZOOM_ITERS {
        let span = (hi.alpha - lo.alpha).abs();
        if span < 1e-16 * (1.0 + lo.alpha.abs()) {
            break;
        }
        let alpha = interpolate(&lo, &hi);
        let point = probe(alpha);
        let armijo = f0 + WOLFE_C1 * point.alpha * slope0;
        if point.value > armijo || point.value >= lo.value {
            hi = point;
        } else {
            if point.slope.abs() <= -WOLFE_C2 * slope0 {
                return Some(point);
            }
            if point.slope * (hi.alpha - lo.alpha) >= 0.0 {
                hi = lo.clone();
            }
            lo = point;
        }
    }
    // Accept the best sufficient-decrease point even if the curvature
    // condition never held; it still strictly improves the objective.
    if lo.alpha > 0.0 && lo.value < f0 {
        return Some(lo);
    }
    None
}

/// Quadratic interpolation inside the bracket, safeguarded by bisection.
fn interpolate<const N: usize>(lo: &LinePoint<N>, hi: &LinePoint<N>) -> f64 {
    let midpoint = lo.alpha + 0.5 * (hi.alpha - lo.alpha);
    if !lo.slope.is_finite() || !hi.value.is_finite() {
        return midpoint;
    }
    let delta = hi.alpha - lo.alpha;
    let denom = hi.value - lo.value - lo.slope * delta;
    if denom.abs() < 1e-300 {
        return midpoint;
    }
    let alpha = lo.alpha - 0.5 * lo.slope * delta * delta / denom;
    let (low, high) = if lo.alpha < hi.alpha {
        (lo.alpha, hi.alpha)
    } else {
        (hi.alpha, lo.alpha)
    };
    let margin = 0.1 * (high - low);
    if !alpha.is_finite() || alpha < low + margin || alpha > high - margin {
        midpoint
    } else {
        alpha
    }
}

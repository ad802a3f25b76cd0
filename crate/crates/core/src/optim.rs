//! Unconstrained BFGS with a strong-Wolfe line search.
//!
//! Constraints are the caller's business (the QML fit reparameterizes its
//! feasible set onto all of ℝ^d before calling in here).

#[derive(Debug, Clone, Copy)]
pub struct BfgsOptions {
    pub max_iterations: usize,
    /// Stop once `‖∇f‖∞` falls to this level.
    pub gradient_tolerance: f64,
    /// Stop after this many consecutive iterations with relative decrease
    /// below machine precision.
    pub stall_iterations: usize,
}

impl Default for BfgsOptions {
    fn default() -> Self {
        BfgsOptions {
            max_iterations: 500,
            gradient_tolerance: 1e-10,
            stall_iterations: 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    Gradient,
    Stalled,
    MaxIterations,
}

#[derive(Debug, Clone)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub gradient: Vec<f64>,
    pub iterations: usize,
    pub termination: Termination,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

/// Minimizes `f`, which returns the value and gradient at a point. A
/// non-finite value marks the point as infeasible; the line search backs off.
pub fn minimize<F>(mut f: F, x0: &[f64], opts: &BfgsOptions) -> Minimum
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    let d = x0.len();
    let mut x = x0.to_vec();
    let (mut fx, mut g) = f(&x);
    let mut h = identity(d);
    let mut stalled = 0;

    for iter in 0..opts.max_iterations {
        if inf_norm(&g) <= opts.gradient_tolerance {
            return done(x, fx, g, iter, Termination::Gradient);
        }
        let mut dir: Vec<f64> = (0..d).map(|i| -dot(&h[i * d..(i + 1) * d], &g)).collect();
        let mut slope = dot(&dir, &g);
        if !(slope < 0.0) {
            // Lost positive definiteness; restart along steepest descent.
            h = identity(d);
            dir = g.iter().map(|v| -v).collect();
            slope = dot(&dir, &g);
        }
        let initial_step = if iter == 0 { (1.0 / inf_norm(&g)).min(1.0) } else { 1.0 };
        let Some((step, fnew, gnew)) = line_search(&mut f, &x, fx, slope, &dir, initial_step)
        else {
            return done(x, fx, g, iter, Termination::Stalled);
        };

        let s: Vec<f64> = dir.iter().map(|v| v * step).collect();
        let y: Vec<f64> = gnew.iter().zip(&g).map(|(a, b)| a - b).collect();
        let xnew: Vec<f64> = x.iter().zip(&s).map(|(a, b)| a + b).collect();

        if fx - fnew <= f64::EPSILON * fx.abs().max(1.0) {
            stalled += 1;
        } else {
            stalled = 0;
        }

        let sy = dot(&s, &y);
        if sy > 1e-300 {
            if iter == 0 {
                // Scale the initial inverse Hessian by the observed curvature.
                let scale = sy / dot(&y, &y);
                h.iter_mut().for_each(|v| *v *= scale);
            }
            bfgs_update(&mut h, &s, &y, sy);
        }
        x = xnew;
        fx = fnew;
        g = gnew;
        if stalled >= opts.stall_iterations {
            return done(x, fx, g, iter + 1, Termination::Stalled);
        }
    }
    let iterations = opts.max_iterations;
    let termination = if inf_norm(&g) <= opts.gradient_tolerance {
        Termination::Gradient
    } else {
        Termination::MaxIterations
    };
    done(x, fx, g, iterations, termination)
}

fn done(x: Vec<f64>, value: f64, gradient: Vec<f64>, iterations: usize, termination: Termination) -> Minimum {
    Minimum {
        x,
        value,
        gradient,
        iterations,
        termination,
    }
}

fn identity(d: usize) -> Vec<f64> {
    let mut h = vec![0.0; d * d];
    for i in 0..d {
        h[i * d + i] = 1.0;
    }
    h
}

/// `H ← (I - ρ s yᵀ) H (I - ρ y sᵀ) + ρ s sᵀ`
fn bfgs_update(h: &mut [f64], s: &[f64], y: &[f64], sy: f64) {
    let d = s.len();
    let rho = 1.0 / sy;
    let hy: Vec<f64> = (0..d).map(|i| dot(&h[i * d..(i + 1) * d], y)).collect();
    let yhy = dot(y, &hy);
    for i in 0..d {
        for j in 0..d {
            h[i * d + j] += -rho * (hy[i] * s[j] + s[i] * hy[j]) + (rho * rho * yhy + rho) * s[i] * s[j];
        }
    }
}

const C1: f64 = 1e-4;
const C2: f64 = 0.9;

#[allow(clippy::type_complexity)]
fn line_search<F>(
    f: &mut F,
    x: &[f64],
    f0: f64,
    slope0: f64,
    dir: &[f64],
    initial: f64,
) -> Option<(f64, f64, Vec<f64>)>
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    let eval = |f: &mut F, a: f64| {
        let xa: Vec<f64> = x.iter().zip(dir).map(|(xi, di)| xi + a * di).collect();
        let (v, g) = f(&xa);
        let slope = dot(&g, dir);
        (v, g, slope)
    };

    let mut lo = 0.0;
    let mut f_lo = f0;
    let mut slope_lo = slope0;
    let mut a = initial;
    let mut best: Option<(f64, f64, Vec<f64>)> = None;

    for _ in 0..40 {
        let (fa, ga, slope_a) = eval(f, a);
        if !fa.is_finite() {
            a = lo + 0.25 * (a - lo);
            continue;
        }
        if fa < f0 && best.as_ref().is_none_or(|b| fa < b.1) {
            best = Some((a, fa, ga.clone()));
        }
        if fa > f0 + C1 * a * slope0 || (lo > 0.0 && fa >= f_lo) {
            return zoom(f, &eval, f0, slope0, lo, f_lo, slope_lo, a, fa).or(best);
        }
        if slope_a.abs() <= -C2 * slope0 {
            return Some((a, fa, ga));
        }
        if slope_a >= 0.0 {
            return zoom(f, &eval, f0, slope0, a, fa, slope_a, lo, f_lo).or(best);
        }
        lo = a;
        f_lo = fa;
        slope_lo = slope_a;
        a *= 2.0;
    }
    best
}

#[allow(clippy::too_many_arguments)]
fn zoom<F, E>(
    f: &mut F,
    eval: &E,
    f0: f64,
    slope0: f64,
    mut lo: f64,
    mut f_lo: f64,
    mut slope_lo: f64,
    mut hi: f64,
    mut f_hi: f64,
) -> Option<(f64, f64, Vec<f64>)>
where
    E: Fn(&mut F, f64) -> (f64, Vec<f64>, f64),
{
    let mut best: Option<(f64, f64, Vec<f64>)> = None;
    for _ in 0..60 {
        // Quadratic interpolation from the low end, safeguarded to the interior.
        let width = hi - lo;
        let denom = 2.0 * (f_hi - f_lo - slope_lo * width);
        let mut a = if denom.is_finite() && denom > 0.0 {
            lo - slope_lo * width * width / denom
        } else {
            lo + 0.5 * width
        };
        let (a_min, a_max) = if lo < hi { (lo, hi) } else { (hi, lo) };
        let margin = 0.1 * (a_max - a_min);
        if !(a > a_min + margin && a < a_max - margin) {
            a = 0.5 * (lo + hi);
        }
        let (fa, ga, slope_a) = eval(f, a);
        if !fa.is_finite() {
            hi = a;
            f_hi = f64::INFINITY;
            continue;
        }
        if fa < f0 && best.as_ref().is_none_or(|b| fa < b.1) {
            best = Some((a, fa, ga.clone()));
        }
        if fa > f0 + C1 * a * slope0 || fa >= f_lo {
            hi = a;
            f_hi = fa;
        } else {
            if slope_a.abs() <= -C2 * slope0 {
                return Some((a, fa, ga));
            }
            if slope_a * (hi - lo) >= 0.0 {
                hi = lo;
                f_hi = f_lo;
            }
            lo = a;
            f_lo = fa;
            slope_lo = slope_a;
        }
        if (hi - lo).abs() < 1e-16 * lo.abs().max(1e-16) {
            break;
        }
    }
    best
}

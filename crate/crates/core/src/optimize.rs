//! Unconstrained smooth minimisation: BFGS with Armijo backtracking,
//! followed by a few Newton steps on a finite-difference Hessian of the
//! analytic gradient.

use nalgebra::{DMatrix, DVector};

use crate::error::Result;
use crate::linalg;

#[derive(Debug, Clone, Copy)]
pub struct MinimizeSettings {
    pub max_iterations: usize,
    /// Stop when `‖∇f‖_∞ ≤ grad_tol · max(1, |f|)`.
    pub grad_tol: f64,
    pub newton_steps: usize,
}

impl Default for MinimizeSettings {
    fn default() -> Self {
        Self { max_iterations: 500, grad_tol: 1e-10, newton_steps: 20 }
    }
}

#[derive(Debug, Clone)]
pub struct Minimum {
    pub x: DVector<f64>,
    pub value: f64,
    pub gradient: DVector<f64>,
    pub iterations: usize,
}

/// Minimises `f`, which returns value and gradient. Errors from `f` at trial
/// points are treated as `+∞` by the line search; an error at `x0` is
/// returned.
pub fn minimize<F>(mut f: F, x0: DVector<f64>, settings: MinimizeSettings) -> Result<Minimum>
where
    F: FnMut(&DVector<f64>) -> Result<(f64, DVector<f64>)>,
{
    let d = x0.len();
    let (mut fx, mut g) = f(&x0)?;
    let mut x = x0;
    if d == 0 {
        return Ok(Minimum { x, value: fx, gradient: g, iterations: 0 });
    }
    let done = |fx: f64, g: &DVector<f64>| g.amax() <= settings.grad_tol * fx.abs().max(1.0);

    let mut hinv = DMatrix::<f64>::identity(d, d);
    let mut first = true;
    let mut stalled = 0;
    let mut iterations = 0;
    while iterations < settings.max_iterations && !done(fx, &g) {
        iterations += 1;
        let mut dir = -(&hinv * &g);
        let mut slope = g.dot(&dir);
        if slope >= 0.0 {
            hinv = DMatrix::identity(d, d);
            dir = -g.clone();
            slope = g.dot(&dir);
        }
        if first {
            // keep the first trial step at unit length
            let norm = dir.norm();
            if norm > 1.0 {
                dir /= norm;
                slope /= norm;
            }
        }
        let Some((x_new, f_new, g_new)) = line_search(&mut f, &x, fx, &dir, slope) else {
            if first {
                break;
            }
            // restart from steepest descent once before giving up
            hinv = DMatrix::identity(d, d);
            first = true;
            continue;
        };
        let s = &x_new - &x;
        let y = &g_new - &g;
        let sy = s.dot(&y);
        if sy > 1e-14 * s.norm() * y.norm() {
            if first {
                hinv *= sy / y.norm_squared();
            }
            let rho = 1.0 / sy;
            let hy = &hinv * &y;
            let yhy = y.dot(&hy);
            // H+ = H − ρ(s yᵀH + H y sᵀ) + (ρ² yᵀHy + ρ) s sᵀ
            hinv += (&s * s.transpose()) * (rho * rho * yhy + rho) - (&s * hy.transpose() + &hy * s.transpose()) * rho;
        }
        first = false;
        // round-off level progress: leave the rest to the Newton polish
        stalled = if fx - f_new <= 1e-14 * fx.abs().max(1.0) { stalled + 1 } else { 0 };
        x = x_new;
        fx = f_new;
        g = g_new;
        if stalled >= 3 {
            break;
        }
    }

    for _ in 0..settings.newton_steps {
        if done(fx, &g) {
            break;
        }
        let Some((x_new, f_new, g_new)) = newton_step(&mut f, &x, fx, &g) else {
            break;
        };
        iterations += 1;
        x = x_new;
        fx = f_new;
        g = g_new;
    }

    Ok(Minimum { x, value: fx, gradient: g, iterations })
}

type Trial = (DVector<f64>, f64, DVector<f64>);

fn line_search<F>(f: &mut F, x: &DVector<f64>, fx: f64, dir: &DVector<f64>, slope: f64) -> Option<Trial>
where
    F: FnMut(&DVector<f64>) -> Result<(f64, DVector<f64>)>,
{
    let mut t = 1.0;
    for _ in 0..60 {
        let trial = x + dir * t;
        if let Ok((ft, gt)) = f(&trial) {
            if ft.is_finite() && gt.iter().all(|v| v.is_finite()) && ft <= fx + 1e-4 * t * slope {
                return Some((trial, ft, gt));
            }
        }
        t *= 0.5;
    }
    None
}

/// One damped Newton step; accepted when it lowers the gradient norm without
/// raising the value beyond round-off.
fn newton_step<F>(
    f: &mut F,
    x: &DVector<f64>,
    fx: f64,
    g: &DVector<f64>,
) -> Option<(DVector<f64>, f64, DVector<f64>)>
where
    F: FnMut(&DVector<f64>) -> Result<(f64, DVector<f64>)>,
{
    let d = x.len();
    let mut h = DMatrix::zeros(d, d);
    for k in 0..d {
        let step = 1e-6 * x[k].abs().max(1.0);
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[k] += step;
        xm[k] -= step;
        let gp = f(&xp).ok()?.1;
        let gm = f(&xm).ok()?.1;
        h.set_column(k, &((gp - gm) / (2.0 * step)));
    }
    let h = linalg::symmetrize(&h);
    let (values, vectors) = linalg::sorted_eigen(&h);
    let vmax = values.amax();
    if vmax == 0.0 || !vmax.is_finite() {
        return None;
    }
    // modified Newton: flip and floor eigenvalues so the step is a descent direction
    let inv_vals = values.map(|v| 1.0 / v.abs().max(1e-10 * vmax));
    let dir = -(&vectors * DMatrix::from_diagonal(&inv_vals) * vectors.transpose() * g);
    let gnorm = g.amax();
    let tol = 1e-12 * fx.abs().max(1.0);
    let mut t = 1.0;
    for _ in 0..30 {
        let trial = x + &dir * t;
        if let Ok((ft, gt)) = f(&trial) {
            if ft.is_finite() && ft <= fx + tol && gt.amax() < gnorm {
                return Some((trial, ft, gt));
            }
        }
        t *= 0.5;
    }
    None
}

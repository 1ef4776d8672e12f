//! Oracles shared by the integration and acceptance tests. Nothing here
//! calls into the library's numerical routines.

#![allow(dead_code, clippy::needless_range_loop)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Intercept plus `p − 1` standard normal covariates.
pub fn random_design(n: usize, p: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    DMatrix::from_fn(n, p, |_, j| if j == 0 { 1.0 } else { rng.sample::<f64, _>(StandardNormal) })
}

/// Seven-point design with an intercept, used by the influence-function toys.
pub fn toy_design() -> DMatrix<f64> {
    DMatrix::from_row_slice(7, 2, &[1.0, -1.2, 1.0, -0.3, 1.0, 0.4, 1.0, 0.9, 1.0, 1.7, 1.0, 2.2, 1.0, 3.0])
}

/// Contamination points at moderate offsets from the fitted means.
pub fn toy_points(x: &DMatrix<f64>, beta: &[f64]) -> Vec<f64> {
    let fitted = x * DVector::from_column_slice(beta);
    let offsets = [0.8, -1.5, 2.4, 0.1, -0.7, 3.3, -2.0];
    fitted.iter().zip(offsets).map(|(f, o)| f + o).collect()
}

pub fn normal_vector(n: usize, sd: f64, rng: &mut ChaCha8Rng) -> DVector<f64> {
    DVector::from_fn(n, |_, _| sd * rng.sample::<f64, _>(StandardNormal))
}

/// Least squares by QR: coefficients and residual sum of squares.
pub fn ols(x: &DMatrix<f64>, y: &DVector<f64>) -> (DVector<f64>, f64) {
    let qr = x.clone().qr();
    let qty = qr.q().transpose() * y;
    let beta = qr.r().solve_upper_triangular(&qty).expect("full rank");
    let rss = (y - x * &beta).norm_squared();
    (beta, rss)
}

/// `n log(RSS0/RSS1)` for `H0: β_(1..r) = l0`.
pub fn lrt_first_components(x: &DMatrix<f64>, y: &DVector<f64>, l0: &[f64]) -> f64 {
    let n = x.nrows();
    let p = x.ncols();
    let r = l0.len();
    let (_, rss1) = ols(x, y);
    let offset = x.columns(0, r) * DVector::from_column_slice(l0);
    let y0 = y - offset;
    let rss0 = if r == p { y0.norm_squared() } else { ols(&x.columns(r, p - r).clone_owned(), &y0).1 };
    n as f64 * (rss0 / rss1).ln()
}

/// Composite Simpson rule with `m` (even) panels.
pub fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, m: usize) -> f64 {
    let h = (b - a) / m as f64;
    let mut s = f(a) + f(b);
    for k in 1..m {
        let w = if k % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + h * k as f64);
    }
    s * h / 3.0
}

fn npdf(y: f64, mu: f64, s: f64) -> f64 {
    (-(y - mu) * (y - mu) / (2.0 * s * s)).exp() / (s * (2.0 * std::f64::consts::PI).sqrt())
}

/// Score of `N(xᵀβ, σ²)` in `(β, σ)`.
fn score(x: &[f64], beta: &[f64], sigma: f64, y: f64) -> Vec<f64> {
    let mu: f64 = x.iter().zip(beta).map(|(a, b)| a * b).sum();
    let r = y - mu;
    let mut u: Vec<f64> = x.iter().map(|xi| xi * r / (sigma * sigma)).collect();
    u.push((r * r / (sigma * sigma) - 1.0) / sigma);
    u
}

/// Left-hand side of the DPD estimating equations of the regression model
/// under `G_i = (1 − ε) F_i(θ0) + ε δ_{t_i}` (contaminated directions only).
fn estimating_equations(
    x: &DMatrix<f64>,
    theta: &[f64],
    theta0: &[f64],
    t: &[f64],
    dirs: &[usize],
    tau: f64,
    eps: f64,
) -> Vec<f64> {
    let p = x.ncols();
    let (beta, sigma) = (&theta[..p], theta[p]);
    let (beta0, sigma0) = (&theta0[..p], theta0[p]);
    let mut total = vec![0.0; p + 1];
    for i in 0..x.nrows() {
        let xi: Vec<f64> = x.row(i).iter().copied().collect();
        let mu: f64 = xi.iter().zip(beta).map(|(a, b)| a * b).sum();
        let mu0: f64 = xi.iter().zip(beta0).map(|(a, b)| a * b).sum();
        let s = sigma.max(sigma0);
        let (lo, hi) = (mu.min(mu0) - 14.0 * s, mu.max(mu0) + 14.0 * s);
        for j in 0..=p {
            let xi_term = simpson(|y| score(&xi, beta, sigma, y)[j] * npdf(y, mu, sigma).powf(1.0 + tau), lo, hi, 6000);
            let data_term = simpson(
                |y| score(&xi, beta, sigma, y)[j] * npdf(y, mu, sigma).powf(tau) * npdf(y, mu0, sigma0),
                lo,
                hi,
                6000,
            );
            let mut v = xi_term - data_term;
            if dirs.contains(&i) {
                v += eps * data_term - eps * score(&xi, beta, sigma, t[i])[j] * npdf(t[i], mu, sigma).powf(tau);
            }
            total[j] += v;
        }
    }
    total
}

/// MDPDE functional at the contaminated model, with the first `fixed`
/// coefficients held at their `theta0` values (the restricted functional).
pub fn contaminated_functional(
    x: &DMatrix<f64>,
    theta0: &[f64],
    t: &[f64],
    dirs: &[usize],
    tau: f64,
    eps: f64,
    fixed: usize,
) -> Vec<f64> {
    let d = theta0.len();
    let free: Vec<usize> = (fixed..d).collect();
    let mut theta = theta0.to_vec();
    for _ in 0..30 {
        let f = estimating_equations(x, &theta, theta0, t, dirs, tau, eps);
        let fv = DVector::from_iterator(free.len(), free.iter().map(|&j| f[j]));
        if fv.amax() < 1e-14 {
            break;
        }
        let mut jac = DMatrix::zeros(free.len(), free.len());
        for (c, &k) in free.iter().enumerate() {
            let h = 1e-6 * theta[k].abs().max(1.0);
            let mut tp = theta.clone();
            let mut tm = theta.clone();
            tp[k] += h;
            tm[k] -= h;
            let fp = estimating_equations(x, &tp, theta0, t, dirs, tau, eps);
            let fm = estimating_equations(x, &tm, theta0, t, dirs, tau, eps);
            for (rr, &j) in free.iter().enumerate() {
                jac[(rr, c)] = (fp[j] - fm[j]) / (2.0 * h);
            }
        }
        let step = jac.lu().solve(&fv).expect("non-singular Jacobian");
        for (c, &k) in free.iter().enumerate() {
            theta[k] -= step[c];
        }
    }
    theta
}

/// Gateaux derivative of the functional by central differences in ε.
pub fn gateaux_if(x: &DMatrix<f64>, theta0: &[f64], t: &[f64], dirs: &[usize], tau: f64, fixed: usize) -> Vec<f64> {
    let eps = 1e-3;
    let a = contaminated_functional(x, theta0, t, dirs, tau, eps, fixed);
    let b = contaminated_functional(x, theta0, t, dirs, tau, -eps, fixed);
    a.iter().zip(&b).map(|(u, v)| (u - v) / (2.0 * eps)).collect()
}

/// `d_γ(N(μ1, s1²), N(μ2, s2²))` by quadrature, the first argument playing
/// the data role.
pub fn dpd_normal(mu1: f64, s1: f64, mu2: f64, s2: f64, gamma: f64) -> f64 {
    let s = s1.max(s2);
    let (lo, hi) = (mu1.min(mu2) - 14.0 * s, mu1.max(mu2) + 14.0 * s);
    if gamma == 0.0 {
        return simpson(|y| npdf(y, mu1, s1) * (npdf(y, mu1, s1) / npdf(y, mu2, s2)).ln(), lo, hi, 6000);
    }
    simpson(
        |y| {
            let (g, f) = (npdf(y, mu1, s1), npdf(y, mu2, s2));
            f.powf(1.0 + gamma) - (1.0 + 1.0 / gamma) * f.powf(gamma) * g + g.powf(1.0 + gamma) / gamma
        },
        lo,
        hi,
        6000,
    )
}

/// Second-order Gateaux derivative of `Σ_i d_γ(f_i(U_ε), f_i(Ũ_ε))` at
/// `ε = 0`, the restricted functional fixing the first `fixed` coefficients.
pub fn gateaux_if2(
    x: &DMatrix<f64>,
    theta0: &[f64],
    t: &[f64],
    dirs: &[usize],
    tau: f64,
    gamma: f64,
    fixed: usize,
) -> f64 {
    let p = x.ncols();
    let eps = 1e-3;
    let stat = |e: f64| {
        let a = contaminated_functional(x, theta0, t, dirs, tau, e, 0);
        let b = contaminated_functional(x, theta0, t, dirs, tau, e, fixed);
        (0..x.nrows())
            .map(|i| {
                let xi = x.row(i);
                let mu1: f64 = (0..p).map(|j| xi[j] * a[j]).sum();
                let mu2: f64 = (0..p).map(|j| xi[j] * b[j]).sum();
                dpd_normal(mu1, a[p], mu2, b[p], gamma)
            })
            .sum::<f64>()
    };
    // S(0) = 0 and S is smooth, so S(ε) + S(−ε) = ε² S''(0) + O(ε⁴)
    (stat(eps) + stat(-eps)) / (eps * eps)
}

/// Relative error with a floor on the scale.
pub fn rel_err(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / b.abs().max(floor)
}

/// Monte Carlo survival of `Σ_j w_j (Z_j + δ_j)²` at each threshold, with
/// standard errors.
pub fn mc_mixture_survival(weights: &[f64], ncp: &[f64], thresholds: &[f64], draws: usize, seed: u64) -> Vec<(f64, f64)> {
    let mut rng = rng(seed);
    let shifts: Vec<f64> = ncp.iter().map(|d| d.sqrt()).collect();
    let mut counts = vec![0usize; thresholds.len()];
    for _ in 0..draws {
        let q: f64 = weights
            .iter()
            .zip(&shifts)
            .map(|(w, s)| {
                let z = rng.sample::<f64, _>(StandardNormal) + s;
                w * z * z
            })
            .sum();
        for (k, &c) in thresholds.iter().enumerate() {
            if q > c {
                counts[k] += 1;
            }
        }
    }
    counts
        .iter()
        .map(|&c| {
            let p = c as f64 / draws as f64;
            (p, (p * (1.0 - p) / draws as f64).sqrt())
        })
        .collect()
}

/// DPD objective of the regression model, `(1/n) Σ [∫f^{1+τ} − (1 + 1/τ) f(y_i)^τ]`,
/// or the mean negative log-likelihood at `τ = 0`.
pub fn lrm_objective(x: &DMatrix<f64>, y: &DVector<f64>, beta: &[f64], sigma: f64, tau: f64) -> f64 {
    let n = x.nrows();
    let mut total = 0.0;
    for i in 0..n {
        let mu: f64 = (0..x.ncols()).map(|j| x[(i, j)] * beta[j]).sum();
        let f = npdf(y[i], mu, sigma);
        total += if tau == 0.0 {
            -f.ln()
        } else {
            let int = (2.0 * std::f64::consts::PI).powf(-tau / 2.0) * sigma.powf(-tau) / (1.0 + tau).sqrt();
            int - (1.0 + 1.0 / tau) * f.powf(tau)
        };
    }
    total / n as f64
}

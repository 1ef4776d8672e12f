//! Closed-form Gaussian power integrals and the density power divergence
//! between two univariate normals together with its first and second
//! derivatives.

use std::f64::consts::PI;

/// Density of N(mu, sigma^2) at y.
pub fn pdf(y: f64, mu: f64, sigma: f64) -> f64 {
    let z = (y - mu) / sigma;
    (-0.5 * z * z).exp() / ((2.0 * PI).sqrt() * sigma)
}

pub fn ln_pdf(y: f64, mu: f64, sigma: f64) -> f64 {
    let z = (y - mu) / sigma;
    -0.5 * z * z - sigma.ln() - 0.5 * (2.0 * PI).ln()
}

/// `∫ φ(y; μ, σ)^{1+c} dy = (2π)^{-c/2} σ^{-c} (1+c)^{-1/2}`.
pub fn power_integral(sigma: f64, c: f64) -> f64 {
    (2.0 * PI).powf(-0.5 * c) * sigma.powf(-c) / (1.0 + c).sqrt()
}

/// `∫ φ(y; μ_m, σ_m)^c φ(y; μ_d, σ_d) dy`.
pub fn cross_power_integral(mu_model: f64, sigma_model: f64, mu_data: f64, sigma_data: f64, c: f64) -> f64 {
    let s = sigma_model * sigma_model + c * sigma_data * sigma_data;
    let d = mu_data - mu_model;
    (2.0 * PI * sigma_model * sigma_model).powf(-0.5 * c) * sigma_model / s.sqrt() * (-0.5 * c * d * d / s).exp()
}

/// Kullback–Leibler divergence of N(μ_d, σ_d²) from N(μ_m, σ_m²).
pub fn kl(mu_data: f64, sigma_data: f64, mu_model: f64, sigma_model: f64) -> f64 {
    let d = mu_data - mu_model;
    (sigma_model / sigma_data).ln() + (sigma_data * sigma_data + d * d) / (2.0 * sigma_model * sigma_model) - 0.5
}

/// Value, gradient and Hessian of `d_c(φ(·; μ1, a), φ(·; μ2, b))` in the
/// variables `(D, a, b)` with `D = μ1 − μ2`.
#[derive(Debug, Clone, Copy)]
pub struct DpdJet {
    pub value: f64,
    pub grad: [f64; 3],
    pub hess: [[f64; 3]; 3],
}

const D: usize = 0;
const A: usize = 1;
const B: usize = 2;

pub fn dpd_jet(diff: f64, a: f64, b: f64, c: f64) -> DpdJet {
    if c == 0.0 {
        return kl_jet(diff, a, b);
    }
    let mut grad = [0.0; 3];
    let mut hess = [[0.0; 3]; 3];

    let k = (2.0 * PI).powf(-0.5 * c) / (1.0 + c).sqrt();

    // ∫ f2^{1+c}
    let t1 = k * b.powf(-c);
    grad[B] += -c * t1 / b;
    hess[B][B] += c * (c + 1.0) * t1 / (b * b);

    // (1/c) ∫ f1^{1+c}
    let t3 = k * a.powf(-c) / c;
    grad[A] += -c * t3 / a;
    hess[A][A] += c * (c + 1.0) * t3 / (a * a);

    // −(1 + 1/c) ∫ f2^c f1, written as pref · exp(g)
    let s = b * b + c * a * a;
    let (s_a, s_b, s_aa, s_bb) = (2.0 * c * a, 2.0 * b, 2.0 * c, 2.0);
    let g = (1.0 - c) * b.ln() - 0.5 * s.ln() - 0.5 * c * diff * diff / s;
    let t2 = -(1.0 + 1.0 / c) * (2.0 * PI).powf(-0.5 * c) * g.exp();

    let h_s = -0.5 / s + 0.5 * c * diff * diff / (s * s);
    let h_ss = 0.5 / (s * s) - c * diff * diff / (s * s * s);
    let h_d = -c * diff / s;
    let h_dd = -c / s;
    let h_ds = c * diff / (s * s);

    let gg = [h_d, h_s * s_a, (1.0 - c) / b + h_s * s_b];
    let mut gh = [[0.0; 3]; 3];
    gh[D][D] = h_dd;
    gh[D][A] = h_ds * s_a;
    gh[D][B] = h_ds * s_b;
    gh[A][A] = h_ss * s_a * s_a + h_s * s_aa;
    gh[A][B] = h_ss * s_a * s_b;
    gh[B][B] = -(1.0 - c) / (b * b) + h_ss * s_b * s_b + h_s * s_bb;
    gh[A][D] = gh[D][A];
    gh[B][D] = gh[D][B];
    gh[B][A] = gh[A][B];

    for i in 0..3 {
        grad[i] += t2 * gg[i];
        for j in 0..3 {
            hess[i][j] += t2 * (gg[i] * gg[j] + gh[i][j]);
        }
    }

    DpdJet { value: t1 + t2 + t3, grad, hess }
}

fn kl_jet(diff: f64, a: f64, b: f64) -> DpdJet {
    let q = a * a + diff * diff;
    let b2 = b * b;
    let value = (b / a).ln() + q / (2.0 * b2) - 0.5;
    let grad = [diff / b2, -1.0 / a + a / b2, 1.0 / b - q / (b2 * b)];
    let mut hess = [[0.0; 3]; 3];
    hess[D][D] = 1.0 / b2;
    hess[D][B] = -2.0 * diff / (b2 * b);
    hess[A][A] = 1.0 / (a * a) + 1.0 / b2;
    hess[A][B] = -2.0 * a / (b2 * b);
    hess[B][B] = -1.0 / b2 + 3.0 * q / (b2 * b2);
    hess[B][D] = hess[D][B];
    hess[B][A] = hess[A][B];
    DpdJet { value, grad, hess }
}

//! Linear combinations `Q = Σ_j ζ_j χ²_1(δ_j²)` of independent noncentral
//! chi-square variables with one degree of freedom each.
//!
//! Two independent evaluation paths are provided: numerical inversion of the
//! characteristic function (Imhof's integral) and the series
//! `P(Q > x) = Σ_v C_v P(χ²_{r+2v} > x / ζ_min)`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use statrs::function::gamma::{gamma_ur, ln_gamma};

use crate::error::{check_probability, DpdError, Result};
use crate::quadrature::{integrate, QuadSettings};

/// Tail mass below which the series is considered complete.
pub const SERIES_TAIL_TARGET: f64 = 1e-10;
/// Tail mass above which the series is rejected for power computations.
pub const SERIES_TAIL_LIMIT: f64 = 1e-6;
/// Maximum number of series terms.
pub const SERIES_MAX_TERMS: usize = 20_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChiSqMixture {
    pub weights: Vec<f64>,
    pub ncp: Vec<f64>,
}

impl ChiSqMixture {
    pub fn new(weights: Vec<f64>, ncp: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(DpdError::Domain("mixture needs at least one component".into()));
        }
        if weights.len() != ncp.len() {
            return Err(DpdError::Dimension { expected: weights.len(), found: ncp.len() });
        }
        if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
            return Err(DpdError::Domain(format!("mixture weights must be positive, got {w}")));
        }
        if let Some(d) = ncp.iter().find(|d| !(d.is_finite() && **d >= 0.0)) {
            return Err(DpdError::Domain(format!("noncentralities must be non-negative, got {d}")));
        }
        Ok(Self { weights, ncp })
    }

    pub fn central(weights: Vec<f64>) -> Result<Self> {
        let r = weights.len();
        Self::new(weights, vec![0.0; r])
    }

    /// `ζ · χ²_r`.
    pub fn scaled_chi_square(zeta: f64, r: usize) -> Result<Self> {
        Self::central(vec![zeta; r])
    }

    pub fn r(&self) -> usize {
        self.weights.len()
    }

    pub fn scaled(&self, c: f64) -> Result<Self> {
        Self::new(self.weights.iter().map(|w| w * c).collect(), self.ncp.clone())
    }

    pub fn zeta_min(&self) -> f64 {
        self.weights.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn zeta_max(&self) -> f64 {
        self.weights.iter().copied().fold(0.0, f64::max)
    }

    pub fn mean(&self) -> f64 {
        self.weights.iter().zip(&self.ncp).map(|(w, d)| w * (1.0 + d)).sum()
    }

    pub fn variance(&self) -> f64 {
        self.weights.iter().zip(&self.ncp).map(|(w, d)| 2.0 * w * w * (1.0 + 2.0 * d)).sum()
    }

    fn equal_weights(&self) -> bool {
        let (lo, hi) = (self.zeta_min(), self.zeta_max());
        hi - lo <= 1e-14 * hi
    }

    fn is_central(&self) -> bool {
        self.ncp.iter().all(|d| *d == 0.0)
    }
}

/// Coefficients of `P(Q > x) = Σ_v C_v P(χ²_{r+2v} > x/ζ_min)`.
///
/// With `a_j² = 1 − ζ_min/ζ_j` and `b_j² = δ_j² ζ_min/ζ_j` the generating
/// function `Σ C_v w^v = Π_j (ζ_min/ζ_j)^{1/2} (1 − a_j² w)^{-1/2}
/// exp(−δ_j²/2 + (b_j²/2) w / (1 − a_j² w))` yields
/// `C_v = (1/v) Σ_{k=1}^{v} k g_k C_{v−k}`, `g_k = ½ Σ_j (a_j^{2k}/k + b_j² a_j^{2(k−1)})`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesCoefficients {
    pub c: Vec<f64>,
    pub zeta_min: f64,
    pub truncation_v: usize,
    /// `1 − Σ_{v ≤ V} C_v`.
    pub tail_bound: f64,
    pub r: usize,
}

impl SeriesCoefficients {
    /// Whether the series stopped at the term cap before reaching the target tail mass.
    pub fn truncated(&self) -> bool {
        self.tail_bound > SERIES_TAIL_TARGET
    }

    /// `E(Q̃^v) = v! C_v / C_0` for the quadratic form behind the expansion.
    pub fn moment(&self, v: usize) -> Option<f64> {
        let c0 = *self.c.first()?;
        let cv = *self.c.get(v)?;
        if c0 == 0.0 {
            return None;
        }
        Some((ln_gamma(v as f64 + 1.0) + cv.ln() - c0.ln()).exp())
    }
}

pub fn series_coefficients(mix: &ChiSqMixture) -> Result<SeriesCoefficients> {
    let zmin = mix.zeta_min();
    let a2: Vec<f64> = mix.weights.iter().map(|z| (1.0 - zmin / z).max(0.0)).collect();
    let b2: Vec<f64> = mix.weights.iter().zip(&mix.ncp).map(|(z, d)| d * zmin / z).collect();
    let log_c0: f64 = mix.weights.iter().map(|z| 0.5 * (zmin / z).ln()).sum::<f64>()
        - 0.5 * mix.ncp.iter().sum::<f64>();

    // k g_k, computed lazily as the recursion reaches index k
    let mut kg: Vec<f64> = vec![0.0];
    let kg_at = |k: usize| -> f64 {
        let kf = k as f64;
        0.5 * a2
            .iter()
            .zip(&b2)
            .map(|(a, b)| {
                let ak = a.powi(k as i32);
                let ak1 = if k == 1 { 1.0 } else { a.powi(k as i32 - 1) };
                ak + kf * b * ak1
            })
            .sum::<f64>()
    };

    // coefficients carried as scaled[v] · exp(log_scale) to avoid under/overflow
    let mut scaled: Vec<f64> = vec![1.0];
    let mut log_scale = log_c0;
    let mut c = vec![log_c0.exp()];
    let mut total = c[0];
    let mut kg_len = 0usize; // number of non-negligible k g_k values
    let mut v = 0;
    while 1.0 - total > SERIES_TAIL_TARGET && v < SERIES_MAX_TERMS {
        v += 1;
        if kg.len() <= v {
            let val = kg_at(v);
            kg.push(val);
            if val > 0.0 {
                kg_len = v;
            }
        }
        let upper = kg_len.min(v);
        let mut s = 0.0;
        for k in 1..=upper {
            s += kg[k] * scaled[v - k];
        }
        let mut next = s / v as f64;
        if next > 1e250 {
            for x in scaled.iter_mut() {
                *x /= next;
            }
            log_scale += next.ln();
            next = 1.0;
        }
        scaled.push(next);
        let cv = (next.ln() + log_scale).exp();
        c.push(if next > 0.0 { cv } else { 0.0 });
        total += c[v];
    }
    let tail_bound = (1.0 - total).max(0.0);
    Ok(SeriesCoefficients { c, zeta_min: zmin, truncation_v: v, tail_bound, r: mix.r() })
}

/// `P(χ²_{k0 + 2v} > y)` for `v = 0..count`.
pub fn chi_square_survival_ladder(k0: usize, y: f64, count: usize) -> Vec<f64> {
    if y <= 0.0 {
        return vec![1.0; count];
    }
    let half = 0.5 * y;
    let mut out = Vec::with_capacity(count);
    let mut q = gamma_ur(0.5 * k0 as f64, half);
    // log of (y/2)^{k/2} e^{-y/2} / Γ(k/2 + 1)
    let mut k = k0 as f64;
    let mut log_term = 0.5 * k * half.ln() - half - ln_gamma(0.5 * k + 1.0);
    for _ in 0..count {
        out.push(q.min(1.0));
        q += log_term.exp();
        log_term += half.ln() - (0.5 * k + 1.0).ln();
        k += 2.0;
    }
    out
}

/// `Σ_v C_v P(χ²_{r+2v} > s_alpha / ζ_min)`.
pub fn series_power(mix: &ChiSqMixture, s_alpha: f64) -> Result<f64> {
    if !(s_alpha.is_finite() && s_alpha >= 0.0) {
        return Err(DpdError::Domain(format!("threshold must be non-negative, got {s_alpha}")));
    }
    let series = series_coefficients(mix)?;
    series_power_with(&series, s_alpha)
}

/// [`series_power`] for precomputed coefficients.
pub fn series_power_with(series: &SeriesCoefficients, s_alpha: f64) -> Result<f64> {
    if series.tail_bound > SERIES_TAIL_LIMIT {
        return Err(DpdError::SeriesTruncated { tail_bound: series.tail_bound });
    }
    let tails = chi_square_survival_ladder(series.r, s_alpha / series.zeta_min, series.c.len());
    let p: f64 = series.c.iter().zip(&tails).map(|(c, t)| c * t).sum();
    Ok(p.clamp(0.0, 1.0))
}

/// `P(Q > x)` with absolute error of order 1e-8 or better.
///
/// Central mixtures with equal weights use the incomplete gamma function and
/// noncentral equal-weight mixtures the (then Poisson) series; everything
/// else goes through characteristic-function inversion.
pub fn mixture_survival(mix: &ChiSqMixture, x: f64) -> Result<f64> {
    if x.is_nan() {
        return Err(DpdError::Domain("threshold is NaN".into()));
    }
    if x <= 0.0 {
        return Ok(1.0);
    }
    if mix.equal_weights() {
        if mix.is_central() {
            return Ok(gamma_ur(0.5 * mix.r() as f64, 0.5 * x / mix.weights[0]));
        }
        if let Ok(p) = series_power(mix, x) {
            return Ok(p);
        }
    }
    survival_imhof(mix, x)
}

/// `P(Q > x)` by Imhof's inversion integral
/// `½ + (1/π) ∫_0^∞ sin θ(u) / (u ρ(u)) du`, integrated one period of the
/// `x u / 2` phase at a time with Wynn's ε-algorithm on the partial sums.
pub fn survival_imhof(mix: &ChiSqMixture, x: f64) -> Result<f64> {
    if x <= 0.0 {
        return Ok(1.0);
    }
    let lam = &mix.weights;
    let ncp = &mix.ncp;
    let limit0: f64 = 0.5 * lam.iter().zip(ncp).map(|(l, d)| l * (1.0 + d)).sum::<f64>() - 0.5 * x;
    let integrand = |u: f64| -> f64 {
        if u < 1e-300 {
            return limit0;
        }
        let mut theta = -0.5 * x * u;
        let mut log_rho = 0.0;
        for (l, d) in lam.iter().zip(ncp) {
            let lu = l * u;
            let q = 1.0 + lu * lu;
            theta += 0.5 * (lu.atan() + d * lu / q);
            log_rho += 0.25 * q.ln() + 0.5 * d * lu * lu / q;
        }
        theta.sin() / (u * log_rho.exp())
    };

    let settings = QuadSettings { abs_tol: 1e-12, rel_tol: 1e-12, max_subdivisions: 500 };
    let h = 2.0 * PI / x;
    let mut sum = 0.0;
    let mut small_run = 0;
    let mut wynn = Wynn::default();
    let mut estimate = f64::NAN;
    let mut prev_estimate = f64::NAN;
    let max_segments = 20_000;
    for k in 0..max_segments {
        let a = k as f64 * h;
        let piece = integrate(integrand, a, a + h, settings)?;
        sum += piece.value;
        estimate = wynn.push(sum);
        // the integrand envelope beyond a + h bounds what is left
        let envelope = envelope(lam, ncp, a + h);
        if piece.value.abs() < 1e-14 && envelope * h < 1e-13 {
            small_run += 1;
            if small_run >= 3 {
                estimate = sum;
                break;
            }
        } else {
            small_run = 0;
        }
        if k >= 8 && (estimate - prev_estimate).abs() < 1e-13 {
            break;
        }
        prev_estimate = estimate;
        if k + 1 == max_segments {
            return Err(DpdError::Integration { requested: 1e-8, achieved: (estimate - prev_estimate).abs() });
        }
    }
    let p = 0.5 + estimate / PI;
    if !p.is_finite() {
        return Err(DpdError::Integration { requested: 1e-8, achieved: f64::INFINITY });
    }
    Ok(p.clamp(0.0, 1.0))
}

/// Upper bound on `|integrand|` at `u`, i.e. `1 / (u ρ(u))`.
fn envelope(lam: &[f64], ncp: &[f64], u: f64) -> f64 {
    let mut log_rho = 0.0;
    for (l, d) in lam.iter().zip(ncp) {
        let lu = l * u;
        let q = 1.0 + lu * lu;
        log_rho += 0.25 * q.ln() + 0.5 * d * lu * lu / q;
    }
    1.0 / (u * log_rho.exp())
}

/// Wynn's ε-algorithm for accelerating a sequence of partial sums.
#[derive(Default)]
struct Wynn {
    /// Latest anti-diagonal `ε_k^{(n−k)}`, `k = 0, 1, …`.
    diag: Vec<f64>,
}

impl Wynn {
    const MAX_ORDER: usize = 40;

    fn push(&mut self, s: f64) -> f64 {
        let len = (self.diag.len() + 1).min(Self::MAX_ORDER);
        let mut next = Vec::with_capacity(len);
        next.push(s);
        for k in 0..len - 1 {
            let below = if k == 0 { 0.0 } else { self.diag[k - 1] };
            let diff = next[k] - self.diag[k];
            if diff == 0.0 || !diff.is_finite() {
                break;
            }
            next.push(below + 1.0 / diff);
        }
        self.diag = next;
        self.diag
            .iter()
            .enumerate()
            .filter(|(k, v)| k % 2 == 0 && v.is_finite())
            .map(|(_, v)| *v)
            .next_back()
            .unwrap_or(s)
    }
}

/// `s` with `P(Q > s) = alpha`.
pub fn mixture_quantile(mix: &ChiSqMixture, alpha: f64) -> Result<f64> {
    check_probability("alpha", alpha)?;
    // solve on the mixture normalised to unit largest weight so that scaling
    // the weights scales the answer exactly
    let scale = mix.zeta_max();
    let unit = mix.scaled(1.0 / scale)?;
    let surv = |s: f64| mixture_survival(&unit, s);
    let mut lo = 0.0;
    let mut hi = unit.mean() + 10.0 * unit.variance().sqrt() + 1.0;
    let mut tries = 0;
    while surv(hi)? > alpha {
        lo = hi;
        hi *= 2.0;
        tries += 1;
        if tries > 200 {
            return Err(DpdError::Integration { requested: alpha, achieved: f64::INFINITY });
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi || hi - lo <= 1e-14 * hi {
            break;
        }
        if surv(mid)? > alpha {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi) * scale)
}

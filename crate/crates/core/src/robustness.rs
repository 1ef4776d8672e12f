//! Influence functions of the regression estimators and of the test:
//! first-order IFs of the MDPDE and RMDPDE, their difference `D_τ`, the
//! second-order IF of the statistic, and the power and level influence
//! functions.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::chisq_mixture::{
    chi_square_survival_ladder, mixture_quantile, series_coefficients, series_power, ChiSqMixture, SERIES_TAIL_LIMIT,
};
use crate::dpd_test::{lrm_shifted_law, null_distribution_lrm};
use crate::error::{check_nonneg, check_probability, DpdError, Result};
use crate::estimators::{lrm_asymp_variances, restricted_projection};
use crate::inh_model::{a_matrix, lrm_s_gamma, LinearRegression, ParamPoint, Restriction};
use crate::linalg;

/// Contamination points `t = (t_1, …, t_n)`, one per observation index,
/// applied in all directions or only in the listed ones.
#[derive(Debug, Clone, PartialEq)]
pub struct ContaminationPoint {
    pub t: DVector<f64>,
    pub directions: Option<Vec<usize>>,
}

impl ContaminationPoint {
    pub fn new(t: DVector<f64>, n: usize) -> Result<Self> {
        if t.len() != n {
            return Err(DpdError::Dimension { expected: n, found: t.len() });
        }
        if t.iter().any(|v| !v.is_finite()) {
            return Err(DpdError::Domain("contamination points must be finite".into()));
        }
        Ok(Self { t, directions: None })
    }

    /// Contamination only in the given observation indices; the other
    /// entries of `t` are ignored.
    pub fn in_directions(t: DVector<f64>, directions: Vec<usize>) -> Result<Self> {
        let n = t.len();
        if let Some(&i) = directions.iter().find(|&&i| i >= n) {
            return Err(DpdError::Usage(format!("direction {i} out of range for {n} observations")));
        }
        let mut point = Self::new(t, n)?;
        point.directions = Some(directions);
        Ok(point)
    }

    fn active(&self) -> Vec<bool> {
        match &self.directions {
            None => vec![true; self.t.len()],
            Some(dirs) => {
                let mut a = vec![false; self.t.len()];
                for &i in dirs {
                    a[i] = true;
                }
                a
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IfTarget {
    Mdpde,
    Rmdpde,
}

/// An influence function value in θ = (β, σ) coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct IfVector {
    pub value: DVector<f64>,
    pub target: IfTarget,
    pub tau: f64,
}

/// Influence of contamination on the regression estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct LrmInfluence {
    pub beta: DVector<f64>,
    /// IF of the error variance σ².
    pub sigma2: f64,
    /// IF of σ, i.e. `sigma2 / (2σ)`.
    pub sigma: f64,
}

impl LrmInfluence {
    pub fn to_if_vector(&self, target: IfTarget, tau: f64) -> IfVector {
        let p = self.beta.len();
        let mut value = DVector::zeros(p + 1);
        value.rows_mut(0, p).copy_from(&self.beta);
        value[p] = self.sigma;
        IfVector { value, target, tau }
    }
}

/// Residuals `t_i − x_iᵀβ0` and weights `e^{−τ r_i²/(2σ²)}`; both are zero
/// in uncontaminated directions.
struct Residuals {
    r: DVector<f64>,
    w: DVector<f64>,
    active: usize,
}

fn residuals(x: &DMatrix<f64>, theta0: &ParamPoint, t: &ContaminationPoint, tau: f64) -> Result<Residuals> {
    check_nonneg("tau", tau)?;
    let p = x.ncols();
    if theta0.dim() != p + 1 {
        return Err(DpdError::Dimension { expected: p + 1, found: theta0.dim() });
    }
    if t.t.len() != x.nrows() {
        return Err(DpdError::Dimension { expected: x.nrows(), found: t.t.len() });
    }
    let s = theta0.sigma();
    if !(s > 0.0 && s.is_finite()) {
        return Err(DpdError::Domain(format!("sigma must be positive, got {s}")));
    }
    let active = t.active();
    let mut r = &t.t - x * theta0.beta();
    let mut w = r.map(|v| (-tau * v * v / (2.0 * s * s)).exp());
    for (i, &a) in active.iter().enumerate() {
        if !a {
            r[i] = 0.0;
            w[i] = 0.0;
        }
    }
    Ok(Residuals { r, w, active: active.iter().filter(|&&a| a).count() })
}

/// `Σ_i x_i r_i e^{−τ r_i²/(2σ²)}`.
fn weighted_score_sum(x: &DMatrix<f64>, res: &Residuals) -> DVector<f64> {
    x.transpose() * res.r.component_mul(&res.w)
}

/// IF of σ²: `2(1+τ)^{5/2}/(n(2+τ²)) Σ_i (r_i² − σ²) e^{−τr_i²/(2σ²)} + 2τ(1+τ)σ²/(2+τ²)`
/// with all `n` directions contaminated, the constant scaled by `m/n` when
/// only `m` are. It makes each direction's term average to zero under the model.
fn if_sigma2(res: &Residuals, sigma: f64, tau: f64) -> f64 {
    let n = res.r.len() as f64;
    let s2 = sigma * sigma;
    let t2 = tau * tau;
    let sum: f64 = res.r.iter().zip(res.w.iter()).map(|(r, w)| (r * r - s2) * w).sum();
    let share = res.active as f64 / n;
    2.0 * (1.0 + tau).powf(2.5) / (n * (2.0 + t2)) * sum + share * 2.0 * tau * (1.0 + tau) * s2 / (2.0 + t2)
}

/// IFs of the unrestricted MDPDE of `(β, σ)` at `F_θ0`:
/// `IF_β = (1+τ)^{3/2} (XᵀX)⁻¹ Σ_i x_i r_i e^{−τ r_i²/(2σ²)}` with `r_i = t_i − x_iᵀβ0`.
pub fn if_mdpde_lrm(x: &DMatrix<f64>, theta0: &ParamPoint, t: &ContaminationPoint, tau: f64) -> Result<LrmInfluence> {
    let res = residuals(x, theta0, t, tau)?;
    let xtx_inv = linalg::spd_inverse(&(x.transpose() * x), "X^T X")?;
    let beta = xtx_inv * weighted_score_sum(x, &res) * (1.0 + tau).powf(1.5);
    let sigma = theta0.sigma();
    let sigma2 = if_sigma2(&res, sigma, tau);
    Ok(LrmInfluence { beta, sigma2, sigma: sigma2 / (2.0 * sigma) })
}

/// IFs of the restricted MDPDE under a linear hypothesis on β:
/// `IF_β̃ = (1+τ)^{3/2} P̃_nᵀ (XᵀX)⁻¹ Σ_i x_i r_i e^{−τ r_i²/(2σ²)}`; the σ part
/// is the unrestricted one. With the first `r` coefficients fixed the fixed
/// block is exactly zero and the rest is `(X2ᵀX2)⁻¹ Σ_i x_i^{(2)} r_i e^{…}`.
pub fn if_rmdpde_lrm(
    x: &DMatrix<f64>,
    theta0: &ParamPoint,
    t: &ContaminationPoint,
    tau: f64,
    restriction: &Restriction,
) -> Result<LrmInfluence> {
    let res = residuals(x, theta0, t, tau)?;
    let p = x.ncols();
    let c = (1.0 + tau).powf(1.5);
    let sigma = theta0.sigma();
    let sigma2 = if_sigma2(&res, sigma, tau);
    let beta = match restriction {
        Restriction::FirstComponents { l0 } => {
            let r = l0.len();
            if r > p {
                return Err(DpdError::Feasibility(format!("cannot fix {r} of {p} coefficients")));
            }
            let mut out = DVector::zeros(p);
            if r < p {
                let x2 = x.columns(r, p - r).clone_owned();
                let inv = linalg::spd_inverse(&(x2.transpose() * &x2), "X2^T X2")?;
                out.rows_mut(r, p - r).copy_from(&(inv * weighted_score_sum(&x2, &res) * c));
            }
            out
        }
        other => {
            let (l, _) = other
                .linear_form(p)
                .ok_or_else(|| DpdError::Usage("regression IFs need a linear restriction on beta".into()))?;
            let proj = restricted_projection(x, &l)?;
            proj.restricted_cov_factor * weighted_score_sum(x, &res) * c
        }
    };
    Ok(LrmInfluence { beta, sigma2, sigma: sigma2 / (2.0 * sigma) })
}

/// Restricted β-IF through the regularised system
/// `[Ψ1ᵀΨ1 + LLᵀ]⁻¹ Ψ1ᵀ (1/n) Σ_i {u_i⁰(t_i) φ(t_i)^τ − ξ_i⁰}`, where `u⁰` is
/// the β-score projected onto the null space of `Lᵀ` and `Ψ1` the matching
/// information matrix.
pub fn if_rmdpde_lrm_regularized(
    x: &DMatrix<f64>,
    theta0: &ParamPoint,
    t: &ContaminationPoint,
    tau: f64,
    l: &DMatrix<f64>,
) -> Result<DVector<f64>> {
    let res = residuals(x, theta0, t, tau)?;
    let p = x.ncols();
    if l.nrows() != p {
        return Err(DpdError::Dimension { expected: p, found: l.nrows() });
    }
    let n = x.nrows() as f64;
    let s = theta0.sigma();
    let ltl = l.transpose() * l;
    let pi = DMatrix::identity(p, p) - l * linalg::spd_inverse(&ltl, "L^T L")? * l.transpose();
    // β block of (1/n) Σ ∫ u uᵀ φ^{1+τ} and (1/n) Σ u(t_i) φ(t_i)^τ; ξ's β part is zero
    let k = crate::normal::power_integral(s, tau);
    let psi = x.transpose() * x * (k / (s * s * (1.0 + tau) * n));
    let phi_tau = (2.0 * std::f64::consts::PI * s * s).powf(-0.5 * tau);
    let score_sum = weighted_score_sum(x, &res) * (phi_tau / (s * s * n));
    let psi1 = &pi * psi * &pi;
    let system = psi1.transpose() * &psi1 + l * l.transpose();
    let inv = linalg::inverse(&system, "regularised restricted information")?;
    Ok(inv * psi1.transpose() * (&pi * score_sum))
}

/// `D_τ = IF(MDPDE) − IF(RMDPDE)`.
pub fn d_tau_vector(if_mdpde: &IfVector, if_rmdpde: &IfVector) -> Result<DVector<f64>> {
    if if_mdpde.tau != if_rmdpde.tau {
        return Err(DpdError::Usage(format!(
            "influence functions computed at different tau ({} vs {})",
            if_mdpde.tau, if_rmdpde.tau
        )));
    }
    if if_mdpde.value.len() != if_rmdpde.value.len() {
        return Err(DpdError::Dimension { expected: if_mdpde.value.len(), found: if_rmdpde.value.len() });
    }
    Ok(&if_mdpde.value - &if_rmdpde.value)
}

/// `D_τ(t, θ0)` in θ = (β, σ) coordinates for the regression model.
pub fn d_tau_lrm(
    x: &DMatrix<f64>,
    theta0: &ParamPoint,
    t: &ContaminationPoint,
    tau: f64,
    restriction: &Restriction,
) -> Result<DVector<f64>> {
    let a = if_mdpde_lrm(x, theta0, t, tau)?.to_if_vector(IfTarget::Mdpde, tau);
    let b = if_rmdpde_lrm(x, theta0, t, tau, restriction)?.to_if_vector(IfTarget::Rmdpde, tau);
    d_tau_vector(&a, &b)
}

/// Second-order IF of the statistic, `n D_τᵀ A_n^γ(θ0) D_τ`.
pub fn if2_statistic(
    x: &DMatrix<f64>,
    theta0: &ParamPoint,
    t: &ContaminationPoint,
    tau: f64,
    gamma: f64,
    restriction: &Restriction,
) -> Result<f64> {
    check_nonneg("gamma", gamma)?;
    let d = d_tau_lrm(x, theta0, t, tau, restriction)?;
    let model = LinearRegression::new(x.clone())?;
    let a = a_matrix(&model, theta0, gamma)?;
    Ok((x.nrows() as f64 * d.transpose() * a * &d)[0].max(0.0))
}

/// Second-order IF with the first `r` coefficients fixed:
/// `(1+γ) s_γ (1+τ)³ ṽᵀ (XᵀX)_{11.2}⁻¹ ṽ`, `ṽ = Σ_i x̃_i r_i e^{−τ r_i²/(2σ²)}`,
/// where `x̃_i = x_i^{(1)} − X1ᵀX2 (X2ᵀX2)⁻¹ x_i^{(2)}`.
pub fn if2_first_components(
    x: &DMatrix<f64>,
    theta0: &ParamPoint,
    t: &ContaminationPoint,
    tau: f64,
    gamma: f64,
    r: usize,
) -> Result<f64> {
    check_nonneg("gamma", gamma)?;
    let res = residuals(x, theta0, t, tau)?;
    let (x_tilde, s112) = partial_out(x, r)?;
    let v = weighted_score_sum(&x_tilde, &res);
    let q = (v.transpose() * linalg::spd_inverse(&s112, "(X^T X)_{11.2}")? * &v)[0];
    let s = lrm_s_gamma(theta0.sigma(), gamma);
    Ok(((1.0 + gamma) * s * (1.0 + tau).powi(3) * q).max(0.0))
}

/// `X̃1 = X1 − X2 (X2ᵀX2)⁻¹ X2ᵀX1` and `(XᵀX)_{11.2} = X̃1ᵀX̃1`.
fn partial_out(x: &DMatrix<f64>, r: usize) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let p = x.ncols();
    if r == 0 || r > p {
        return Err(DpdError::Feasibility(format!("need 1 <= r <= p, got r={r} p={p}")));
    }
    let x1 = x.columns(0, r).clone_owned();
    if r == p {
        let s = x1.transpose() * &x1;
        return Ok((x1, s));
    }
    let x2 = x.columns(r, p - r).clone_owned();
    let inv = linalg::spd_inverse(&(x2.transpose() * &x2), "X2^T X2")?;
    let x_tilde = &x1 - &x2 * inv * (x2.transpose() * &x1);
    let s = linalg::symmetrize(&(x_tilde.transpose() * &x_tilde));
    Ok((x_tilde, s))
}

fn hypothesis_matrix(restriction: &Restriction, p: usize) -> Result<DMatrix<f64>> {
    restriction
        .linear_form(p)
        .map(|(l, _)| l)
        .ok_or_else(|| DpdError::Usage("regression power needs a linear restriction on beta".into()))
}

/// Asymptotic power `P*(Δ, ε)` with `√n(β̂ − β̃)` centred at
/// `Δ + ε D_τ^β(t, θ0)` (projected onto the tested directions).
#[allow(clippy::too_many_arguments)]
pub fn contaminated_power(
    x: &DMatrix<f64>,
    theta0: &ParamPoint,
    t: &ContaminationPoint,
    tau: f64,
    gamma: f64,
    restriction: &Restriction,
    delta1: &DVector<f64>,
    epsilon: f64,
    alpha: f64,
) -> Result<f64> {
    check_probability("alpha", alpha)?;
    let p = x.ncols();
    let l = hypothesis_matrix(restriction, p)?;
    let d = d_tau_lrm(x, theta0, t, tau, restriction)?;
    let shift = delta1 + d.rows(0, p) * epsilon;
    let sigma0 = theta0.sigma();
    let s_alpha = mixture_quantile(&null_distribution_lrm(x, sigma0, &l, tau, gamma)?, alpha)?;
    series_power(&lrm_shifted_law(x, sigma0, &l, tau, gamma, &shift)?, s_alpha)
}

/// `α_ε`, the asymptotic level under contamination (`Δ = 0`).
#[allow(clippy::too_many_arguments)]
pub fn contaminated_level(
    x: &DMatrix<f64>,
    theta0: &ParamPoint,
    t: &ContaminationPoint,
    tau: f64,
    gamma: f64,
    restriction: &Restriction,
    epsilon: f64,
    alpha: f64,
) -> Result<f64> {
    let zero = DVector::zeros(x.ncols());
    contaminated_power(x, theta0, t, tau, gamma, restriction, &zero, epsilon, alpha)
}

/// `K̃(θ0, Δ, α) = Σ_v ∂C_v/∂d|_{d=Δ} P(χ²_{r+2v} > s_α/ζ_(1))`, the C_v
/// derivatives taken by central differences with step `1e-5·max(1, ‖Δ‖)`.
pub fn k_tilde(
    x: &DMatrix<f64>,
    sigma0: f64,
    l: &DMatrix<f64>,
    tau: f64,
    gamma: f64,
    delta1: &DVector<f64>,
    alpha: f64,
) -> Result<DVector<f64>> {
    check_probability("alpha", alpha)?;
    let p = x.ncols();
    if delta1.len() != p {
        return Err(DpdError::Dimension { expected: p, found: delta1.len() });
    }
    let null = null_distribution_lrm(x, sigma0, l, tau, gamma)?;
    let s_alpha = mixture_quantile(&null, alpha)?;
    let h = 1e-5 * delta1.norm().max(1.0);
    let mut k = DVector::zeros(p);
    for j in 0..p {
        let mut plus = delta1.clone();
        let mut minus = delta1.clone();
        plus[j] += h;
        minus[j] -= h;
        let cp = series_coefficients(&lrm_shifted_law(x, sigma0, l, tau, gamma, &plus)?)?;
        let cm = series_coefficients(&lrm_shifted_law(x, sigma0, l, tau, gamma, &minus)?)?;
        for s in [&cp, &cm] {
            if s.truncated() && s.tail_bound > SERIES_TAIL_LIMIT {
                return Err(DpdError::SeriesTruncated { tail_bound: s.tail_bound });
            }
        }
        let len = cp.c.len().max(cm.c.len());
        // ζ_(1) does not depend on d, so both series share the tail ladder
        let tails = chi_square_survival_ladder(cp.r, s_alpha / cp.zeta_min, len);
        let coef = |c: &[f64], v: usize| c.get(v).copied().unwrap_or(0.0);
        k[j] = (0..len).map(|v| (coef(&cp.c, v) - coef(&cm.c, v)) / (2.0 * h) * tails[v]).sum();
    }
    Ok(k)
}

/// Power influence function `D_τ^βᵀ K̃(θ0, Δ, α)`.
#[allow(clippy::too_many_arguments)]
pub fn pif(
    x: &DMatrix<f64>,
    theta0: &ParamPoint,
    t: &ContaminationPoint,
    tau: f64,
    gamma: f64,
    restriction: &Restriction,
    delta1: &DVector<f64>,
    alpha: f64,
) -> Result<f64> {
    let p = x.ncols();
    let l = hypothesis_matrix(restriction, p)?;
    let d = d_tau_lrm(x, theta0, t, tau, restriction)?;
    let k = k_tilde(x, theta0.sigma(), &l, tau, gamma, delta1, alpha)?;
    Ok(d.rows(0, p).dot(&k))
}

/// Level influence function, the PIF at `Δ = 0`.
pub fn lif(
    x: &DMatrix<f64>,
    theta0: &ParamPoint,
    t: &ContaminationPoint,
    tau: f64,
    gamma: f64,
    restriction: &Restriction,
    alpha: f64,
) -> Result<f64> {
    pif(x, theta0, t, tau, gamma, restriction, &DVector::zeros(x.ncols()), alpha)
}

/// PIF with the first `r` coefficients fixed, in closed form:
/// `(1+τ)^{3/2}/(n υ_β) [Ψ_{r+2}(λ) − Ψ_r(λ)] Σ_i (Δ^{(1)ᵀ} x̃_i) r_i e^{−τ r_i²/(2σ²)}`
/// with `Ψ_k(λ) = P(χ²_k(λ) > s_α/ζ_1)`, `λ = Δ^{(1)ᵀ} Σ_{11.2} Δ^{(1)} / υ_β`
/// and `x̃_i` the first-block covariates with the rest partialled out.
#[allow(clippy::too_many_arguments)]
pub fn pif_first_components(
    x: &DMatrix<f64>,
    theta0: &ParamPoint,
    t: &ContaminationPoint,
    tau: f64,
    gamma: f64,
    r: usize,
    delta1_head: &DVector<f64>,
    alpha: f64,
) -> Result<f64> {
    check_probability("alpha", alpha)?;
    if delta1_head.len() != r {
        return Err(DpdError::Dimension { expected: r, found: delta1_head.len() });
    }
    let res = residuals(x, theta0, t, tau)?;
    let (x_tilde, s112) = partial_out(x, r)?;
    let n = x.nrows() as f64;
    let sigma0 = theta0.sigma();
    let (v_beta, _) = lrm_asymp_variances(tau, sigma0)?;
    let lambda = (delta1_head.transpose() * &s112 * delta1_head)[0] / (n * v_beta);
    let mut l = DMatrix::zeros(x.ncols(), r);
    for k in 0..r {
        l[(k, k)] = 1.0;
    }
    let null = null_distribution_lrm(x, sigma0, &l, tau, gamma)?;
    let y = mixture_quantile(&null, alpha)? / null.weights[0];
    let psi = |df: usize| noncentral_chi_square_survival(df, lambda, y);
    let k = (psi(r + 2)? - psi(r)?) * (1.0 + tau).powf(1.5) / (n * v_beta);
    let sum: f64 = (0..x.nrows())
        .map(|i| x_tilde.row(i).transpose().dot(delta1_head) * res.r[i] * res.w[i])
        .sum();
    Ok(k * sum)
}

/// `P(χ²_df(ncp) > y)`; `df ≥ 1`.
fn noncentral_chi_square_survival(df: usize, ncp: f64, y: f64) -> Result<f64> {
    let mut ncps = vec![0.0; df];
    ncps[0] = ncp;
    series_power(&ChiSqMixture::new(vec![1.0; df], ncps)?, y)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn design() -> DMatrix<f64> {
        DMatrix::from_row_slice(6, 2, &[1.0, -1.0, 1.0, 0.5, 1.0, 1.2, 1.0, 2.0, 1.0, 3.1, 1.0, 4.0])
    }

    fn theta0() -> ParamPoint {
        ParamPoint::lrm(&[0.5, 1.0], 1.2)
    }

    fn contamination() -> ContaminationPoint {
        let t = DVector::from_row_slice(&[0.3, 2.0, -0.4, 3.9, 4.1, 2.2]);
        ContaminationPoint::new(t, 6).unwrap()
    }

    #[test]
    fn zero_residuals_give_zero_beta_if() {
        let x = design();
        let th = theta0();
        let t = ContaminationPoint::new(&x * th.beta(), 6).unwrap();
        let inf = if_mdpde_lrm(&x, &th, &t, 0.5).unwrap();
        assert!(inf.beta.amax() < 1e-15);
    }

    #[test]
    fn restricted_paths_agree() {
        let x = design();
        let th = theta0();
        let t = contamination();
        let l = DMatrix::from_row_slice(2, 1, &[1.0, 0.0]);
        let first = Restriction::first_components(&[0.5]).unwrap();
        let lin = Restriction::linear(l.clone(), DVector::from_row_slice(&[0.5])).unwrap();
        for &tau in &[0.0, 0.5] {
            let a = if_rmdpde_lrm(&x, &th, &t, tau, &first).unwrap();
            let b = if_rmdpde_lrm(&x, &th, &t, tau, &lin).unwrap();
            let c = if_rmdpde_lrm_regularized(&x, &th, &t, tau, &l).unwrap();
            assert_eq!(a.beta[0], 0.0);
            assert!((&a.beta - &b.beta).amax() < 1e-12);
            assert!((&a.beta - &c).amax() < 1e-10);
            let u = if_mdpde_lrm(&x, &th, &t, tau).unwrap();
            assert!((a.sigma2 - u.sigma2).abs() < 1e-12);
        }
    }

    #[test]
    fn if2_two_paths() {
        let x = design();
        let th = theta0();
        let t = contamination();
        let r = Restriction::first_components(&[0.5]).unwrap();
        for &(tau, gamma) in &[(0.0, 0.0), (0.5, 0.5), (0.3, 1.0)] {
            let a = if2_statistic(&x, &th, &t, tau, gamma, &r).unwrap();
            let b = if2_first_components(&x, &th, &t, tau, gamma, 1).unwrap();
            assert!((a - b).abs() < 1e-8 * a.max(1.0), "{a} vs {b}");
        }
    }

    #[test]
    fn lif_vanishes_for_linear_hypotheses() {
        let x = design();
        let th = theta0();
        let t = contamination();
        let r = Restriction::first_components(&[0.5]).unwrap();
        assert_eq!(lif(&x, &th, &t, 0.5, 0.5, &r, 0.05).unwrap(), 0.0);
    }

    #[test]
    fn pif_two_paths() {
        let x = design();
        let th = theta0();
        let t = contamination();
        let r = Restriction::first_components(&[0.5]).unwrap();
        let delta = DVector::from_row_slice(&[1.5, 0.0]);
        let a = pif(&x, &th, &t, 0.5, 0.5, &r, &delta, 0.05).unwrap();
        let b = pif_first_components(&x, &th, &t, 0.5, 0.5, 1, &DVector::from_row_slice(&[1.5]), 0.05).unwrap();
        assert!((a - b).abs() < 1e-6, "{a} vs {b}");
    }
}

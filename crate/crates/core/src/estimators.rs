//! Minimum density power divergence estimators, unrestricted and under a
//! null hypothesis, plus the closed-form asymptotics of the regression case.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dpd::objective_value_and_gradient;
use crate::error::{check_nonneg, DpdError, Result};
use crate::inh_model::{psi_omega_matrices, InhModel, ObservationSet, ParamPoint, Restriction};
use crate::linalg;
use crate::optimize::{minimize, MinimizeSettings};

/// Relative gradient tolerance that defines convergence.
pub const GRAD_TOL: f64 = 1e-8;
/// Largest admissible `|υ(θ̃)|` for a restricted fit.
pub const CONSTRAINT_TOL: f64 = 1e-10;
pub const MAX_ITERATIONS: usize = 500;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub theta_hat: ParamPoint,
    pub objective_value: f64,
    /// Sup-norm of the gradient of `H_n` (restricted fits: projected onto
    /// the tangent space of the null set).
    pub gradient_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    pub restricted: bool,
    /// Sandwich covariance `P Ψ⁻¹ Ω Ψ⁻¹ Pᵀ / n` at the estimate (`P = I` when
    /// unrestricted).
    #[serde(with = "linalg::serde_opt_mat", default)]
    pub asymp_cov: Option<DMatrix<f64>>,
}

/// Coordinates the optimizer works in: a possibly affine-constrained leading
/// block followed by the remaining coordinates, positive ones on log scale.
struct Chart {
    dim: usize,
    log_coords: Vec<usize>,
    affine: Option<(DVector<f64>, DMatrix<f64>)>,
}

impl Chart {
    fn lead(&self) -> usize {
        self.affine.as_ref().map_or(0, |(part, _)| part.len())
    }

    fn free_lead(&self) -> usize {
        self.affine.as_ref().map_or(0, |(_, n)| n.ncols())
    }

    fn phi_dim(&self) -> usize {
        self.free_lead() + self.dim - self.lead()
    }

    fn to_theta(&self, phi: &DVector<f64>) -> DVector<f64> {
        let (q, k) = (self.lead(), self.free_lead());
        let mut theta = DVector::zeros(self.dim);
        if let Some((part, n)) = &self.affine {
            theta.rows_mut(0, q).copy_from(&(part + n * phi.rows(0, k)));
        }
        for j in q..self.dim {
            let v = phi[k + j - q];
            theta[j] = if self.log_coords.contains(&j) { v.exp() } else { v };
        }
        theta
    }

    fn chart_of(&self, theta: &DVector<f64>) -> Option<DVector<f64>> {
        let (q, k) = (self.lead(), self.free_lead());
        let mut phi = DVector::zeros(self.phi_dim());
        if let Some((part, n)) = &self.affine {
            phi.rows_mut(0, k).copy_from(&(n.transpose() * (theta.rows(0, q) - part)));
        }
        for j in q..self.dim {
            phi[k + j - q] = if self.log_coords.contains(&j) {
                if theta[j] <= 0.0 {
                    return None;
                }
                theta[j].ln()
            } else {
                theta[j]
            };
        }
        Some(phi)
    }

    /// Chain rule from a θ-gradient to a φ-gradient.
    fn pull_back(&self, theta: &DVector<f64>, g: &DVector<f64>) -> DVector<f64> {
        let (q, k) = (self.lead(), self.free_lead());
        let mut out = DVector::zeros(self.phi_dim());
        if let Some((_, n)) = &self.affine {
            out.rows_mut(0, k).copy_from(&(n.transpose() * g.rows(0, q)));
        }
        for j in q..self.dim {
            out[k + j - q] = if self.log_coords.contains(&j) { g[j] * theta[j] } else { g[j] };
        }
        out
    }

    /// θ-gradient restricted to the free directions.
    fn projected(&self, g: &DVector<f64>) -> DVector<f64> {
        let (q, k) = (self.lead(), self.free_lead());
        let mut out = DVector::zeros(self.phi_dim());
        if let Some((_, n)) = &self.affine {
            out.rows_mut(0, k).copy_from(&(n.transpose() * g.rows(0, q)));
        }
        out.rows_mut(k, self.dim - q).copy_from(&g.rows(q, self.dim - q));
        out
    }
}

struct Candidate {
    theta: DVector<f64>,
    value: f64,
    grad_norm: f64,
    iterations: usize,
    start_scale: DVector<f64>,
}

/// Runs the optimizer from every start and keeps the lowest objective value.
fn multistart<M, F>(model: &M, chart: &Chart, starts: &[DVector<f64>], mut objective: F) -> Result<Candidate>
where
    M: InhModel + ?Sized,
    F: FnMut(&DVector<f64>) -> Result<(f64, DVector<f64>)>,
{
    let settings = MinimizeSettings { max_iterations: MAX_ITERATIONS, ..MinimizeSettings::default() };
    let mut best: Option<Candidate> = None;
    let mut last_err = DpdError::Usage("no usable starting point".into());
    for start in starts {
        let Some(phi0) = chart.chart_of(start) else {
            continue;
        };
        let run = minimize(
            |phi| {
                let theta = chart.to_theta(phi);
                model.check_param(&theta)?;
                let (v, g) = objective(&theta)?;
                Ok((v, chart.pull_back(&theta, &g)))
            },
            phi0,
            settings,
        );
        match run {
            Ok(m) => {
                let theta = chart.to_theta(&m.x);
                let (value, g) = match objective(&theta) {
                    Ok(vg) => vg,
                    Err(e) => {
                        last_err = e;
                        continue;
                    }
                };
                let cand = Candidate {
                    grad_norm: chart.projected(&g).amax(),
                    theta,
                    value,
                    iterations: m.iterations,
                    start_scale: start.clone(),
                };
                if best.as_ref().is_none_or(|b| cand.value < b.value) {
                    best = Some(cand);
                }
            }
            Err(e) => last_err = e,
        }
    }
    let best = best.ok_or(last_err)?;
    for &j in &chart.log_coords {
        if best.theta[j] < 1e-8 * best.start_scale[j] {
            return Err(DpdError::Boundary(best.theta[j]));
        }
    }
    Ok(best)
}

fn collect_starts<M: InhModel + ?Sized>(
    model: &M,
    data: &ObservationSet,
    init: Option<&ParamPoint>,
    affine: Option<(&DVector<f64>, &DMatrix<f64>)>,
) -> Result<Vec<DVector<f64>>> {
    let mut starts = Vec::new();
    if let Some(init) = init {
        model.check_param(&init.theta)?;
        starts.push(init.theta.clone());
    }
    starts.extend(model.starting_points(data, affine));
    if starts.is_empty() {
        return Err(DpdError::Usage("model provides no starting points; pass an initial value".into()));
    }
    Ok(starts)
}

fn check_inputs<M: InhModel + ?Sized>(model: &M, data: &ObservationSet, tau: f64) -> Result<()> {
    check_nonneg("tau", tau)?;
    if data.len() != model.len() {
        return Err(DpdError::Dimension { expected: model.len(), found: data.len() });
    }
    Ok(())
}

/// Sandwich covariance `P Ψ⁻¹ Ω Ψ⁻¹ Pᵀ / n`; with a constraint Jacobian `Υ`,
/// `P = I − Ψ⁻¹Υ(ΥᵀΨ⁻¹Υ)⁻¹Υᵀ`.
pub fn sandwich_covariance<M: InhModel + ?Sized>(
    model: &M,
    theta: &ParamPoint,
    tau: f64,
    constraint_jacobian: Option<&DMatrix<f64>>,
) -> Result<DMatrix<f64>> {
    let (psi, omega) = psi_omega_matrices(model, theta, tau)?;
    let psi_inv = linalg::spd_inverse(&psi, "Psi")?;
    let mut p = DMatrix::identity(model.dim(), model.dim());
    if let Some(j) = constraint_jacobian {
        let inner = linalg::spd_inverse(&(j.transpose() * &psi_inv * j), "restriction information")?;
        p -= &psi_inv * j * inner * j.transpose();
    }
    let cov = &p * &psi_inv * omega * &psi_inv * p.transpose() / model.len() as f64;
    Ok(linalg::symmetrize(&cov))
}

/// Unrestricted minimum DPD estimate (multistart quasi-Newton).
///
/// A fit whose gradient stays above `GRAD_TOL · max(1, |H_n|)` is returned
/// with `converged = false` rather than as an error.
pub fn mdpde_fit<M: InhModel + ?Sized>(
    model: &M,
    data: &ObservationSet,
    tau: f64,
    init: Option<&ParamPoint>,
) -> Result<FitResult> {
    check_inputs(model, data, tau)?;
    let chart = Chart { dim: model.dim(), log_coords: model.log_scale_coordinates(), affine: None };
    let starts = collect_starts(model, data, init, None)?;
    let best = multistart(model, &chart, &starts, |theta| {
        objective_value_and_gradient(model, data, &ParamPoint::new(theta.clone()), tau)
    })?;
    let theta_hat = ParamPoint::new(best.theta);
    let asymp_cov = sandwich_covariance(model, &theta_hat, tau, None).ok();
    Ok(FitResult {
        converged: best.grad_norm <= GRAD_TOL * best.value.abs().max(1.0) && best.iterations <= MAX_ITERATIONS,
        theta_hat,
        objective_value: best.value,
        gradient_norm: best.grad_norm,
        iterations: best.iterations,
        restricted: false,
        asymp_cov,
    })
}

/// `(θ_part, N)` with `{θ_lead : υ = 0} = {θ_part + N z}` for linear kinds.
fn affine_null_set(restriction: &Restriction, dim: usize) -> Result<Option<(DVector<f64>, DMatrix<f64>)>> {
    match restriction {
        Restriction::FirstComponents { l0 } => {
            let r = l0.len();
            if r > dim {
                return Err(DpdError::Feasibility(format!("cannot fix {r} of {dim} coordinates")));
            }
            // any remaining coordinates are untouched, so the block is just the fixed ones
            Ok(Some((l0.clone(), DMatrix::zeros(r, 0))))
        }
        Restriction::Linear { l, l0 } => {
            if l.nrows() > dim {
                return Err(DpdError::Dimension { expected: dim, found: l.nrows() });
            }
            let n = linalg::null_space_of_transpose(l)?;
            let ltl = l.transpose() * l;
            let part = l * linalg::spd_inverse(&ltl, "L^T L")? * l0;
            Ok(Some((part, n)))
        }
        Restriction::General { .. } => Ok(None),
    }
}

/// Restricted minimum DPD estimate under `υ(θ) = 0`.
///
/// Linear restrictions are solved exactly on the affine null set; general
/// ones by an augmented Lagrangian iterated until `|υ| ≤ CONSTRAINT_TOL`.
pub fn rmdpde_fit<M: InhModel + ?Sized>(
    model: &M,
    data: &ObservationSet,
    tau: f64,
    restriction: &Restriction,
    init: Option<&ParamPoint>,
) -> Result<FitResult> {
    check_inputs(model, data, tau)?;
    let dim = model.dim();
    let log_coords = model.log_scale_coordinates();
    let affine = affine_null_set(restriction, dim)?;
    let reparam = affine.filter(|(part, _)| log_coords.iter().all(|&j| j >= part.len()));
    let result = match reparam {
        Some((part, n)) => {
            let starts = collect_starts(model, data, init, Some((&part, &n)))?;
            let chart = Chart { dim, log_coords, affine: Some((part, n)) };
            let best = multistart(model, &chart, &starts, |theta| {
                objective_value_and_gradient(model, data, &ParamPoint::new(theta.clone()), tau)
            })?;
            FitResult {
                converged: best.grad_norm <= GRAD_TOL * best.value.abs().max(1.0) && best.iterations <= MAX_ITERATIONS,
                theta_hat: ParamPoint::new(best.theta).with_restricted(true),
                objective_value: best.value,
                gradient_norm: best.grad_norm,
                iterations: best.iterations,
                restricted: true,
                asymp_cov: None,
            }
        }
        None => augmented_lagrangian(model, data, tau, restriction, init)?,
    };
    let jac = restriction.jacobian(&result.theta_hat.theta);
    restriction.check_rank(&result.theta_hat.theta)?;
    let asymp_cov = sandwich_covariance(model, &result.theta_hat, tau, Some(&jac)).ok();
    Ok(FitResult { asymp_cov, ..result })
}

fn tangent_projector(jac: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let d = jac.nrows();
    let inner = linalg::spd_inverse(&(jac.transpose() * jac), "Upsilon^T Upsilon")?;
    Ok(DMatrix::identity(d, d) - jac * inner * jac.transpose())
}

fn augmented_lagrangian<M: InhModel + ?Sized>(
    model: &M,
    data: &ObservationSet,
    tau: f64,
    restriction: &Restriction,
    init: Option<&ParamPoint>,
) -> Result<FitResult> {
    let dim = model.dim();
    let chart = Chart { dim, log_coords: model.log_scale_coordinates(), affine: None };
    let mut starts = collect_starts(model, data, init, None)?;
    let r = restriction.r();
    let mut lambda = DVector::zeros(r);
    let mut mu = 10.0;
    let mut prev_violation = f64::INFINITY;
    let mut total_iterations = 0;
    let mut last: Option<(DVector<f64>, f64, f64)> = None;
    for _ in 0..60 {
        let lam = lambda.clone();
        let best = multistart(model, &chart, &starts, |theta| {
            let (h, g) = objective_value_and_gradient(model, data, &ParamPoint::new(theta.clone()), tau)?;
            let ups = restriction.upsilon(theta);
            if ups.len() != r {
                return Err(DpdError::Dimension { expected: r, found: ups.len() });
            }
            let jac = restriction.jacobian(theta);
            let shifted = &lam + &ups * mu;
            let value = h + lam.dot(&ups) + 0.5 * mu * ups.norm_squared();
            Ok((value, g + jac * shifted))
        })?;
        total_iterations += best.iterations;
        let theta = best.theta;
        let ups = restriction.upsilon(&theta);
        let violation = ups.amax();
        let (h, g) = objective_value_and_gradient(model, data, &ParamPoint::new(theta.clone()), tau)?;
        let pg = (tangent_projector(&restriction.jacobian(&theta))? * g).amax();
        last = Some((theta.clone(), h, pg));
        if violation <= CONSTRAINT_TOL && pg <= GRAD_TOL * h.abs().max(1.0) {
            break;
        }
        lambda += &ups * mu;
        if violation > 0.25 * prev_violation {
            mu *= 10.0;
        }
        prev_violation = violation;
        starts = vec![theta];
    }
    let (theta, h, pg) = last.expect("at least one outer iteration");
    let violation = restriction.upsilon(&theta).amax();
    if !violation.is_finite() {
        return Err(DpdError::Feasibility("restriction could not be satisfied".into()));
    }
    Ok(FitResult {
        converged: violation <= CONSTRAINT_TOL && pg <= GRAD_TOL * h.abs().max(1.0),
        theta_hat: ParamPoint::new(theta).with_restricted(true),
        objective_value: h,
        gradient_norm: pg,
        iterations: total_iterations,
        restricted: true,
        asymp_cov: None,
    })
}

/// Asymptotic variance factors of the regression MDPDE:
/// `υ_β = σ0² (1 + τ²/(1+2τ))^{3/2}` for β and `υ_e` for σ².
pub fn lrm_asymp_variances(tau: f64, sigma0: f64) -> Result<(f64, f64)> {
    check_nonneg("tau", tau)?;
    if !(sigma0.is_finite() && sigma0 > 0.0) {
        return Err(DpdError::Domain(format!("sigma0 must be positive, got {sigma0}")));
    }
    let s2 = sigma0 * sigma0;
    let t2 = tau * tau;
    let base = 1.0 + t2 / (1.0 + 2.0 * tau);
    let v_beta = s2 * base.powf(1.5);
    let v_e = 4.0 * s2 * s2 / (2.0 + t2).powi(2)
        * (2.0 * (1.0 + 2.0 * t2) * base.powf(2.5) - t2 * (1.0 + tau).powi(2));
    Ok((v_beta, v_e))
}

/// `P̃_n` and related Gram-matrix blocks for a linear hypothesis `Lᵀβ = l0`.
#[derive(Debug, Clone, PartialEq)]
pub struct RestrictedProjection {
    /// `I − L (Lᵀ(XᵀX)⁻¹L)⁻¹ Lᵀ (XᵀX)⁻¹`.
    pub p_tilde: DMatrix<f64>,
    /// `P̃_nᵀ (XᵀX)⁻¹`; times `υ_β` it is the covariance of the restricted β.
    pub restricted_cov_factor: DMatrix<f64>,
    /// With the columns of X split after the first `r`:
    /// `X2ᵀX2 − X2ᵀX1 (X1ᵀX1)⁻¹ X1ᵀX2` (`None` when `r = p`).
    pub xtx_22_1: Option<DMatrix<f64>>,
    /// `X1ᵀX1 − X1ᵀX2 (X2ᵀX2)⁻¹ X2ᵀX1` (equals `X1ᵀX1` when `r = p`).
    pub xtx_11_2: DMatrix<f64>,
}

pub fn restricted_projection(x: &DMatrix<f64>, l: &DMatrix<f64>) -> Result<RestrictedProjection> {
    let p = x.ncols();
    if l.nrows() != p {
        return Err(DpdError::Dimension { expected: p, found: l.nrows() });
    }
    let r = l.ncols();
    if r == 0 || r > p || linalg::rank(l) != r {
        return Err(DpdError::Rank("restriction matrix L must have full column rank r <= p".into()));
    }
    let xtx = x.transpose() * x;
    let xtx_inv = linalg::spd_inverse(&xtx, "X^T X")?;
    let g = l.transpose() * &xtx_inv * l;
    let g_inv = linalg::inverse(&g, "L^T (X^T X)^-1 L")?;
    let p_tilde = DMatrix::identity(p, p) - l * g_inv * l.transpose() * &xtx_inv;
    let restricted_cov_factor = linalg::symmetrize(&(p_tilde.transpose() * &xtx_inv));
    let s11 = xtx.view((0, 0), (r, r)).clone_owned();
    let (xtx_22_1, xtx_11_2) = if r == p {
        (None, s11)
    } else {
        let s12 = xtx.view((0, r), (r, p - r)).clone_owned();
        let s22 = xtx.view((r, r), (p - r, p - r)).clone_owned();
        let s11_inv = linalg::spd_inverse(&s11, "X1^T X1")?;
        let s22_inv = linalg::spd_inverse(&s22, "X2^T X2")?;
        let c22 = &s22 - s12.transpose() * s11_inv * &s12;
        let c11 = &s11 - &s12 * s22_inv * s12.transpose();
        (Some(linalg::symmetrize(&c22)), linalg::symmetrize(&c11))
    };
    Ok(RestrictedProjection { p_tilde, restricted_cov_factor, xtx_22_1, xtx_11_2 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dpd::objective_h;
    use crate::inh_model::LinearRegression;

    fn toy() -> (LinearRegression, ObservationSet) {
        let x = DMatrix::from_row_slice(6, 2, &[1.0, -1.0, 1.0, 0.5, 1.0, 1.2, 1.0, 2.0, 1.0, 3.1, 1.0, 4.0]);
        let y = DVector::from_row_slice(&[-0.8, 1.4, 2.0, 3.3, 5.9, 7.2]);
        (LinearRegression::new(x.clone()).unwrap(), ObservationSet::new(y, Some(x)).unwrap())
    }

    #[test]
    fn tau_zero_reproduces_least_squares() {
        let (m, data) = toy();
        let fit = mdpde_fit(&m, &data, 0.0, None).unwrap();
        assert!(fit.converged);
        let x = m.design();
        let beta = (x.transpose() * x).try_inverse().unwrap() * x.transpose() * &data.y;
        let rss = (&data.y - x * &beta).norm_squared();
        assert!((fit.theta_hat.beta() - beta).amax() < 1e-8);
        assert!((fit.theta_hat.sigma().powi(2) - rss / 6.0).abs() < 1e-8);
    }

    #[test]
    fn full_restriction_fixes_beta() {
        let (m, data) = toy();
        let r = Restriction::first_components(&[0.5, 1.5]).unwrap();
        let fit = rmdpde_fit(&m, &data, 0.0, &r, None).unwrap();
        assert_eq!(fit.theta_hat.beta().as_slice(), &[0.5, 1.5]);
        let rss0: f64 = (0..6).map(|i| (data.y[i] - 0.5 - 1.5 * m.design()[(i, 1)]).powi(2)).sum();
        assert!((fit.theta_hat.sigma().powi(2) - rss0 / 6.0).abs() < 1e-8);
        assert!(fit.converged && fit.restricted);
    }

    #[test]
    fn general_restriction_agrees_with_linear() {
        let (m, data) = toy();
        let lin = Restriction::linear(DMatrix::from_row_slice(2, 1, &[1.0, 1.0]), DVector::from_row_slice(&[2.0]))
            .unwrap();
        let gen = Restriction::general(1, |t: &DVector<f64>| DVector::from_row_slice(&[t[0] + t[1] - 2.0]));
        let a = rmdpde_fit(&m, &data, 0.5, &lin, None).unwrap();
        let b = rmdpde_fit(&m, &data, 0.5, &gen, None).unwrap();
        assert!(a.converged && b.converged);
        assert!((a.theta_hat.theta.clone() - b.theta_hat.theta.clone()).amax() < 1e-6);
        assert!(lin.upsilon(&a.theta_hat.theta).amax() <= CONSTRAINT_TOL);
        assert!(gen.upsilon(&b.theta_hat.theta).amax() <= CONSTRAINT_TOL);
    }

    #[test]
    fn restricted_objective_not_below_unrestricted() {
        let (m, data) = toy();
        let r = Restriction::first_components(&[0.0]).unwrap();
        for &tau in &[0.0, 0.3, 0.7] {
            let full = mdpde_fit(&m, &data, tau, None).unwrap();
            let rest = rmdpde_fit(&m, &data, tau, &r, None).unwrap();
            assert!(rest.objective_value >= full.objective_value - 1e-12);
            let h = objective_h(&m, &data, &full.theta_hat, tau).unwrap();
            assert!((h - full.objective_value).abs() < 1e-14);
        }
    }

    #[test]
    fn variance_factors() {
        assert_eq!(lrm_asymp_variances(0.0, 2.0).unwrap(), (4.0, 32.0));
        let (vb, _) = lrm_asymp_variances(0.5, 1.0).unwrap();
        assert!((vb - 1.125f64.powf(1.5)).abs() < 1e-15);
        assert!(lrm_asymp_variances(0.1, 0.0).is_err());
    }

    #[test]
    fn projection_identities() {
        let (m, _) = toy();
        let l = DMatrix::from_row_slice(2, 1, &[1.0, 0.0]);
        let pr = restricted_projection(m.design(), &l).unwrap();
        assert!((&pr.p_tilde * &pr.p_tilde - &pr.p_tilde).amax() < 1e-12);
        assert!((pr.p_tilde.trace() - 1.0).abs() < 1e-12);
        assert!((&pr.p_tilde * &l).amax() < 1e-12);
        let full = restricted_projection(m.design(), &DMatrix::identity(2, 2)).unwrap();
        assert!(full.p_tilde.amax() < 1e-12);
        // restricted covariance of the free block is (X2ᵀX2)⁻¹
        let s22 = m.xtx()[(1, 1)];
        assert!((pr.restricted_cov_factor[(1, 1)] - 1.0 / s22).abs() < 1e-12);
        assert!(pr.restricted_cov_factor.row(0).amax() < 1e-12);
    }
}

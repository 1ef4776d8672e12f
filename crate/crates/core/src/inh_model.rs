//! Independent non-homogeneous (INH) parametric families.
//!
//! An [`InhModel`] is an indexed family of univariate densities
//! `f_i(·; θ)`, `i = 0..n`, sharing one parameter vector θ. The trait's
//! default methods evaluate every power integral by adaptive quadrature over
//! [`InhModel::support`]; [`LinearRegression`] overrides them with exact
//! Gaussian formulas.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dpd::DerivBlocks;
use crate::error::{check_nonneg, DpdError, Result};
use crate::linalg;
use crate::normal;
use crate::quadrature::{integrate_with_breaks, QuadSettings};

/// A parameter vector θ. For [`LinearRegression`] the layout is
/// `(β_1, …, β_p, σ)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamPoint {
    #[serde(with = "linalg::serde_vec")]
    pub theta: DVector<f64>,
    #[serde(default)]
    pub restricted: bool,
}

impl ParamPoint {
    pub fn new(theta: DVector<f64>) -> Self {
        Self { theta, restricted: false }
    }

    /// Regression parameter point `(β, σ)`.
    pub fn lrm(beta: &[f64], sigma: f64) -> Self {
        let mut theta = DVector::zeros(beta.len() + 1);
        theta.rows_mut(0, beta.len()).copy_from_slice(beta);
        theta[beta.len()] = sigma;
        Self::new(theta)
    }

    pub fn dim(&self) -> usize {
        self.theta.len()
    }

    /// Regression coefficients (all but the last coordinate).
    pub fn beta(&self) -> DVector<f64> {
        self.theta.rows(0, self.theta.len() - 1).clone_owned()
    }

    /// Error scale (last coordinate).
    pub fn sigma(&self) -> f64 {
        self.theta[self.theta.len() - 1]
    }

    pub(crate) fn with_restricted(mut self, restricted: bool) -> Self {
        self.restricted = restricted;
        self
    }
}

/// Responses and (for regression families) the fixed design.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationSet {
    pub y: DVector<f64>,
    pub x: Option<DMatrix<f64>>,
}

impl ObservationSet {
    pub fn new(y: DVector<f64>, x: Option<DMatrix<f64>>) -> Result<Self> {
        if y.is_empty() {
            return Err(DpdError::Usage("observation set must contain at least one response".into()));
        }
        if let Some(x) = &x {
            if x.nrows() != y.len() {
                return Err(DpdError::Dimension { expected: y.len(), found: x.nrows() });
            }
            if y.iter().chain(x.iter()).any(|v| !v.is_finite()) {
                return Err(DpdError::Domain("observations must be finite".into()));
            }
        }
        Ok(Self { y, x })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }
}

/// An indexed family of densities `f_i(y; θ)` with common parameter θ.
pub trait InhModel: Send + Sync {
    /// Number of indices `n`.
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Parameter dimension.
    fn dim(&self) -> usize;

    /// Rejects parameters outside the parameter space.
    fn check_param(&self, theta: &DVector<f64>) -> Result<()> {
        if theta.len() != self.dim() {
            return Err(DpdError::Dimension { expected: self.dim(), found: theta.len() });
        }
        Ok(())
    }

    fn density(&self, i: usize, y: f64, theta: &DVector<f64>) -> f64;

    fn log_density(&self, i: usize, y: f64, theta: &DVector<f64>) -> f64 {
        self.density(i, y, theta).ln()
    }

    /// `u_i(y; θ) = ∇_θ ln f_i(y; θ)`.
    fn score(&self, i: usize, y: f64, theta: &DVector<f64>) -> DVector<f64>;

    /// Finite interval carrying all but a negligible part of the mass of `f_i(·; θ)`.
    fn support(&self, i: usize, theta: &DVector<f64>) -> (f64, f64);

    fn quad_settings(&self) -> QuadSettings {
        QuadSettings::with_abs_tol(1e-10)
    }

    /// `∫ f_i^{1+c}`.
    fn power_integral(&self, i: usize, theta: &DVector<f64>, c: f64) -> Result<f64> {
        let (lo, hi) = self.support(i, theta);
        let mid = 0.5 * (lo + hi);
        Ok(integrate_with_breaks(|y| self.density(i, y, theta).powf(1.0 + c), lo, hi, &[mid], self.quad_settings())?
            .value)
    }

    /// `∫ u_i f_i^{1+c}`.
    fn score_power_integral(&self, i: usize, theta: &DVector<f64>, c: f64) -> Result<DVector<f64>> {
        let (lo, hi) = self.support(i, theta);
        let mid = 0.5 * (lo + hi);
        let mut out = DVector::zeros(self.dim());
        for k in 0..self.dim() {
            out[k] = integrate_with_breaks(
                |y| self.score(i, y, theta)[k] * self.density(i, y, theta).powf(1.0 + c),
                lo,
                hi,
                &[mid],
                self.quad_settings(),
            )?
            .value;
        }
        Ok(out)
    }

    /// `∫ u_i u_iᵀ f_i^{1+c}`.
    fn score_outer_power_integral(&self, i: usize, theta: &DVector<f64>, c: f64) -> Result<DMatrix<f64>> {
        let (lo, hi) = self.support(i, theta);
        let mid = 0.5 * (lo + hi);
        let d = self.dim();
        let mut out = DMatrix::zeros(d, d);
        for j in 0..d {
            for k in j..d {
                let v = integrate_with_breaks(
                    |y| {
                        let u = self.score(i, y, theta);
                        u[j] * u[k] * self.density(i, y, theta).powf(1.0 + c)
                    },
                    lo,
                    hi,
                    &[mid],
                    self.quad_settings(),
                )?
                .value;
                out[(j, k)] = v;
                out[(k, j)] = v;
            }
        }
        Ok(out)
    }

    /// `∫ f_i(·; θ_model)^c f_i(·; θ_data)`.
    fn cross_power_integral(
        &self,
        i: usize,
        theta_model: &DVector<f64>,
        theta_data: &DVector<f64>,
        c: f64,
    ) -> Result<f64> {
        let (lo1, hi1) = self.support(i, theta_model);
        let (lo2, hi2) = self.support(i, theta_data);
        let breaks = [0.5 * (lo1 + hi1), 0.5 * (lo2 + hi2)];
        Ok(integrate_with_breaks(
            |y| self.density(i, y, theta_model).powf(c) * self.density(i, y, theta_data),
            lo1.min(lo2),
            hi1.max(hi2),
            &breaks,
            self.quad_settings(),
        )?
        .value)
    }

    /// `∫ f_i(·; θ_data) ln(f_i(·; θ_data) / f_i(·; θ_model))`.
    fn kl_divergence(&self, i: usize, theta_data: &DVector<f64>, theta_model: &DVector<f64>) -> Result<f64> {
        let (lo, hi) = self.support(i, theta_data);
        let mid = 0.5 * (lo + hi);
        Ok(integrate_with_breaks(
            |y| {
                let f = self.density(i, y, theta_data);
                if f == 0.0 {
                    0.0
                } else {
                    f * (self.log_density(i, y, theta_data) - self.log_density(i, y, theta_model))
                }
            },
            lo,
            hi,
            &[mid],
            self.quad_settings(),
        )?
        .value)
    }

    /// Exact `d_c(f_i(·; θ1), f_i(·; θ2))`, when the family has one.
    fn divergence_closed_form(&self, _i: usize, _theta1: &DVector<f64>, _theta2: &DVector<f64>, _c: f64) -> Option<f64> {
        None
    }

    /// Exact first and second derivatives of the divergence, when available.
    fn divergence_derivatives(
        &self,
        _i: usize,
        _theta1: &DVector<f64>,
        _theta2: &DVector<f64>,
        _c: f64,
    ) -> Option<DerivBlocks> {
        None
    }

    /// Coordinates of θ that must stay positive; the optimizers work with
    /// their logarithms.
    fn log_scale_coordinates(&self) -> Vec<usize> {
        Vec::new()
    }

    /// Data-driven starting points for the optimizers. When `affine` is
    /// `(θ_part, N)` the leading coordinates are constrained to
    /// `θ_part + N z` and the returned points must satisfy that.
    fn starting_points(
        &self,
        _data: &ObservationSet,
        _affine: Option<(&DVector<f64>, &DMatrix<f64>)>,
    ) -> Vec<DVector<f64>> {
        Vec::new()
    }
}

/// Hides every closed form of the wrapped model so that the quadrature and
/// finite-difference paths are exercised.
pub struct QuadratureView<'a, M: InhModel + ?Sized>(pub &'a M);

impl<M: InhModel + ?Sized> InhModel for QuadratureView<'_, M> {
    fn len(&self) -> usize {
        self.0.len()
    }
    fn dim(&self) -> usize {
        self.0.dim()
    }
    fn check_param(&self, theta: &DVector<f64>) -> Result<()> {
        self.0.check_param(theta)
    }
    fn density(&self, i: usize, y: f64, theta: &DVector<f64>) -> f64 {
        self.0.density(i, y, theta)
    }
    fn log_density(&self, i: usize, y: f64, theta: &DVector<f64>) -> f64 {
        self.0.log_density(i, y, theta)
    }
    fn score(&self, i: usize, y: f64, theta: &DVector<f64>) -> DVector<f64> {
        self.0.score(i, y, theta)
    }
    fn support(&self, i: usize, theta: &DVector<f64>) -> (f64, f64) {
        self.0.support(i, theta)
    }
    fn quad_settings(&self) -> QuadSettings {
        self.0.quad_settings()
    }
    fn log_scale_coordinates(&self) -> Vec<usize> {
        self.0.log_scale_coordinates()
    }
    fn starting_points(
        &self,
        data: &ObservationSet,
        affine: Option<(&DVector<f64>, &DMatrix<f64>)>,
    ) -> Vec<DVector<f64>> {
        self.0.starting_points(data, affine)
    }
}

/// Fixed-design normal linear regression `y_i ~ N(x_iᵀβ, σ²)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearRegression {
    x: DMatrix<f64>,
    xtx: DMatrix<f64>,
}

impl LinearRegression {
    /// Builds the model, rejecting designs without full column rank.
    pub fn new(x: DMatrix<f64>) -> Result<Self> {
        if x.nrows() == 0 || x.ncols() == 0 {
            return Err(DpdError::Usage("design matrix must be non-empty".into()));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(DpdError::Domain("design matrix contains non-finite entries".into()));
        }
        if linalg::rank(&x) < x.ncols() {
            return Err(DpdError::Rank(format!("design matrix does not have full column rank {}", x.ncols())));
        }
        let xtx = x.transpose() * &x;
        Ok(Self { x, xtx })
    }

    pub fn from_observations(data: &ObservationSet) -> Result<Self> {
        let x = data.x.clone().ok_or_else(|| DpdError::Usage("regression model needs a design matrix".into()))?;
        Self::new(x)
    }

    pub fn design(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn xtx(&self) -> &DMatrix<f64> {
        &self.xtx
    }

    /// Number of regression coefficients.
    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn mean(&self, i: usize, theta: &DVector<f64>) -> f64 {
        self.x.row(i).transpose().dot(&theta.rows(0, self.p()))
    }

    fn sigma(&self, theta: &DVector<f64>) -> f64 {
        theta[self.p()]
    }

    /// `Σ_x ≈ XᵀX / n`.
    pub fn sigma_x(&self) -> DMatrix<f64> {
        &self.xtx / self.x.nrows() as f64
    }
}

impl InhModel for LinearRegression {
    fn len(&self) -> usize {
        self.x.nrows()
    }

    fn dim(&self) -> usize {
        self.p() + 1
    }

    fn check_param(&self, theta: &DVector<f64>) -> Result<()> {
        if theta.len() != self.dim() {
            return Err(DpdError::Dimension { expected: self.dim(), found: theta.len() });
        }
        let s = self.sigma(theta);
        if !(s.is_finite() && s > 0.0) {
            return Err(DpdError::Domain(format!("sigma must be positive, got {s}")));
        }
        Ok(())
    }

    fn density(&self, i: usize, y: f64, theta: &DVector<f64>) -> f64 {
        normal::pdf(y, self.mean(i, theta), self.sigma(theta))
    }

    fn log_density(&self, i: usize, y: f64, theta: &DVector<f64>) -> f64 {
        normal::ln_pdf(y, self.mean(i, theta), self.sigma(theta))
    }

    fn score(&self, i: usize, y: f64, theta: &DVector<f64>) -> DVector<f64> {
        let p = self.p();
        let s = self.sigma(theta);
        let r = y - self.mean(i, theta);
        let mut u = DVector::zeros(p + 1);
        for k in 0..p {
            u[k] = self.x[(i, k)] * r / (s * s);
        }
        u[p] = (r * r / (s * s) - 1.0) / s;
        u
    }

    fn support(&self, i: usize, theta: &DVector<f64>) -> (f64, f64) {
        let mu = self.mean(i, theta);
        let s = self.sigma(theta);
        (mu - 12.0 * s, mu + 12.0 * s)
    }

    fn power_integral(&self, _i: usize, theta: &DVector<f64>, c: f64) -> Result<f64> {
        Ok(normal::power_integral(self.sigma(theta), c))
    }

    fn score_power_integral(&self, _i: usize, theta: &DVector<f64>, c: f64) -> Result<DVector<f64>> {
        let s = self.sigma(theta);
        let mut out = DVector::zeros(self.dim());
        out[self.p()] = -normal::power_integral(s, c) * c / ((1.0 + c) * s);
        Ok(out)
    }

    fn score_outer_power_integral(&self, i: usize, theta: &DVector<f64>, c: f64) -> Result<DMatrix<f64>> {
        let p = self.p();
        let s = self.sigma(theta);
        let k = normal::power_integral(s, c);
        let xi = self.x.row(i).transpose();
        let mut out = DMatrix::zeros(p + 1, p + 1);
        out.view_mut((0, 0), (p, p)).copy_from(&(&xi * xi.transpose() * (k / (s * s * (1.0 + c)))));
        out[(p, p)] = k * (2.0 + c * c) / ((1.0 + c) * (1.0 + c) * s * s);
        Ok(out)
    }

    fn cross_power_integral(
        &self,
        i: usize,
        theta_model: &DVector<f64>,
        theta_data: &DVector<f64>,
        c: f64,
    ) -> Result<f64> {
        Ok(normal::cross_power_integral(
            self.mean(i, theta_model),
            self.sigma(theta_model),
            self.mean(i, theta_data),
            self.sigma(theta_data),
            c,
        ))
    }

    fn kl_divergence(&self, i: usize, theta_data: &DVector<f64>, theta_model: &DVector<f64>) -> Result<f64> {
        Ok(normal::kl(
            self.mean(i, theta_data),
            self.sigma(theta_data),
            self.mean(i, theta_model),
            self.sigma(theta_model),
        ))
    }

    fn divergence_closed_form(&self, i: usize, theta1: &DVector<f64>, theta2: &DVector<f64>, c: f64) -> Option<f64> {
        let diff = self.mean(i, theta1) - self.mean(i, theta2);
        Some(normal::dpd_jet(diff, self.sigma(theta1), self.sigma(theta2), c).value)
    }

    fn divergence_derivatives(
        &self,
        i: usize,
        theta1: &DVector<f64>,
        theta2: &DVector<f64>,
        c: f64,
    ) -> Option<DerivBlocks> {
        let p = self.p();
        let diff = self.mean(i, theta1) - self.mean(i, theta2);
        let jet = normal::dpd_jet(diff, self.sigma(theta1), self.sigma(theta2), c);
        // d(D, a, b)/dθ1 and d(D, a, b)/dθ2; the maps are linear so the
        // Hessians are congruence transforms of the jet Hessian.
        let mut j1 = DMatrix::zeros(3, p + 1);
        let mut j2 = DMatrix::zeros(3, p + 1);
        for k in 0..p {
            j1[(0, k)] = self.x[(i, k)];
            j2[(0, k)] = -self.x[(i, k)];
        }
        j1[(1, p)] = 1.0;
        j2[(2, p)] = 1.0;
        let g = DVector::from_row_slice(&jet.grad);
        let h = DMatrix::from_fn(3, 3, |a, b| jet.hess[a][b]);
        Some(DerivBlocks {
            m1: j1.transpose() * &g,
            m2: j2.transpose() * &g,
            a11: j1.transpose() * &h * &j1,
            a12: j1.transpose() * &h * &j2,
            a21: j2.transpose() * &h * &j1,
            a22: j2.transpose() * &h * &j2,
        })
    }

    fn log_scale_coordinates(&self) -> Vec<usize> {
        vec![self.p()]
    }

    /// Least-squares fit, least-squares fit shifted by ±2 standard errors,
    /// least-absolute-deviations fit with a MAD scale, and the least-squares
    /// coefficients with a MAD scale.
    fn starting_points(
        &self,
        data: &ObservationSet,
        affine: Option<(&DVector<f64>, &DMatrix<f64>)>,
    ) -> Vec<DVector<f64>> {
        let p = self.p();
        let (offset, basis) = match affine {
            None => (DVector::zeros(p), DMatrix::identity(p, p)),
            Some((part, nmat)) => {
                let q = part.len();
                if q > p || nmat.nrows() != q {
                    return Vec::new();
                }
                let free = nmat.ncols() + p - q;
                let mut offset = DVector::zeros(p);
                offset.rows_mut(0, q).copy_from(part);
                let mut basis = DMatrix::zeros(p, free);
                basis.view_mut((0, 0), (q, nmat.ncols())).copy_from(nmat);
                for k in 0..p - q {
                    basis[(q + k, nmat.ncols() + k)] = 1.0;
                }
                (offset, basis)
            }
        };
        let z = &self.x * &basis;
        let target = &data.y - &self.x * &offset;
        let n = data.len() as f64;
        let pack = |w: &DVector<f64>, sigma: f64| {
            let mut t = DVector::zeros(p + 1);
            t.rows_mut(0, p).copy_from(&(&offset + &basis * w));
            t[p] = sigma;
            t
        };
        let scale_floor = 1e-8 * (1.0 + target.amax());

        if z.ncols() == 0 {
            let w = DVector::zeros(0);
            let rss = target.norm_squared();
            let s_ls = (rss / n).sqrt().max(scale_floor);
            let s_mad = mad(&target).unwrap_or(s_ls).max(scale_floor);
            return vec![pack(&w, s_ls), pack(&w, s_mad)];
        }
        let Ok(ztz_inv) = linalg::spd_inverse(&(z.transpose() * &z), "Z^T Z") else {
            return Vec::new();
        };
        let w_ls = &ztz_inv * z.transpose() * &target;
        let r_ls = &target - &z * &w_ls;
        let s_ls = (r_ls.norm_squared() / n).sqrt().max(scale_floor);
        let se = ztz_inv.diagonal().map(|v| 2.0 * s_ls * v.max(0.0).sqrt());
        let w_l1 = lad_fit(&z, &target, &w_ls);
        let r_l1 = &target - &z * &w_l1;
        let s_l1 = mad(&r_l1).unwrap_or(s_ls).max(scale_floor);
        let s_mad = mad(&r_ls).unwrap_or(s_ls).max(scale_floor);
        vec![
            pack(&w_ls, s_ls),
            pack(&(&w_ls + &se), s_ls),
            pack(&(&w_ls - &se), s_ls),
            pack(&w_l1, s_l1),
            pack(&w_ls, s_mad),
        ]
    }
}

/// Normalised median absolute deviation about the median; `None` when it
/// is zero.
fn mad(r: &DVector<f64>) -> Option<f64> {
    let med = median(r.iter().copied().collect());
    let dev = median(r.iter().map(|v| (v - med).abs()).collect());
    (dev > 0.0).then_some(1.482_602_218_505_602 * dev)
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Least absolute deviations by iteratively reweighted least squares.
fn lad_fit(z: &DMatrix<f64>, y: &DVector<f64>, start: &DVector<f64>) -> DVector<f64> {
    let mut w = start.clone();
    for _ in 0..100 {
        let r = y - z * &w;
        let scale = 1e-8 * (1.0 + r.amax());
        let weights = r.map(|v| 1.0 / v.abs().max(scale));
        let mut zw = z.clone();
        for (i, mut row) in zw.row_iter_mut().enumerate() {
            row *= weights[i];
        }
        let Ok(inv) = linalg::spd_inverse(&(z.transpose() * &zw), "weighted Z^T Z") else {
            break;
        };
        let next = inv * zw.transpose() * y;
        let change = (&next - &w).amax();
        w = next;
        if change <= 1e-10 * (1.0 + w.amax()) {
            break;
        }
    }
    w
}

type VectorMap = Arc<dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync>;
type JacobianMap = Arc<dyn Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync>;

/// Null hypothesis `υ(θ) = 0_r`.
#[derive(Clone)]
pub enum Restriction {
    /// `Lᵀβ = l0` on the leading `L.nrows()` coordinates of θ.
    Linear { l: DMatrix<f64>, l0: DVector<f64> },
    /// The first `r` coordinates of θ are fixed at `l0`.
    FirstComponents { l0: DVector<f64> },
    /// Arbitrary smooth constraints; the Jacobian (dim × r) falls back to
    /// central differences when absent.
    General { r: usize, upsilon: VectorMap, jacobian: Option<JacobianMap> },
}

impl fmt::Debug for Restriction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Restriction::Linear { l, l0 } => f.debug_struct("Linear").field("l", l).field("l0", l0).finish(),
            Restriction::FirstComponents { l0 } => f.debug_struct("FirstComponents").field("l0", l0).finish(),
            Restriction::General { r, .. } => f.debug_struct("General").field("r", r).finish_non_exhaustive(),
        }
    }
}

impl Restriction {
    pub fn linear(l: DMatrix<f64>, l0: DVector<f64>) -> Result<Self> {
        if l.ncols() != l0.len() {
            return Err(DpdError::Dimension { expected: l.ncols(), found: l0.len() });
        }
        if l.ncols() == 0 || l.ncols() > l.nrows() {
            return Err(DpdError::Feasibility(format!("need 1 <= r <= p, got r={} p={}", l.ncols(), l.nrows())));
        }
        if linalg::rank(&l) != l.ncols() {
            return Err(DpdError::Rank("restriction matrix L does not have full column rank".into()));
        }
        Ok(Restriction::Linear { l, l0 })
    }

    pub fn first_components(l0: &[f64]) -> Result<Self> {
        if l0.is_empty() {
            return Err(DpdError::Feasibility("at least one component must be fixed".into()));
        }
        Ok(Restriction::FirstComponents { l0: DVector::from_row_slice(l0) })
    }

    pub fn general<F>(r: usize, upsilon: F) -> Self
    where
        F: Fn(&DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
    {
        Restriction::General { r, upsilon: Arc::new(upsilon), jacobian: None }
    }

    pub fn r(&self) -> usize {
        match self {
            Restriction::Linear { l, .. } => l.ncols(),
            Restriction::FirstComponents { l0 } => l0.len(),
            Restriction::General { r, .. } => *r,
        }
    }

    /// `(L, l0)` with `L` of size `p × r`, for the linear kinds.
    pub fn linear_form(&self, p: usize) -> Option<(DMatrix<f64>, DVector<f64>)> {
        match self {
            Restriction::Linear { l, l0 } => {
                if l.nrows() > p {
                    return None;
                }
                let mut full = DMatrix::zeros(p, l.ncols());
                full.view_mut((0, 0), (l.nrows(), l.ncols())).copy_from(l);
                Some((full, l0.clone()))
            }
            Restriction::FirstComponents { l0 } => {
                let r = l0.len();
                if r > p {
                    return None;
                }
                let mut l = DMatrix::zeros(p, r);
                for k in 0..r {
                    l[(k, k)] = 1.0;
                }
                Some((l, l0.clone()))
            }
            Restriction::General { .. } => None,
        }
    }

    /// `υ(θ)`.
    pub fn upsilon(&self, theta: &DVector<f64>) -> DVector<f64> {
        match self {
            Restriction::Linear { l, l0 } => l.transpose() * theta.rows(0, l.nrows()) - l0,
            Restriction::FirstComponents { l0 } => theta.rows(0, l0.len()) - l0,
            Restriction::General { upsilon, .. } => upsilon(theta),
        }
    }

    /// `Υ(θ) = ∂υ/∂θ`, of size `dim × r`.
    pub fn jacobian(&self, theta: &DVector<f64>) -> DMatrix<f64> {
        let dim = theta.len();
        match self {
            Restriction::Linear { l, .. } => {
                let mut out = DMatrix::zeros(dim, l.ncols());
                out.view_mut((0, 0), (l.nrows(), l.ncols())).copy_from(l);
                out
            }
            Restriction::FirstComponents { l0 } => {
                let mut out = DMatrix::zeros(dim, l0.len());
                for k in 0..l0.len() {
                    out[(k, k)] = 1.0;
                }
                out
            }
            Restriction::General { r, upsilon, jacobian } => match jacobian {
                Some(j) => j(theta),
                None => {
                    let mut out = DMatrix::zeros(dim, *r);
                    for k in 0..dim {
                        let h = 1e-6 * theta[k].abs().max(1.0);
                        let mut tp = theta.clone();
                        let mut tm = theta.clone();
                        tp[k] += h;
                        tm[k] -= h;
                        let row = (upsilon(&tp) - upsilon(&tm)) / (2.0 * h);
                        out.row_mut(k).copy_from(&row.transpose());
                    }
                    out
                }
            },
        }
    }

    /// Fails unless `Υ(θ)` has rank `r`.
    pub fn check_rank(&self, theta: &DVector<f64>) -> Result<()> {
        let j = self.jacobian(theta);
        if j.ncols() != self.r() {
            return Err(DpdError::Dimension { expected: self.r(), found: j.ncols() });
        }
        if linalg::rank(&j) != self.r() {
            return Err(DpdError::Rank(format!("restriction Jacobian has rank below r = {}", self.r())));
        }
        Ok(())
    }
}

/// `ξ_i(θ) = ∫ u_i f_i^{1+τ}` with the model density plugged in for `g_i`.
pub fn xi_vector<M: InhModel + ?Sized>(model: &M, i: usize, theta: &ParamPoint, tau: f64) -> Result<DVector<f64>> {
    check_nonneg("tau", tau)?;
    model.check_param(&theta.theta)?;
    model.score_power_integral(i, &theta.theta, tau)
}

/// `Ψ_n^τ(θ)` and `Ω_n^τ(θ)` evaluated at `g_i = f_i(·; θ)`.
pub fn psi_omega_matrices<M: InhModel + ?Sized>(
    model: &M,
    theta: &ParamPoint,
    tau: f64,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    check_nonneg("tau", tau)?;
    model.check_param(&theta.theta)?;
    let d = model.dim();
    let n = model.len();
    let mut psi = DMatrix::zeros(d, d);
    let mut omega = DMatrix::zeros(d, d);
    for i in 0..n {
        psi += model.score_outer_power_integral(i, &theta.theta, tau)?;
        let xi = model.score_power_integral(i, &theta.theta, tau)?;
        omega += model.score_outer_power_integral(i, &theta.theta, 2.0 * tau)? - &xi * xi.transpose();
    }
    psi /= n as f64;
    omega /= n as f64;
    if psi.iter().chain(omega.iter()).any(|v| !v.is_finite()) {
        return Err(DpdError::Integration { requested: model.quad_settings().abs_tol, achieved: f64::INFINITY });
    }
    Ok((linalg::symmetrize(&psi), linalg::symmetrize(&omega)))
}

/// `A_n^γ(θ0) = (1/n) Σ_i ∇²_θ d_γ(f_i(·; θ), f_i(·; θ0))|_{θ=θ0}`.
///
/// At the diagonal the Hessian reduces to `(1+γ) ∫ u_i u_iᵀ f_i^{1+γ}`, which
/// is what is evaluated here.
pub fn a_matrix<M: InhModel + ?Sized>(model: &M, theta0: &ParamPoint, gamma: f64) -> Result<DMatrix<f64>> {
    check_nonneg("gamma", gamma)?;
    model.check_param(&theta0.theta)?;
    let d = model.dim();
    let mut a = DMatrix::zeros(d, d);
    for i in 0..model.len() {
        a += model.score_outer_power_integral(i, &theta0.theta, gamma)?;
    }
    a *= (1.0 + gamma) / model.len() as f64;
    let asym = (&a - a.transpose()).amax();
    if asym > 1e-8 * a.amax().max(1.0) {
        return Err(DpdError::Differentiation(format!("A matrix asymmetric by {asym:e}")));
    }
    Ok(linalg::symmetrize(&a))
}

/// Regression coefficient block of `A_n^γ(θ0)`: `(1+γ) s_γ XᵀX / n` with
/// `s_γ = (2π)^{-γ/2} σ^{-(γ+2)} (1+γ)^{-3/2}`.
pub fn lrm_s_gamma(sigma: f64, gamma: f64) -> f64 {
    (2.0 * std::f64::consts::PI).powf(-0.5 * gamma) * sigma.powf(-(gamma + 2.0)) * (1.0 + gamma).powf(-1.5)
}

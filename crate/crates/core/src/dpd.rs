//! The density power divergence, the estimation objective `H_n` and the
//! derivative blocks of the divergence in each argument slot.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_nonneg, DpdError, Result};
use crate::inh_model::{InhModel, ObservationSet, ParamPoint};
use crate::linalg;
use crate::quadrature::integrate_with_breaks;

/// How a divergence value was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    ClosedForm,
    Quadrature,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DpdValue {
    pub value: f64,
    pub tau_or_gamma: f64,
    pub method: Method,
}

/// Derivatives of `d_γ(f_i(·; θ1), f_i(·; θ2))`: `m1`/`m2` are the gradients
/// in the first/second slot and `ajk` the block `∂²/∂θ_j ∂θ_kᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct DerivBlocks {
    pub m1: DVector<f64>,
    pub m2: DVector<f64>,
    pub a11: DMatrix<f64>,
    pub a12: DMatrix<f64>,
    pub a21: DMatrix<f64>,
    pub a22: DMatrix<f64>,
}

/// Values within this distance below zero are treated as round-off.
const ZERO_FLOOR: f64 = 1e-12;

fn floor_value(v: f64) -> Result<f64> {
    if !v.is_finite() {
        return Err(DpdError::Domain(format!("divergence is not finite ({v})")));
    }
    Ok(if (-ZERO_FLOOR..0.0).contains(&v) { 0.0 } else { v })
}

/// `d_c(f_i(·; θ1), f_i(·; θ2))`, the Kullback–Leibler divergence at `c = 0`.
pub fn dpd<M: InhModel + ?Sized>(
    model: &M,
    i: usize,
    theta1: &ParamPoint,
    theta2: &ParamPoint,
    c: f64,
) -> Result<DpdValue> {
    check_nonneg("c", c)?;
    model.check_param(&theta1.theta)?;
    model.check_param(&theta2.theta)?;
    if let Some(v) = model.divergence_closed_form(i, &theta1.theta, &theta2.theta, c) {
        return Ok(DpdValue { value: floor_value(v)?, tau_or_gamma: c, method: Method::ClosedForm });
    }
    let t1 = &theta1.theta;
    let t2 = &theta2.theta;
    let (lo1, hi1) = model.support(i, t1);
    let (lo2, hi2) = model.support(i, t2);
    // Pointwise integrand rearranged so that the 1/c terms cancel before
    // integration: f2^{1+c} − f2^c f1 + f1 f2^c (e^{c(ℓ1−ℓ2)} − 1)/c.
    let integrand = |y: f64| {
        let f1 = model.density(i, y, t1);
        if f1 == 0.0 {
            return model.density(i, y, t2).powf(1.0 + c);
        }
        let l1 = model.log_density(i, y, t1);
        let l2 = model.log_density(i, y, t2);
        let f2 = l2.exp();
        let f2c = (c * l2).exp();
        let ratio = if c == 0.0 { l1 - l2 } else { (c * (l1 - l2)).exp_m1() / c };
        f2c * f2 - f2c * f1 + f1 * f2c * ratio
    };
    let breaks = [0.5 * (lo1 + hi1), 0.5 * (lo2 + hi2)];
    let v = integrate_with_breaks(integrand, lo1.min(lo2), hi1.max(hi2), &breaks, model.quad_settings())
        .map_err(|e| DpdError::Domain(format!("divergence integral failed: {e}")))?
        .value;
    Ok(DpdValue { value: floor_value(v)?, tau_or_gamma: c, method: Method::Quadrature })
}

fn check_data<M: InhModel + ?Sized>(model: &M, data: &ObservationSet) -> Result<()> {
    if data.len() != model.len() {
        return Err(DpdError::Dimension { expected: model.len(), found: data.len() });
    }
    Ok(())
}

/// `H_n(θ) = (1/n) Σ_i [∫ f_i^{1+τ} − (1 + 1/τ) f_i(Y_i; θ)^τ]` for `τ > 0`
/// and the mean negative log-likelihood at `τ = 0`.
///
/// The `τ > 0` objective omits the `(1/τ) ∫ g_i^{1+τ}` term, so levels at
/// small τ differ from the τ = 0 objective by `1/τ` plus a constant; only
/// differences in θ are comparable across τ.
pub fn objective_h<M: InhModel + ?Sized>(model: &M, data: &ObservationSet, theta: &ParamPoint, tau: f64) -> Result<f64> {
    check_nonneg("tau", tau)?;
    check_data(model, data)?;
    model.check_param(&theta.theta)?;
    let t = &theta.theta;
    let mut sum = 0.0;
    for i in 0..model.len() {
        let term = if tau == 0.0 {
            -model.log_density(i, data.y[i], t)
        } else {
            let f = model.density(i, data.y[i], t);
            model.power_integral(i, t, tau)? - (1.0 + 1.0 / tau) * f.powf(tau)
        };
        if !term.is_finite() {
            return Err(DpdError::Evaluation { index: i });
        }
        sum += term;
    }
    Ok(sum / model.len() as f64)
}

/// Gradient of [`objective_h`]:
/// `(1+τ)/n Σ_i [ξ_i(θ) − f_i(Y_i; θ)^τ u_i(Y_i; θ)]`.
pub fn objective_gradient<M: InhModel + ?Sized>(
    model: &M,
    data: &ObservationSet,
    theta: &ParamPoint,
    tau: f64,
) -> Result<DVector<f64>> {
    objective_value_and_gradient(model, data, theta, tau).map(|(_, g)| g)
}

/// [`objective_h`] and its gradient in one pass.
pub fn objective_value_and_gradient<M: InhModel + ?Sized>(
    model: &M,
    data: &ObservationSet,
    theta: &ParamPoint,
    tau: f64,
) -> Result<(f64, DVector<f64>)> {
    check_nonneg("tau", tau)?;
    check_data(model, data)?;
    model.check_param(&theta.theta)?;
    let t = &theta.theta;
    let n = model.len() as f64;
    let mut value = 0.0;
    let mut grad = DVector::zeros(model.dim());
    for i in 0..model.len() {
        let u = model.score(i, data.y[i], t);
        if tau == 0.0 {
            let l = model.log_density(i, data.y[i], t);
            if !l.is_finite() || u.iter().any(|v| !v.is_finite()) {
                return Err(DpdError::Evaluation { index: i });
            }
            value -= l;
            grad -= u;
        } else {
            let f = model.density(i, data.y[i], t);
            let ft = f.powf(tau);
            let term = model.power_integral(i, t, tau)? - (1.0 + 1.0 / tau) * ft;
            if !term.is_finite() || u.iter().any(|v| !v.is_finite()) {
                return Err(DpdError::Evaluation { index: i });
            }
            value += term;
            grad += (model.score_power_integral(i, t, tau)? - u * ft) * (1.0 + tau);
        }
    }
    Ok((value / n, grad / n))
}

/// First and second derivatives of `d_γ(f_i(·; θ1), f_i(·; θ2))` in both
/// argument slots.
///
/// Families without exact derivatives get the gradients by quadrature of the
/// differentiated integrands and the second-order blocks by central
/// differences of those gradients with step `1e-5·max(1, |θ_k|)`.
pub fn deriv_blocks<M: InhModel + ?Sized>(
    model: &M,
    i: usize,
    theta1: &ParamPoint,
    theta2: &ParamPoint,
    gamma: f64,
) -> Result<DerivBlocks> {
    check_nonneg("gamma", gamma)?;
    model.check_param(&theta1.theta)?;
    model.check_param(&theta2.theta)?;
    if let Some(b) = model.divergence_derivatives(i, &theta1.theta, &theta2.theta, gamma) {
        return Ok(b);
    }
    let t1 = &theta1.theta;
    let t2 = &theta2.theta;
    let m1 = slot_gradient(model, i, t1, t2, gamma, Slot::First)?;
    let m2 = slot_gradient(model, i, t1, t2, gamma, Slot::Second)?;
    let d = model.dim();
    let mut a11 = DMatrix::zeros(d, d);
    let mut a12 = DMatrix::zeros(d, d);
    let mut a21 = DMatrix::zeros(d, d);
    let mut a22 = DMatrix::zeros(d, d);
    for k in 0..d {
        // column k of ∂M_j/∂θ1 and ∂M_j/∂θ2
        let h = step(t1[k]);
        let (p, m) = shifted(t1, k, h)?;
        let dm1 = (slot_gradient(model, i, &p, t2, gamma, Slot::First)?
            - slot_gradient(model, i, &m, t2, gamma, Slot::First)?)
            / (2.0 * h);
        let dm2 = (slot_gradient(model, i, &p, t2, gamma, Slot::Second)?
            - slot_gradient(model, i, &m, t2, gamma, Slot::Second)?)
            / (2.0 * h);
        a11.set_column(k, &dm1);
        a21.set_column(k, &dm2);

        let h = step(t2[k]);
        let (p, m) = shifted(t2, k, h)?;
        let dm1 = (slot_gradient(model, i, t1, &p, gamma, Slot::First)?
            - slot_gradient(model, i, t1, &m, gamma, Slot::First)?)
            / (2.0 * h);
        let dm2 = (slot_gradient(model, i, t1, &p, gamma, Slot::Second)?
            - slot_gradient(model, i, t1, &m, gamma, Slot::Second)?)
            / (2.0 * h);
        a12.set_column(k, &dm1);
        a22.set_column(k, &dm2);
    }
    let cross = (&a12 + a21.transpose()) * 0.5;
    Ok(DerivBlocks {
        m1,
        m2,
        a11: linalg::symmetrize(&a11),
        a21: cross.transpose(),
        a12: cross,
        a22: linalg::symmetrize(&a22),
    })
}

fn step(x: f64) -> f64 {
    1e-5 * x.abs().max(1.0)
}

fn shifted(t: &DVector<f64>, k: usize, h: f64) -> Result<(DVector<f64>, DVector<f64>)> {
    let mut p = t.clone();
    let mut m = t.clone();
    p[k] += h;
    m[k] -= h;
    if p[k] == t[k] || m[k] == t[k] {
        return Err(DpdError::Differentiation(format!("step {h:e} underflows at coordinate {k}")));
    }
    Ok((p, m))
}

#[derive(Clone, Copy)]
enum Slot {
    First,
    Second,
}

/// Gradient of the divergence in one slot, differentiated under the integral:
/// slot 1 `(1+1/γ) ∫ f1 u1 (f1^γ − f2^γ)`, slot 2 `(1+γ) ∫ f2^γ u2 (f2 − f1)`.
fn slot_gradient<M: InhModel + ?Sized>(
    model: &M,
    i: usize,
    t1: &DVector<f64>,
    t2: &DVector<f64>,
    gamma: f64,
    slot: Slot,
) -> Result<DVector<f64>> {
    model.check_param(t1)?;
    model.check_param(t2)?;
    let (lo1, hi1) = model.support(i, t1);
    let (lo2, hi2) = model.support(i, t2);
    let breaks = [0.5 * (lo1 + hi1), 0.5 * (lo2 + hi2)];
    let (lo, hi) = (lo1.min(lo2), hi1.max(hi2));
    let mut out = DVector::zeros(model.dim());
    for k in 0..model.dim() {
        let integrand = |y: f64| match slot {
            Slot::First => {
                let f1 = model.density(i, y, t1);
                if f1 == 0.0 {
                    return 0.0;
                }
                let l1 = model.log_density(i, y, t1);
                let l2 = model.log_density(i, y, t2);
                let w = if gamma == 0.0 {
                    l1 - l2
                } else {
                    (1.0 + gamma) * (gamma * l2).exp() * (gamma * (l1 - l2)).exp_m1() / gamma
                };
                f1 * model.score(i, y, t1)[k] * w
            }
            Slot::Second => {
                let f1 = model.density(i, y, t1);
                let f2 = model.density(i, y, t2);
                (1.0 + gamma) * f2.powf(gamma) * model.score(i, y, t2)[k] * (f2 - f1)
            }
        };
        out[k] = integrate_with_breaks(integrand, lo, hi, &breaks, model.quad_settings())
            .map_err(|e| DpdError::Differentiation(format!("derivative integral failed: {e}")))?
            .value;
    }
    Ok(out)
}

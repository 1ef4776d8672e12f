use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use robust_dpd::chisq_mixture::ChiSqMixture;
use robust_dpd::dpd_test::{contiguous_power, run_test, TestReport};
use robust_dpd::estimators::{mdpde_fit, rmdpde_fit, FitResult};
use robust_dpd::io::{fmt, read_dataset_file, write_sim_csv};
use robust_dpd::robustness::{
    if2_statistic, if_mdpde_lrm, if_rmdpde_lrm, lif, pif, ContaminationPoint,
};
use robust_dpd::sim::{empirical_size_power_with, Execution};
use robust_dpd::{LinearRegression, ObservationSet, ParamPoint, Restriction};
use serde_json::json;

use crate::config::{InfluenceConfig, Quantity, RunConfig};
use crate::error::CliError;
use crate::output::{ensure_dir, write_csv, write_json, write_manifest, write_text};

/// Outcome of a command that wrote its artifacts: exit code 0, or 2 when a
/// fit did not converge.
pub type Status = i32;

fn load(config: &RunConfig) -> Result<(LinearRegression, ObservationSet), CliError> {
    let data = read_dataset_file(config.data_path()?)?;
    let model = LinearRegression::from_observations(&data)?;
    Ok((model, data))
}

fn param_names(p: usize) -> Vec<String> {
    (1..=p).map(|j| format!("beta{j}")).chain(std::iter::once("sigma".to_string())).collect()
}

fn fit_rows(label: &str, fit: &FitResult, rows: &mut Vec<Vec<String>>) {
    let names = param_names(fit.theta_hat.dim() - 1);
    for (j, name) in names.iter().enumerate() {
        let se = fit
            .asymp_cov
            .as_ref()
            .map(|c| c[(j, j)])
            .filter(|v| *v >= 0.0)
            .map_or(String::new(), |v| fmt(v.sqrt()));
        rows.push(vec![label.to_string(), name.clone(), fmt(fit.theta_hat.theta[j]), se]);
    }
}

pub fn fit(config: &RunConfig) -> Result<Status, CliError> {
    let (model, data) = load(config)?;
    let tau = config.tau()?;
    let restriction = config.restriction(model.p())?;
    let out = config.out_dir();
    ensure_dir(&out)?;
    let fit = mdpde_fit(&model, &data, tau, None)?;
    let restricted = restriction.as_ref().map(|r| rmdpde_fit(&model, &data, tau, r, None)).transpose()?;

    let mut rows = Vec::new();
    fit_rows("mdpde", &fit, &mut rows);
    if let Some(r) = &restricted {
        fit_rows("rmdpde", r, &mut rows);
    }
    write_csv(&out, "results.csv", &["estimator", "parameter", "estimate", "std_error"], &rows)?;
    write_json(&out, "report.json", &json!({ "tau": tau, "fit": fit, "restricted_fit": restricted }))?;
    write_manifest(&out, "fit", config, config.seed.unwrap_or(0))?;
    let converged = fit.converged && restricted.as_ref().is_none_or(|r| r.converged);
    Ok(if converged { 0 } else { 2 })
}

fn law_summary(law: &ChiSqMixture) -> String {
    let w = &law.weights;
    if w.iter().all(|&v| v == w[0]) && law.ncp.iter().all(|&d| d == 0.0) {
        return format!("{} * chi2({})", fmt(w[0]), w.len());
    }
    let terms: Vec<String> = w.iter().map(|&v| format!("{} * chi2(1)", fmt(v))).collect();
    terms.join(" + ")
}

fn summary(report: &TestReport, hypothesis: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "hypothesis      {hypothesis}");
    let _ = writeln!(s, "tau, gamma      {}, {}", fmt(report.tau), fmt(report.gamma));
    let _ = writeln!(s, "statistic       {}", fmt(report.statistic));
    let _ = writeln!(s, "null law        {}", law_summary(&report.null_dist));
    let _ = writeln!(s, "critical value  {} (alpha = {})", fmt(report.critical_value), fmt(report.alpha));
    let _ = writeln!(s, "p-value         {}", fmt(report.p_value));
    let _ = writeln!(s, "decision        {}", if report.reject { "reject" } else { "do not reject" });
    s
}

pub fn test(config: &RunConfig) -> Result<Status, CliError> {
    let (model, data) = load(config)?;
    let restriction = config.require_restriction(model.p())?;
    let (tau, gamma, alpha) = (config.tau()?, config.gamma()?, config.alpha()?);
    let out = config.out_dir();
    ensure_dir(&out)?;
    let report = run_test(&model, &data, &restriction, tau, gamma, alpha)?;
    let rows = vec![vec![
        fmt(report.statistic),
        fmt(report.critical_value),
        fmt(report.p_value),
        report.reject.to_string(),
        fmt(tau),
        fmt(gamma),
        fmt(alpha),
    ]];
    write_csv(&out, "results.csv", &["statistic", "critical_value", "p_value", "reject", "tau", "gamma", "alpha"], &rows)?;
    write_json(&out, "report.json", &report)?;
    let text = summary(&report, config.hypothesis.as_deref().unwrap_or(""));
    write_text(&out, "summary.txt", &text)?;
    write_manifest(&out, "test", config, config.seed.unwrap_or(0))?;
    print!("{text}");
    Ok(0)
}

/// σ used for asymptotic laws when none is configured: the restricted fit,
/// or the plain fit without a hypothesis.
fn fitted_point(
    model: &LinearRegression,
    data: &ObservationSet,
    tau: f64,
    restriction: Option<&Restriction>,
) -> Result<ParamPoint, CliError> {
    let fit = match restriction {
        Some(r) => rmdpde_fit(model, data, tau, r, None)?,
        None => mdpde_fit(model, data, tau, None)?,
    };
    if !fit.converged {
        return Err(robust_dpd::DpdError::NonConvergence { iterations: fit.iterations, gradient_norm: fit.gradient_norm }.into());
    }
    Ok(fit.theta_hat)
}

fn vector(v: &[f64], p: usize, what: &str) -> Result<DVector<f64>, CliError> {
    if v.len() != p {
        return Err(CliError::Usage(format!("{what} needs {p} entries, found {}", v.len())));
    }
    Ok(DVector::from_column_slice(v))
}

fn hypothesis_matrix(restriction: &Restriction, p: usize) -> Result<DMatrix<f64>, CliError> {
    Ok(restriction
        .linear_form(p)
        .ok_or_else(|| CliError::Usage("hypothesis must be linear in beta".into()))?
        .0)
}

pub fn power(config: &RunConfig, delta_flag: Option<Vec<f64>>) -> Result<Status, CliError> {
    let (model, data) = load(config)?;
    let p = model.p();
    let restriction = config.require_restriction(p)?;
    let (tau, gamma, alpha) = (config.tau()?, config.gamma()?, config.alpha()?);
    let mut pc = config.power.clone().unwrap_or_default();
    if let Some(d) = delta_flag {
        pc.delta = d;
    }
    if pc.scales.is_empty() {
        return Err(CliError::Usage("power needs at least one scale".into()));
    }
    let delta = vector(&pc.delta, p, "delta")?;
    let sigma0 = match pc.sigma0 {
        Some(s) if s > 0.0 && s.is_finite() => s,
        Some(s) => return Err(CliError::Usage(format!("sigma0 must be positive, got {s}"))),
        None => fitted_point(&model, &data, tau, Some(&restriction))?.sigma(),
    };
    let l = hypothesis_matrix(&restriction, p)?;
    let out = config.out_dir();
    ensure_dir(&out)?;
    let mut rows = Vec::new();
    let mut values = Vec::new();
    for &s in &pc.scales {
        let pw = contiguous_power(model.design(), sigma0, &l, tau, gamma, &(&delta * s), alpha)?;
        rows.push(vec![fmt(s), fmt(pw)]);
        values.push(json!({ "scale": s, "power": pw }));
    }
    write_csv(&out, "results.csv", &["scale", "power"], &rows)?;
    write_json(
        &out,
        "report.json",
        &json!({ "tau": tau, "gamma": gamma, "alpha": alpha, "sigma0": sigma0, "delta": pc.delta, "power": values }),
    )?;
    let mut effective = config.clone();
    effective.power = Some(pc);
    write_manifest(&out, "power", &effective, config.seed.unwrap_or(0))?;
    Ok(0)
}

#[allow(clippy::too_many_arguments)]
fn influence_value(
    ic: &InfluenceConfig,
    x: &DMatrix<f64>,
    theta0: &ParamPoint,
    t: &ContaminationPoint,
    tau: f64,
    gamma: f64,
    alpha: f64,
    restriction: Option<&Restriction>,
) -> Result<f64, CliError> {
    let p = x.ncols();
    let need = || restriction.ok_or_else(|| CliError::Usage("this quantity needs --hypothesis".into()));
    let component = |v: &DVector<f64>| {
        v.get(ic.component)
            .copied()
            .ok_or_else(|| CliError::Usage(format!("component {} out of range for {p} coefficients", ic.component)))
    };
    Ok(match ic.quantity {
        Quantity::IfBeta => component(&if_mdpde_lrm(x, theta0, t, tau)?.beta)?,
        Quantity::IfSigma => if_mdpde_lrm(x, theta0, t, tau)?.sigma,
        Quantity::IfRbeta => component(&if_rmdpde_lrm(x, theta0, t, tau, need()?)?.beta)?,
        Quantity::If2 => if2_statistic(x, theta0, t, tau, gamma, need()?)?,
        Quantity::Pif => {
            let delta = ic.delta.as_deref().ok_or_else(|| CliError::Usage("pif needs influence.delta".into()))?;
            pif(x, theta0, t, tau, gamma, need()?, &vector(delta, p, "delta")?, alpha)?
        }
        Quantity::Lif => lif(x, theta0, t, tau, gamma, need()?, alpha)?,
    })
}

pub fn influence(config: &RunConfig) -> Result<Status, CliError> {
    let (model, data) = load(config)?;
    let p = model.p();
    let ic = config
        .influence
        .as_ref()
        .ok_or_else(|| CliError::Usage("influence needs an \"influence\" section in --config".into()))?;
    let restriction = config.restriction(p)?;
    let (tau, gamma, alpha) = (config.tau()?, config.gamma()?, config.alpha()?);
    let grid = ic.t_grid.points()?;
    let theta0 = match (&ic.beta0, ic.sigma0) {
        (Some(b), Some(s)) => {
            vector(b, p, "beta0")?;
            ParamPoint::lrm(b, s)
        }
        (None, None) => fitted_point(&model, &data, tau, restriction.as_ref())?,
        _ => return Err(CliError::Usage("give both beta0 and sigma0, or neither".into())),
    };
    let x = model.design();
    let n = x.nrows();
    if let Some(d) = ic.direction {
        if d >= n {
            return Err(CliError::Usage(format!("direction {d} out of range for {n} observations")));
        }
    }
    let fitted = x * theta0.beta();
    let out = config.out_dir();
    ensure_dir(&out)?;
    let mut rows = Vec::with_capacity(grid.len());
    let mut curve = Vec::with_capacity(grid.len());
    for &t in &grid {
        let tv = fitted.add_scalar(t);
        let point = match ic.direction {
            Some(d) => ContaminationPoint::in_directions(tv, vec![d])?,
            None => ContaminationPoint::new(tv, n)?,
        };
        let v = influence_value(ic, x, &theta0, &point, tau, gamma, alpha, restriction.as_ref())?;
        rows.push(vec![fmt(t), fmt(v)]);
        curve.push(json!({ "t": t, "value": v }));
    }
    write_csv(&out, "results.csv", &["t", "value"], &rows)?;
    write_json(
        &out,
        "report.json",
        &json!({ "quantity": ic.quantity, "tau": tau, "gamma": gamma, "alpha": alpha, "theta0": theta0, "curve": curve }),
    )?;
    write_manifest(&out, "influence", config, config.seed.unwrap_or(0))?;
    Ok(0)
}

pub fn simulate(config: &RunConfig, execution: Execution) -> Result<Status, CliError> {
    let mut sim = config
        .simulate
        .clone()
        .ok_or_else(|| CliError::Usage("simulate needs a \"simulate\" section in --config".into()))?;
    if let Some(seed) = config.seed {
        sim.master_seed = seed;
    }
    if let Some(alpha) = config.alpha {
        sim.alpha = alpha;
    }
    if let Some(tau) = config.tau {
        sim.tau_gamma = vec![(tau, config.gamma.unwrap_or(tau))];
    }
    sim.validate()?;
    let out = config.out_dir();
    ensure_dir(&out)?;
    let results = empirical_size_power_with(&sim, execution)?;
    let path = out.join("results.csv");
    let file = std::fs::File::create(&path).map_err(|source| CliError::Output { path: path.display().to_string(), source })?;
    write_sim_csv(&results, std::io::BufWriter::new(file))?;
    write_json(&out, "report.json", &json!({ "results": results }))?;
    let mut effective = config.clone();
    effective.simulate = Some(sim.clone());
    write_manifest(&out, "simulate", &effective, sim.master_seed)?;
    let flagged = results.iter().filter(|r| r.flagged).count();
    if flagged > 0 {
        eprintln!("warning: {flagged} cell(s) had more than 1% failed replications");
    }
    Ok(0)
}

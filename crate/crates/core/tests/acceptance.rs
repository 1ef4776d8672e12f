//! Acceptance run: one PASS/FAIL line per criterion with its timing.
//!
//! Failures listed in `KNOWN_FAILURES` are reported as such and do not fail
//! the run; any other failure, or a known one that starts passing, does.

mod common;

use std::process::ExitCode;
use std::time::{Duration, Instant};

use common::*;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use robust_dpd::chisq_mixture::{mixture_quantile, series_power, survival_imhof, ChiSqMixture};
use robust_dpd::dpd_test::{null_distribution_lrm, qx_eigenvalues, run_test, zeta1};
use robust_dpd::estimators::mdpde_fit;
use robust_dpd::io::write_sim_csv;
use robust_dpd::robustness::*;
use robust_dpd::sim::{empirical_size_power_with, Execution, SimConfig, SimMode, SimResult};
use robust_dpd::{LinearRegression, ObservationSet, ParamPoint, Restriction};

/// Criteria that fail at desk scale; the reasons are recorded with the
/// project notes and printed with the detail line.
const KNOWN_FAILURES: &[u32] = &[8];

type Check = Result<(bool, String), String>;

struct Criterion {
    id: u32,
    name: &'static str,
    budget: Option<Duration>,
    run: fn() -> Check,
}

fn main() -> ExitCode {
    let criteria = [
        Criterion { id: 1, name: "LRT equivalence", budget: Some(Duration::from_secs(5)), run: lrt_equivalence },
        Criterion { id: 2, name: "null-law collapse", budget: Some(Duration::from_secs(1)), run: null_law_collapse },
        Criterion { id: 3, name: "distribution engine", budget: Some(Duration::from_secs(60)), run: distribution_engine },
        Criterion { id: 4, name: "estimator oracles", budget: Some(Duration::from_secs(30)), run: estimator_oracles },
        Criterion { id: 5, name: "influence-function oracles", budget: Some(Duration::from_secs(60)), run: influence_oracles },
        Criterion { id: 6, name: "boundedness dichotomy", budget: Some(Duration::from_secs(10)), run: boundedness },
        Criterion { id: 7, name: "level robustness", budget: None, run: level_robustness },
        Criterion { id: 8, name: "size and power at desk scale", budget: Some(Duration::from_secs(180)), run: desk_scale },
        Criterion { id: 9, name: "determinism", budget: None, run: determinism },
    ];
    let filter: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut unexpected = 0;
    for c in criteria.iter().filter(|c| filter.is_empty() || filter.contains(&c.id)) {
        let start = Instant::now();
        let outcome = (c.run)();
        let elapsed = start.elapsed();
        let (mut pass, mut detail) = outcome.unwrap_or_else(|e| (false, format!("error: {e}")));
        if let Some(b) = c.budget {
            if elapsed > b {
                pass = false;
                detail.push_str(&format!("; over the {} s budget", b.as_secs()));
            }
        }
        let known = KNOWN_FAILURES.contains(&c.id);
        let label = match (pass, known) {
            (true, false) => "PASS",
            (false, true) => "FAIL (known)",
            (true, true) => "PASS (listed as known failure)",
            (false, false) => "FAIL",
        };
        if pass == known {
            unexpected += 1;
        }
        println!("criterion {} [{}]: {label} in {:.2} s: {detail}", c.id, c.name, elapsed.as_secs_f64());
    }
    if unexpected == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn lrt_equivalence() -> Check {
    let mut g = rng(101);
    let mut worst = 0.0f64;
    for k in 0..50 {
        let n = g.random_range(15..80);
        let p = g.random_range(1..5);
        let x = random_design(n, p, &mut g);
        let beta: Vec<f64> = (0..p).map(|_| g.random_range(-2.0..2.0)).collect();
        let y = &x * DVector::from_column_slice(&beta) + normal_vector(n, g.random_range(0.5..3.0), &mut g);
        // test a null a little off the truth so the statistic is not tiny
        let l0: Vec<f64> = beta.iter().map(|b| b + g.random_range(-0.3..0.3)).collect();
        let model = LinearRegression::new(x.clone()).map_err(err)?;
        let data = ObservationSet::new(y.clone(), Some(x.clone())).map_err(err)?;
        let report = run_test(&model, &data, &Restriction::first_components(&l0).map_err(err)?, 0.0, 0.0, 0.05)
            .map_err(|e| format!("dataset {k}: {e}"))?;
        let lrt = lrt_first_components(&x, &y, &l0);
        worst = worst.max(rel_err(report.statistic, lrt, 1e-300));
    }
    Ok((worst <= 1e-8, format!("max relative error {worst:.3e} over 50 datasets (tol 1e-8)")))
}

fn null_law_collapse() -> Check {
    let mut g = rng(202);
    let mut worst = 0.0f64;
    let mut counts_ok = true;
    let mut cases = 0;
    for p in 2..6 {
        let x = random_design(40, p, &mut g);
        for r in 1..=p {
            let l = DMatrix::from_fn(p, r, |_, _| g.random_range(-1.0..1.0));
            let eig = qx_eigenvalues(&x, &l).map_err(err)?;
            let mut ones = 0;
            for e in eig.iter() {
                let d = e.abs().min((e - 1.0).abs());
                worst = worst.max(d);
                if (e - 1.0).abs() < 1e-10 {
                    ones += 1;
                }
            }
            counts_ok &= ones == r;
            let null = null_distribution_lrm(&x, g.random_range(0.5..3.0), &l, 0.0, 0.0).map_err(err)?;
            counts_ok &= null.r() == r && null.weights.iter().all(|w| (w - 1.0).abs() < 1e-10);
            cases += 1;
        }
    }
    let z = zeta1(1.7, 0.0, 0.0).map_err(err)?;
    let pass = worst <= 1e-10 && counts_ok && (z - 1.0).abs() < 1e-14;
    Ok((pass, format!("{cases} (p, L) cases: max distance to {{0,1}} {worst:.2e}, one-counts {counts_ok}, zeta1 {z}")))
}

fn distribution_engine() -> Check {
    let mixtures = [
        (vec![1.0, 1.0, 1.0], vec![0.0, 0.0, 0.0]),
        (vec![2.5, 0.6], vec![0.0, 0.0]),
        (vec![1.4, 0.9, 0.3], vec![1.5, 0.0, 3.0]),
        (vec![0.8, 0.8], vec![2.0, 0.5]),
        (vec![3.0, 1.0, 0.5, 0.2], vec![0.4, 4.0, 0.0, 1.0]),
    ];
    let probs = [0.5, 0.2, 0.05, 0.01, 0.001];
    let mut max_gap = 0.0f64;
    let mut max_z = 0.0f64;
    for (k, (w, d)) in mixtures.iter().enumerate() {
        let mix = ChiSqMixture::new(w.clone(), d.clone()).map_err(err)?;
        let thresholds: Vec<f64> = probs.iter().map(|&a| mixture_quantile(&mix, a)).collect::<Result<_, _>>().map_err(err)?;
        let mc = mc_mixture_survival(w, d, &thresholds, 1_000_000, 300 + k as u64);
        for (c, &x) in thresholds.iter().enumerate() {
            let s = series_power(&mix, x).map_err(err)?;
            let i = survival_imhof(&mix, x).map_err(err)?;
            max_gap = max_gap.max((s - i).abs());
            let (p, se) = mc[c];
            max_z = max_z.max((s - p).abs() / se).max((i - p).abs() / se);
        }
    }
    let pass = max_gap <= 1e-6 && max_z <= 3.0;
    Ok((pass, format!("25 cells: series vs inversion max gap {max_gap:.2e} (tol 1e-6); max |z| vs 1e6-draw MC {max_z:.2} (tol 3)")))
}

fn estimator_oracles() -> Check {
    let mut g = rng(404);
    let mut worst_mle = 0.0f64;
    for _ in 0..10 {
        let x = random_design(50, 3, &mut g);
        let y = &x * DVector::from_row_slice(&[1.0, -2.0, 0.5]) + normal_vector(50, 1.5, &mut g);
        let fit = mdpde_fit(&LinearRegression::new(x.clone()).map_err(err)?, &ObservationSet::new(y.clone(), Some(x.clone())).map_err(err)?, 0.0, None)
            .map_err(err)?;
        let (b, rss) = ols(&x, &y);
        let s = (rss / 50.0).sqrt();
        let th = &fit.theta_hat;
        for j in 0..3 {
            worst_mle = worst_mle.max(rel_err(th.beta()[j], b[j], 1.0));
        }
        worst_mle = worst_mle.max(rel_err(th.sigma(), s, 1.0));
    }

    // location-scale toy with a cluster of outliers
    let mut y: Vec<f64> = (0..36).map(|_| 2.0 + g.sample::<f64, _>(rand_distr::StandardNormal)).collect();
    y.extend([11.0, 12.0, 12.5, 13.0]);
    let n = y.len();
    let x = DMatrix::from_element(n, 1, 1.0);
    let y = DVector::from_vec(y);
    let fit = mdpde_fit(&LinearRegression::new(x.clone()).map_err(err)?, &ObservationSet::new(y.clone(), Some(x.clone())).map_err(err)?, 0.5, None)
        .map_err(err)?;
    let grid_min = |(m0, m1): (f64, f64), (s0, s1): (f64, f64), steps: usize| {
        let mut best = (f64::INFINITY, 0.0, 0.0);
        for a in 0..=steps {
            let m = m0 + (m1 - m0) * a as f64 / steps as f64;
            for b in 0..=steps {
                let s = s0 + (s1 - s0) * b as f64 / steps as f64;
                let v = lrm_objective(&x, &y, &[m], s, 0.5);
                if v < best.0 {
                    best = (v, m, s);
                }
            }
        }
        best
    };
    let (_, m, s) = grid_min((-2.0, 8.0), (0.2, 5.0), 500);
    let (_, m, s) = grid_min((m - 0.04, m + 0.04), (s - 0.04, s + 0.04), 400);
    let gap = (fit.theta_hat.beta()[0] - m).abs().max((fit.theta_hat.sigma() - s).abs());
    let pass = worst_mle <= 1e-8 && gap <= 2e-3;
    Ok((pass, format!("tau=0 vs OLS/MLE max rel error {worst_mle:.2e} (tol 1e-8); tau=0.5 vs grid search max gap {gap:.2e} (tol 2e-3)")))
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, a| m.max(a.abs()))
}

fn influence_oracles() -> Check {
    let x = toy_design();
    let theta0 = [0.5, 1.0, 1.3];
    let th = ParamPoint::lrm(&theta0[..2], theta0[2]);
    let t = toy_points(&x, &theta0[..2]);
    let all: Vec<usize> = (0..7).collect();
    let everywhere = ContaminationPoint::new(DVector::from_vec(t.clone()), 7).map_err(err)?;
    let single = ContaminationPoint::in_directions(DVector::from_vec(t.clone()), vec![2]).map_err(err)?;
    let first = Restriction::first_components(&[0.5]).map_err(err)?;
    let e1 = DMatrix::from_row_slice(2, 1, &[1.0, 0.0]);
    let mut worst = 0.0f64;
    let mut note = |got: &[f64], oracle: &[f64]| {
        let scale = max_abs(oracle);
        for (a, b) in got.iter().zip(oracle) {
            worst = worst.max((a - b).abs() / scale);
        }
    };
    for tau in [0.0, 0.5, 1.0] {
        for (dirs, point) in [(&all[..], &everywhere), (&[2usize][..], &single)] {
            let oracle = gateaux_if(&x, &theta0, &t, dirs, tau, 0);
            let inf = if_mdpde_lrm(&x, &th, point, tau).map_err(err)?;
            note(&[inf.beta[0], inf.beta[1], inf.sigma], &oracle);

            let oracle = gateaux_if(&x, &theta0, &t, dirs, tau, 1);
            let inf = if_rmdpde_lrm(&x, &th, point, tau, &first).map_err(err)?;
            note(&[inf.beta[0], inf.beta[1], inf.sigma], &oracle);
            let reg = if_rmdpde_lrm_regularized(&x, &th, point, tau, &e1).map_err(err)?;
            note(&[reg[0], reg[1]], &oracle[..2]);
        }
    }
    let mut worst_if2 = 0.0f64;
    let mut worst_paths = 0.0f64;
    for (tau, gamma) in [(0.5, 0.5), (1.0, 1.0), (0.3, 0.8)] {
        let general = if2_statistic(&x, &th, &everywhere, tau, gamma, &first).map_err(err)?;
        let closed = if2_first_components(&x, &th, &everywhere, tau, gamma, 1).map_err(err)?;
        worst_paths = worst_paths.max(rel_err(closed, general, 1e-300));
        let oracle = gateaux_if2(&x, &theta0, &t, &all, tau, gamma, 1);
        worst_if2 = worst_if2.max(rel_err(general, oracle, 1e-300));
    }
    let pass = worst <= 1e-4 && worst_if2 <= 1e-4 && worst_paths <= 1e-8;
    Ok((
        pass,
        format!(
            "IF vs Gateaux max rel error {worst:.2e}, IF2 vs second-order Gateaux {worst_if2:.2e} (tol 1e-4); IF2 general vs closed form {worst_paths:.2e} (tol 1e-8)"
        ),
    ))
}

fn boundedness() -> Check {
    let x = toy_design();
    let th = ParamPoint::lrm(&[0.5, 1.0], 1.3);
    let fitted = &x * th.beta();
    let first = Restriction::first_components(&[0.5]).map_err(err)?;
    let delta = DVector::from_row_slice(&[1.5, 0.0]);
    let ray: Vec<f64> = (0..=60).map(|k| if k == 0 { 0.0 } else { 10f64.powf(-1.0 + 4.0 * k as f64 / 60.0) }).collect();
    let mut lines = Vec::new();
    let mut pass = true;
    for tau in [0.0, 0.5, 1.0] {
        let mut curves = vec![Vec::new(), Vec::new(), Vec::new(), Vec::new()];
        for &s in &ray {
            let point = ContaminationPoint::new(fitted.add_scalar(s), 7).map_err(err)?;
            let inf = if_mdpde_lrm(&x, &th, &point, tau).map_err(err)?;
            curves[0].push(inf.beta.norm());
            curves[1].push(inf.sigma.abs());
            curves[2].push(if2_statistic(&x, &th, &point, tau, tau, &first).map_err(err)?.abs());
            curves[3].push(pif(&x, &th, &point, tau, tau, &first, &delta, 0.05).map_err(err)?.abs());
        }
        for (name, c) in ["IF beta", "IF sigma", "IF2", "PIF"].iter().zip(&curves) {
            let sup = max_abs(c);
            let tail = *c.last().unwrap();
            // s = 100 against s = 1000
            let mid = c[45];
            let ok = if tau == 0.0 {
                tail >= 5.0 * mid && c.windows(2).skip(20).all(|w| w[1] >= w[0])
            } else if *name == "IF sigma" {
                // the centring term survives: the curve settles at a constant
                sup.is_finite() && (tail - mid).abs() <= 1e-8 * sup
            } else {
                sup.is_finite() && tail <= 1e-8 * sup
            };
            pass &= ok;
            lines.push(format!("tau={tau} {name} sup {sup:.3e} tail {tail:.3e}{}", if ok { "" } else { " FAIL" }));
        }
    }
    Ok((pass, lines.join(", ")))
}

fn level_robustness() -> Check {
    let x = toy_design();
    let th = ParamPoint::lrm(&[0.5, 1.0], 1.3);
    let fitted = &x * th.beta();
    let first = Restriction::first_components(&[0.5]).map_err(err)?;
    let mut worst_lif = 0.0f64;
    for tau in [0.25, 0.5, 1.0] {
        for s in [-8.0, -1.0, 0.5, 2.0, 20.0] {
            let point = ContaminationPoint::new(fitted.add_scalar(s), 7).map_err(err)?;
            worst_lif = worst_lif.max(lif(&x, &th, &point, tau, tau, &first, 0.05).map_err(err)?.abs());
        }
    }
    let mut worst_pif = 0.0f64;
    let mut worst_forms = 0.0f64;
    let eps = 1e-3;
    for tau in [0.0, 0.5, 1.0] {
        for (s, d) in [(1.0, 2.0), (3.0, -1.0), (-2.5, 4.0)] {
            let point = ContaminationPoint::new(fitted.add_scalar(s), 7).map_err(err)?;
            let delta = DVector::from_row_slice(&[d, 0.0]);
            let up = contaminated_power(&x, &th, &point, tau, tau, &first, &delta, eps, 0.05).map_err(err)?;
            let down = contaminated_power(&x, &th, &point, tau, tau, &first, &delta, -eps, 0.05).map_err(err)?;
            let fd = (up - down) / (2.0 * eps);
            let got = pif(&x, &th, &point, tau, tau, &first, &delta, 0.05).map_err(err)?;
            worst_pif = worst_pif.max((got - fd).abs());
            let closed = pif_first_components(&x, &th, &point, tau, tau, 1, &DVector::from_row_slice(&[d]), 0.05).map_err(err)?;
            worst_forms = worst_forms.max((closed - got).abs());
        }
    }
    let pass = worst_lif <= 1e-6 && worst_pif <= 5e-3 && worst_forms <= 1e-6;
    Ok((
        pass,
        format!("max |LIF| {worst_lif:.2e} (tol 1e-6); PIF vs epsilon differences of power {worst_pif:.2e} (tol 5e-3); closed vs general PIF {worst_forms:.2e}"),
    ))
}

fn cell(results: &[SimResult], mode: SimMode, e_err: f64, tau: f64) -> Result<&SimResult, String> {
    results
        .iter()
        .find(|r| r.mode == mode && r.e_err == e_err && r.e_x == 0.0 && r.tau == tau)
        .ok_or_else(|| format!("missing cell {mode:?} e_err={e_err} tau={tau}"))
}

fn desk_scale() -> Check {
    let mut cfg = SimConfig::new(100);
    cfg.reps = 1000;
    cfg.alpha = 0.05;
    cfg.e_err = vec![0.0, 0.1];
    cfg.e_x = vec![0.0];
    cfg.mode = vec![SimMode::Size, SimMode::Power];
    cfg.master_seed = 2024;
    let results = empirical_size_power_with(&cfg, Execution::Parallel).map_err(err)?;
    let taus = [0.0, 0.5, 1.0];
    let rate = |m, e, t| cell(&results, m, e, t).map(|r| r.rejection_rate);

    let mut a = true;
    let mut sizes = Vec::new();
    for t in taus {
        let s = rate(SimMode::Size, 0.0, t)?;
        a &= (s - 0.05).abs() <= 0.025;
        sizes.push(format!("{s:.3}"));
    }
    let (s0, s1) = (rate(SimMode::Size, 0.1, 0.0)?, rate(SimMode::Size, 0.1, 1.0)?);
    let (p0, p1) = (rate(SimMode::Power, 0.1, 0.0)?, rate(SimMode::Power, 0.1, 1.0)?);
    let b_size = (s1 - 0.05).abs() < (s0 - 0.05).abs();
    let b_power = p1 > p0;
    let mut c = true;
    let mut powers = Vec::new();
    for w in taus.windows(2) {
        let hi = cell(&results, SimMode::Power, 0.0, w[0])?;
        let lo = cell(&results, SimMode::Power, 0.0, w[1])?;
        let se = hi.mc_stderr.hypot(lo.mc_stderr);
        c &= lo.rejection_rate <= hi.rejection_rate + 2.0 * se;
    }
    for t in taus {
        powers.push(format!("{:.3}", rate(SimMode::Power, 0.0, t)?));
    }
    let failures: usize = results.iter().map(|r| r.failures).sum();
    let detail = format!(
        "(a) {} clean sizes [{}] for tau 0/0.5/1; (b) {} size@e_err=0.1 tau0 {s0:.3} tau1 {s1:.3} {}, power tau0 {p0:.3} tau1 {p1:.3} {}; (c) {} clean power [{}]; fit failures {failures}",
        pf(a),
        sizes.join(", "),
        pf(b_size && b_power),
        pf(b_size),
        pf(b_power),
        pf(c),
        powers.join(", "),
    );
    Ok((a && b_size && b_power && c, detail))
}

fn pf(ok: bool) -> &'static str {
    if ok {
        "PASS"
    } else {
        "FAIL"
    }
}

fn determinism() -> Check {
    let mut cfg = SimConfig::new(30);
    cfg.reps = 40;
    cfg.e_err = vec![0.0, 0.1];
    cfg.e_x = vec![0.0, 0.05];
    cfg.mode = vec![SimMode::Size, SimMode::Power];
    cfg.master_seed = 77;
    let csv = |execution: Execution, threads: usize| -> Result<Vec<u8>, String> {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().map_err(err)?;
        let results = pool.install(|| empirical_size_power_with(&cfg, execution)).map_err(err)?;
        let mut out = Vec::new();
        write_sim_csv(&results, &mut out).map_err(err)?;
        Ok(out)
    };
    let reference = csv(Execution::Parallel, 1)?;
    let runs = [csv(Execution::Parallel, 4)?, csv(Execution::Parallel, 1)?, csv(Execution::Sequential, 1)?];
    let same = runs.iter().all(|r| *r == reference);
    Ok((same, format!("{} CSV bytes identical across 1 and 4 threads, a repeat and sequential: {same}", reference.len())))
}

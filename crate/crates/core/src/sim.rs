//! Monte Carlo size and power study for the regression test: contaminated
//! errors, leverage points, and a grid over sample size, `τ = γ` and
//! contamination levels.
//!
//! Every replication draws from its own ChaCha stream keyed by the master
//! seed, the data cell and the replication index, so results do not depend
//! on how replications are scheduled.

use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Deserializer, Serialize};

use crate::dpd_test::run_test;
use crate::error::{check_nonneg, check_probability, DpdError, Result};
use crate::inh_model::{LinearRegression, ObservationSet, Restriction};

/// Share of failed replications above which a cell is flagged.
pub const FAILURE_FLAG_RATE: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimMode {
    Size,
    Power,
}

impl SimMode {
    pub fn as_str(self) -> &'static str {
        match self {
            SimMode::Size => "size",
            SimMode::Power => "power",
        }
    }

    fn tag(self) -> u64 {
        match self {
            SimMode::Size => 1,
            SimMode::Power => 2,
        }
    }
}

/// How the second parameter of `N(10, 5)` and `N(16, 5)` is read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpreadConvention {
    #[default]
    Variance,
    StdDev,
}

impl SpreadConvention {
    fn sd(self, spread: f64) -> f64 {
        match self {
            SpreadConvention::Variance => spread.sqrt(),
            SpreadConvention::StdDev => spread,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    Sequential,
    /// Falls back to sequential when built without the `parallel` feature.
    #[default]
    Parallel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    #[serde(deserialize_with = "one_or_many")]
    pub n: Vec<usize>,
    #[serde(default = "default_reps")]
    pub reps: usize,
    #[serde(default = "default_beta0")]
    pub beta0: Vec<f64>,
    #[serde(default = "default_sigma_true")]
    pub sigma_true: f64,
    #[serde(default = "default_tau_gamma")]
    pub tau_gamma: Vec<(f64, f64)>,
    #[serde(default = "default_zero_list", deserialize_with = "one_or_many")]
    pub e_err: Vec<f64>,
    #[serde(default = "default_zero_list", deserialize_with = "one_or_many")]
    pub e_x: Vec<f64>,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default = "default_mode", deserialize_with = "one_or_many")]
    pub mode: Vec<SimMode>,
    #[serde(default = "default_design_mean")]
    pub design_mean: f64,
    #[serde(default = "default_design_spread")]
    pub design_spread: f64,
    #[serde(default = "default_leverage_mean")]
    pub leverage_mean: f64,
    #[serde(default = "default_outlier_mean")]
    pub outlier_mean: f64,
    #[serde(default)]
    pub spread_convention: SpreadConvention,
}

fn default_reps() -> usize {
    1000
}
fn default_beta0() -> Vec<f64> {
    vec![3.0, 2.0]
}
fn default_sigma_true() -> f64 {
    3f64.sqrt()
}
fn default_tau_gamma() -> Vec<(f64, f64)> {
    vec![(0.0, 0.0), (0.5, 0.5), (1.0, 1.0)]
}
fn default_zero_list() -> Vec<f64> {
    vec![0.0]
}
fn default_alpha() -> f64 {
    0.05
}
fn default_mode() -> Vec<SimMode> {
    vec![SimMode::Size]
}
fn default_design_mean() -> f64 {
    10.0
}
fn default_design_spread() -> f64 {
    5.0
}
fn default_leverage_mean() -> f64 {
    16.0
}
fn default_outlier_mean() -> f64 {
    10.0
}

fn one_or_many<'de, D, T>(d: D) -> std::result::Result<Vec<T>, D::Error>
where
    D: Deserializer<'de>,
    T: Deserialize<'de>,
{
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum OneOrMany<T> {
        One(T),
        Many(Vec<T>),
    }
    Ok(match OneOrMany::deserialize(d)? {
        OneOrMany::One(v) => vec![v],
        OneOrMany::Many(v) => v,
    })
}

impl SimConfig {
    /// The two-column design study with the default grid at one sample size.
    pub fn new(n: usize) -> Self {
        Self {
            n: vec![n],
            reps: default_reps(),
            beta0: default_beta0(),
            sigma_true: default_sigma_true(),
            tau_gamma: default_tau_gamma(),
            e_err: default_zero_list(),
            e_x: default_zero_list(),
            alpha: default_alpha(),
            master_seed: 0,
            mode: default_mode(),
            design_mean: default_design_mean(),
            design_spread: default_design_spread(),
            leverage_mean: default_leverage_mean(),
            outlier_mean: default_outlier_mean(),
            spread_convention: SpreadConvention::Variance,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.reps == 0 {
            return Err(DpdError::Usage("reps must be at least 1".into()));
        }
        if self.n.is_empty() || self.tau_gamma.is_empty() || self.e_err.is_empty() || self.e_x.is_empty() || self.mode.is_empty() {
            return Err(DpdError::Usage("every grid dimension needs at least one value".into()));
        }
        if let Some(&n) = self.n.iter().find(|&&n| n < 3) {
            return Err(DpdError::Usage(format!("sample size must be at least 3, got {n}")));
        }
        if self.beta0.len() != 2 {
            return Err(DpdError::Dimension { expected: 2, found: self.beta0.len() });
        }
        if !(self.sigma_true > 0.0 && self.sigma_true.is_finite()) {
            return Err(DpdError::Domain(format!("sigma_true must be positive, got {}", self.sigma_true)));
        }
        for &(tau, gamma) in &self.tau_gamma {
            check_nonneg("tau", tau)?;
            check_nonneg("gamma", gamma)?;
            if tau != gamma {
                return Err(DpdError::Usage(format!("tau and gamma must coincide, got ({tau}, {gamma})")));
            }
        }
        for &e in self.e_err.iter().chain(&self.e_x) {
            if !(0.0..=0.5).contains(&e) {
                return Err(DpdError::Domain(format!("contamination proportion must lie in [0, 0.5], got {e}")));
            }
        }
        if !(self.design_spread > 0.0 && self.design_spread.is_finite()) {
            return Err(DpdError::Domain("design_spread must be positive".into()));
        }
        check_probability("alpha", self.alpha)
    }
}

/// One grid cell of the study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    pub n: usize,
    pub tau: f64,
    pub gamma: f64,
    pub e_err: f64,
    pub e_x: f64,
    pub mode: SimMode,
    pub reps: usize,
    pub rejections: usize,
    /// Share of rejections among replications whose fits succeeded.
    pub rejection_rate: f64,
    pub mc_stderr: f64,
    pub failures: usize,
    /// More than 1% of replications failed.
    pub flagged: bool,
    /// Time spent in this cell summed over replications.
    #[serde(skip)]
    pub wall_time: Duration,
}

fn chacha(master_seed: u64, key: u64, e_err: f64, e_x: f64, stream: u64) -> ChaCha8Rng {
    let mut seed = [0u8; 32];
    seed[..8].copy_from_slice(&master_seed.to_le_bytes());
    seed[8..16].copy_from_slice(&key.to_le_bytes());
    seed[16..24].copy_from_slice(&e_err.to_bits().to_le_bytes());
    seed[24..].copy_from_slice(&e_x.to_bits().to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(seed);
    rng.set_stream(stream);
    rng
}

fn design_rng(master_seed: u64, n: usize) -> ChaCha8Rng {
    chacha(master_seed, n as u64, 0.0, 0.0, u64::MAX)
}

fn replication_rng(master_seed: u64, n: usize, mode: SimMode, e_err: f64, e_x: f64, rep: usize) -> ChaCha8Rng {
    chacha(master_seed, (n as u64) | (mode.tag() << 56), e_err, e_x, rep as u64)
}

/// `x_i = (1, z_i)` with `z_i ~ N(mean, sd)`, drawn once.
pub fn gen_design_with<R: Rng + ?Sized>(n: usize, mean: f64, sd: f64, rng: &mut R) -> Result<DMatrix<f64>> {
    if n < 2 {
        return Err(DpdError::Usage(format!("need at least 2 design points, got {n}")));
    }
    let law = Normal::new(mean, sd).map_err(|e| DpdError::Domain(e.to_string()))?;
    Ok(DMatrix::from_fn(n, 2, |_, j| if j == 0 { 1.0 } else { law.sample(rng) }))
}

/// Design of the study: `z_i ~ N(10, 5)` with 5 read as a variance.
pub fn gen_design(n: usize, seed: u64) -> Result<DMatrix<f64>> {
    gen_design_with(n, default_design_mean(), default_design_spread().sqrt(), &mut ChaCha8Rng::seed_from_u64(seed))
}

/// I.i.d. draws from `(1 − e_err) N(0, σ²) + e_err N(outlier_mean, σ²)`.
pub fn gen_errors_with<R: Rng + ?Sized>(
    n: usize,
    e_err: f64,
    sigma: f64,
    outlier_mean: f64,
    rng: &mut R,
) -> Result<DVector<f64>> {
    if !(0.0..=0.5).contains(&e_err) {
        return Err(DpdError::Domain(format!("e_err must lie in [0, 0.5], got {e_err}")));
    }
    let law = Normal::new(0.0, sigma).map_err(|e| DpdError::Domain(e.to_string()))?;
    Ok(DVector::from_fn(n, |_, _| {
        let shift = if rng.random::<f64>() < e_err { outlier_mean } else { 0.0 };
        shift + law.sample(rng)
    }))
}

/// Errors of the study: `(1 − e_err) N(0, 3) + e_err N(10, 3)`.
pub fn gen_errors_contaminated(n: usize, e_err: f64, seed: u64) -> Result<DVector<f64>> {
    gen_errors_with(n, e_err, default_sigma_true(), default_outlier_mean(), &mut ChaCha8Rng::seed_from_u64(seed))
}

/// Replaces a uniformly chosen `⌊e_x n⌋`-subset of `z`. Size mode draws
/// replacements from `N(leverage_mean, leverage_sd)`; power mode maps
/// `z_i ↦ z_i ((2 − Δ_n)/2)² − Δ_n`.
pub fn replace_leverage_with<R: Rng + ?Sized>(
    z: &DVector<f64>,
    e_x: f64,
    mode: SimMode,
    delta_n: f64,
    leverage_mean: f64,
    leverage_sd: f64,
    rng: &mut R,
) -> Result<DVector<f64>> {
    if !(0.0..=0.5).contains(&e_x) {
        return Err(DpdError::Domain(format!("e_x must lie in [0, 0.5], got {e_x}")));
    }
    let n = z.len();
    let count = (e_x * n as f64).floor() as usize;
    let mut out = z.clone();
    if count == 0 {
        return Ok(out);
    }
    let law = Normal::new(leverage_mean, leverage_sd).map_err(|e| DpdError::Domain(e.to_string()))?;
    let mut idx = rand::seq::index::sample(rng, n, count).into_vec();
    idx.sort_unstable();
    for i in idx {
        out[i] = match mode {
            SimMode::Size => law.sample(rng),
            SimMode::Power => z[i] * ((2.0 - delta_n) / 2.0).powi(2) - delta_n,
        };
    }
    Ok(out)
}

/// Leverage replacement of the study (`N(16, 5)`, 5 a variance).
pub fn replace_leverage(z: &DVector<f64>, e_x: f64, mode: SimMode, delta_n: f64, seed: u64) -> Result<DVector<f64>> {
    replace_leverage_with(
        z,
        e_x,
        mode,
        delta_n,
        default_leverage_mean(),
        default_design_spread().sqrt(),
        &mut ChaCha8Rng::seed_from_u64(seed),
    )
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct DataCell {
    n: usize,
    mode: SimMode,
    e_err: f64,
    e_x: f64,
}

/// Outcome of one replication: a rejection flag per `(τ, γ)`, or `None`
/// when a fit failed.
type RepOutcome = (Vec<Option<bool>>, Duration);

fn replicate(config: &SimConfig, design: &DMatrix<f64>, cell: DataCell, rep: usize) -> RepOutcome {
    let start = Instant::now();
    let mut rng = replication_rng(config.master_seed, cell.n, cell.mode, cell.e_err, cell.e_x, rep);
    let delta_n = 1.0 / (2.0 * cell.n as f64).sqrt();
    let outcome = simulate_data(config, design, cell, delta_n, &mut rng).map(|(model, data, restriction)| {
        config
            .tau_gamma
            .iter()
            .map(|&(tau, gamma)| run_test(&model, &data, &restriction, tau, gamma, config.alpha).ok().map(|r| r.reject))
            .collect()
    });
    let flags = outcome.unwrap_or_else(|_| vec![None; config.tau_gamma.len()]);
    (flags, start.elapsed())
}

fn simulate_data(
    config: &SimConfig,
    design: &DMatrix<f64>,
    cell: DataCell,
    delta_n: f64,
    rng: &mut ChaCha8Rng,
) -> Result<(LinearRegression, ObservationSet, Restriction)> {
    let z = design.column(1).clone_owned();
    let lev_sd = config.spread_convention.sd(config.design_spread);
    let z = replace_leverage_with(&z, cell.e_x, cell.mode, delta_n, config.leverage_mean, lev_sd, rng)?;
    let mut x = design.clone();
    x.set_column(1, &z);
    let beta = match cell.mode {
        SimMode::Size => DVector::from_column_slice(&config.beta0),
        SimMode::Power => DVector::from_iterator(2, config.beta0.iter().map(|b| b + delta_n)),
    };
    let errors = gen_errors_with(cell.n, cell.e_err, config.sigma_true, config.outlier_mean, rng)?;
    let y = &x * beta + errors;
    let model = LinearRegression::new(x.clone())?;
    let data = ObservationSet::new(y, Some(x))?;
    let restriction = Restriction::first_components(&config.beta0)?;
    Ok((model, data, restriction))
}

fn run_units<F>(count: usize, execution: Execution, f: F) -> Vec<RepOutcome>
where
    F: Fn(usize) -> RepOutcome + Sync + Send,
{
    match execution {
        #[cfg(feature = "parallel")]
        Execution::Parallel => {
            use rayon::prelude::*;
            (0..count).into_par_iter().map(f).collect()
        }
        _ => (0..count).map(f).collect(),
    }
}

/// Runs the whole grid with the default execution strategy.
pub fn empirical_size_power(config: &SimConfig) -> Result<Vec<SimResult>> {
    empirical_size_power_with(config, Execution::default())
}

/// Runs the whole grid. Cells are ordered by `n`, mode, `e_err`, `e_x` and
/// then `(τ, γ)`, following the order in the config.
pub fn empirical_size_power_with(config: &SimConfig, execution: Execution) -> Result<Vec<SimResult>> {
    config.validate()?;
    let mut cells = Vec::new();
    for &n in &config.n {
        for &mode in &config.mode {
            for &e_err in &config.e_err {
                for &e_x in &config.e_x {
                    cells.push(DataCell { n, mode, e_err, e_x });
                }
            }
        }
    }
    let mut designs = Vec::with_capacity(config.n.len());
    for &n in &config.n {
        let sd = config.spread_convention.sd(config.design_spread);
        designs.push(gen_design_with(n, config.design_mean, sd, &mut design_rng(config.master_seed, n))?);
    }
    let design_of = |n: usize| &designs[config.n.iter().position(|&m| m == n).unwrap_or(0)];

    let reps = config.reps;
    let outcomes = run_units(cells.len() * reps, execution, |unit| {
        let cell = cells[unit / reps];
        replicate(config, design_of(cell.n), cell, unit % reps)
    });

    let mut results = Vec::with_capacity(cells.len() * config.tau_gamma.len());
    for (c, cell) in cells.iter().enumerate() {
        let block = &outcomes[c * reps..(c + 1) * reps];
        let wall_time: Duration = block.iter().map(|(_, d)| *d).sum();
        for (k, &(tau, gamma)) in config.tau_gamma.iter().enumerate() {
            let failures = block.iter().filter(|(flags, _)| flags[k].is_none()).count();
            let rejections = block.iter().filter(|(flags, _)| flags[k] == Some(true)).count();
            let ok = reps - failures;
            let rate = if ok > 0 { rejections as f64 / ok as f64 } else { 0.0 };
            let mc_stderr = if ok > 0 { (rate * (1.0 - rate) / ok as f64).sqrt() } else { 0.0 };
            results.push(SimResult {
                n: cell.n,
                tau,
                gamma,
                e_err: cell.e_err,
                e_x: cell.e_x,
                mode: cell.mode,
                reps,
                rejections,
                rejection_rate: rate,
                mc_stderr,
                failures,
                flagged: failures as f64 > FAILURE_FLAG_RATE * reps as f64,
                wall_time: wall_time / config.tau_gamma.len() as u32,
            });
        }
    }
    Ok(results)
}

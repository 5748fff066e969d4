//! Seeded Monte Carlo comparison of the MLE and the cross-validated WLE for
//! two populations.
//!
//! Each replication draws both samples, selects weights, and records the
//! squared errors of both estimators. Replications run in parallel, but every
//! replication owns its random stream and aggregation happens in replication
//! order, so reports are bit-identical for any worker count.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cv::{lognormal_weight, optimize_weights};
use crate::error::{Result, WleError};
use crate::estimator::{mle_mean, wle};
use crate::model::{Family, ModelSpec, MultiSample, PopulationSample, Scheme, WeightVector};
use crate::weights::{weights_equal_two, weights_unequal_matrix, Delta};

/// Seed used whenever none is given.
pub const DEFAULT_SEED: u64 = 42;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Per-replication seed. For a fixed master seed this is injective in
/// `replication`: an odd-multiplier offset followed by a bijective mixer.
pub fn derive_substream(master_seed: u64, replication: u64) -> u64 {
    mix64(master_seed.wrapping_add(replication.wrapping_add(1).wrapping_mul(GOLDEN_GAMMA)))
}

fn standard_normal<R: Rng>(rng: &mut R) -> f64 {
    // Box–Muller, cosine branch
    let u1: f64 = 1.0 - rng.gen::<f64>();
    let u2: f64 = rng.gen::<f64>();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Poisson deviate by CDF inversion. Means above `CHUNK` are split into
/// independent pieces to keep `exp(−mean)` representable.
fn poisson<R: Rng>(rng: &mut R, mean: f64) -> f64 {
    const CHUNK: f64 = 500.0;
    if mean <= 0.0 {
        return 0.0;
    }
    if mean > CHUNK {
        return poisson(rng, CHUNK) + poisson(rng, mean - CHUNK);
    }
    let u: f64 = rng.gen();
    let mut k = 0u64;
    let mut p = (-mean).exp();
    let mut cdf = p;
    while u > cdf {
        k += 1;
        p *= mean / k as f64;
        cdf += p;
        if p == 0.0 && cdf <= u {
            // rounding left the cdf short of 1; u sits in the far tail
            break;
        }
    }
    k as f64
}

/// Draws `n` values for the given family and natural parameter.
pub fn sample_values<R: Rng>(model: &ModelSpec, param: f64, n: usize, rng: &mut R) -> Vec<f64> {
    (0..n)
        .map(|_| match model.family {
            Family::NormalMean => param + model.normal_sd * standard_normal(rng),
            Family::PoissonRate => poisson(rng, param),
            Family::Lognormal => (param + ModelSpec::LOGNORMAL_LOG_SD * standard_normal(rng)).exp(),
        })
        .collect()
}

pub fn sample_population(model: &ModelSpec, param: f64, n: usize, seed: u64) -> Result<PopulationSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    PopulationSample::new("sim", sample_values(model, param, n, &mut rng))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub model: ModelSpec,
    /// True natural parameters of the target and the second population.
    pub true_params: (f64, f64),
    pub n_list: Vec<usize>,
    pub replications: usize,
    pub master_seed: u64,
    pub delta: Delta,
    pub scheme: Scheme,
}

impl StudyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(WleError::InvalidInput("replications must be ≥ 1".into()));
        }
        if self.n_list.is_empty() || self.n_list.iter().any(|&n| n < 2) {
            return Err(WleError::InvalidInput("every sample size must be ≥ 2".into()));
        }
        if let Delta::Fixed(d) = self.delta {
            if !(d >= 0.0 && d.is_finite()) {
                return Err(WleError::InvalidInput(format!("invalid delta {d}")));
            }
        }
        Ok(())
    }

    /// Normal `N(0, 1)` against `N(0.3, 1)`, column scheme, 1000 replications.
    pub fn table1(seed: u64) -> Self {
        Self {
            model: ModelSpec::normal(),
            true_params: (0.0, 0.3),
            n_list: vec![10, 20, 30, 40, 50, 60],
            replications: 1000,
            master_seed: seed,
            delta: Delta::Default,
            scheme: Scheme::EqualColumn,
        }
    }

    /// Poisson `P(3)` against `P(3.6)`, column scheme, 1000 replications.
    pub fn table3(seed: u64) -> Self {
        Self {
            model: ModelSpec::poisson(),
            true_params: (3.0, 3.6),
            ..Self::table1(seed)
        }
    }
}

/// Outcome of one replication.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Replication {
    pub err_mle: f64,
    pub err_wle: f64,
    pub sqerr_mle: f64,
    pub sqerr_wle: f64,
    pub lambda: Vec<f64>,
    pub delta_used: f64,
}

fn select(cfg: &StudyConfig, ms: &MultiSample) -> Result<WeightVector> {
    let pops = ms.populations();
    let delta = cfg.delta.resolve(ms.target());
    match (cfg.model.family, cfg.scheme) {
        (Family::Lognormal, Scheme::EqualColumn) => lognormal_weight(&pops[0], &pops[1]),
        (Family::Lognormal, Scheme::UnequalPoint) => optimize_weights(ms, &cfg.model, cfg.scheme),
        (_, Scheme::EqualColumn) => weights_equal_two(&pops[0], &pops[1], delta),
        (_, Scheme::UnequalPoint) => weights_unequal_matrix(ms, delta),
    }
}

pub fn run_replication(cfg: &StudyConfig, n: usize, replication: u64) -> Result<Replication> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_substream(cfg.master_seed, replication));
    rng.set_stream(n as u64);
    let (t1, t2) = cfg.true_params;
    let x1 = sample_values(&cfg.model, t1, n, &mut rng);
    let x2 = sample_values(&cfg.model, t2, n, &mut rng);
    let ms = MultiSample::aligned(vec![
        PopulationSample::new("1", x1)?,
        PopulationSample::new("2", x2)?,
    ])?;
    let weights = select(cfg, &ms)?;
    let mle = mle_mean(ms.target(), &cfg.model)?.theta;
    let est = wle(&ms, &weights, &cfg.model)?.theta;
    Ok(Replication {
        err_mle: mle - t1,
        err_wle: est - t1,
        sqerr_mle: (mle - t1).powi(2),
        sqerr_wle: (est - t1).powi(2),
        lambda: weights.lambda,
        delta_used: weights.delta_used,
    })
}

/// Runs all replications for one sample size, in parallel, returned in
/// replication order.
pub fn run_replications(cfg: &StudyConfig, n: usize) -> Result<Vec<Replication>> {
    (0..cfg.replications as u64)
        .into_par_iter()
        .map(|r| run_replication(cfg, n, r))
        .collect()
}

/// Neumaier-compensated running sum.
#[derive(Debug, Default, Clone, Copy)]
struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.carry += (self.sum - t) + v;
        } else {
            self.carry += (v - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

fn mean_sd(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let mut s = CompensatedSum::default();
    let mut count = 0usize;
    for v in values.clone() {
        s.add(v);
        count += 1;
    }
    let mean = s.value() / count as f64;
    if count < 2 {
        return (mean, 0.0);
    }
    let mut ss = CompensatedSum::default();
    for v in values {
        ss.add((v - mean).powi(2));
    }
    (mean, (ss.value() / (count - 1) as f64).sqrt())
}

/// Aggregates for one sample size. Unscaled: the printed tables multiply by 100.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub n: usize,
    pub mse_mle: f64,
    pub sd_sqerr_mle: f64,
    pub mse_wle: f64,
    pub sd_sqerr_wle: f64,
    pub ratio: f64,
    pub mean_lambda: Vec<f64>,
    /// SD of `λ₁` across replications (equal to that of `λ₂`).
    pub sd_lambda: f64,
    /// Sample variance of `√n (θ̃₁ − θ₁⁰)`.
    pub var_root_n_err_wle: f64,
    pub mean_delta: f64,
}

impl ReportRow {
    pub fn from_replications(n: usize, reps: &[Replication]) -> Self {
        let (mse_mle, sd_sqerr_mle) = mean_sd(reps.iter().map(|r| r.sqerr_mle));
        let (mse_wle, sd_sqerr_wle) = mean_sd(reps.iter().map(|r| r.sqerr_wle));
        let m = reps.first().map_or(0, |r| r.lambda.len());
        let mean_lambda = (0..m)
            .map(|i| mean_sd(reps.iter().map(move |r| r.lambda[i])).0)
            .collect();
        let (_, sd_lambda) = mean_sd(reps.iter().map(|r| r.lambda[0]));
        let root_n = (n as f64).sqrt();
        let (_, sd_scaled) = mean_sd(reps.iter().map(move |r| root_n * r.err_wle));
        let (mean_delta, _) = mean_sd(reps.iter().map(|r| r.delta_used));
        Self {
            n,
            mse_mle,
            sd_sqerr_mle,
            mse_wle,
            sd_sqerr_wle,
            ratio: mse_wle / mse_mle,
            mean_lambda,
            sd_lambda,
            var_root_n_err_wle: sd_scaled * sd_scaled,
            mean_delta,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub config: StudyConfig,
    pub delta_rule: String,
    pub sd_divisor: String,
    pub rows: Vec<ReportRow>,
}

/// Runs the study on the current rayon pool.
pub fn run_study(cfg: &StudyConfig) -> Result<SimulationReport> {
    cfg.validate()?;
    let rows = cfg
        .n_list
        .iter()
        .map(|&n| Ok(ReportRow::from_replications(n, &run_replications(cfg, n)?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(SimulationReport {
        config: cfg.clone(),
        delta_rule: cfg.delta.describe(),
        sd_divisor: "n-1".into(),
        rows,
    })
}

/// Runs the study on a dedicated pool of `workers` threads.
pub fn run_study_with_workers(cfg: &StudyConfig, workers: usize) -> Result<SimulationReport> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| WleError::InvalidInput(format!("thread pool: {e}")))?;
    pool.install(|| run_study(cfg))
}

impl SimulationReport {
    fn header_lines(&self) -> Vec<String> {
        let c = &self.config;
        vec![
            format!("family={}", c.model.family),
            format!("true_params={},{}", c.true_params.0, c.true_params.1),
            format!("replications={}", c.replications),
            format!("master_seed={}", c.master_seed),
            format!("scheme={}", c.scheme),
            format!("delta={}", self.delta_rule),
            format!("sd_divisor={}", self.sd_divisor),
        ]
    }

    /// One row per sample size, preceded by `#` lines echoing the config.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for line in self.header_lines() {
            let _ = writeln!(out, "# {line}");
        }
        out.push_str("n,mse_mle,sd_sqerr_mle,mse_wle,sd_sqerr_wle,ratio");
        let m = self.rows.first().map_or(0, |r| r.mean_lambda.len());
        for i in 0..m {
            let _ = write!(out, ",mean_lambda_{}", i + 1);
        }
        out.push_str(",sd_lambda,var_root_n_err_wle,mean_delta\n");
        for r in &self.rows {
            let _ = write!(
                out,
                "{},{},{},{},{},{}",
                r.n, r.mse_mle, r.sd_sqerr_mle, r.mse_wle, r.sd_sqerr_wle, r.ratio
            );
            for l in &r.mean_lambda {
                let _ = write!(out, ",{l}");
            }
            let _ = writeln!(out, ",{},{},{}", r.sd_lambda, r.var_root_n_err_wle, r.mean_delta);
        }
        out
    }

    /// Aligned text table; every entry multiplied by 100.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{}", self.header_lines().join("  "));
        let _ = writeln!(out, "(all entries x100)");
        let _ = writeln!(
            out,
            "{:>6} {:>9} {:>9} {:>9} {:>9} {:>7} {:>8} {:>8} {:>7}",
            "n", "MSE(MLE)", "SD", "MSE(WLE)", "SD", "ratio", "AVE l1", "AVE l2", "SD l"
        );
        for r in &self.rows {
            let l2 = r.mean_lambda.get(1).copied().unwrap_or(0.0);
            let _ = writeln!(
                out,
                "{:>6} {:>9.2} {:>9.2} {:>9.2} {:>9.2} {:>7.1} {:>8.1} {:>8.1} {:>7.1}",
                r.n,
                100.0 * r.mse_mle,
                100.0 * r.sd_sqerr_mle,
                100.0 * r.mse_wle,
                100.0 * r.sd_sqerr_wle,
                100.0 * r.ratio,
                100.0 * r.mean_lambda[0],
                100.0 * l2,
                100.0 * r.sd_lambda
            );
        }
        out
    }
}

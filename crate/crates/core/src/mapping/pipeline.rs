use std::collections::BTreeSet;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::kmeans::flag_outlier_weeks;
use super::{
    correlation, mse_from_sample, prediction_errors, predictive_interval, select_neighbors, MappingDataset,
    DEFAULT_THRESHOLD,
};
use crate::error::{Result, WleError};
use crate::estimator::{mle_mean, wle};
use crate::model::{ModelSpec, Scheme, WeightVector};
use crate::weights::{weights_equal_matrix, Delta};

/// How each year's weights are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum WeightMode {
    #[default]
    CrossValidated,
    /// `λ = w₀`: every WLE output collapses to the MLE output.
    Mle,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum OutlierPolicy {
    #[default]
    None,
    /// k-means flagging on the target's counts, per year.
    Auto,
    /// The same weeks are dropped in every year.
    Weeks(BTreeSet<u32>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MappingConfig {
    pub target: String,
    pub threshold: f64,
    pub delta: Delta,
    pub weights: WeightMode,
    pub outliers: OutlierPolicy,
    pub level: f64,
    /// Restrict the analysis to these years; all years when `None`.
    pub years: Option<Vec<u32>>,
}

impl MappingConfig {
    pub fn new(target: impl Into<String>) -> Self {
        Self {
            target: target.into(),
            threshold: DEFAULT_THRESHOLD,
            delta: Delta::Default,
            weights: WeightMode::CrossValidated,
            outliers: OutlierPolicy::None,
            level: 0.95,
            years: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct YearAnalysis {
    pub year: u32,
    pub region_ids: Vec<String>,
    pub excluded_weeks: BTreeSet<u32>,
    pub lambda: WeightVector,
    pub wle: f64,
    pub mle: f64,
    pub mse_mle: f64,
    pub mse_wle: f64,
    pub correlation: Vec<Vec<f64>>,
    /// The WLE was negative and was truncated at zero for the interval.
    pub wle_truncated: bool,
    pub interval_mle: (u64, u64),
    pub interval_wle: (u64, u64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MappingAnalysis {
    pub config: MappingConfig,
    pub delta_rule: String,
    pub cov_divisor: String,
    pub weeks_per_year: u32,
    pub regions: Vec<String>,
    pub years: Vec<YearAnalysis>,
    /// Root mean squared one-year-ahead errors; absent with fewer than 2 years.
    pub pred_m: Option<f64>,
    pub pred_w: Option<f64>,
}

fn analyze_year(ds: &MappingDataset, cfg: &MappingConfig, regions: &[String], year: u32) -> Result<YearAnalysis> {
    let excluded = match &cfg.outliers {
        OutlierPolicy::None => BTreeSet::new(),
        OutlierPolicy::Auto => flag_outlier_weeks(ds, &cfg.target, year)?,
        OutlierPolicy::Weeks(w) => w.clone(),
    };
    if let Some(&w) = excluded.iter().find(|&&w| w == 0 || w > ds.weeks_per_year()) {
        return Err(WleError::InvalidInput(format!("excluded week {w} outside the season")));
    }
    let ms = ds.year_sample(regions, year, &excluded)?;
    if ms.target().len() < 2 {
        return Err(WleError::InsufficientData(format!("year {year}: fewer than 2 retained weeks")));
    }
    let delta = cfg.delta.resolve(ms.target());
    let lambda = match cfg.weights {
        WeightMode::Mle => WeightVector::target_only(ms.m(), Scheme::EqualColumn).with_delta(delta),
        WeightMode::CrossValidated if ms.m() == 1 => {
            WeightVector::target_only(1, Scheme::EqualColumn).with_delta(delta)
        }
        WeightMode::CrossValidated => weights_equal_matrix(&ms, delta)?,
    };
    let model = ModelSpec::poisson();
    let mle = mle_mean(ms.target(), &model)?;
    let est = wle(&ms, &lambda, &model)?;
    let (mse_mle, mse_wle) = mse_from_sample(&ms, &lambda)?;
    let wle_truncated = est.negative_rate;
    Ok(YearAnalysis {
        year,
        region_ids: regions.to_vec(),
        excluded_weeks: excluded,
        wle: est.theta,
        mle: mle.theta,
        mse_mle,
        mse_wle,
        correlation: correlation(&ms),
        wle_truncated,
        interval_mle: predictive_interval(mle.theta, cfg.level)?,
        interval_wle: predictive_interval(est.truncated().theta, cfg.level)?,
        lambda,
    })
}

/// Runs the pipeline for one target region. Years are analyzed in parallel
/// and reported in ascending order.
pub fn analyze(ds: &MappingDataset, cfg: &MappingConfig) -> Result<MappingAnalysis> {
    if cfg.threshold.is_nan() || cfg.threshold < 0.0 {
        return Err(WleError::InvalidInput(format!("invalid threshold {}", cfg.threshold)));
    }
    let regions = select_neighbors(ds, &cfg.target, cfg.threshold)?;
    let mut years = cfg.years.clone().unwrap_or_else(|| ds.years());
    years.sort_unstable();
    years.dedup();
    if years.is_empty() {
        return Err(WleError::InsufficientData("dataset has no counts".into()));
    }
    let per_year = years
        .par_iter()
        .map(|&y| analyze_year(ds, cfg, &regions, y))
        .collect::<Result<Vec<_>>>()?;
    let pairs: Vec<(f64, f64)> = per_year.iter().map(|y| (y.mle, y.wle)).collect();
    let (pred_m, pred_w) = match prediction_errors(&pairs) {
        Ok((m, w)) => (Some(m), Some(w)),
        Err(_) => (None, None),
    };
    Ok(MappingAnalysis {
        config: cfg.clone(),
        delta_rule: cfg.delta.describe(),
        cov_divisor: "W".into(),
        weeks_per_year: ds.weeks_per_year(),
        regions,
        years: per_year,
        pred_m,
        pred_w,
    })
}

impl MappingAnalysis {
    fn comment_header(&self) -> String {
        format!(
            "# target={} threshold={} delta={} cov_divisor={} level={} weights={:?}\n",
            self.config.target,
            self.config.threshold,
            self.delta_rule,
            self.cov_divisor,
            self.config.level,
            self.config.weights
        )
    }

    /// Per-year estimates, MSEs and intervals.
    pub fn summary_csv(&self) -> String {
        let mut out = self.comment_header();
        out.push_str("year,excluded_weeks,mle,wle,mse_mle,mse_wle,mle_lo,mle_hi,wle_lo,wle_hi,wle_truncated\n");
        for y in &self.years {
            let excluded: Vec<String> = y.excluded_weeks.iter().map(|w| w.to_string()).collect();
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{}",
                y.year,
                excluded.join(";"),
                y.mle,
                y.wle,
                y.mse_mle,
                y.mse_wle,
                y.interval_mle.0,
                y.interval_mle.1,
                y.interval_wle.0,
                y.interval_wle.1,
                y.wle_truncated
            );
        }
        if let (Some(m), Some(w)) = (self.pred_m, self.pred_w) {
            let _ = writeln!(out, "# pred_m={m} pred_w={w}");
        }
        out
    }

    /// Weights and correlation rows per year, one line per region.
    pub fn weights_csv(&self) -> String {
        let mut out = self.comment_header();
        out.push_str("year,region_id,lambda");
        for r in &self.regions {
            let _ = write!(out, ",corr_{r}");
        }
        out.push('\n');
        for y in &self.years {
            for (i, r) in y.region_ids.iter().enumerate() {
                let _ = write!(out, "{},{},{}", y.year, r, y.lambda.lambda[i]);
                for c in &y.correlation[i] {
                    let _ = write!(out, ",{c}");
                }
                out.push('\n');
            }
        }
        out
    }

    /// Aligned text rendering; weights and correlations multiplied by 100.
    pub fn to_table(&self) -> String {
        let mut out = self.comment_header();
        let _ = writeln!(out, "regions: {}", self.regions.join(" "));
        let _ = writeln!(
            out,
            "{:>6} {:>9} {:>9} {:>10} {:>10} {:>9} {:>9}  weights x100",
            "year", "MLE", "WLE", "MSE(MLE)", "MSE(WLE)", "PI(MLE)", "PI(WLE)"
        );
        for y in &self.years {
            let w: Vec<String> = y.lambda.lambda.iter().map(|l| format!("{:.0}", 100.0 * l)).collect();
            let _ = writeln!(
                out,
                "{:>6} {:>9.4} {:>9.4} {:>10.5} {:>10.5} {:>9} {:>9}  {}",
                y.year,
                y.mle,
                y.wle,
                y.mse_mle,
                y.mse_wle,
                format!("[{},{}]", y.interval_mle.0, y.interval_mle.1),
                format!("[{},{}]", y.interval_wle.0, y.interval_wle.1),
                w.join(" ")
            );
        }
        if let (Some(m), Some(w)) = (self.pred_m, self.pred_w) {
            let _ = writeln!(out, "Pred_M = {m:.4}  Pred_W = {w:.4}");
        }
        out
    }
}

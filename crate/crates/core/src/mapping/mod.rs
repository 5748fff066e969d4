//! Small-area analysis of weekly regional counts: neighbor selection,
//! outlier-week exclusion, per-year cross-validated weights, MSE estimates,
//! one-year-ahead prediction errors and plug-in predictive intervals.

mod ingest;
mod kmeans;
mod pipeline;
mod synthetic;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Result, WleError};
use crate::model::{MultiSample, PopulationSample, Scheme, WeightVector};
use crate::weights::weights_equal_matrix;

pub use ingest::{ingest_counts, weekly_aggregate, DailyCount};
pub use kmeans::{flag_outlier_weeks, kmeans_two};
pub use pipeline::{analyze, MappingAnalysis, MappingConfig, OutlierPolicy, WeightMode, YearAnalysis};
pub use synthetic::{inject_outlier_week, synthetic_dataset, SyntheticConfig};

/// Season length used when none is given.
pub const DEFAULT_WEEKS_PER_YEAR: u32 = 17;

/// Neighbor distance threshold, in degrees.
pub const DEFAULT_THRESHOLD: f64 = 0.2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub id: String,
    pub longitude: f64,
    pub latitude: f64,
}

impl Region {
    pub fn new(id: impl Into<String>, longitude: f64, latitude: f64) -> Self {
        Self {
            id: id.into(),
            longitude,
            latitude,
        }
    }

    /// Raw Euclidean distance in degrees.
    pub fn distance(&self, other: &Region) -> f64 {
        (self.longitude - other.longitude).hypot(self.latitude - other.latitude)
    }
}

/// Regions with coordinates and their weekly counts, keyed by
/// `(region, year, week)` with weeks numbered from 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MappingDataset {
    regions: BTreeMap<String, Region>,
    counts: BTreeMap<(String, u32, u32), u64>,
    weeks_per_year: u32,
}

impl MappingDataset {
    pub fn new(regions: Vec<Region>, weeks_per_year: u32) -> Result<Self> {
        if weeks_per_year == 0 {
            return Err(WleError::InvalidInput("weeks_per_year must be ≥ 1".into()));
        }
        let mut map = BTreeMap::new();
        for r in regions {
            if !(r.longitude.is_finite() && r.latitude.is_finite()) {
                return Err(WleError::InvalidInput(format!("region {} has non-finite coordinates", r.id)));
            }
            if map.insert(r.id.clone(), r).is_some() {
                return Err(WleError::InvalidInput("duplicate region id".into()));
            }
        }
        Ok(Self {
            regions: map,
            counts: BTreeMap::new(),
            weeks_per_year,
        })
    }

    /// Adds one count. Rejects unknown regions, weeks outside the season and
    /// duplicate keys.
    pub fn insert(&mut self, region: &str, year: u32, week: u32, count: u64) -> Result<()> {
        if !self.regions.contains_key(region) {
            return Err(WleError::InvalidInput(format!("unknown region {region}")));
        }
        if week == 0 || week > self.weeks_per_year {
            return Err(WleError::InvalidInput(format!(
                "week {week} outside 1..={}",
                self.weeks_per_year
            )));
        }
        if self.counts.insert((region.to_string(), year, week), count).is_some() {
            return Err(WleError::InvalidInput(format!(
                "duplicate count for region {region}, year {year}, week {week}"
            )));
        }
        Ok(())
    }

    /// Overwrites an existing count.
    pub fn set(&mut self, region: &str, year: u32, week: u32, count: u64) -> Result<()> {
        match self.counts.get_mut(&(region.to_string(), year, week)) {
            Some(c) => {
                *c = count;
                Ok(())
            }
            None => Err(WleError::InvalidInput(format!(
                "no count for region {region}, year {year}, week {week}"
            ))),
        }
    }

    pub fn weeks_per_year(&self) -> u32 {
        self.weeks_per_year
    }

    pub fn regions(&self) -> impl Iterator<Item = &Region> {
        self.regions.values()
    }

    pub fn region(&self, id: &str) -> Result<&Region> {
        self.regions
            .get(id)
            .ok_or_else(|| WleError::InvalidInput(format!("unknown region {id}")))
    }

    pub fn n_regions(&self) -> usize {
        self.regions.len()
    }

    pub fn years(&self) -> Vec<u32> {
        let set: BTreeSet<u32> = self.counts.keys().map(|(_, y, _)| *y).collect();
        set.into_iter().collect()
    }

    pub fn count(&self, region: &str, year: u32, week: u32) -> Option<u64> {
        self.counts.get(&(region.to_string(), year, week)).copied()
    }

    /// Counts for weeks `1..=weeks_per_year` of one region-year. Every week
    /// must be present.
    pub fn weekly_counts(&self, region: &str, year: u32) -> Result<Vec<u64>> {
        self.region(region)?;
        (1..=self.weeks_per_year)
            .map(|w| {
                self.count(region, year, w).ok_or_else(|| {
                    WleError::InsufficientData(format!("region {region} has no count for year {year}, week {w}"))
                })
            })
            .collect()
    }

    /// Weeks of the season not in `excluded`, ascending.
    pub fn retained_weeks(&self, excluded: &BTreeSet<u32>) -> Vec<u32> {
        (1..=self.weeks_per_year).filter(|w| !excluded.contains(w)).collect()
    }

    /// Aligned sample with one population per region (target first) and one
    /// column per retained week.
    pub fn year_sample(&self, region_list: &[String], year: u32, excluded: &BTreeSet<u32>) -> Result<MultiSample> {
        let weeks = self.retained_weeks(excluded);
        if weeks.is_empty() {
            return Err(WleError::InsufficientData("every week is excluded".into()));
        }
        let pops = region_list
            .iter()
            .map(|r| {
                let counts = self.weekly_counts(r, year)?;
                let values = weeks.iter().map(|&w| counts[w as usize - 1] as f64).collect();
                PopulationSample::new(r.clone(), values)
            })
            .collect::<Result<Vec<_>>>()?;
        MultiSample::aligned(pops)
    }
}

/// Target first, then every region within `(0, threshold]` of it by
/// distance, ties broken by id.
pub fn select_neighbors(ds: &MappingDataset, target: &str, threshold: f64) -> Result<Vec<String>> {
    let t = ds.region(target)?;
    let mut near: Vec<(f64, &str)> = ds
        .regions()
        .filter(|r| r.id != t.id)
        .map(|r| (t.distance(r), r.id.as_str()))
        .filter(|&(d, _)| d > 0.0 && d <= threshold)
        .collect();
    near.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(b.1)));
    let mut out = vec![t.id.clone()];
    out.extend(near.into_iter().map(|(_, id)| id.to_string()));
    Ok(out)
}

/// Column-scheme weights over the retained weeks of one year.
pub fn yearly_weights(
    ds: &MappingDataset,
    region_list: &[String],
    year: u32,
    excluded: &BTreeSet<u32>,
    delta: f64,
) -> Result<WeightVector> {
    if region_list.is_empty() {
        return Err(WleError::InvalidInput("empty region list".into()));
    }
    let ms = ds.year_sample(region_list, year, excluded)?;
    if ms.target().len() < 2 {
        return Err(WleError::InsufficientData("at least 2 retained weeks are required".into()));
    }
    if ms.m() == 1 {
        return Ok(WeightVector::target_only(1, Scheme::EqualColumn).with_delta(delta));
    }
    weights_equal_matrix(&ms, delta)
}

/// Per-region weekly means and the covariance of weekly counts with divisor `W`.
fn year_moments(ms: &MultiSample) -> (Vec<f64>, Vec<Vec<f64>>) {
    let w = ms.target().len() as f64;
    let means: Vec<f64> = ms.populations().iter().map(|p| p.mean()).collect();
    let m = ms.m();
    let mut cov = vec![vec![0.0; m]; m];
    for i in 0..m {
        for k in i..m {
            let s: f64 = ms.populations()[i]
                .values()
                .iter()
                .zip(ms.populations()[k].values())
                .map(|(a, b)| (a - means[i]) * (b - means[k]))
                .sum();
            cov[i][k] = s / w;
            cov[k][i] = s / w;
        }
    }
    (means, cov)
}

/// `(mse_mle, mse_wle)` for one year: `v̂ar₁/W` and
/// `λᵗ Ĉ λ / W + (Σ λᵢ Ȳᵢ − Ȳ₁)²`, with `Ĉ` the divisor-`W` covariance.
pub fn mse_estimates(
    ds: &MappingDataset,
    region_list: &[String],
    year: u32,
    lambda: &[f64],
    excluded: &BTreeSet<u32>,
) -> Result<(f64, f64)> {
    if lambda.len() != region_list.len() {
        return Err(WleError::InvalidInput(format!(
            "{} weights for {} regions",
            lambda.len(),
            region_list.len()
        )));
    }
    let ms = ds.year_sample(region_list, year, excluded)?;
    mse_from_sample(&ms, lambda)
}

pub(crate) fn mse_from_sample(ms: &MultiSample, lambda: &[f64]) -> Result<(f64, f64)> {
    let w = ms.target().len();
    if w < 2 {
        return Err(WleError::InsufficientData("MSE estimates need at least 2 retained weeks".into()));
    }
    let (means, cov) = year_moments(ms);
    let w = w as f64;
    let mut quad = 0.0;
    for (i, li) in lambda.iter().enumerate() {
        for (k, lk) in lambda.iter().enumerate() {
            quad += li * lk * cov[i][k];
        }
    }
    let combined: f64 = lambda.iter().zip(&means).map(|(l, m)| l * m).sum();
    let bias = combined - means[0];
    Ok((cov[0][0] / w, quad / w + bias * bias))
}

pub(crate) fn correlation(ms: &MultiSample) -> Vec<Vec<f64>> {
    let (_, cov) = year_moments(ms);
    let m = cov.len();
    let mut corr = vec![vec![0.0; m]; m];
    for i in 0..m {
        for k in 0..m {
            let denom = (cov[i][i] * cov[k][k]).sqrt();
            corr[i][k] = if i == k {
                1.0
            } else if denom > 0.0 {
                cov[i][k] / denom
            } else {
                0.0
            };
        }
    }
    corr
}

/// Root mean squared one-year-ahead errors over consecutive analyzed years:
/// `(√mean (Ȳ₁^q − Ȳ₁^{q+1})², √mean (WLE^q − Ȳ₁^{q+1})²)`.
/// `years` holds `(mle, wle)` per year in chronological order.
pub fn prediction_errors(years: &[(f64, f64)]) -> Result<(f64, f64)> {
    if years.len() < 2 {
        return Err(WleError::InsufficientData("prediction errors need at least 2 years".into()));
    }
    let pairs = (years.len() - 1) as f64;
    let (mut sm, mut sw) = (0.0, 0.0);
    for pair in years.windows(2) {
        let next = pair[1].0;
        sm += (pair[0].0 - next).powi(2);
        sw += (pair[0].1 - next).powi(2);
    }
    Ok(((sm / pairs).sqrt(), (sw / pairs).sqrt()))
}

/// Equal-tail plug-in Poisson interval `[lo, hi]` for one future count.
pub fn predictive_interval(theta_hat: f64, level: f64) -> Result<(u64, u64)> {
    if !(theta_hat >= 0.0 && theta_hat.is_finite()) {
        return Err(WleError::Domain(format!(
            "predictive interval needs a nonnegative rate, got {theta_hat}"
        )));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(WleError::InvalidInput(format!("level must lie in (0, 1), got {level}")));
    }
    let tail = (1.0 - level) / 2.0;
    if theta_hat == 0.0 {
        return Ok((0, 0));
    }
    // walk the cdf in log space so large rates do not underflow exp(-θ)
    let ln_theta = theta_hat.ln();
    let mut ln_fact = 0.0;
    let mut below = 0.0; // P(X < k)
    let mut lo = 0;
    let mut k: u64 = 0;
    loop {
        if k > 0 {
            ln_fact += (k as f64).ln();
        }
        if below <= tail {
            lo = k;
        }
        let pmf = (k as f64 * ln_theta - theta_hat - ln_fact).exp();
        let cdf = below + pmf;
        if cdf >= 1.0 - tail {
            return Ok((lo, k));
        }
        below = cdf;
        k += 1;
    }
}

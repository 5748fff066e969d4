use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use super::{MappingDataset, Region};
use crate::error::{Result, WleError};
use crate::model::ModelSpec;
use crate::sim::sample_values;

/// Generator for weekly Poisson counts sharing a multiplicative weekly shock.
///
/// Region `R1` is the target at the origin; the others sit within 0.2 degrees
/// of it. Neighbor rates are drawn once per dataset, uniformly in
/// `neighbor_rates`. Each week of each year draws one shock `g ~ Gamma(k, 1/k)`
/// (mean 1) shared by all regions, and counts are `Poisson(rate · g)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub regions: usize,
    pub years: u32,
    pub weeks: u32,
    pub first_year: u32,
    pub target_rate: f64,
    pub neighbor_rates: (f64, f64),
    pub shock_shape: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            regions: 4,
            years: 6,
            weeks: 16,
            first_year: 1984,
            target_rate: 1.0,
            neighbor_rates: (0.8, 1.2),
            shock_shape: 4.0,
            seed: crate::sim::DEFAULT_SEED,
        }
    }
}

pub fn synthetic_dataset(cfg: &SyntheticConfig) -> Result<MappingDataset> {
    if cfg.regions == 0 || cfg.years == 0 || cfg.weeks == 0 {
        return Err(WleError::InvalidInput("synthetic dataset needs regions, years and weeks".into()));
    }
    let (lo, hi) = cfg.neighbor_rates;
    if !(cfg.target_rate >= 0.0 && lo >= 0.0 && hi >= lo && cfg.shock_shape > 0.0) {
        return Err(WleError::InvalidInput("invalid synthetic rates or shock shape".into()));
    }
    let gamma = Gamma::new(cfg.shock_shape, 1.0 / cfg.shock_shape)
        .map_err(|e| WleError::InvalidInput(format!("shock distribution: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let mut regions = vec![Region::new("R1", 0.0, 0.0)];
    let mut rates = vec![cfg.target_rate];
    for i in 1..cfg.regions {
        let angle = std::f64::consts::TAU * i as f64 / (cfg.regions - 1) as f64;
        let radius = 0.08 + 0.1 * (i as f64 / cfg.regions as f64);
        regions.push(Region::new(format!("R{}", i + 1), radius * angle.cos(), radius * angle.sin()));
        rates.push(lo + (hi - lo) * rng.gen::<f64>());
    }

    let ids: Vec<String> = regions.iter().map(|r| r.id.clone()).collect();
    let mut ds = MappingDataset::new(regions, cfg.weeks)?;
    let poisson = ModelSpec::poisson();
    for y in 0..cfg.years {
        for w in 1..=cfg.weeks {
            let shock = gamma.sample(&mut rng);
            for (id, rate) in ids.iter().zip(&rates) {
                let count = sample_values(&poisson, rate * shock, 1, &mut rng)[0];
                ds.insert(id, cfg.first_year + y, w, count as u64)?;
            }
        }
    }
    Ok(ds)
}

/// Replaces one week of one region-year by `scale` times the region-year's
/// mean weekly count (at least `scale`).
pub fn inject_outlier_week(ds: &MappingDataset, region: &str, year: u32, week: u32, scale: f64) -> Result<MappingDataset> {
    let counts = ds.weekly_counts(region, year)?;
    let mean = counts.iter().sum::<u64>() as f64 / counts.len() as f64;
    let mut out = ds.clone();
    out.set(region, year, week, (scale * mean.max(1.0)).round() as u64)?;
    Ok(out)
}

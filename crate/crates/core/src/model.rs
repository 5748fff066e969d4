//! Domain types shared by every module: samples, summary statistics,
//! weight vectors and the distribution family.

use std::fmt;
use std::ops::Deref;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Result, WleError};
use crate::linalg::Matrix;

/// Observations from one population, kept in insertion order so that the
/// column index `j` is positional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationSample {
    id: String,
    values: Vec<f64>,
}

impl PopulationSample {
    pub fn new(id: impl Into<String>, values: Vec<f64>) -> Result<Self> {
        let id = id.into();
        if values.is_empty() {
            return Err(WleError::InsufficientData(format!(
                "population `{id}` has no observations"
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(WleError::InvalidInput(format!(
                "population `{id}` has a non-finite value at position {pos}"
            )));
        }
        Ok(Self { id, values })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn mean(&self) -> f64 {
        mean(&self.values)
    }
}

/// `m` populations; the first one is the population of inferential interest.
///
/// `aligned` marks equal-size samples whose `j`-th entries were observed
/// jointly (e.g. the same week across regions).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiSample {
    populations: Vec<PopulationSample>,
    aligned: bool,
}

impl MultiSample {
    /// Column-aligned sample: all populations must have the same length.
    pub fn aligned(populations: Vec<PopulationSample>) -> Result<Self> {
        Self::check_nonempty(&populations)?;
        let n = populations[0].len();
        if let Some(p) = populations.iter().find(|p| p.len() != n) {
            return Err(WleError::InvalidInput(format!(
                "aligned sample requires equal sizes: `{}` has {} values, `{}` has {}",
                populations[0].id(),
                n,
                p.id(),
                p.len()
            )));
        }
        Ok(Self {
            populations,
            aligned: true,
        })
    }

    /// Independent samples of arbitrary sizes.
    pub fn unaligned(populations: Vec<PopulationSample>) -> Result<Self> {
        Self::check_nonempty(&populations)?;
        Ok(Self {
            populations,
            aligned: false,
        })
    }

    /// Convenience constructor from raw vectors; ids are `"1"`, `"2"`, ...
    pub fn from_vecs(data: Vec<Vec<f64>>, aligned: bool) -> Result<Self> {
        let pops = data
            .into_iter()
            .enumerate()
            .map(|(i, v)| PopulationSample::new((i + 1).to_string(), v))
            .collect::<Result<Vec<_>>>()?;
        if aligned {
            Self::aligned(pops)
        } else {
            Self::unaligned(pops)
        }
    }

    fn check_nonempty(populations: &[PopulationSample]) -> Result<()> {
        if populations.is_empty() {
            return Err(WleError::InsufficientData(
                "at least one population is required".into(),
            ));
        }
        Ok(())
    }

    pub fn populations(&self) -> &[PopulationSample] {
        &self.populations
    }

    pub fn target(&self) -> &PopulationSample {
        &self.populations[0]
    }

    pub fn m(&self) -> usize {
        self.populations.len()
    }

    pub fn is_aligned(&self) -> bool {
        self.aligned
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.populations.iter().map(PopulationSample::len).collect()
    }

    /// All sizes equal (a precondition for the column scheme, but not
    /// sufficient: the columns must also be jointly observed).
    pub fn equal_sizes(&self) -> bool {
        let n = self.populations[0].len();
        self.populations.iter().all(|p| p.len() == n)
    }

    /// Same structure with every observation mapped through `f`.
    pub fn map_values(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        let pops = self
            .populations
            .iter()
            .map(|p| PopulationSample::new(p.id(), p.values().iter().map(|&v| f(v)).collect()))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            populations: pops,
            aligned: self.aligned,
        })
    }
}

/// Per-population means and, for aligned data, the covariance matrix with
/// divisor `n` (not `n - 1`).
#[derive(Debug, Clone, PartialEq)]
pub struct SampleStats {
    pub means: Vec<f64>,
    pub cov: Option<Matrix>,
    pub n: Vec<usize>,
}

impl SampleStats {
    pub fn cov(&self) -> Result<&Matrix> {
        self.cov.as_ref().ok_or(WleError::CovarianceUndefined)
    }
}

/// Means for every population, plus the `1/n` covariance when aligned.
pub fn summarize(ms: &MultiSample) -> SampleStats {
    let means: Vec<f64> = ms.populations().iter().map(PopulationSample::mean).collect();
    let n = ms.sizes();
    let cov = ms.is_aligned().then(|| {
        let m = ms.m();
        let len = n[0] as f64;
        let mut cov = Matrix::zeros(m, m);
        for i in 0..m {
            for k in i..m {
                let xi = ms.populations()[i].values();
                let xk = ms.populations()[k].values();
                let s: f64 = xi
                    .iter()
                    .zip(xk)
                    .map(|(a, b)| (a - means[i]) * (b - means[k]))
                    .sum();
                cov[(i, k)] = s / len;
                cov[(k, i)] = s / len;
            }
        }
        cov
    });
    SampleStats { means, cov, n }
}

pub(crate) fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Deletion scheme a weight vector was selected under.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    /// Delete the `j`-th observation of every population at once.
    EqualColumn,
    /// Delete the `j`-th observation of the target population only.
    UnequalPoint,
}

impl Scheme {
    pub fn as_str(self) -> &'static str {
        match self {
            Scheme::EqualColumn => "equal-column",
            Scheme::UnequalPoint => "unequal-point",
        }
    }

    /// Default scheme for a sample: column deletion when aligned.
    pub fn default_for(ms: &MultiSample) -> Self {
        if ms.is_aligned() {
            Scheme::EqualColumn
        } else {
            Scheme::UnequalPoint
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scheme {
    type Err = WleError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "equal-column" | "column" | "delete-one-column" => Ok(Scheme::EqualColumn),
            "unequal-point" | "point" | "delete-one-point" => Ok(Scheme::UnequalPoint),
            other => Err(WleError::InvalidInput(format!("unknown scheme `{other}`"))),
        }
    }
}

/// Relevance weights `λ` with `Σ λ_i = 1` and solver diagnostics.
///
/// Entries may be negative or exceed one; only the sum is constrained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightVector {
    pub lambda: Vec<f64>,
    pub scheme: Scheme,
    pub delta_used: f64,
    pub unique: bool,
    pub condition_flag: bool,
}

impl WeightVector {
    /// Builds a weight vector from the free coordinates `λ_2..λ_m`, setting
    /// `λ_1 = 1 - Σ_{i≥2} λ_i`.
    pub fn from_free(free: &[f64], scheme: Scheme) -> Self {
        let mut lambda = Vec::with_capacity(free.len() + 1);
        lambda.push(1.0 - free.iter().sum::<f64>());
        lambda.extend_from_slice(free);
        Self {
            lambda,
            scheme,
            delta_used: 0.0,
            unique: true,
            condition_flag: false,
        }
    }

    /// Re-imposes the sum constraint exactly on a solver output by
    /// recomputing `λ_1` from the remaining entries.
    pub fn from_solution(lambda: &[f64], scheme: Scheme) -> Self {
        Self::from_free(&lambda[1..], scheme)
    }

    /// `w0 = (1, 0, ..., 0)`: all weight on the target population.
    pub fn target_only(m: usize, scheme: Scheme) -> Self {
        Self::from_free(&vec![0.0; m - 1], scheme)
    }

    pub fn with_delta(mut self, delta: f64) -> Self {
        self.delta_used = delta;
        self
    }

    pub fn with_unique(mut self, unique: bool) -> Self {
        self.unique = unique;
        self
    }

    pub fn with_condition_flag(mut self, flag: bool) -> Self {
        self.condition_flag = flag;
        self
    }

    pub fn sum(&self) -> f64 {
        self.lambda.iter().sum()
    }

    /// Clip every entry to `[0, 1]` and renormalize. Off by default
    /// everywhere; callers opt in explicitly.
    pub fn clipped(&self) -> Self {
        let clipped: Vec<f64> = self.lambda.iter().map(|v| v.clamp(0.0, 1.0)).collect();
        let total: f64 = clipped.iter().sum();
        let lambda = if total > 0.0 {
            clipped.iter().map(|v| v / total).collect()
        } else {
            let mut w = vec![0.0; clipped.len()];
            w[0] = 1.0;
            w
        };
        Self {
            lambda,
            ..self.clone()
        }
    }
}

impl Deref for WeightVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.lambda
    }
}

/// Distribution family of every population.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    NormalMean,
    PoissonRate,
    Lognormal,
}

impl Family {
    pub fn as_str(self) -> &'static str {
        match self {
            Family::NormalMean => "normal-mean",
            Family::PoissonRate => "poisson-rate",
            Family::Lognormal => "lognormal",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Family {
    type Err = WleError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "normal-mean" | "normal" => Ok(Family::NormalMean),
            "poisson-rate" | "poisson" => Ok(Family::PoissonRate),
            "lognormal" | "log-normal" => Ok(Family::Lognormal),
            other => Err(WleError::InvalidInput(format!("unknown family `{other}`"))),
        }
    }
}

/// Distribution family plus its fixed nuisance parameter.
///
/// The natural parameter `θ` is the mean for normal and Poisson data and the
/// log-scale mean `μ` for log-normal data, whose log-scale SD is fixed at 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub family: Family,
    /// Standard deviation used when sampling normal data.
    pub normal_sd: f64,
}

impl ModelSpec {
    pub const LOGNORMAL_LOG_SD: f64 = 1.0;

    pub fn new(family: Family) -> Self {
        Self {
            family,
            normal_sd: 1.0,
        }
    }

    pub fn normal() -> Self {
        Self::new(Family::NormalMean)
    }

    pub fn poisson() -> Self {
        Self::new(Family::PoissonRate)
    }

    pub fn lognormal() -> Self {
        Self::new(Family::Lognormal)
    }

    /// Mean map `φ`: identity except `φ(μ) = exp(μ + 1/2)` for log-normal.
    pub fn phi(&self, theta: f64) -> f64 {
        match self.family {
            Family::NormalMean | Family::PoissonRate => theta,
            Family::Lognormal => (theta + 0.5).exp(),
        }
    }

    /// True when `φ` is the identity, so the discrepancy is quadratic in `λ`.
    pub fn is_linear(&self) -> bool {
        !matches!(self.family, Family::Lognormal)
    }

    /// Maps an observation onto the scale the estimator averages over.
    pub fn transform(&self, x: f64) -> Result<f64> {
        match self.family {
            Family::NormalMean => Ok(x),
            Family::PoissonRate if x < 0.0 => Err(WleError::Domain(format!(
                "poisson-rate requires nonnegative values, got {x}"
            ))),
            Family::PoissonRate => Ok(x),
            Family::Lognormal if x <= 0.0 => Err(WleError::Domain(format!(
                "lognormal requires positive values, got {x}"
            ))),
            Family::Lognormal => Ok(x.ln()),
        }
    }
}

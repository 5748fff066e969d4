//! MLEs, weighted likelihood estimates and leave-one-out predictions for
//! the supported families.
//!
//! For every family here the WLE of the target population's natural
//! parameter is the `λ`-weighted combination of per-population MLEs: sample
//! means for normal and Poisson data, means of logs for log-normal data.

use serde::{Deserialize, Serialize};

use crate::error::{Result, WleError};
use crate::model::{mean, Family, ModelSpec, MultiSample, PopulationSample, Scheme};

/// Point estimate of the natural parameter and the implied mean `φ(θ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub theta: f64,
    pub phi: f64,
    /// Set when a Poisson rate estimate came out negative (possible with
    /// negative weights). The value is reported as-is.
    pub negative_rate: bool,
}

impl Estimate {
    fn new(model: &ModelSpec, theta: f64) -> Self {
        Self {
            theta,
            phi: model.phi(theta),
            negative_rate: model.family == Family::PoissonRate && theta < 0.0,
        }
    }

    /// Opt-in truncation of a negative Poisson rate at zero.
    pub fn truncated(self) -> Self {
        if self.negative_rate {
            Self {
                theta: 0.0,
                phi: 0.0,
                negative_rate: false,
            }
        } else {
            self
        }
    }
}

/// Observations mapped onto the averaging scale (logs for log-normal).
pub(crate) fn transformed(x: &PopulationSample, model: &ModelSpec) -> Result<Vec<f64>> {
    x.values().iter().map(|&v| model.transform(v)).collect()
}

pub fn mle_mean(x: &PopulationSample, model: &ModelSpec) -> Result<Estimate> {
    let t = transformed(x, model)?;
    Ok(Estimate::new(model, mean(&t)))
}

fn check_lambda(ms: &MultiSample, lambda: &[f64]) -> Result<()> {
    if lambda.len() != ms.m() {
        return Err(WleError::InvalidInput(format!(
            "weight vector has length {}, sample has {} populations",
            lambda.len(),
            ms.m()
        )));
    }
    Ok(())
}

pub fn wle(ms: &MultiSample, lambda: &[f64], model: &ModelSpec) -> Result<Estimate> {
    check_lambda(ms, lambda)?;
    let mut theta = 0.0;
    for (pop, &l) in ms.populations().iter().zip(lambda) {
        theta += l * mean(&transformed(pop, model)?);
    }
    Ok(Estimate::new(model, theta))
}

/// Leave-one-out predictions `φ(θ̃₁^(−j))` for `j = 1..n₁`.
///
/// The column scheme drops the `j`-th observation of every population; the
/// point scheme drops it from the target only. Each deleted mean is the
/// full sum minus the deleted value, divided by `n − 1`.
pub fn loo_estimates(
    ms: &MultiSample,
    lambda: &[f64],
    model: &ModelSpec,
    scheme: Scheme,
) -> Result<Vec<f64>> {
    check_lambda(ms, lambda)?;
    let n1 = ms.target().len();
    if n1 < 2 {
        return Err(WleError::InsufficientData(format!(
            "leave-one-out needs at least 2 target observations, got {n1}"
        )));
    }
    if scheme == Scheme::EqualColumn && !ms.is_aligned() {
        return Err(WleError::InvalidInput(
            "delete-one-column requires column-aligned populations".into(),
        ));
    }
    let data: Vec<Vec<f64>> = ms
        .populations()
        .iter()
        .map(|p| transformed(p, model))
        .collect::<Result<_>>()?;
    let sums: Vec<f64> = data.iter().map(|v| v.iter().sum()).collect();

    let preds = (0..n1)
        .map(|j| {
            let theta: f64 = data
                .iter()
                .zip(&sums)
                .zip(lambda)
                .enumerate()
                .map(|(i, ((values, &sum), &l))| {
                    let n = values.len() as f64;
                    let deleted_mean = if i == 0 || scheme == Scheme::EqualColumn {
                        (sum - values[j]) / (n - 1.0)
                    } else {
                        sum / n
                    };
                    l * deleted_mean
                })
                .sum();
            model.phi(theta)
        })
        .collect();
    Ok(preds)
}

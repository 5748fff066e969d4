//! Closed-form cross-validated weights.
//!
//! Equal sample sizes use the delete-one-column scheme: the two-population
//! ratio `λ₂ = S₂/(S₁ + δ)` and its matrix form built from `A_e` and `b_e`.
//! Unequal sizes use the delete-one-point scheme: a scalar closed form for
//! two populations and a (generally rank-deficient) quadratic for `m > 2`.

use serde::{Deserialize, Serialize};

use crate::error::{Result, WleError};
use crate::linalg::{constrained_quadratic_min, ridge_if_ill_conditioned, solve_linear, Matrix};
use crate::model::{summarize, MultiSample, PopulationSample, Scheme, WeightVector};

/// Regularization added to the weight denominator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case", tag = "rule", content = "value")]
pub enum Delta {
    /// `1e-8 · max(1, mean(x₁ⱼ²))`, scaled to the target sample.
    #[default]
    Default,
    Fixed(f64),
}

impl Delta {
    pub fn resolve(self, target: &PopulationSample) -> f64 {
        match self {
            Delta::Default => default_delta(target.values()),
            Delta::Fixed(d) => d,
        }
    }

    pub fn describe(self) -> String {
        match self {
            Delta::Default => "1e-8*max(1,mean(x1^2))".to_string(),
            Delta::Fixed(d) => format!("{d:e}"),
        }
    }
}

pub fn default_delta(target: &[f64]) -> f64 {
    let msq = target.iter().map(|v| v * v).sum::<f64>() / target.len() as f64;
    1e-8 * msq.max(1.0)
}

fn check_delta(delta: f64) -> Result<()> {
    if !(delta >= 0.0 && delta.is_finite()) {
        return Err(WleError::InvalidInput(format!(
            "delta must be a nonnegative finite number, got {delta}"
        )));
    }
    Ok(())
}

/// Intermediate quantities of the delete-one-column scheme.
#[derive(Debug, Clone, PartialEq)]
pub struct EqualSchemeIntermediates {
    /// `(1/n) Σⱼ (X̄₁^(−j) − X̄₂^(−j))²`; zero when `m = 1`.
    pub s1: f64,
    /// `(1/n) Σⱼ (X̄₁^(−j) − X̄₂^(−j))(X̄₁^(−j) − X₁ⱼ)`; zero when `m = 1`.
    pub s2: f64,
    /// `A_e[i][k] = Σⱼ X̄ᵢ^(−j) X̄ₖ^(−j)`.
    pub a_e: Matrix,
    /// `b_e[i] = Σⱼ X₁ⱼ X̄ᵢ^(−j)`.
    pub b_e: Vec<f64>,
    /// `n / (n − 1)`.
    pub e_n: f64,
}

fn require_aligned(ms: &MultiSample) -> Result<usize> {
    if !ms.is_aligned() {
        return Err(WleError::InvalidInput(
            "the equal-size scheme requires column-aligned populations".into(),
        ));
    }
    let n = ms.target().len();
    if n < 2 {
        return Err(WleError::InsufficientData(format!(
            "the equal-size scheme needs n ≥ 2, got {n}"
        )));
    }
    Ok(n)
}

/// `S₁ᵉ` and `S₂ᵉ` for two equal-size samples, from summary statistics.
fn lemma_terms(x1: &[f64], x2: &[f64]) -> (f64, f64) {
    let n = x1.len() as f64;
    let m1 = x1.iter().sum::<f64>() / n;
    let m2 = x2.iter().sum::<f64>() / n;
    let var1 = x1.iter().map(|v| (v - m1).powi(2)).sum::<f64>() / n;
    let cov = x1.iter().zip(x2).map(|(a, b)| (a - m1) * (b - m2)).sum::<f64>() / n;
    let sq_diff: f64 = x1.iter().zip(x2).map(|(a, b)| (a - b).powi(2)).sum();
    let nm1 = n - 1.0;
    let s1 = n * (n - 2.0) / (nm1 * nm1) * (m1 - m2).powi(2) + sq_diff / (n * nm1 * nm1);
    let s2 = n / (nm1 * nm1) * (var1 - cov);
    (s1, s2)
}

pub fn equal_intermediates(ms: &MultiSample) -> Result<EqualSchemeIntermediates> {
    let n = require_aligned(ms)? as f64;
    let stats = summarize(ms);
    let cov = stats.cov()?;
    let e_n = n / (n - 1.0);
    let theta = &stats.means;

    let a_e = cov
        .scaled(e_n / (n - 1.0))
        .add(&Matrix::outer(theta, theta).scaled(e_n * e_n * (n - 2.0) + e_n / (n - 1.0)));
    let b_e: Vec<f64> = (0..ms.m())
        .map(|i| a_e[(i, 0)] - e_n * e_n * cov[(i, 0)])
        .collect();

    let (s1, s2) = if ms.m() >= 2 {
        lemma_terms(ms.populations()[0].values(), ms.populations()[1].values())
    } else {
        (0.0, 0.0)
    };
    Ok(EqualSchemeIntermediates { s1, s2, a_e, b_e, e_n })
}

/// Two equal-size populations: `λ₂ = S₂ᵉ / (S₁ᵉ + δ)`, `λ₁ = 1 − λ₂`.
pub fn weights_equal_two(x1: &PopulationSample, x2: &PopulationSample, delta: f64) -> Result<WeightVector> {
    check_delta(delta)?;
    if x1.len() != x2.len() {
        return Err(WleError::InvalidInput(format!(
            "equal-size weights need equal lengths, got {} and {}",
            x1.len(),
            x2.len()
        )));
    }
    if x1.len() < 2 {
        return Err(WleError::InsufficientData(format!(
            "equal-size weights need n ≥ 2, got {}",
            x1.len()
        )));
    }
    let (s1, s2) = lemma_terms(x1.values(), x2.values());
    let denom = s1 + delta;
    if denom <= 0.0 {
        return Err(WleError::DegenerateSamples(
            "S₁ + δ = 0: identical constant samples with δ = 0".into(),
        ));
    }
    Ok(WeightVector::from_free(&[s2 / denom], Scheme::EqualColumn).with_delta(delta))
}

/// Regularized quadratic for the column scheme. `δ` enters as the penalty
/// `(nδ/2)‖λ − w₀‖²` on the discrepancy, which for two populations
/// reproduces `S₂/(S₁ + δ)` exactly.
fn regularized_equal_system(ms: &MultiSample, delta: f64) -> Result<(Matrix, Vec<f64>, f64, bool)> {
    let inter = equal_intermediates(ms)?;
    let n = ms.target().len() as f64;
    let mut a = inter.a_e;
    let mut b = inter.b_e;
    let penalty = 0.5 * n * delta;
    a.add_to_diagonal(penalty);
    b[0] += penalty;
    let flagged = ridge_if_ill_conditioned(&mut a);
    Ok((a, b, inter.e_n, flagged))
}

/// Column-scheme weights for `m` aligned populations via the constrained
/// quadratic in `A_e`, `b_e = A_1 − e_n² Σ̂_1`.
pub fn weights_equal_matrix(ms: &MultiSample, delta: f64) -> Result<WeightVector> {
    check_delta(delta)?;
    require_aligned(ms)?;
    if ms.m() == 1 {
        return Ok(WeightVector::target_only(1, Scheme::EqualColumn).with_delta(delta));
    }
    let (a, b, _, flagged) = regularized_equal_system(ms, delta)?;
    let sol = constrained_quadratic_min(&a, &b)?;
    Ok(WeightVector::from_solution(&sol.lambda, Scheme::EqualColumn)
        .with_delta(delta)
        .with_unique(sol.unique)
        .with_condition_flag(flagged))
}

/// The same weights through the explicit form
/// `λ = w₀ − e_n² (A⁻¹Σ̂₁ − (1ᵗA⁻¹Σ̂₁ / 1ᵗA⁻¹1) A⁻¹1)`.
/// Requires `A_e` (after regularization) to be invertible.
pub fn weights_equal_explicit(ms: &MultiSample, delta: f64) -> Result<WeightVector> {
    check_delta(delta)?;
    require_aligned(ms)?;
    let m = ms.m();
    if m == 1 {
        return Ok(WeightVector::target_only(1, Scheme::EqualColumn).with_delta(delta));
    }
    let (a, _, e_n, flagged) = regularized_equal_system(ms, delta)?;
    let stats = summarize(ms);
    let sigma1 = stats.cov()?.column(0);
    let ainv_s = solve_linear(&a, &sigma1)?;
    let ainv_1 = solve_linear(&a, &vec![1.0; m])?;
    let ratio = ainv_s.iter().sum::<f64>() / ainv_1.iter().sum::<f64>();
    let mut lambda: Vec<f64> = ainv_s
        .iter()
        .zip(&ainv_1)
        .map(|(s, o)| -e_n * e_n * (s - ratio * o))
        .collect();
    lambda[0] += 1.0;
    Ok(WeightVector::from_solution(&lambda, Scheme::EqualColumn)
        .with_delta(delta)
        .with_condition_flag(flagged))
}

fn unequal_target_terms(x1: &PopulationSample) -> Result<(f64, f64, f64)> {
    let n1 = x1.len();
    if n1 < 2 {
        return Err(WleError::InsufficientData(format!(
            "the unequal-size scheme needs n₁ ≥ 2, got {n1}"
        )));
    }
    let n = n1 as f64;
    let mean = x1.mean();
    let var = x1.values().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    Ok((n, mean, var))
}

/// Two populations under the delete-one-point scheme:
///
/// `λ₁ = [n₁d² − (n₁/(n₁−1))σ̂₁²] / [n₁d² + (n₁/(n₁−1)²)σ̂₁²]`, `d = X̄₁ − X̄₂`.
pub fn weights_unequal_two(x1: &PopulationSample, x2: &PopulationSample) -> Result<WeightVector> {
    let (n, m1, var) = unequal_target_terms(x1)?;
    let d2 = (m1 - x2.mean()).powi(2);
    let num = n * d2 - n / (n - 1.0) * var;
    let den = n * d2 + n / ((n - 1.0) * (n - 1.0)) * var;
    if den < 1e-300 {
        return Err(WleError::DegenerateSamples(
            "delete-one-point denominator vanishes: equal means and constant target".into(),
        ));
    }
    let l1 = num / den;
    Ok(WeightVector::from_free(&[1.0 - l1], Scheme::UnequalPoint))
}

/// Quadratic `(A, b)` of the delete-one-point discrepancy for `m` samples.
pub fn unequal_system(ms: &MultiSample) -> Result<(Matrix, Vec<f64>)> {
    let (n, m1, var) = unequal_target_terms(ms.target())?;
    let theta: Vec<f64> = ms.populations().iter().map(PopulationSample::mean).collect();
    let mut a = Matrix::outer(&theta, &theta).scaled(n);
    a[(0, 0)] += n / ((n - 1.0) * (n - 1.0)) * var;
    let mut b: Vec<f64> = theta.iter().map(|t| n * m1 * t).collect();
    b[0] = n * m1 * m1 - n / (n - 1.0) * var;
    Ok((a, b))
}

/// Delete-one-point weights for `m` samples. For `m > 2` the quadratic is
/// rank-deficient and the minimum-norm minimizer is returned.
pub fn weights_unequal_matrix(ms: &MultiSample, delta: f64) -> Result<WeightVector> {
    check_delta(delta)?;
    let (mut a, mut b) = unequal_system(ms)?;
    if ms.m() == 1 {
        return Ok(WeightVector::target_only(1, Scheme::UnequalPoint).with_delta(delta));
    }
    let penalty = 0.5 * ms.target().len() as f64 * delta;
    a.add_to_diagonal(penalty);
    b[0] += penalty;
    let sol = constrained_quadratic_min(&a, &b)?;
    Ok(WeightVector::from_solution(&sol.lambda, Scheme::UnequalPoint)
        .with_delta(delta)
        .with_unique(sol.unique))
}

/// Dispatches on the scheme and the number of populations.
pub fn select_weights(ms: &MultiSample, scheme: Scheme, delta: Delta) -> Result<WeightVector> {
    let d = delta.resolve(ms.target());
    match (scheme, ms.m()) {
        (Scheme::EqualColumn, 2) => {
            require_aligned(ms)?;
            weights_equal_two(&ms.populations()[0], &ms.populations()[1], d)
        }
        (Scheme::EqualColumn, _) => weights_equal_matrix(ms, d),
        (Scheme::UnequalPoint, _) => weights_unequal_matrix(ms, d),
    }
}

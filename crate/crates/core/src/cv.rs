//! The leave-one-out discrepancy for any family and deletion scheme, and
//! its direct numerical minimization.
//!
//! This is the reference path that every closed form is checked against.
//! For linear mean maps the discrepancy is an exact quadratic whose
//! coefficients are assembled here from explicit leave-one-out predictions
//! (never from the summary-statistic formulas); for log-normal data it is
//! minimized by grid seeding plus a local derivative-free search.

use crate::error::{Result, WleError};
use crate::estimator::{loo_estimates, transformed};
use crate::linalg::constrained_quadratic_min;
use crate::model::{ModelSpec, MultiSample, PopulationSample, Scheme, WeightVector};
use crate::search::{golden_section, nelder_mead};

/// Deletion scheme of the cross-validation.
pub type DeletionScheme = Scheme;

const GRID_HALF_WIDTH: f64 = 2.0;
const OBJECTIVE_TOL: f64 = 1e-10;
const MAX_BRACKET: f64 = 64.0;

/// Average squared leave-one-out prediction error of the target,
/// `(1/n₁) Σⱼ (X₁ⱼ − φ(θ̃₁^(−j)))²`.
pub fn loo_discrepancy(ms: &MultiSample, lambda: &[f64], model: &ModelSpec, scheme: Scheme) -> Result<f64> {
    let preds = loo_estimates(ms, lambda, model, scheme)?;
    let x = ms.target().values();
    Ok(x.iter().zip(&preds).map(|(a, p)| (a - p).powi(2)).sum::<f64>() / x.len() as f64)
}

/// Minimizes [`loo_discrepancy`] over `λ` with `1ᵗλ = 1`.
pub fn optimize_weights(ms: &MultiSample, model: &ModelSpec, scheme: Scheme) -> Result<WeightVector> {
    let n1 = ms.target().len();
    if n1 < 2 {
        return Err(WleError::InsufficientData(format!(
            "leave-one-out needs at least 2 target observations, got {n1}"
        )));
    }
    if ms.m() == 1 {
        return Ok(WeightVector::target_only(1, scheme));
    }
    if model.is_linear() {
        quadratic_weights(ms, model, scheme)
    } else {
        numerical_weights(ms, model, scheme)
    }
}

/// Assembles `A_ik = Σⱼ vᵢⱼ vₖⱼ`, `bᵢ = Σⱼ X₁ⱼ vᵢⱼ` where `vᵢⱼ` is the
/// prediction of `X₁ⱼ` made with all weight on population `i`.
fn quadratic_weights(ms: &MultiSample, model: &ModelSpec, scheme: Scheme) -> Result<WeightVector> {
    let m = ms.m();
    let columns: Vec<Vec<f64>> = (0..m)
        .map(|i| {
            let mut unit = vec![0.0; m];
            unit[i] = 1.0;
            loo_estimates(ms, &unit, model, scheme)
        })
        .collect::<Result<_>>()?;
    let x = ms.target().values();
    let mut a = crate::linalg::Matrix::zeros(m, m);
    let mut b = vec![0.0; m];
    for i in 0..m {
        b[i] = x.iter().zip(&columns[i]).map(|(p, q)| p * q).sum();
        for k in i..m {
            let s: f64 = columns[i].iter().zip(&columns[k]).map(|(p, q)| p * q).sum();
            a[(i, k)] = s;
            a[(k, i)] = s;
        }
    }
    let sol = constrained_quadratic_min(&a, &b)?;
    Ok(WeightVector::from_solution(&sol.lambda, scheme).with_unique(sol.unique))
}

fn grid_points(dim: usize) -> usize {
    match dim {
        1 => 41,
        2 => 21,
        3 => 9,
        _ => 5,
    }
}

fn numerical_weights(ms: &MultiSample, model: &ModelSpec, scheme: Scheme) -> Result<WeightVector> {
    // fail early on domain errors rather than treating them as non-finite
    loo_estimates(ms, &WeightVector::target_only(ms.m(), scheme), model, scheme)?;

    let dim = ms.m() - 1;
    let objective = |free: &[f64]| -> f64 {
        let w = WeightVector::from_free(free, scheme);
        loo_discrepancy(ms, &w, model, scheme).unwrap_or(f64::INFINITY)
    };

    let mut half = GRID_HALF_WIDTH;
    let per_dim = grid_points(dim);
    loop {
        let step = 2.0 * half / (per_dim - 1) as f64;
        let (best_x, best_v, on_boundary, flat) = grid_search(&objective, dim, per_dim, half)?;
        if on_boundary && half < MAX_BRACKET {
            half *= 2.0;
            continue;
        }
        let (x, _) = if dim == 1 {
            let lo = best_x[0] - step;
            let hi = best_x[0] + step;
            let t = golden_section(|t| objective(&[t]), lo, hi, OBJECTIVE_TOL);
            let v = objective(&[t]);
            if v <= best_v {
                (vec![t], v)
            } else {
                (best_x, best_v)
            }
        } else {
            let r = nelder_mead(&objective, &best_x, step, OBJECTIVE_TOL, 20_000);
            if r.value <= best_v {
                (r.x, r.value)
            } else {
                (best_x, best_v)
            }
        };
        return Ok(WeightVector::from_free(&x, scheme).with_unique(!flat));
    }
}

/// Evaluates the objective on a regular grid over `[-half, half]^dim` in
/// lexicographic order; ties go to the lowest grid index.
fn grid_search<F: Fn(&[f64]) -> f64>(
    f: &F,
    dim: usize,
    per_dim: usize,
    half: f64,
) -> Result<(Vec<f64>, f64, bool, bool)> {
    let total = per_dim.pow(dim as u32);
    let coord = |k: usize| -half + 2.0 * half * k as f64 / (per_dim - 1) as f64;
    let mut best: Option<(usize, f64)> = None;
    let mut worst_finite = f64::NEG_INFINITY;
    let mut idx = vec![0usize; dim];
    let mut x = vec![0.0; dim];
    for flat in 0..total {
        let mut r = flat;
        for d in (0..dim).rev() {
            idx[d] = r % per_dim;
            r /= per_dim;
            x[d] = coord(idx[d]);
        }
        let v = f(&x);
        if !v.is_finite() {
            continue;
        }
        worst_finite = worst_finite.max(v);
        if best.is_none_or(|(_, bv)| v < bv) {
            best = Some((flat, v));
        }
    }
    let (flat, value) = best.ok_or_else(|| {
        WleError::OptimizationFailed("objective is non-finite at every grid seed".into())
    })?;
    let mut r = flat;
    let mut on_boundary = false;
    let mut point = vec![0.0; dim];
    for d in (0..dim).rev() {
        let k = r % per_dim;
        r /= per_dim;
        point[d] = coord(k);
        on_boundary |= k == 0 || k == per_dim - 1;
    }
    let flat_objective = worst_finite - value <= 1e-14 * (1.0 + value.abs());
    Ok((point, value, on_boundary && !flat_objective, flat_objective))
}

/// Log-normal two-population weight by golden-section search on
/// `(1/n) Σⱼ (X₁ⱼ − exp(Ȳ₁^(−j) + λ₂(Ȳ₂^(−j) − Ȳ₁^(−j)) + 1/2))²`,
/// with `Y = log X`. The bracket starts at `[-1, 1]` and doubles (up to
/// `[-8, 8]`) while the minimum sits on its edge.
pub fn lognormal_weight(x1: &PopulationSample, x2: &PopulationSample) -> Result<WeightVector> {
    let model = ModelSpec::lognormal();
    if x1.len() != x2.len() {
        return Err(WleError::InvalidInput(format!(
            "log-normal weights need equal lengths, got {} and {}",
            x1.len(),
            x2.len()
        )));
    }
    let n = x1.len();
    if n < 2 {
        return Err(WleError::InsufficientData(format!(
            "log-normal weights need n ≥ 2, got {n}"
        )));
    }
    let y1 = transformed(x1, &model)?;
    let y2 = transformed(x2, &model)?;
    let nm1 = (n - 1) as f64;
    let (s1, s2): (f64, f64) = (y1.iter().sum(), y2.iter().sum());
    let base: Vec<f64> = y1.iter().map(|v| (s1 - v) / nm1).collect();
    let slope: Vec<f64> = y2
        .iter()
        .zip(&base)
        .map(|(v, b)| (s2 - v) / nm1 - b)
        .collect();
    let x = x1.values();

    let scale = base.iter().fold(1.0f64, |acc, v| acc.max(v.abs()));
    if slope.iter().all(|s| s.abs() <= 1e-15 * scale) {
        return Ok(WeightVector::from_free(&[0.0], Scheme::EqualColumn).with_unique(false));
    }

    let objective = |l2: f64| -> f64 {
        x.iter()
            .zip(&base)
            .zip(&slope)
            .map(|((xj, b), s)| (xj - (b + l2 * s + 0.5).exp()).powi(2))
            .sum::<f64>()
            / n as f64
    };

    let mut half = 1.0;
    let l2 = loop {
        let t = golden_section(objective, -half, half, OBJECTIVE_TOL);
        let at_edge = (half - t.abs()) <= 10.0 * OBJECTIVE_TOL;
        if at_edge && half < 8.0 {
            half *= 2.0;
        } else {
            break t;
        }
    };
    Ok(WeightVector::from_free(&[l2], Scheme::EqualColumn))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::weights::{weights_equal_two, weights_unequal_two};
    use approx::assert_abs_diff_eq;
    use std::f64::consts::E;

    fn ms(data: Vec<Vec<f64>>, aligned: bool) -> MultiSample {
        MultiSample::from_vecs(data, aligned).unwrap()
    }

    #[test]
    fn discrepancy_hand_example() {
        let d = loo_discrepancy(
            &ms(vec![vec![1.0, 2.0, 3.0], vec![9.0]], false),
            &[1.0, 0.0],
            &ModelSpec::normal(),
            Scheme::UnequalPoint,
        )
        .unwrap();
        assert_abs_diff_eq!(d, 1.5, epsilon = 1e-15);
    }

    #[test]
    fn single_population_is_classical_loo() {
        let x = vec![0.5, 2.0, -1.0, 4.0];
        let d = loo_discrepancy(&ms(vec![x.clone()], true), &[1.0], &ModelSpec::normal(), Scheme::EqualColumn).unwrap();
        let n = x.len();
        let classical: f64 = (0..n)
            .map(|j| {
                let m: f64 = x.iter().enumerate().filter(|(k, _)| *k != j).map(|(_, v)| v).sum::<f64>() / (n - 1) as f64;
                (x[j] - m).powi(2)
            })
            .sum::<f64>()
            / n as f64;
        assert_abs_diff_eq!(d, classical, epsilon = 1e-14);
    }

    #[test]
    fn lognormal_discrepancy_closed_instance() {
        let data = ms(vec![vec![1.0, 1.0], vec![E, E]], true);
        for l2 in [-1.0, -0.5, 0.0, 0.7] {
            let d = loo_discrepancy(&data, &[1.0 - l2, l2], &ModelSpec::lognormal(), Scheme::EqualColumn).unwrap();
            assert_abs_diff_eq!(d, (1.0 - (l2 + 0.5f64).exp()).powi(2), epsilon = 1e-12);
        }
    }

    #[test]
    fn optimize_reproduces_closed_forms() {
        let model = ModelSpec::normal();
        let w = optimize_weights(&ms(vec![vec![0.0, 1.0, 2.0], vec![1.0, 1.0, 1.0]], true), &model, Scheme::EqualColumn).unwrap();
        assert_abs_diff_eq!(w.lambda[0], -2.0, epsilon = 1e-9);
        assert_abs_diff_eq!(w.lambda[1], 3.0, epsilon = 1e-9);

        let w = optimize_weights(&ms(vec![vec![0.0, 2.0], vec![5.0]], false), &model, Scheme::UnequalPoint).unwrap();
        assert_abs_diff_eq!(w.lambda[0], 15.0 / 17.0, epsilon = 1e-9);
    }

    #[test]
    fn optimize_lognormal_closed_instance() {
        let w = optimize_weights(&ms(vec![vec![1.0, 1.0], vec![E, E]], true), &ModelSpec::lognormal(), Scheme::EqualColumn).unwrap();
        assert_abs_diff_eq!(w.lambda[1], -0.5, epsilon = 1e-6);
    }

    #[test]
    fn lognormal_weight_examples() {
        let x1 = PopulationSample::new("1", vec![1.0, 1.0]).unwrap();
        let x2 = PopulationSample::new("2", vec![E, E]).unwrap();
        let w = lognormal_weight(&x1, &x2).unwrap();
        assert_abs_diff_eq!(w.lambda[1], -0.5, epsilon = 1e-8);

        let same = PopulationSample::new("2", vec![1.0, 2.0, 3.0]).unwrap();
        let w = lognormal_weight(&same, &same).unwrap();
        assert_eq!(w.lambda, vec![1.0, 0.0]);
        assert!(!w.unique);

        let bad = PopulationSample::new("b", vec![1.0, -2.0]).unwrap();
        assert!(matches!(lognormal_weight(&bad, &x2), Err(WleError::Domain(_))));
    }

    #[test]
    fn bracket_expands_when_minimum_is_outside() {
        // target sits far above the neighbour's scale, pushing λ₂ below −1
        let x1 = PopulationSample::new("1", vec![1.0, 1.0, 1.0]).unwrap();
        let x2 = PopulationSample::new("2", vec![1.2, 1.25, 1.3]).unwrap();
        let w = lognormal_weight(&x1, &x2).unwrap();
        let direct = optimize_weights(
            &MultiSample::aligned(vec![x1, x2]).unwrap(),
            &ModelSpec::lognormal(),
            Scheme::EqualColumn,
        )
        .unwrap();
        assert!(w.lambda[1] < -1.0);
        assert_abs_diff_eq!(w.lambda[1], direct.lambda[1], epsilon = 1e-5);
    }

    #[test]
    fn matches_closed_forms_on_random_data() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let model = ModelSpec::normal();
        for _ in 0..100 {
            let n = rng.gen_range(3..9);
            let a: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let b: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..3.0)).collect();
            let data = ms(vec![a.clone(), b.clone()], true);
            let closed = weights_equal_two(&data.populations()[0], &data.populations()[1], 0.0).unwrap();
            let direct = optimize_weights(&data, &model, Scheme::EqualColumn).unwrap();
            assert_abs_diff_eq!(closed.lambda[1], direct.lambda[1], epsilon = 1e-6);

            let un = ms(vec![a, b[..n - 1].to_vec()], false);
            let closed = weights_unequal_two(&un.populations()[0], &un.populations()[1]).unwrap();
            let direct = optimize_weights(&un, &model, Scheme::UnequalPoint).unwrap();
            assert_abs_diff_eq!(closed.lambda[0], direct.lambda[0], epsilon = 1e-6);
        }
    }

    #[test]
    fn optimum_dominates_random_feasible_points() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
        let data = ms(
            vec![
                (0..12).map(|_| rng.gen_range(0.5..3.0)).collect(),
                (0..12).map(|_| rng.gen_range(0.8..4.0)).collect(),
                (0..12).map(|_| rng.gen_range(0.2..2.0)).collect(),
            ],
            true,
        );
        for model in [ModelSpec::normal(), ModelSpec::lognormal()] {
            let w = optimize_weights(&data, &model, Scheme::EqualColumn).unwrap();
            let best = loo_discrepancy(&data, &w, &model, Scheme::EqualColumn).unwrap();
            for _ in 0..1000 {
                let free = [rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)];
                let l = WeightVector::from_free(&free, Scheme::EqualColumn);
                assert!(loo_discrepancy(&data, &l, &model, Scheme::EqualColumn).unwrap() >= best - 1e-9);
            }
        }
    }

    #[test]
    fn insufficient_data() {
        let r = optimize_weights(&ms(vec![vec![1.0], vec![2.0]], true), &ModelSpec::normal(), Scheme::EqualColumn);
        assert!(matches!(r, Err(WleError::InsufficientData(_))));
    }
}

//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fail.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;
use wlecv_cli::run_cli_with;
use wlecv_core::cv::{lognormal_weight, loo_discrepancy, optimize_weights};
use wlecv_core::mapping::{
    analyze, flag_outlier_weeks, inject_outlier_week, synthetic_dataset, MappingConfig, OutlierPolicy,
    SyntheticConfig, WeightMode,
};
use wlecv_core::sim::{run_replication, StudyConfig};
use wlecv_core::weights::{equal_intermediates, weights_equal_matrix, weights_unequal_matrix, weights_unequal_two};
use wlecv_core::{ModelSpec, MultiSample, PopulationSample, Scheme};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn cli(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let mut argv = vec!["wlecv"];
    argv.extend_from_slice(args);
    let code = run_cli_with(argv, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

/// Runs a simulate preset through the CLI and returns (ratio, mean λ₁) per n.
fn preset_rows(preset: &str, extra: &[&str]) -> (Vec<(f64, f64)>, f64) {
    let start = Instant::now();
    let mut args = vec!["simulate", "--preset", preset, "--seed", "42", "--emit", "json"];
    args.extend_from_slice(extra);
    let (code, out, err) = cli(&args);
    assert_eq!(code, 0, "{err}");
    let secs = start.elapsed().as_secs_f64();
    let report: Value = serde_json::from_str(&out).unwrap();
    let rows = report["rows"]
        .as_array()
        .unwrap()
        .iter()
        .map(|r| (r["ratio"].as_f64().unwrap(), r["mean_lambda"][0].as_f64().unwrap()))
        .collect();
    (rows, secs)
}

fn within(values: &[f64], targets: &[f64], tol: f64) -> bool {
    values.len() == targets.len() && values.iter().zip(targets).all(|(v, t)| (v - t).abs() <= tol)
}

fn fmt(values: &[f64]) -> String {
    let parts: Vec<String> = values.iter().map(|v| format!("{v:.3}")).collect();
    format!("({})", parts.join(", "))
}

fn criterion_1_2() -> (Outcome, Outcome) {
    let (rows, secs) = preset_rows("table1", &[]);
    let ratios: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let lambdas: Vec<f64> = rows.iter().map(|r| r.1).collect();
    let target_ratio = [0.80, 0.85, 0.87, 0.91, 0.92, 0.94];
    let target_lambda = [0.79, 0.85, 0.88, 0.90, 0.91, 0.92];
    let c1 = outcome(
        within(&ratios, &target_ratio, 0.06) && secs < 120.0,
        format!("ratios {} vs {} ±0.06; {secs:.2}s", fmt(&ratios), fmt(&target_ratio)),
    );
    let c2 = outcome(
        within(&lambdas, &target_lambda, 0.03),
        format!("mean λ₁ {} vs {} ±0.03", fmt(&lambdas), fmt(&target_lambda)),
    );
    (c1, c2)
}

fn criterion_3() -> Outcome {
    let (rows, _) = preset_rows("table3", &[]);
    let ratios: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let lambdas: Vec<f64> = rows.iter().map(|r| r.1).collect();
    let target_ratio = [0.86, 0.90, 0.94, 0.96, 0.97, 0.97];
    let target_lambda = [0.80, 0.86, 0.88, 0.90, 0.92, 0.92];
    outcome(
        within(&ratios, &target_ratio, 0.06) && within(&lambdas, &target_lambda, 0.03),
        format!(
            "ratios {} vs {} ±0.06; mean λ₁ {} vs {} ±0.03",
            fmt(&ratios),
            fmt(&target_ratio),
            fmt(&lambdas),
            fmt(&target_lambda)
        ),
    )
}

fn criterion_4() -> Outcome {
    let (rows, _) = preset_rows("table1", &["--theta2", "1", "--n", "30"]);
    let ratio = rows[0].0;
    outcome((0.93..=1.05).contains(&ratio), format!("ratio {ratio:.4} in [0.93, 1.05]"))
}

fn random_sample(rng: &mut ChaCha8Rng, sizes: &[usize], aligned: bool) -> MultiSample {
    let data: Vec<Vec<f64>> = sizes
        .iter()
        .map(|&n| {
            let mu: f64 = rng.gen_range(-1.0..1.0);
            (0..n).map(|_| mu + rng.gen_range(-1.5..1.5)).collect()
        })
        .collect();
    MultiSample::from_vecs(data, aligned).unwrap()
}

fn criterion_5() -> Outcome {
    let model = ModelSpec::normal();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut pass, mut exact, mut gap_checked) = (0, 0, 0);
    let mut worst = 0.0f64;
    for _ in 0..500 {
        let m = rng.gen_range(2..=4);
        let n = rng.gen_range(2..=8);
        let ms = random_sample(&mut rng, &vec![n; m], true);
        let closed = weights_equal_matrix(&ms, 0.0).unwrap();
        let oracle = optimize_weights(&ms, &model, Scheme::EqualColumn).unwrap();
        let cond = equal_intermediates(&ms).unwrap().a_e.condition_number();
        let ok = if closed.unique && cond < 1e8 {
            exact += 1;
            let diff = closed.iter().zip(oracle.iter()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            worst = worst.max(diff);
            diff <= 1e-6
        } else {
            gap_checked += 1;
            let gap = loo_discrepancy(&ms, &closed, &model, Scheme::EqualColumn).unwrap()
                - loo_discrepancy(&ms, &oracle, &model, Scheme::EqualColumn).unwrap();
            gap <= 1e-8
        };
        pass += usize::from(ok);
    }
    let equal_pass = pass;
    let equal_detail = format!("equal {equal_pass}/500 ({exact} by λ, max diff {worst:.1e}; {gap_checked} by objective)");

    let (mut pass, mut exact, mut gap_checked) = (0, 0, 0);
    let mut worst = 0.0f64;
    for _ in 0..500 {
        let m = rng.gen_range(2..=4);
        let sizes: Vec<usize> = (0..m).map(|_| rng.gen_range(2..=8)).collect();
        let ms = random_sample(&mut rng, &sizes, false);
        let closed = if m == 2 {
            weights_unequal_two(&ms.populations()[0], &ms.populations()[1]).unwrap()
        } else {
            weights_unequal_matrix(&ms, 0.0).unwrap()
        };
        let oracle = optimize_weights(&ms, &model, Scheme::UnequalPoint).unwrap();
        let ok = if m == 2 {
            exact += 1;
            let diff = closed.iter().zip(oracle.iter()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            worst = worst.max(diff);
            diff <= 1e-6
        } else {
            gap_checked += 1;
            let gap = loo_discrepancy(&ms, &closed, &model, Scheme::UnequalPoint).unwrap()
                - loo_discrepancy(&ms, &oracle, &model, Scheme::UnequalPoint).unwrap();
            gap <= 1e-8
        };
        pass += usize::from(ok);
    }
    outcome(
        equal_pass == 500 && pass == 500,
        format!(
            "{equal_detail}; unequal {pass}/500 ({exact} by λ, max diff {worst:.1e}; {gap_checked} by objective)"
        ),
    )
}

fn criterion_6() -> Outcome {
    let x1 = PopulationSample::new("1", vec![0.0, 2.0]).unwrap();
    let x2 = PopulationSample::new("2", vec![5.0]).unwrap();
    let l1 = weights_unequal_two(&x1, &x2).unwrap().lambda[0];
    let ms = MultiSample::unaligned(vec![x1, x2]).unwrap();
    let l1_matrix = weights_unequal_matrix(&ms, 0.0).unwrap().lambda[0];
    let ok = (l1 - 15.0 / 17.0).abs() < 1e-12
        && (l1_matrix - 15.0 / 17.0).abs() < 1e-10
        && (l1 - 5.0 / 6.0).abs() > 1e-3
        && (l1 - 29.0 / 33.0).abs() > 1e-3;
    outcome(ok, format!("λ₁ = {l1:.12} (matrix {l1_matrix:.12}); 15/17 = {:.12}", 15.0 / 17.0))
}

fn criterion_7() -> Outcome {
    let cfg = StudyConfig::table1(42);
    let mut medians = Vec::new();
    for n in [10usize, 100, 1000, 10_000] {
        let mut abs: Vec<f64> = (0..200)
            .map(|r| run_replication(&cfg, n, r).unwrap().lambda[1].abs())
            .collect();
        abs.sort_by(f64::total_cmp);
        medians.push(0.5 * (abs[99] + abs[100]));
    }
    let monotone = medians.windows(2).all(|w| w[1] <= w[0]);
    outcome(
        monotone && medians[3] < 0.05,
        format!("median |λ₂| at n = 10, 10², 10³, 10⁴: {}", fmt(&medians)),
    )
}

fn lognormal_sample(rng: &mut ChaCha8Rng, n: usize, mu: [f64; 2]) -> MultiSample {
    let data = mu
        .iter()
        .map(|m| {
            (0..n)
                .map(|_| {
                    let z: f64 = (-2.0 * (1.0 - rng.gen::<f64>()).ln()).sqrt()
                        * (std::f64::consts::TAU * rng.gen::<f64>()).cos();
                    (m + z).exp()
                })
                .collect()
        })
        .collect();
    MultiSample::from_vecs(data, true).unwrap()
}

fn criterion_8() -> Outcome {
    let model = ModelSpec::lognormal();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let grid: Vec<f64> = (0..=100).map(|k| -1.0 + 0.02 * k as f64).collect();
    let mut convex = 0;
    for _ in 0..100 {
        let n = rng.gen_range(5..=50);
        let mu2 = rng.gen_range(-1.0..1.0);
        let ms = lognormal_sample(&mut rng, n, [0.0, mu2]);
        let d: Vec<f64> = grid
            .iter()
            .map(|&l| loo_discrepancy(&ms, &[1.0 - l, l], &model, Scheme::EqualColumn).unwrap())
            .collect();
        let ok = d.windows(3).all(|w| w[0] - 2.0 * w[1] + w[2] > 0.0);
        convex += usize::from(ok);
    }

    let mut inside = 0;
    for _ in 0..100 {
        let sign = if rng.gen::<bool>() { 1.0 } else { -1.0 };
        let mu2 = sign * rng.gen_range(0.1..1.0);
        let ms = lognormal_sample(&mut rng, 500, [0.0, mu2]);
        let l2 = lognormal_weight(&ms.populations()[0], &ms.populations()[1]).unwrap().lambda[1];
        inside += usize::from(l2 > -1.0 && l2 < 1.0);
    }

    let closed = MultiSample::from_vecs(vec![vec![1.0, 1.0], vec![std::f64::consts::E; 2]], true).unwrap();
    let l2 = lognormal_weight(&closed.populations()[0], &closed.populations()[1]).unwrap().lambda[1];
    let ok = convex == 100 && inside >= 99 && (l2 + 0.5).abs() <= 1e-8;
    outcome(
        ok,
        format!("convex grids {convex}/100; λ₂* in (−1,1) {inside}/100 at n=500; closed instance λ₂* = {l2:.10}"),
    )
}

fn criterion_9() -> Outcome {
    let mut cfg = StudyConfig::table1(42);
    cfg.n_list = vec![400];
    cfg.replications = 2000;
    let report = wlecv_core::run_study(&cfg).unwrap();
    let v = report.rows[0].var_root_n_err_wle;
    outcome((0.9..=1.1).contains(&v), format!("var √n(θ̃₁ − θ₁⁰) = {v:.4} at n=400, 2000 reps"))
}

fn criterion_10() -> Outcome {
    // λ = w₀ collapses every WLE output onto the MLE output
    let ds = synthetic_dataset(&SyntheticConfig::default()).unwrap();
    let mut cfg = MappingConfig::new("R1");
    cfg.weights = WeightMode::Mle;
    let a = analyze(&ds, &cfg).unwrap();
    let identity = a.years.iter().all(|y| {
        y.wle == y.mle && y.mse_wle == y.mse_mle && y.interval_wle == y.interval_mle
    }) && a.pred_m == a.pred_w;

    // borrow strength over 50 seeds × 6 years
    let (mut better, mut cells) = (0, 0);
    for seed in 1..=50 {
        let ds = synthetic_dataset(&SyntheticConfig { seed, ..Default::default() }).unwrap();
        let a = analyze(&ds, &MappingConfig::new("R1")).unwrap();
        for y in &a.years {
            cells += 1;
            better += usize::from(y.mse_wle < y.mse_mle);
        }
    }
    let share = better as f64 / cells as f64;

    // injected 20× week 8 in the first year, then k-means exclusion
    let ds = synthetic_dataset(&SyntheticConfig::default()).unwrap();
    let year = ds.years()[0];
    let hit = inject_outlier_week(&ds, "R1", year, 8, 20.0).unwrap();
    let mut cfg = MappingConfig::new("R1");
    cfg.years = Some(vec![year]);
    let with_outlier = analyze(&hit, &cfg).unwrap().years[0].lambda.lambda[0];
    let flagged = flag_outlier_weeks(&hit, "R1", year).unwrap();
    cfg.outliers = OutlierPolicy::Auto;
    let excluded = analyze(&hit, &cfg).unwrap().years[0].lambda.lambda[0];
    let pathology = with_outlier < 0.10 && excluded > 0.30;

    outcome(
        identity && share >= 0.80 && pathology,
        format!(
            "w₀ identity {identity}; mse_wle < mse_mle in {better}/{cells} = {:.1}% (need ≥ 80%); \
             target weight with 20× week {with_outlier:.3} (need < 0.10), flagged {flagged:?}, after exclusion {excluded:.3} (need > 0.30)",
            100.0 * share
        ),
    )
}

fn criterion_11() -> Outcome {
    let sim = |w: &str| cli(&["simulate", "--preset", "table3", "--emit", "csv", "--seed", "7", "--workers", w]).1;
    let map = |w: &str| cli(&["map", "--synthetic", "--auto-outliers", "--emit", "json", "--seed", "7", "--workers", w]).1;
    let s = [sim("1"), sim("1"), sim("4"), sim("3")];
    let m = [map("1"), map("1"), map("4"), map("2")];
    let ok = !s[0].is_empty() && !m[0].is_empty() && s.iter().all(|x| *x == s[0]) && m.iter().all(|x| *x == m[0]);
    outcome(ok, "simulate and map outputs byte-identical across repeats and worker counts 1-4")
}

fn main() {
    let total = Instant::now();
    let (c1, c2) = criterion_1_2();
    let results = vec![
        ("1 normal preset MSE ratios", c1),
        ("2 normal preset mean weights", c2),
        ("3 Poisson preset ratios and weights", criterion_3()),
        ("4 large-separation neutrality", criterion_4()),
        ("5 oracle equivalence", criterion_5()),
        ("6 delete-one-point correction gate", criterion_6()),
        ("7 weight consistency", criterion_7()),
        ("8 log-normal suite", criterion_8()),
        ("9 normality", criterion_9()),
        ("10 mapping pipeline", criterion_10()),
        ("11 determinism", criterion_11()),
    ];
    let mut failed = 0;
    for (name, o) in &results {
        println!("{} criterion {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        failed += usize::from(!o.pass);
    }
    println!(
        "acceptance: {} passed, {failed} failed ({:.1}s)",
        results.len() - failed,
        total.elapsed().as_secs_f64()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}

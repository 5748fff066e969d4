use std::collections::BTreeSet;
use std::io::Write;

use proptest::prelude::*;
use wlecv_core::io::{read_samples, write_samples};
use wlecv_core::mapping::{
    analyze, ingest_counts, mse_estimates, predictive_interval, synthetic_dataset, yearly_weights, MappingConfig,
    SyntheticConfig, WeightMode,
};
use wlecv_core::sim::{run_study_with_workers, StudyConfig};
use wlecv_core::weights::weights_equal_explicit;
use wlecv_core::{
    mle_mean, optimize_weights, select_weights, weights_equal_matrix, weights_equal_two, wle, Delta, Family,
    ModelSpec, MultiSample, Scheme, SimulationReport, WeightVector,
};

fn counts_csv(ds: &wlecv_core::mapping::MappingDataset) -> String {
    let mut s = String::from("region_id,longitude,latitude,year,week,count\n");
    for r in ds.regions() {
        for y in ds.years() {
            for w in 1..=ds.weeks_per_year() {
                s += &format!("{},{},{},{y},{w},{}\n", r.id, r.longitude, r.latitude, ds.count(&r.id, y, w).unwrap());
            }
        }
    }
    s
}

#[test]
fn sample_file_to_estimate() {
    let ms = MultiSample::from_vecs(vec![vec![1.0, 2.0, 3.5, 2.5], vec![2.0, 2.5, 4.0, 3.0]], true).unwrap();
    let mut f = tempfile::NamedTempFile::new().unwrap();
    f.write_all(write_samples(&ms).as_bytes()).unwrap();
    let back = read_samples(f.path()).unwrap();
    let w = select_weights(&back, Scheme::default_for(&back), Delta::Fixed(0.0)).unwrap();
    let oracle = optimize_weights(&back, &ModelSpec::normal(), Scheme::EqualColumn).unwrap();
    for (a, b) in w.iter().zip(oracle.iter()) {
        assert!((a - b).abs() < 1e-9);
    }
    let est = wle(&back, &w, &ModelSpec::normal()).unwrap();
    let expected: f64 = w.iter().zip(back.populations()).map(|(l, p)| l * p.mean()).sum();
    assert!((est.theta - expected).abs() < 1e-14);
}

#[test]
fn three_routes_agree_for_two_populations() {
    let ms = MultiSample::from_vecs(vec![vec![0.3, -1.1, 0.8, 1.9, 0.2], vec![1.0, 0.4, 1.7, 0.9, 1.5]], true).unwrap();
    for delta in [0.0, 1e-3, 0.5] {
        let two = weights_equal_two(&ms.populations()[0], &ms.populations()[1], delta).unwrap();
        let matrix = weights_equal_matrix(&ms, delta).unwrap();
        let explicit = weights_equal_explicit(&ms, delta).unwrap();
        for k in 0..2 {
            assert!((two[k] - matrix[k]).abs() < 1e-10, "{delta}");
            assert!((two[k] - explicit[k]).abs() < 1e-10, "{delta}");
        }
    }
}

#[test]
fn report_round_trips_through_json() {
    let mut cfg = StudyConfig::table3(3);
    cfg.replications = 50;
    cfg.n_list = vec![10, 30];
    let report = run_study_with_workers(&cfg, 2).unwrap();
    let json = serde_json::to_string(&report).unwrap();
    let back: SimulationReport = serde_json::from_str(&json).unwrap();
    assert_eq!(back, report);
    assert!(report.to_csv().contains("# master_seed=3"));
    assert!(report.to_table().contains("x100"));
}

#[test]
fn mapping_from_ingested_file_matches_in_memory() {
    let ds = synthetic_dataset(&SyntheticConfig::default()).unwrap();
    let mut f = tempfile::NamedTempFile::new().unwrap();
    f.write_all(counts_csv(&ds).as_bytes()).unwrap();
    let ingested = ingest_counts(f.path(), Some(16)).unwrap();
    assert_eq!(ingested, ds);
    let cfg = MappingConfig::new("R1");
    assert_eq!(analyze(&ingested, &cfg).unwrap(), analyze(&ds, &cfg).unwrap());
}

#[test]
fn yearly_weights_match_numerical_oracle() {
    let ds = synthetic_dataset(&SyntheticConfig::default()).unwrap();
    let regions: Vec<String> = ["R1", "R2", "R3", "R4"].iter().map(|s| s.to_string()).collect();
    let none = BTreeSet::new();
    for year in ds.years() {
        let w = yearly_weights(&ds, &regions, year, &none, 0.0).unwrap();
        let ms = ds.year_sample(&regions, year, &none).unwrap();
        let oracle = optimize_weights(&ms, &ModelSpec::poisson(), Scheme::EqualColumn).unwrap();
        for (a, b) in w.iter().zip(oracle.iter()) {
            assert!((a - b).abs() < 1e-6, "{year}: {:?} vs {:?}", w.lambda, oracle.lambda);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn target_only_weights_reproduce_mle(
        data in prop::collection::vec(prop::collection::vec(0.1f64..20.0, 6), 1..4),
        family in prop::sample::select(vec![Family::NormalMean, Family::PoissonRate, Family::Lognormal]),
    ) {
        let ms = MultiSample::from_vecs(data, true).unwrap();
        let model = ModelSpec::new(family);
        let w0 = WeightVector::target_only(ms.m(), Scheme::EqualColumn);
        prop_assert_eq!(wle(&ms, &w0, &model).unwrap(), mle_mean(ms.target(), &model).unwrap());
    }

    #[test]
    fn pipeline_identity_under_target_only_weights(seed in 0u64..1000) {
        let ds = synthetic_dataset(&SyntheticConfig { seed, ..Default::default() }).unwrap();
        let mut cfg = MappingConfig::new("R1");
        cfg.weights = WeightMode::Mle;
        let a = analyze(&ds, &cfg).unwrap();
        for y in &a.years {
            prop_assert_eq!(y.wle, y.mle);
            prop_assert_eq!(y.mse_wle, y.mse_mle);
            let (m, w) = mse_estimates(&ds, &a.regions, y.year, &y.lambda, &y.excluded_weeks).unwrap();
            prop_assert_eq!(m, w);
        }
        prop_assert_eq!(a.pred_m, a.pred_w);
    }

    #[test]
    fn interval_upper_end_is_monotone(a in 0.0f64..50.0, b in 0.0f64..50.0, l1 in 0.5f64..0.99, l2 in 0.5f64..0.99) {
        let (lo_t, hi_t) = (a.min(b), a.max(b));
        let (lo_l, hi_l) = (l1.min(l2), l1.max(l2));
        prop_assert!(predictive_interval(lo_t, lo_l).unwrap().1 <= predictive_interval(hi_t, lo_l).unwrap().1);
        prop_assert!(predictive_interval(lo_t, lo_l).unwrap().1 <= predictive_interval(lo_t, hi_l).unwrap().1);
    }
}

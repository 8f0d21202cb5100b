use proptest::prelude::*;
use snr_core::datasets::{synthetic_correlated, LabeledDataset};
use snr_core::experiment::*;
use snr_core::nn::Architecture;
use snr_core::training::{Regularizer, TrainConfig};
use snr_core::SeededRng;

/// Rank by counting: smaller values plus half the tied block.
fn counting_ranks(x: &[f64]) -> Vec<f64> {
    x.iter()
        .map(|v| {
            let below = x.iter().filter(|u| *u < v).count() as f64;
            let tied = x.iter().filter(|u| *u == v).count() as f64;
            below + (tied + 1.0) / 2.0
        })
        .collect()
}

fn textbook_pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (sx, sy) = (x.iter().sum::<f64>(), y.iter().sum::<f64>());
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    let sxx: f64 = x.iter().map(|a| a * a).sum();
    let syy: f64 = y.iter().map(|b| b * b).sum();
    (n * sxy - sx * sy) / ((n * sxx - sx * sx).sqrt() * (n * syy - sy * sy).sqrt())
}

#[test]
fn spearman_with_ties_matches_rank_oracle() {
    let x = [0.3, 0.1, 0.3, 0.7, 0.5, 0.1, 0.9, 0.3, 0.2, 0.8];
    let y = [0.91, 0.88, 0.93, 0.95, 0.90, 0.87, 0.96, 0.92, 0.92, 0.94];
    let expected = textbook_pearson(&counting_ranks(&x), &counting_ranks(&y));
    let (rho, p) = spearman(&x, &y).unwrap();
    assert!((rho - expected).abs() < 1e-12, "{rho} vs {expected}");
    assert_eq!(average_ranks(&x), counting_ranks(&x));
    let t = rho * (8.0 / (1.0 - rho * rho)).sqrt();
    assert!(t > 3.0 && p < 0.01, "t {t}, p {p}");
}

#[test]
fn p_value_for_moderate_correlation() {
    // two-sided t test with 10 degrees of freedom at t = 1.8257
    assert!((correlation_p_value(0.5, 12) - 0.0979).abs() < 5e-4);
    assert_eq!(correlation_p_value(1.0, 12), 0.0);
}

#[test]
fn r_squared_matches_squared_textbook_pearson() {
    let x = [0.12, 0.35, 0.28, 0.51, 0.44, 0.67, 0.59, 0.80];
    let y = [0.90, 0.91, 0.915, 0.93, 0.92, 0.95, 0.94, 0.945];
    let r = textbook_pearson(&x, &y);
    assert!((r_squared(&x, &y).unwrap() - r * r).abs() < 1e-12);
    let (slope, intercept) = fit_line(&x, &y).unwrap();
    let (mx, my) = (x.iter().sum::<f64>() / 8.0, y.iter().sum::<f64>() / 8.0);
    let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    assert!((slope - sxy / sxx).abs() < 1e-12);
    assert!((intercept - (my - slope * mx)).abs() < 1e-12);
}

#[test]
fn constant_series_have_no_correlation() {
    let x = [1.0; 6];
    let y = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6];
    assert!(spearman(&x, &y).is_err());
    assert!(r_squared(&x, &y).is_err());
    assert!(spearman(&[1.0, 2.0], &[1.0, 2.0]).is_err());
}

fn record(run_id: usize, g1: f64, g2: f64, acc: f64, activity: f64) -> RunRecord {
    RunRecord {
        run_id,
        config_id: format!("cfg{}", run_id % 3),
        seed: run_id as u64 * 11,
        epochs: 5,
        test_acc: acc,
        g: vec![Some(g1), Some(g2)],
        g_agg: Some(g1 + g2),
        s: vec![Some(g1 / 3.0), None],
        outlier_flag: false,
        penultimate_activity: activity,
        train_acc: acc + 0.01,
        status: RunStatus::Ok,
    }
}

fn fabricated(n: usize) -> Vec<RunRecord> {
    (0..n)
        .map(|i| {
            let acc = 0.8 + 0.01 * i as f64;
            record(i, acc, 0.5 * acc, acc, 0.3 + 0.01 * i as f64)
        })
        .collect()
}

#[test]
fn gain_equal_to_accuracy_correlates_perfectly() {
    let records = fabricated(12);
    let summary = summarize(&records).unwrap();
    for name in ["g_1", "g_2", "g_agg"] {
        let p = summary.parameter(name).unwrap();
        assert!((p.rho.unwrap() - 1.0).abs() < 1e-12);
        assert!((p.r_squared.unwrap() - 1.0).abs() < 1e-12);
        assert!(p.p_value.unwrap() < 1e-6);
    }
    assert!((summary.parameter("g_1").unwrap().slope.unwrap() - 1.0).abs() < 1e-9);
    assert_eq!(summary.configs.len(), 3);
    assert_eq!(summary.usable, 12);
}

#[test]
fn summary_needs_enough_usable_runs() {
    assert!(summarize(&fabricated(9)).is_err());
    let mut records = fabricated(11);
    records[4].status = RunStatus::Failed("diverged".into());
    records[4].g = vec![None, None];
    records[4].g_agg = None;
    records[5].g[1] = None;
    assert!(summarize(&records).is_err());
    records.push(record(11, 0.9, 0.9, 0.9, 0.5));
    let s = summarize(&records).unwrap();
    assert_eq!((s.records, s.usable, s.failed), (12, 10, 1));
}

#[test]
fn outliers_leave_rank_correlation_but_not_the_fit() {
    let mut records = fabricated(12);
    records[3].penultimate_activity = 0.95;
    records[3].test_acc = 0.1;
    flag_outliers(&mut records);
    assert_eq!(records.iter().filter(|r| r.outlier_flag).count(), 1);
    let s = summarize(&records).unwrap();
    let p = s.parameter("g_1").unwrap();
    assert_eq!((p.n_all, p.n_without_outliers), (12, 11));
    assert!(p.rho.unwrap() < 1.0);
    assert!((p.r_squared.unwrap() - 1.0).abs() < 1e-12);
    assert_eq!(s.outliers, 1);
    records[3].penultimate_activity = OUTLIER_ACTIVITY;
    flag_outliers(&mut records);
    assert!(!records[3].outlier_flag);
}

#[test]
fn records_survive_csv_round_trip_exactly() {
    let mut records = fabricated(5);
    records[1].g[0] = None;
    records[1].g_agg = None;
    records[2].status = RunStatus::Failed("loss diverged, stopping".into());
    records[3].test_acc = 1.0 / 3.0;
    records[3].outlier_flag = true;
    let mut bytes = Vec::new();
    write_records_csv(&records, &mut bytes).unwrap();
    let text = String::from_utf8(bytes.clone()).unwrap();
    assert!(text.starts_with("run_id,config_id,seed,test_acc,g_1,g_2,g_agg,s_1,s_2,outlier_flag"));
    let back = read_records_csv(bytes.as_slice()).unwrap();
    assert_eq!(back, records);
    let mut again = Vec::new();
    write_records_csv(&back, &mut again).unwrap();
    assert_eq!(again, bytes);
}

#[test]
fn report_writes_every_file() {
    let records = fabricated(12);
    let summary = summarize(&records).unwrap();
    let dir = tempfile::tempdir().unwrap();
    emit_report(&summary, &records, dir.path()).unwrap();
    for f in ["records.csv", "summary.toml", "scatter_g_1.csv", "scatter_g_2.csv", "scatter_g_agg.csv"] {
        assert!(dir.path().join(f).is_file(), "{f}");
    }
    let scatter = std::fs::read_to_string(dir.path().join("scatter_g_agg.csv")).unwrap();
    assert_eq!(scatter.lines().count(), 13);
    assert!(emit_report(&summary, &[], dir.path()).is_err());
    let toml_text = std::fs::read_to_string(dir.path().join("summary.toml")).unwrap();
    let parsed: CorrelationSummary = toml::from_str(&toml_text).unwrap();
    assert_eq!(parsed.usable, summary.usable);
}

fn synthetic_split() -> (LabeledDataset, LabeledDataset) {
    let mut rng = SeededRng::new(3);
    let all = synthetic_correlated(4, 4, 700, 0.1, &mut rng).unwrap();
    let idx: Vec<usize> = (0..700).collect();
    (all.subset(&idx[..500]), all.subset(&idx[500..]))
}

fn small_spec() -> SweepSpec {
    let base = TrainConfig {
        epochs: 2,
        batch_size: 16,
        learning_rate: 0.05,
        ..TrainConfig::default()
    };
    SweepSpec {
        architecture: Architecture::Toy,
        dataset: DatasetId::Synthetic,
        configs: vec![
            NamedConfig {
                id: "plain".into(),
                train: base.clone(),
            },
            NamedConfig {
                id: "dropout".into(),
                train: TrainConfig {
                    regularizer: Regularizer::Dropout { rates: vec![0.3] },
                    ..base
                },
            },
        ],
        runs_per_config: 3,
        seed: 17,
        train_samples: 500,
        test_samples: 200,
        metric_samples: Some(150),
        metric: Default::default(),
        repetition_epochs: Some(vec![1, 2, 3]),
        workers: 2,
    }
}

#[test]
fn sweep_is_deterministic_and_seeds_runs_apart() {
    let (train, test) = synthetic_split();
    let spec = small_spec();
    let a = run_sweep(&spec, &train, &test).unwrap();
    let b = run_sweep(&spec, &train, &test).unwrap();
    let csv = |r: &[RunRecord]| {
        let mut v = Vec::new();
        write_records_csv(r, &mut v).unwrap();
        v
    };
    assert_eq!(csv(&a), csv(&b));
    assert_eq!(a.len(), 6);
    assert_eq!(a.iter().map(|r| r.run_id).collect::<Vec<_>>(), (0..6).collect::<Vec<_>>());
    let mut seeds: Vec<u64> = a.iter().map(|r| r.seed).collect();
    seeds.sort_unstable();
    seeds.dedup();
    assert_eq!(seeds.len(), 6);
    assert_eq!(a.iter().map(|r| r.epochs).collect::<Vec<_>>(), vec![1, 2, 3, 1, 2, 3]);
    assert!(a.iter().all(|r| r.status == RunStatus::Ok && r.g.len() == 3));
    assert!(a.iter().all(|r| r.test_acc > 0.4));

    let mut other = spec.clone();
    other.seed = 18;
    let c = run_sweep(&other, &train, &test).unwrap();
    assert_ne!(csv(&a), csv(&c));
}

#[test]
fn sweep_spec_round_trips_through_toml() {
    for spec in [small_spec(), SweepSpec::default_mnist()] {
        let text = spec.to_toml().unwrap();
        assert_eq!(SweepSpec::from_toml(&text).unwrap(), spec);
    }
    let mnist = SweepSpec::default_mnist();
    assert_eq!(mnist.run_count(), 28);
    assert_eq!(mnist.configs.len(), 7);
}

#[test]
fn malformed_sweep_specs_are_rejected() {
    let mut spec = small_spec();
    spec.configs[1].id = "plain".into();
    assert!(spec.validate().is_err());
    let mut spec = small_spec();
    spec.repetition_epochs = Some(vec![1, 2]);
    assert!(spec.validate().is_err());
    let mut spec = small_spec();
    spec.runs_per_config = 0;
    assert!(spec.validate().is_err());
    assert!(SweepSpec::from_toml("architecture = \"toy\"").is_err());
}

proptest! {
    #[test]
    fn spearman_ignores_monotone_transforms(
        x in prop::collection::vec(-5.0f64..5.0, 5..30),
        noise in prop::collection::vec(-1.0f64..1.0, 30),
    ) {
        let y: Vec<f64> = x.iter().zip(&noise).map(|(a, n)| a + n).collect();
        prop_assume!(spearman(&x, &y).is_ok());
        let (rho, _) = spearman(&x, &y).unwrap();
        let fx: Vec<f64> = x.iter().map(|v| v.exp()).collect();
        let fy: Vec<f64> = y.iter().map(|v| v * v * v + 2.0 * v).collect();
        let (rho2, _) = spearman(&fx, &fy).unwrap();
        prop_assert!((rho - rho2).abs() < 1e-12);
    }

    #[test]
    fn r_squared_ignores_affine_maps(
        x in prop::collection::vec(-5.0f64..5.0, 5..30),
        noise in prop::collection::vec(-1.0f64..1.0, 30),
        a in 0.1f64..10.0, b in -10.0f64..10.0, neg in any::<bool>(),
    ) {
        let y: Vec<f64> = x.iter().zip(&noise).map(|(v, n)| 0.5 * v + n).collect();
        prop_assume!(r_squared(&x, &y).is_ok());
        let r2 = r_squared(&x, &y).unwrap();
        let s = if neg { -a } else { a };
        let mapped: Vec<f64> = x.iter().map(|v| s * v + b).collect();
        prop_assert!((r_squared(&mapped, &y).unwrap() - r2).abs() < 1e-9);
        prop_assert!((0.0..=1.0 + 1e-12).contains(&r2));
    }
}

fn config_file(name: &str) -> String {
    std::fs::read_to_string(std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)).unwrap()
}

#[test]
fn shipped_configs_parse() {
    assert_eq!(SweepSpec::from_toml(&config_file("mnist_sweep.toml")).unwrap(), SweepSpec::default_mnist());
    let train = TrainConfig::from_toml(&config_file("train_dropout.toml")).unwrap();
    assert_eq!(train.regularizer, Regularizer::Dropout { rates: vec![0.5] });
    let metric: snr_core::metrics::MetricConfig = toml::from_str(&config_file("metric_unscaled.toml")).unwrap();
    assert!(!metric.apply_max_scaling && !metric.weighted_mean);
    metric.validate().unwrap();
}

//! Fitting, bound ordering, calibration and end-to-end determinism on
//! simulated data.

use rand::Rng as _;
use rand::SeedableRng;
use rand_distr::{Distribution, Normal};
use vsi::baselines::fit_aft_weibull;
use vsi::config::{DataSource, ExperimentConfig};
use vsi::data::{fit_schema, transform, RawTable, SurvivalDataset, SurvivalRecord};
use vsi::experiment::{cmd_evaluate, cmd_simulate, cmd_train, prepare};
use vsi::inference::{iw_loglik_censored, iw_loglik_event, EvalSettings, ModelKind};
use vsi::metrics::EvalReport;
use vsi::model::{train, TrainConfig};
use vsi::seed::Rng;
use vsi::sim::{simulate, EventRate, GompertzConfig};

/// Weibull(shape, scale 1) times, optionally with an unrelated covariate.
fn weibull_dataset(n: usize, shape: f64, with_noise_covariate: bool, rng: &mut Rng) -> Vec<SurvivalRecord> {
    let normal = Normal::new(0.0, 1.0).unwrap();
    (0..n)
        .map(|_| {
            let u: f64 = rng.random();
            let time = (-(1.0 - u).ln()).powf(1.0 / shape);
            let covariates = if with_noise_covariate { vec![normal.sample(rng)] } else { vec![] };
            SurvivalRecord { covariates, time, event: true }
        })
        .collect()
}

fn split_plain(records: Vec<SurvivalRecord>, names: &[&str]) -> (SurvivalDataset, SurvivalDataset) {
    let raw = RawTable::from_records(names, &records);
    let cut = records.len() * 4 / 5;
    let train_idx: Vec<usize> = (0..cut).collect();
    let valid_idx: Vec<usize> = (cut..records.len()).collect();
    let schema = fit_schema(&raw.subset(&train_idx)).unwrap();
    (transform(&raw.subset(&train_idx), &schema).unwrap(), transform(&raw.subset(&valid_idx), &schema).unwrap())
}

pub fn aft_recovers_weibull_shape() {
    let mut rng = Rng::seed_from_u64(21);
    let (train, valid) = split_plain(weibull_dataset(10_000, 2.0, false, &mut rng), &[]);
    let (params, _) = fit_aft_weibull(&train, &valid, &TrainConfig::default()).unwrap();
    let shape = 1.0 / params.sigma();
    assert!((shape - 2.0).abs() <= 0.05 * 2.0, "recovered shape {shape}");
    assert!(params.mu().abs() < 0.05, "log scale {}", params.mu());
}

pub fn aft_null_coefficient_near_zero() {
    let mut rng = Rng::seed_from_u64(22);
    let (train, valid) = split_plain(weibull_dataset(10_000, 2.0, true, &mut rng), &["noise"]);
    let (params, _) = fit_aft_weibull(&train, &valid, &TrainConfig::default()).unwrap();
    // Large-sample standard error of a unit-variance covariate's coefficient
    // is about sigma / sqrt(events).
    let se = params.sigma() / (train.len() as f64).sqrt();
    assert!(params.theta()[0].abs() <= 3.0 * se, "theta {} vs 3 se {}", params.theta()[0], 3.0 * se);
}

pub fn censoring_presets_hit_event_rates() {
    for (rate, target) in [(EventRate::Er50, 0.5), (EventRate::Er30, 0.3)] {
        let records = simulate(&GompertzConfig::preset(rate, 50_000, 1)).unwrap();
        let observed = records.iter().filter(|r| r.event).count() as f64 / records.len() as f64;
        assert!((observed - target).abs() <= 0.02, "{}: event rate {observed}", rate.name());
    }
}

fn toy_config(event_rate: u32, n: usize) -> ExperimentConfig {
    let mut cfg = ExperimentConfig {
        seed: 9,
        data: DataSource::Synthetic { event_rate, n, censor_horizon: None },
        train: TrainConfig { max_epochs: 15, bins: 20, ..TrainConfig::default() },
        eval: EvalSettings { iw_samples: 50, predictive_samples: 20, point_samples: 20, noq_eval_samples: 20 },
        ..ExperimentConfig::default()
    };
    cfg.metrics.bootstrap_resamples = 50;
    cfg.validate().unwrap();
    cfg
}

pub fn importance_weighted_bound_dominates_elbo() {
    let cfg = toy_config(50, 6000);
    let data = prepare(&cfg).unwrap();
    let (model, _) = train(&data.train, &data.valid, &cfg.train).unwrap();
    let draws = 200;
    for event in [true, false] {
        let subjects: Vec<&SurvivalRecord> = data.test.records.iter().filter(|r| r.event == event).take(500).collect();
        assert_eq!(subjects.len(), 500);
        let mut ok = 0;
        for (k, r) in subjects.iter().enumerate() {
            let mut rng = Rng::seed_from_u64(k as u64);
            let elbo = model.elbo_draws(&r.covariates, r.time, event, draws, &mut rng).unwrap();
            let mean = elbo.iter().sum::<f64>() / draws as f64;
            let var = elbo.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (draws - 1) as f64;
            let se = (var / draws as f64).sqrt();
            let iw = if event {
                iw_loglik_event(&model, &r.covariates, r.time, 1000, &mut rng)
            } else {
                iw_loglik_censored(&model, &r.covariates, r.time, 1000, &mut rng)
            }
            .unwrap();
            if iw.log_value >= mean - 3.0 * se {
                ok += 1;
            }
        }
        assert!(ok as f64 >= 0.99 * 500.0, "event={event}: {ok}/500 subjects satisfy the ordering");
    }
}

fn run_pipeline(dir: &std::path::Path, kind: ModelKind) -> ExperimentConfig {
    let mut cfg = toy_config(30, 1500);
    cfg.model = kind;
    cfg.train.max_epochs = 4;
    cfg.out_dir = dir.to_path_buf();
    cmd_simulate(&cfg).unwrap();
    cmd_train(&cfg).unwrap();
    cmd_evaluate(&cfg).unwrap();
    cfg
}

fn snapshot(dir: &std::path::Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect();
    files.sort();
    files
}

pub fn pipeline_is_deterministic() {
    for kind in ModelKind::ALL {
        let dir = tempfile::tempdir().unwrap();
        run_pipeline(dir.path(), kind);
        let first = snapshot(dir.path());
        run_pipeline(dir.path(), kind);
        let second = snapshot(dir.path());
        assert!(first.iter().any(|(n, _)| *n == format!("report_{kind}.txt")));
        assert_eq!(first.len(), second.len());
        for ((name, x), (_, y)) in first.iter().zip(&second) {
            assert!(x == y, "{name} differs between runs of {kind}");
        }
        let report =
            EvalReport::from_kv(&std::fs::read_to_string(dir.path().join(format!("report_{kind}.txt"))).unwrap())
                .unwrap();
        assert!(report.ks.is_some());
        assert!(report.mean_loglik.is_finite());
    }
}

pub fn training_log_is_finite_and_bounded() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = run_pipeline(dir.path(), ModelKind::Vsi);
    let log = std::fs::read_to_string(dir.path().join("train_log_vsi.csv")).unwrap();
    let rows: Vec<&str> = log.lines().filter(|l| !l.starts_with('#')).skip(1).collect();
    assert!(!rows.is_empty() && rows.len() <= cfg.train.max_epochs + 1);
    for row in rows {
        let valid: f64 = row.split(',').nth(2).unwrap().parse().unwrap();
        assert!(valid.is_finite());
    }
}

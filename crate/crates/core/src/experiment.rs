//! Batch driver: simulate, train, evaluate, and the simulation-table sweep.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::artifact::ModelArtifact;
use crate::baselines::{fit_aft_weibull, train_direct_mlp, train_noq};
use crate::config::{DataSource, ExperimentConfig};
use crate::data::{fit_schema, load_csv, records_csv, transform, Cell, RawTable, SurvivalDataset};
use crate::error::{Error, Result};
use crate::inference::{predict_dataset, ModelKind, SubjectPrediction, SurvivalModel};
use crate::metrics::{
    c_index, c_index_ci, c_td, c_td_own_time, coverage, cumulative, ks_distance, mean_loglik, percentile_key,
    range_key, EvalReport, CENSOR_PERCENTILES, EVENT_RANGES,
};
use crate::model::{train, TrainConfig, TrainingLog};
use crate::seed::{derive_seed, rng_for};
use crate::sim::{simulate, to_raw_table, EventRate, GompertzConfig, COVARIATE_NAMES};

pub const SPLIT: (f64, f64, f64) = (0.6, 0.2, 0.2);
const HISTOGRAM_BINS: usize = 50;

/// Train/valid/test splits with the schema fitted on train, plus the raw
/// test rows and the simulator when the data are synthetic.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub label: String,
    pub train: SurvivalDataset,
    pub valid: SurvivalDataset,
    pub test: SurvivalDataset,
    pub raw_test: RawTable,
    pub truth: Option<GompertzConfig>,
}

pub fn load_raw(cfg: &ExperimentConfig) -> Result<(RawTable, Option<GompertzConfig>)> {
    match &cfg.data {
        DataSource::Synthetic { .. } => {
            let g = cfg.data.gompertz(cfg.seed)?.expect("synthetic source");
            Ok((to_raw_table(&simulate(&g)?), Some(g)))
        }
        DataSource::Csv { path, .. } => {
            let roles = cfg.data.roles().expect("csv source");
            Ok((load_csv(path, &roles)?, None))
        }
    }
}

pub fn prepare(cfg: &ExperimentConfig) -> Result<PreparedData> {
    let (raw, truth) = load_raw(cfg)?;
    let (train_raw, valid_raw, test_raw) = raw.split(SPLIT, &mut rng_for(cfg.seed, "split"))?;
    let schema = fit_schema(&train_raw)?;
    Ok(PreparedData {
        label: cfg.data.label(),
        train: transform(&train_raw, &schema)?,
        valid: transform(&valid_raw, &schema)?,
        test: transform(&test_raw, &schema)?,
        raw_test: test_raw,
        truth,
    })
}

pub fn train_model(
    kind: ModelKind,
    train_set: &SurvivalDataset,
    valid_set: &SurvivalDataset,
    cfg: &TrainConfig,
) -> Result<(SurvivalModel, TrainingLog)> {
    Ok(match kind {
        ModelKind::Vsi => {
            let (m, log) = train(train_set, valid_set, cfg)?;
            (SurvivalModel::Vsi(m), log)
        }
        ModelKind::VsiNoq => {
            let (m, log) = train_noq(train_set, valid_set, cfg)?;
            (SurvivalModel::VsiNoq(m), log)
        }
        ModelKind::Mlp => {
            let (m, log) = train_direct_mlp(train_set, valid_set, cfg)?;
            (SurvivalModel::Mlp(m), log)
        }
        ModelKind::AftWeibull => {
            let (m, log) = fit_aft_weibull(train_set, valid_set, cfg)?;
            (SurvivalModel::AftWeibull(m), log)
        }
    })
}

/// Raw simulator covariates `(age, radon)` of each row.
fn raw_covariates(raw: &RawTable) -> Result<Vec<Vec<f64>>> {
    let names: Vec<&str> = raw.columns.iter().map(|(n, _)| n.as_str()).collect();
    if names != COVARIATE_NAMES {
        return Err(Error::Data(format!("truth CDF needs columns {COVARIATE_NAMES:?}, found {names:?}")));
    }
    raw.rows
        .iter()
        .map(|r| {
            r.values
                .iter()
                .map(|v| match v {
                    Some(Cell::Number(x)) => Ok(*x),
                    _ => Err(Error::Data("truth CDF needs complete numeric covariates".into())),
                })
                .collect()
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct Evaluation {
    pub report: EvalReport,
    pub predictions: Vec<SubjectPrediction>,
}

/// Metric suite on `test`. `truth` enables the KS distance, using the raw
/// covariates from `raw_test`.
pub fn evaluate_model(
    model: &SurvivalModel,
    test: &SurvivalDataset,
    raw_test: &RawTable,
    truth: Option<&GompertzConfig>,
    cfg: &ExperimentConfig,
    label: &str,
) -> Result<Evaluation> {
    let predictions = predict_dataset(model, test, &cfg.eval, derive_seed(cfg.seed, "evaluate"))?;
    let grid = model.grid();
    let times: Vec<f64> = test.records.iter().map(|r| r.time).collect();
    let events: Vec<bool> = test.records.iter().map(|r| r.event).collect();
    let strict = cfg.metrics.strict_ties;

    let risk: Vec<f64> = predictions.iter().map(|p| -p.point_time).collect();
    let median_risk: Vec<f64> = predictions.iter().map(|p| -p.median_time).collect();
    let cdfs: Vec<Vec<f64>> = predictions.iter().map(|p| cumulative(&p.pmf)).collect();
    let bins: Vec<usize> = times.iter().map(|&t| grid.bin_of(t)).collect();
    let own: Vec<f64> = cdfs.iter().zip(&bins).map(|(c, &b)| c[b]).collect();
    let (ci_lo, ci_hi) =
        c_index_ci(&risk, &times, &events, cfg.metrics.bootstrap_resamples, derive_seed(cfg.seed, "metrics"))?;

    let ks = match truth {
        Some(g) => {
            let xs = raw_covariates(raw_test)?;
            let total: f64 =
                predictions.iter().zip(&xs).map(|(p, x)| ks_distance(&p.pmf, grid, |t| g.truth_cdf(x, t))).sum();
            Some(total / predictions.len() as f64)
        }
        None => None,
    };
    let logliks: Vec<f64> = predictions.iter().map(|p| p.loglik).collect();
    let ll = mean_loglik(&logliks, &events)?;
    let pmfs: Vec<Vec<f64>> = predictions.iter().map(|p| p.pmf.clone()).collect();

    let report = EvalReport {
        model: model.kind().to_string(),
        dataset: label.to_string(),
        seed: cfg.seed,
        config_hash: config_hash(cfg)?,
        n_test: test.len(),
        event_rate: test.event_rate(),
        parameter_count: model.predictive_parameter_count(),
        c_index: c_index(&risk, &times, &events, strict)?,
        c_index_ci_lo: ci_lo,
        c_index_ci_hi: ci_hi,
        c_index_median: c_index(&median_risk, &times, &events, strict)?,
        c_td: c_td(&cdfs, &bins, &times, &events, strict)?,
        c_td_own_time: c_td_own_time(&own, &times, &events, strict)?,
        ks,
        mean_loglik: ll.mean,
        loglik_range_events: ll.event_range,
        loglik_range_censored: ll.censored_range,
        degenerate_point_estimates: predictions.iter().filter(|p| p.degenerate_weights).count(),
        coverage: coverage(&pmfs, grid, &times, &events)?,
    };
    Ok(Evaluation { report, predictions })
}

/// Hash of the configuration without its output location.
pub fn config_hash(cfg: &ExperimentConfig) -> Result<String> {
    let mut c = cfg.clone();
    c.out_dir = PathBuf::new();
    c.hash()
}

fn provenance(cfg: &ExperimentConfig) -> Result<String> {
    Ok(format!("config_hash={} seed={}", config_hash(cfg)?, cfg.seed))
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

pub fn artifact_path(cfg: &ExperimentConfig) -> PathBuf {
    cfg.out_dir.join(format!("model_{}.json", cfg.model))
}

/// Writes the simulated cohort and a manifest that regenerates it.
pub fn cmd_simulate(cfg: &ExperimentConfig) -> Result<PathBuf> {
    let g =
        cfg.data.gompertz(cfg.seed)?.ok_or_else(|| Error::Config("simulate needs a synthetic data source".into()))?;
    ensure_dir(&cfg.out_dir)?;
    let records = simulate(&g)?;
    let tag = provenance(cfg)?;
    let data_path = cfg.out_dir.join("data.csv");
    write(&data_path, records_csv(&COVARIATE_NAMES, &records, Some(&tag))?)?;
    let events = records.iter().filter(|r| r.event).count();
    log::info!("simulated {} subjects, event rate {:.4}", records.len(), events as f64 / records.len() as f64);
    write(&cfg.out_dir.join("manifest.toml"), format!("# {tag}\n{}", cfg.to_toml()?))?;
    Ok(data_path)
}

/// Trains the configured model kind; writes the artifact and the epoch log.
pub fn cmd_train(cfg: &ExperimentConfig) -> Result<(PathBuf, TrainingLog)> {
    let data = prepare(cfg)?;
    ensure_dir(&cfg.out_dir)?;
    let (model, log) = train_model(cfg.model, &data.train, &data.valid, &cfg.train)?;
    log::info!(
        "{} trained: {} parameters, best epoch {} of {}",
        cfg.model,
        model.parameter_count(),
        log.best_epoch,
        log.epochs.len() - 1
    );
    let path = artifact_path(cfg);
    ModelArtifact::new(model, &config_hash(cfg)?, cfg.seed).save(&path)?;
    let log_path = cfg.out_dir.join(format!("train_log_{}.csv", cfg.model));
    write(&log_path, format!("# {}\n{}", provenance(cfg)?, log.to_csv()))?;
    Ok((path, log))
}

/// Scores a saved model on the test split; writes the report, per-subject
/// predictions and plot data.
pub fn cmd_evaluate(cfg: &ExperimentConfig) -> Result<EvalReport> {
    let artifact = ModelArtifact::load(&artifact_path(cfg))?;
    if artifact.config_hash != config_hash(cfg)? {
        log::warn!(
            "artifact was trained under config {}, evaluating under {}",
            artifact.config_hash,
            config_hash(cfg)?
        );
    }
    let (raw, truth) = load_raw(cfg)?;
    let (_, _, raw_test) = raw.split(SPLIT, &mut rng_for(cfg.seed, "split"))?;
    let test = transform(&raw_test, artifact.model.schema())?;
    let eval = evaluate_model(&artifact.model, &test, &raw_test, truth.as_ref(), cfg, &cfg.data.label())?;
    write_evaluation(cfg, &test, &eval)?;
    Ok(eval.report)
}

pub fn write_evaluation(cfg: &ExperimentConfig, test: &SurvivalDataset, eval: &Evaluation) -> Result<()> {
    ensure_dir(&cfg.out_dir)?;
    let kind = &eval.report.model;
    let tag = provenance(cfg)?;
    let dir = &cfg.out_dir;
    write(&dir.join(format!("report_{kind}.txt")), eval.report.to_kv()?)?;
    write(
        &dir.join(format!("report_{kind}.csv")),
        format!("{}\n{}\n", EvalReport::table_header(), eval.report.table_row()),
    )?;
    let pred_path = dir.join(format!("predictions_{kind}.csv"));
    crate::inference::write_predictions_csv(&pred_path, test, &eval.predictions)?;
    let body = std::fs::read_to_string(&pred_path).map_err(|e| Error::io(&pred_path, e))?;
    write(&pred_path, format!("# {tag}\n{body}"))?;
    write(&dir.join(format!("coverage_{kind}.csv")), coverage_csv(&eval.report, &tag))?;
    write(&dir.join(format!("loglik_hist_{kind}.csv")), loglik_histogram_csv(test, &eval.predictions, &tag))?;
    Ok(())
}

fn coverage_csv(report: &EvalReport, tag: &str) -> String {
    let mut out = format!("# {tag}\nstratum,lower,upper,nominal,rate\n");
    if let Some(map) = &report.coverage.events {
        for (lo, hi) in EVENT_RANGES {
            if let Some(rate) = map.get(&range_key(lo, hi)) {
                let _ = writeln!(out, "event,{lo},{hi},{},{rate}", hi - lo);
            }
        }
    }
    if let Some(map) = &report.coverage.censored {
        for p in CENSOR_PERCENTILES {
            if let Some(rate) = map.get(&percentile_key(p)) {
                let _ = writeln!(out, "censored,,{p},{p},{rate}");
            }
        }
    }
    out
}

fn loglik_histogram_csv(test: &SurvivalDataset, predictions: &[SubjectPrediction], tag: &str) -> String {
    let mut out = format!("# {tag}\nstratum,lower,upper,count\n");
    let finite: Vec<f64> = predictions.iter().map(|p| p.loglik).filter(|v| v.is_finite()).collect();
    let lo = finite.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = finite.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if finite.is_empty() {
        return out;
    }
    let width = if hi > lo { (hi - lo) / HISTOGRAM_BINS as f64 } else { 1.0 };
    for (name, want) in [("event", true), ("censored", false)] {
        let mut counts = [0usize; HISTOGRAM_BINS];
        for (r, p) in test.records.iter().zip(predictions) {
            if r.event == want && p.loglik.is_finite() {
                let k = (((p.loglik - lo) / width) as usize).min(HISTOGRAM_BINS - 1);
                counts[k] += 1;
            }
        }
        for (k, c) in counts.iter().enumerate() {
            let a = lo + k as f64 * width;
            let _ = writeln!(out, "{name},{a},{},{c}", a + width);
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Simulation-table sweep

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum TableMetric {
    Ks,
    Ctd,
    CIndex,
    Loglik,
}

impl TableMetric {
    pub fn name(self) -> &'static str {
        match self {
            TableMetric::Ks => "ks",
            TableMetric::Ctd => "c_td",
            TableMetric::CIndex => "c_index",
            TableMetric::Loglik => "mean_loglik",
        }
    }

    fn read(self, r: &EvalReport) -> Option<f64> {
        match self {
            TableMetric::Ks => r.ks,
            TableMetric::Ctd => Some(r.c_td),
            TableMetric::CIndex => Some(r.c_index),
            TableMetric::Loglik => Some(r.mean_loglik),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Check {
    Within(f64),
    AtMost(f64),
    Reported,
}

impl Check {
    pub fn passes(self, paper: f64, value: f64) -> Option<bool> {
        match self {
            Check::Within(tol) => Some((value - paper).abs() <= tol),
            Check::AtMost(limit) => Some(value <= limit),
            Check::Reported => None,
        }
    }

    fn describe(self) -> String {
        match self {
            Check::Within(t) => format!("+-{t}"),
            Check::AtMost(l) => format!("<={l}"),
            Check::Reported => "-".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Reference {
    pub model: ModelKind,
    pub rate: EventRate,
    pub metric: TableMetric,
    pub value: f64,
    pub check: Check,
}

/// Published simulation results with the tolerances this crate holds itself to.
pub fn reference_values() -> Vec<Reference> {
    use ModelKind::*;
    use TableMetric::*;
    let rates = EventRate::ALL;
    let mut out = Vec::new();
    let mut add = |model, metric, values: [f64; 3], checks: [Check; 3]| {
        for k in 0..3 {
            out.push(Reference { model, rate: rates[k], metric, value: values[k], check: checks[k] });
        }
    };
    let none = [Check::Reported; 3];
    let within = |t| [Check::Within(t); 3];
    add(Vsi, Ks, [0.044, 0.052, 0.059], [Check::AtMost(0.065), Check::AtMost(0.075), Check::AtMost(0.085)]);
    add(VsiNoq, Ks, [0.049, 0.068, 0.066], none);
    add(Mlp, Ks, [0.047, 0.063, 0.064], none);
    add(AftWeibull, Ks, [0.057, 0.058, 0.068], within(0.02));
    add(Vsi, Ctd, [0.748, 0.756, 0.772], within(0.03));
    add(VsiNoq, Ctd, [0.748, 0.749, 0.763], none);
    add(Mlp, Ctd, [0.744, 0.751, 0.770], none);
    add(AftWeibull, Ctd, [0.742, 0.750, 0.768], none);
    add(Vsi, CIndex, [0.773, 0.781, 0.793], within(0.02));
    add(VsiNoq, CIndex, [0.772, 0.781, 0.793], within(0.02));
    add(Mlp, CIndex, [0.772, 0.781, 0.793], within(0.02));
    add(AftWeibull, CIndex, [0.773, 0.781, 0.793], none);
    add(Vsi, Loglik, [-4.15, -2.22, -1.40], within(0.20));
    add(VsiNoq, Loglik, [-4.16, -2.22, -1.41], none);
    add(Mlp, Loglik, [-4.15, -2.22, -1.41], within(0.20));
    add(AftWeibull, Loglik, [-4.43, -2.29, -1.47], within(0.25));
    out
}

pub fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    Some(if n % 2 == 1 { values[n / 2] } else { 0.5 * (values[n / 2 - 1] + values[n / 2]) })
}

/// Median over seeds of `metric` for reports of `model` on dataset `label`.
pub fn median_metric(reports: &[EvalReport], model: ModelKind, label: &str, metric: TableMetric) -> Option<f64> {
    let mut v: Vec<f64> = reports
        .iter()
        .filter(|r| r.model == model.as_str() && r.dataset == label)
        .filter_map(|r| metric.read(r))
        .collect();
    median(&mut v)
}

/// KS table and performance table, side by side with the published values.
pub fn comparison_tables(reports: &[EvalReport]) -> (String, String) {
    let mut by_metric: BTreeMap<bool, String> = BTreeMap::new();
    let header = "model,event_rate,metric,value,paper,tolerance,pass\n";
    for r in reference_values() {
        let ours = median_metric(reports, r.model, r.rate.name(), r.metric);
        let (value, pass) = match ours {
            Some(v) => (
                v.to_string(),
                r.check.passes(r.value, v).map_or("-".to_string(), |p| if p { "pass" } else { "FAIL" }.into()),
            ),
            None => ("NA".to_string(), "-".to_string()),
        };
        let line = format!(
            "{},{},{},{},{},{},{}\n",
            r.model,
            r.rate.percent(),
            r.metric.name(),
            value,
            r.value,
            r.check.describe(),
            pass
        );
        by_metric.entry(r.metric == TableMetric::Ks).or_insert_with(|| header.to_string()).push_str(&line);
    }
    let ks = by_metric.remove(&true).unwrap_or_default();
    let perf = by_metric.remove(&false).unwrap_or_default();
    (ks, perf)
}

/// Simulate, train and evaluate one model kind per call for every event
/// rate, kind and seed. `on_report` sees each report as it is produced.
pub fn run_sweep(
    base: &ExperimentConfig,
    seeds: &[u64],
    kinds: &[ModelKind],
    mut on_report: impl FnMut(&ExperimentConfig, &Evaluation, &SurvivalDataset) -> Result<()>,
) -> Result<Vec<EvalReport>> {
    let n = match &base.data {
        DataSource::Synthetic { n, .. } => *n,
        DataSource::Csv { .. } => return Err(Error::Config("the table sweep needs a synthetic data source".into())),
    };
    let mut reports = Vec::new();
    for &seed in seeds {
        for rate in EventRate::ALL {
            let mut cfg = base.clone();
            cfg.seed = seed;
            cfg.data = DataSource::Synthetic { event_rate: rate.percent(), n, censor_horizon: None };
            cfg.validate()?;
            let data = prepare(&cfg)
                .inspect_err(|e| log::error!("stage simulate ({}, seed {seed}) failed: {e}", rate.name()))?;
            log::info!("{} seed {seed}: observed event rate {:.4}", data.label, data.test.event_rate());
            for &kind in kinds {
                cfg.model = kind;
                let (model, log) = train_model(kind, &data.train, &data.valid, &cfg.train)
                    .inspect_err(|e| log::error!("stage train ({kind}, {}, seed {seed}) failed: {e}", rate.name()))?;
                log::info!("{kind} {} seed {seed}: best epoch {}", data.label, log.best_epoch);
                let eval = evaluate_model(&model, &data.test, &data.raw_test, data.truth.as_ref(), &cfg, &data.label)
                    .inspect_err(|e| {
                    log::error!("stage evaluate ({kind}, {}, seed {seed}) failed: {e}", rate.name())
                })?;
                on_report(&cfg, &eval, &data.test)?;
                reports.push(eval.report);
            }
        }
    }
    Ok(reports)
}

/// Full sweep over rates and model kinds; writes every report row plus the
/// two comparison tables.
pub fn cmd_reproduce_tables(cfg: &ExperimentConfig) -> Result<Vec<EvalReport>> {
    ensure_dir(&cfg.out_dir)?;
    let seeds = cfg.sweep_seeds.clone().unwrap_or_else(|| vec![cfg.seed]);
    let reports = run_sweep(cfg, &seeds, &ModelKind::ALL, |run_cfg, eval, _| {
        let name = format!("report_{}_{}_seed{}.txt", eval.report.model, eval.report.dataset, run_cfg.seed);
        write(&cfg.out_dir.join(name), eval.report.to_kv()?)
    })?;
    let tag = provenance(cfg)?;
    let mut rows = format!("# {tag}\n{}\n", EvalReport::table_header());
    for r in &reports {
        rows.push_str(&r.table_row());
        rows.push('\n');
    }
    write(&cfg.out_dir.join("reports.csv"), rows)?;
    let (ks, perf) = comparison_tables(&reports);
    write(&cfg.out_dir.join("table_ks.csv"), format!("# {tag}\n{ks}"))?;
    write(&cfg.out_dir.join("table_performance.csv"), format!("# {tag}\n{perf}"))?;
    Ok(reports)
}

//! Concordance, distance-to-truth, likelihood spread and coverage metrics
//! computed from predicted distributions.

use std::collections::BTreeMap;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{quantile_sorted, TimeGrid};
use crate::inference::quantile_bin;
use crate::seed::rng_for;

/// Binary indexed tree of counts over score ranks.
struct Fenwick {
    tree: Vec<u64>,
}

impl Fenwick {
    fn new(n: usize) -> Self {
        Self { tree: vec![0; n + 1] }
    }

    fn add(&mut self, rank: usize) {
        let mut i = rank + 1;
        while i < self.tree.len() {
            self.tree[i] += 1;
            i += i & i.wrapping_neg();
        }
    }

    /// Count of inserted ranks `< rank`.
    fn below(&self, rank: usize) -> u64 {
        let mut i = rank;
        let mut total = 0;
        while i > 0 {
            total += self.tree[i];
            i -= i & i.wrapping_neg();
        }
        total
    }
}

/// Pair tallies: concordant, tied and comparable counts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
struct Tally {
    concordant: u64,
    tied: u64,
    pairs: u64,
}

impl Tally {
    fn value(self, strict: bool) -> Result<f64> {
        if self.pairs == 0 {
            return Err(Error::Data("no comparable pairs (need an event before some later time)".into()));
        }
        let ties = if strict { 0 } else { self.tied };
        Ok((2 * self.concordant + ties) as f64 / (2 * self.pairs) as f64)
    }
}

fn check_lengths(a: usize, b: usize, c: usize) -> Result<()> {
    if a != b || a != c {
        return Err(Error::Shape { expected: a, actual: if a != b { b } else { c } });
    }
    Ok(())
}

/// Pairs `(i, j)` with `event_i` and `t_i < t_j`; concordant when
/// `score_i > score_j`.
fn concordance_tally(scores: &[f64], times: &[f64], events: &[bool], idx: &[usize]) -> Tally {
    let mut ranked: Vec<f64> = idx.iter().map(|&i| scores[i]).collect();
    ranked.sort_by(f64::total_cmp);
    ranked.dedup();
    let rank = |s: f64| ranked.partition_point(|&v| v < s);
    let mut order = idx.to_vec();
    order.sort_by(|&a, &b| times[b].total_cmp(&times[a]));
    let mut tree = Fenwick::new(ranked.len());
    let mut inserted = 0u64;
    let mut tally = Tally::default();
    let mut start = 0;
    while start < order.len() {
        let mut end = start;
        while end < order.len() && times[order[end]] == times[order[start]] {
            end += 1;
        }
        for &i in &order[start..end] {
            if events[i] {
                let r = rank(scores[i]);
                let below = tree.below(r);
                let at = tree.below(r + 1) - below;
                tally.concordant += below;
                tally.tied += at;
                tally.pairs += inserted;
            }
        }
        for &i in &order[start..end] {
            tree.add(rank(scores[i]));
            inserted += 1;
        }
        start = end;
    }
    tally
}

/// Harrell-style concordance of risk scores (higher score = earlier event).
/// Score ties earn half credit unless `strict`.
pub fn c_index(scores: &[f64], times: &[f64], events: &[bool], strict: bool) -> Result<f64> {
    check_lengths(scores.len(), times.len(), events.len())?;
    let idx: Vec<usize> = (0..scores.len()).collect();
    concordance_tally(scores, times, events, &idx).value(strict)
}

/// Percentile bootstrap interval (2.5%, 97.5%) over resampled subjects.
pub fn c_index_ci(scores: &[f64], times: &[f64], events: &[bool], resamples: usize, seed: u64) -> Result<(f64, f64)> {
    check_lengths(scores.len(), times.len(), events.len())?;
    let n = scores.len();
    if n == 0 || resamples == 0 {
        return Err(Error::Data("bootstrap needs subjects and at least one resample".into()));
    }
    let mut rng = rng_for(seed, "bootstrap");
    let mut values = Vec::with_capacity(resamples);
    let mut idx = vec![0usize; n];
    for _ in 0..resamples {
        for v in idx.iter_mut() {
            *v = rng.random_range(0..n);
        }
        if let Ok(v) = concordance_tally(scores, times, events, &idx).value(false) {
            values.push(v);
        }
    }
    if values.is_empty() {
        return Err(Error::Data("no bootstrap resample had comparable pairs".into()));
    }
    values.sort_by(f64::total_cmp);
    Ok((quantile_sorted(&values, 0.025), quantile_sorted(&values, 0.975)))
}

/// Time-dependent concordance: for each pair with `event_i` and `t_i < t_j`,
/// compares both subjects' predicted CDFs at `t_i`. `cdfs[k][b]` is subject
/// `k`'s cumulative mass through bin `b`; `bins[k]` is the bin of `t_k`.
pub fn c_td(cdfs: &[Vec<f64>], bins: &[usize], times: &[f64], events: &[bool], strict: bool) -> Result<f64> {
    check_lengths(cdfs.len(), times.len(), events.len())?;
    check_lengths(bins.len(), times.len(), events.len())?;
    let mut order: Vec<usize> = (0..times.len()).collect();
    order.sort_by(|&a, &b| times[a].total_cmp(&times[b]));
    let mut tally = Tally::default();
    for (pos, &i) in order.iter().enumerate() {
        if !events[i] {
            continue;
        }
        let b = bins[i];
        let own = cdfs[i][b];
        // Everyone strictly later in time.
        let later = order[pos + 1..].iter().skip_while(|&&j| times[j] == times[i]);
        for &j in later {
            let other = cdfs[j][b];
            tally.pairs += 1;
            if own > other {
                tally.concordant += 1;
            } else if own == other {
                tally.tied += 1;
            }
        }
    }
    tally.value(strict)
}

/// Variant comparing each subject's CDF at its own time:
/// `F_i(t_i) > F_j(t_j)` for the same pairs.
pub fn c_td_own_time(own_cdf: &[f64], times: &[f64], events: &[bool], strict: bool) -> Result<f64> {
    c_index(own_cdf, times, events, strict)
}

/// Running sums of each pmf: `cdf[b]` = mass through bin `b`.
pub fn cumulative(pmf: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    pmf.iter()
        .map(|p| {
            acc += p;
            acc
        })
        .collect()
}

/// Largest absolute gap between two CDFs sampled at the same points.
pub fn ks_between(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// `max_b |F_pred(e_b) - F_true(e_b)|` over the grid edges.
pub fn ks_distance(pmf: &[f64], grid: &TimeGrid, truth_cdf: impl Fn(f64) -> f64) -> f64 {
    let pred = cumulative(pmf);
    let truth: Vec<f64> = grid.edges().iter().map(|&e| truth_cdf(e)).collect();
    ks_between(&pred[..grid.m()], &truth)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoglikSummary {
    pub mean: f64,
    /// 90% minus 10% quantile of the event stratum.
    pub event_range: Option<f64>,
    pub censored_range: Option<f64>,
}

fn spread(values: impl Iterator<Item = f64>) -> Option<f64> {
    let mut v: Vec<f64> = values.collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    Some(quantile_sorted(&v, 0.9) - quantile_sorted(&v, 0.1))
}

pub fn mean_loglik(values: &[f64], events: &[bool]) -> Result<LoglikSummary> {
    if values.is_empty() || values.len() != events.len() {
        return Err(Error::Shape { expected: events.len().max(1), actual: values.len() });
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let pick = |want: bool| values.iter().zip(events).filter(move |(_, e)| **e == want).map(|(v, _)| *v);
    Ok(LoglikSummary { mean, event_range: spread(pick(true)), censored_range: spread(pick(false)) })
}

/// Central ranges for event coverage, widest first.
pub const EVENT_RANGES: [(f64, f64); 9] = [
    (0.05, 0.95),
    (0.10, 0.90),
    (0.15, 0.85),
    (0.20, 0.80),
    (0.25, 0.75),
    (0.30, 0.70),
    (0.35, 0.65),
    (0.40, 0.60),
    (0.45, 0.55),
];
pub const CENSOR_PERCENTILES: [f64; 9] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9];

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Coverage {
    /// Keyed `"lo-hi"`; absent when there are no events.
    pub events: Option<BTreeMap<String, f64>>,
    /// Keyed by percentile; absent when nothing is censored.
    pub censored: Option<BTreeMap<String, f64>>,
}

pub fn range_key(lo: f64, hi: f64) -> String {
    format!("{lo:.2}-{hi:.2}")
}

pub fn percentile_key(p: f64) -> String {
    format!("{p:.2}")
}

/// Share of event times strictly inside each predicted central range, and of
/// censoring times at or below each predicted percentile.
pub fn coverage(pmfs: &[Vec<f64>], grid: &TimeGrid, times: &[f64], events: &[bool]) -> Result<Coverage> {
    check_lengths(pmfs.len(), times.len(), events.len())?;
    let quantile = |pmf: &[f64], q: f64| grid.representative_time(quantile_bin(pmf, q));
    let n_e = events.iter().filter(|e| **e).count();
    let n_c = events.len() - n_e;
    let mut out = Coverage::default();
    if n_e > 0 {
        let mut map = BTreeMap::new();
        for (lo, hi) in EVENT_RANGES {
            let hits = (0..times.len())
                .filter(|&i| events[i])
                .filter(|&i| {
                    let (l, u) = (quantile(&pmfs[i], lo), quantile(&pmfs[i], hi));
                    l < times[i] && times[i] < u
                })
                .count();
            map.insert(range_key(lo, hi), hits as f64 / n_e as f64);
        }
        out.events = Some(map);
    }
    if n_c > 0 {
        let mut map = BTreeMap::new();
        for p in CENSOR_PERCENTILES {
            let hits = (0..times.len()).filter(|&i| !events[i] && times[i] <= quantile(&pmfs[i], p)).count();
            map.insert(percentile_key(p), hits as f64 / n_c as f64);
        }
        out.censored = Some(map);
    }
    Ok(out)
}

/// All metrics for one model on one test set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub model: String,
    pub dataset: String,
    pub seed: u64,
    pub config_hash: String,
    pub n_test: usize,
    pub event_rate: f64,
    pub parameter_count: usize,
    pub c_index: f64,
    pub c_index_ci_lo: f64,
    pub c_index_ci_hi: f64,
    /// Concordance of the median point estimate.
    pub c_index_median: f64,
    pub c_td: f64,
    pub c_td_own_time: f64,
    pub ks: Option<f64>,
    pub mean_loglik: f64,
    pub loglik_range_events: Option<f64>,
    pub loglik_range_censored: Option<f64>,
    pub degenerate_point_estimates: usize,
    pub coverage: Coverage,
}

pub const TABLE_COLUMNS: [&str; 15] = [
    "model",
    "dataset",
    "seed",
    "config_hash",
    "n_test",
    "event_rate",
    "c_index",
    "c_index_ci_lo",
    "c_index_ci_hi",
    "c_td",
    "ks",
    "mean_loglik",
    "loglik_range_events",
    "loglik_range_censored",
    "parameter_count",
];

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_else(|| "NA".into())
}

impl EvalReport {
    /// Sectioned `key = value` text.
    pub fn to_kv(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Data(format!("cannot serialize report: {e}")))
    }

    pub fn from_kv(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Data(format!("malformed report: {e}")))
    }

    pub fn table_header() -> String {
        TABLE_COLUMNS.join(",")
    }

    /// One comma-separated row in [`TABLE_COLUMNS`] order; absent values as `NA`.
    pub fn table_row(&self) -> String {
        [
            self.model.clone(),
            self.dataset.clone(),
            self.seed.to_string(),
            self.config_hash.clone(),
            self.n_test.to_string(),
            self.event_rate.to_string(),
            self.c_index.to_string(),
            self.c_index_ci_lo.to_string(),
            self.c_index_ci_hi.to_string(),
            self.c_td.to_string(),
            opt(self.ks),
            self.mean_loglik.to_string(),
            opt(self.loglik_range_events),
            opt(self.loglik_range_censored),
            self.parameter_count.to_string(),
        ]
        .join(",")
    }
}

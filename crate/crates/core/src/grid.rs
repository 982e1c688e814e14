//! Discrete time axis, per-subject target encodings and the population
//! Nelson-Aalen curve.
//!
//! Bins are zero-based here. With `M` edges `e_0 < ... < e_{M-1}`, bin `b < M`
//! covers `(e_{b-1}, e_b]` (with `e_{-1} = 0`, and time 0 itself in bin 0) and
//! bin `M` collects everything after the last edge, for `M + 1` bins in total.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::data::SurvivalDataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    edges: Vec<f64>,
    representative_times: Vec<f64>,
}

/// Linear-interpolation quantile of sorted data (the usual "type 7" rule).
pub(crate) fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

impl TimeGrid {
    /// Percentile grid over training event times: edges at the `k/M`
    /// quantiles, `k = 1..=M`, with duplicates removed.
    pub fn from_event_times(event_times: &[f64], bins: usize) -> Result<Self> {
        if bins < 2 {
            return Err(Error::Config(format!("grid needs at least 2 bins, got {bins}")));
        }
        let mut sorted: Vec<f64> = event_times.to_vec();
        if sorted.iter().any(|t| !t.is_finite() || *t < 0.0) {
            return Err(Error::Data("event times must be finite and nonnegative".into()));
        }
        sorted.sort_by(f64::total_cmp);
        sorted.dedup();
        if sorted.len() < 2 {
            return Err(Error::Data(format!("grid needs at least 2 distinct event times, got {}", sorted.len())));
        }
        let mut all = event_times.to_vec();
        all.sort_by(f64::total_cmp);
        let mut edges: Vec<f64> = (1..=bins).map(|k| quantile_sorted(&all, k as f64 / bins as f64)).collect();
        edges.dedup();
        if edges.len() < bins {
            log::warn!("quantile collisions reduced the grid from {bins} to {} bins", edges.len());
        }
        Self::from_edges(edges)
    }

    pub fn from_edges(edges: Vec<f64>) -> Result<Self> {
        if edges.len() < 2 {
            return Err(Error::Data(format!("grid needs at least 2 edges, got {}", edges.len())));
        }
        if edges[0] <= 0.0 || edges.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::Data("grid edges must be positive and strictly increasing".into()));
        }
        let mut representative_times = Vec::with_capacity(edges.len() + 1);
        let mut lo = 0.0;
        for &hi in &edges {
            representative_times.push(0.5 * (lo + hi));
            lo = hi;
        }
        representative_times.push(*edges.last().expect("nonempty"));
        Ok(Self { edges, representative_times })
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    /// Number of finite bins `M`.
    pub fn m(&self) -> usize {
        self.edges.len()
    }

    /// Total bin count including the overflow bin, `M + 1`.
    pub fn num_bins(&self) -> usize {
        self.edges.len() + 1
    }

    pub fn overflow_bin(&self) -> usize {
        self.edges.len()
    }

    pub fn representative_times(&self) -> &[f64] {
        &self.representative_times
    }

    pub fn representative_time(&self, bin: usize) -> f64 {
        self.representative_times[bin]
    }

    /// Bin holding time `t`; exact edge hits go to the lower bin.
    pub fn bin_of(&self, t: f64) -> usize {
        self.edges.partition_point(|&e| e < t)
    }

    /// Two-column text table `bin<TAB>edge`, bins numbered from 1.
    pub fn to_table(&self) -> String {
        let mut out = String::from("bin\tedge\n");
        for (i, e) in self.edges.iter().enumerate() {
            let _ = writeln!(out, "{}\t{}", i + 1, e);
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetKind {
    EventOnehot,
    CensoredSoft,
}

/// Probability vector over the `M + 1` bins fed to the encoder.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetEncoding {
    pub weights: Vec<f64>,
    pub kind: TargetKind,
}

impl TargetEncoding {
    pub fn onehot(num_bins: usize, bin: usize) -> Self {
        let mut weights = vec![0.0; num_bins];
        weights[bin] = 1.0;
        Self { weights, kind: TargetKind::EventOnehot }
    }
}

pub fn encode_event(t: f64, grid: &TimeGrid) -> Result<TargetEncoding> {
    if !(t >= 0.0) {
        return Err(Error::Data(format!("event time {t} must be >= 0")));
    }
    Ok(TargetEncoding::onehot(grid.num_bins(), grid.bin_of(t)))
}

/// Soft target for a subject censored at `t`: the population pmf restricted
/// to bins after the censoring bin, renormalized.
pub fn encode_censored(t: f64, grid: &TimeGrid, na: &NelsonAalenCurve) -> Result<TargetEncoding> {
    if !(t >= 0.0) {
        return Err(Error::Data(format!("censoring time {t} must be >= 0")));
    }
    let k = grid.bin_of(t);
    let num_bins = grid.num_bins();
    if k == grid.overflow_bin() {
        let mut enc = TargetEncoding::onehot(num_bins, k);
        enc.kind = TargetKind::CensoredSoft;
        return Ok(enc);
    }
    let tail: f64 = na.pmf[k + 1..].iter().sum();
    if !(tail > 0.0) {
        return Err(Error::Numerical(format!("population tail mass after bin {k} is zero")));
    }
    let weights = (0..num_bins).map(|b| if b > k { na.pmf[b] / tail } else { 0.0 }).collect();
    Ok(TargetEncoding { weights, kind: TargetKind::CensoredSoft })
}

/// Population Nelson-Aalen estimate on the grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NelsonAalenCurve {
    /// `H(e_b)`, one per finite bin.
    pub cumulative_hazard: Vec<f64>,
    /// `S(e_b) = exp(-H(e_b))`.
    pub survival: Vec<f64>,
    /// Discrete pmf over all `M + 1` bins; the last entry is the overflow mass.
    pub pmf: Vec<f64>,
}

impl NelsonAalenCurve {
    /// `d_b` events in bin `b` over `n_b` subjects whose time falls in bin `b`
    /// or later.
    pub fn fit(dataset: &SurvivalDataset, grid: &TimeGrid) -> Self {
        let pairs: Vec<(f64, bool)> = dataset.records.iter().map(|r| (r.time, r.event)).collect();
        Self::from_times(&pairs, grid)
    }

    pub fn from_times(observations: &[(f64, bool)], grid: &TimeGrid) -> Self {
        let m = grid.m();
        let mut deaths = vec![0usize; m + 1];
        let mut exits = vec![0usize; m + 1];
        for &(t, event) in observations {
            let b = grid.bin_of(t);
            exits[b] += 1;
            if event {
                deaths[b] += 1;
            }
        }
        let mut at_risk = observations.len();
        let mut h = 0.0;
        let mut cumulative_hazard = Vec::with_capacity(m);
        for b in 0..m {
            if deaths[b] > 0 {
                assert!(at_risk > 0, "events without subjects at risk in bin {b}");
                h += deaths[b] as f64 / at_risk as f64;
            }
            cumulative_hazard.push(h);
            at_risk -= exits[b];
        }
        let survival: Vec<f64> = cumulative_hazard.iter().map(|h| (-h).exp()).collect();
        let mut pmf = Vec::with_capacity(m + 1);
        let mut prev = 1.0;
        for &s in &survival {
            pmf.push(prev - s);
            prev = s;
        }
        let used: f64 = pmf.iter().sum();
        pmf.push((1.0 - used).max(0.0));
        Self { cumulative_hazard, survival, pmf }
    }
}

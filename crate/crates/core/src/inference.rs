//! Everything computed from a frozen model: predictive distributions,
//! importance-weighted likelihoods and point estimates.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use ndarray::{s, Array2, ArrayView1, ArrayView2};
use rand::distr::weighted::WeightedIndex;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::baselines::{aft_predict_pmf, noq_batch_loglik, AftWeibullParams, DirectMlpParams, NoqParams, Observations};
use crate::data::{CovariateSchema, SurvivalDataset};
use crate::discrete::{cdf_through, log_sum_exp, observation_loglik, observation_loglik_pmf, survival_after};
use crate::error::{Error, Result};
use crate::gaussian::clamp_log_var;
use crate::grid::{TargetEncoding, TimeGrid};
use crate::model::{covariate_matrix, VsiParams};
use crate::nn::{Mlp, Parameters};
use crate::seed::{subject_rng, Rng};

const LN_2PI: f64 = 1.837_877_066_409_345_5;
/// Subjects evaluated per batched network call.
const BLOCK: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Vsi,
    VsiNoq,
    Mlp,
    AftWeibull,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [ModelKind::Vsi, ModelKind::VsiNoq, ModelKind::Mlp, ModelKind::AftWeibull];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Vsi => "vsi",
            ModelKind::VsiNoq => "vsi_noq",
            ModelKind::Mlp => "mlp",
            ModelKind::AftWeibull => "aft_weibull",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL.into_iter().find(|k| k.as_str() == s).ok_or_else(|| {
            Error::Config(format!("unknown model kind `{s}` (expected vsi, vsi_noq, mlp or aft_weibull)"))
        })
    }
}

/// Any trained model, behind one prediction interface.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "snake_case")]
pub enum SurvivalModel {
    Vsi(VsiParams),
    VsiNoq(NoqParams),
    Mlp(DirectMlpParams),
    AftWeibull(AftWeibullParams),
}

impl SurvivalModel {
    pub fn kind(&self) -> ModelKind {
        match self {
            SurvivalModel::Vsi(_) => ModelKind::Vsi,
            SurvivalModel::VsiNoq(_) => ModelKind::VsiNoq,
            SurvivalModel::Mlp(_) => ModelKind::Mlp,
            SurvivalModel::AftWeibull(_) => ModelKind::AftWeibull,
        }
    }

    pub fn grid(&self) -> &TimeGrid {
        match self {
            SurvivalModel::Vsi(p) => &p.grid,
            SurvivalModel::VsiNoq(p) => &p.grid,
            SurvivalModel::Mlp(p) => &p.grid,
            SurvivalModel::AftWeibull(p) => &p.grid,
        }
    }

    pub fn schema(&self) -> &CovariateSchema {
        match self {
            SurvivalModel::Vsi(p) => &p.schema,
            SurvivalModel::VsiNoq(p) => &p.schema,
            SurvivalModel::Mlp(p) => &p.schema,
            SurvivalModel::AftWeibull(p) => &p.schema,
        }
    }

    /// All trainable scalars, including the encoder for the full model.
    pub fn parameter_count(&self) -> usize {
        match self {
            SurvivalModel::Vsi(p) => p.nets.num_params(),
            SurvivalModel::VsiNoq(p) => p.nets.num_params(),
            SurvivalModel::Mlp(p) => p.net.num_params(),
            SurvivalModel::AftWeibull(p) => p.coefficients.num_params(),
        }
    }

    /// Scalars used when predicting from covariates alone.
    pub fn predictive_parameter_count(&self) -> usize {
        match self {
            SurvivalModel::Vsi(p) => p.nets.prior.num_params() + p.nets.decoder.num_params(),
            other => other.parameter_count(),
        }
    }

    fn input_width(&self) -> usize {
        match self {
            SurvivalModel::Vsi(p) => p.nets.prior.input_width(),
            SurvivalModel::VsiNoq(p) => p.nets.prior.input_width(),
            SurvivalModel::Mlp(p) => p.net.input_width(),
            SurvivalModel::AftWeibull(p) => p.coefficients.theta.len(),
        }
    }
}

/// Sample counts used at evaluation time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSettings {
    /// Proposal draws for the importance-weighted likelihood.
    pub iw_samples: usize,
    /// Prior draws averaged into the predictive distribution.
    pub predictive_samples: usize,
    /// Draws for the weighted point estimate.
    pub point_samples: usize,
    /// Prior draws for the encoder-free model's marginal likelihood.
    pub noq_eval_samples: usize,
}

impl Default for EvalSettings {
    fn default() -> Self {
        Self { iw_samples: 500, predictive_samples: 200, point_samples: 200, noq_eval_samples: 100 }
    }
}

impl EvalSettings {
    pub fn validate(&self) -> Result<()> {
        if self.iw_samples == 0 || self.predictive_samples == 0 || self.point_samples == 0 || self.noq_eval_samples == 0
        {
            return Err(Error::Config("evaluation sample counts must be positive".into()));
        }
        Ok(())
    }
}

/// A normalized pmf over the `M + 1` bins of a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictedDistribution {
    pub pmf: Vec<f64>,
}

impl PredictedDistribution {
    pub fn survival(&self, bin: usize) -> f64 {
        survival_after(&self.pmf, bin)
    }

    pub fn cdf(&self, bin: usize) -> f64 {
        cdf_through(&self.pmf, bin)
    }

    /// Representative time of the first bin whose cumulative mass reaches `q`.
    pub fn quantile(&self, grid: &TimeGrid, q: f64) -> f64 {
        grid.representative_time(quantile_bin(&self.pmf, q))
    }

    pub fn mean_time(&self, grid: &TimeGrid) -> f64 {
        self.pmf.iter().zip(grid.representative_times()).map(|(p, t)| p * t).sum()
    }
}

pub(crate) fn quantile_bin(pmf: &[f64], q: f64) -> usize {
    let mut acc = 0.0;
    for (b, p) in pmf.iter().enumerate() {
        acc += p;
        // Guard against rounding leaving the total a hair under 1.
        if acc >= q - 1e-12 {
            return b;
        }
    }
    pmf.len() - 1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObservationKind {
    Event,
    Censored,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IwEstimate {
    pub log_value: f64,
    pub samples: usize,
    pub kind: ObservationKind,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointEstimate {
    pub time: f64,
    /// Importance weights were unusable and the plain mean was returned.
    pub degenerate: bool,
}

/// Diagonal Gaussian rows with the per-row pieces of the log density cached.
struct GaussRows {
    mean: Array2<f64>,
    sd: Array2<f64>,
    inv_var: Array2<f64>,
    log_norm: Vec<f64>,
}

impl GaussRows {
    fn from_raw(raw: &Array2<f64>) -> Self {
        let m = raw.ncols() / 2;
        let lv = raw.slice(s![.., m..]).mapv(clamp_log_var);
        let log_norm = lv.rows().into_iter().map(|r| -0.5 * (r.sum() + m as f64 * LN_2PI)).collect();
        Self {
            mean: raw.slice(s![.., ..m]).to_owned(),
            sd: lv.mapv(|v| (0.5 * v).exp()),
            inv_var: lv.mapv(|v| (-v).exp()),
            log_norm,
        }
    }

    fn log_density(&self, i: usize, z: ArrayView1<f64>) -> f64 {
        let mut q = 0.0;
        for j in 0..z.len() {
            let d = z[j] - self.mean[[i, j]];
            q += d * d * self.inv_var[[i, j]];
        }
        self.log_norm[i] - 0.5 * q
    }

    /// `draws` reparameterized samples per row, row-major by subject.
    fn sample(&self, eps: ArrayView2<f64>, draws: usize) -> Array2<f64> {
        let m = self.mean.ncols();
        let mut z = Array2::zeros((self.mean.nrows() * draws, m));
        for i in 0..self.mean.nrows() {
            for k in 0..draws {
                let r = i * draws + k;
                for j in 0..m {
                    z[[r, j]] = self.mean[[i, j]] + self.sd[[i, j]] * eps[[r, j]];
                }
            }
        }
        z
    }
}

fn softmax_into(row: ArrayView1<f64>, out: &mut [f64], weight: f64) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let total: f64 = row.iter().map(|v| (v - max).exp()).sum();
    for (o, v) in out.iter_mut().zip(row) {
        *o += weight * (v - max).exp() / total;
    }
}

fn noise(rng: &mut Rng, rows: usize, m: usize) -> Array2<f64> {
    Array2::from_shape_fn((rows, m), |_| StandardNormal.sample(rng))
}

fn row_matrix(x: &[f64]) -> Array2<f64> {
    Array2::from_shape_vec((1, x.len()), x.to_vec()).expect("row")
}

/// Mean decoder pmf over prior draws, one pmf per covariate row.
fn latent_predictive(
    prior: &Mlp,
    decoder: &Mlp,
    x: ArrayView2<f64>,
    eps: ArrayView2<f64>,
    draws: usize,
) -> Result<Vec<Vec<f64>>> {
    let g = GaussRows::from_raw(&prior.forward(x)?);
    let logits = decoder.forward(g.sample(eps, draws).view())?;
    let w = 1.0 / draws as f64;
    Ok((0..x.nrows())
        .map(|i| {
            let mut pmf = vec![0.0; logits.ncols()];
            for k in 0..draws {
                softmax_into(logits.row(i * draws + k), &mut pmf, w);
            }
            pmf
        })
        .collect())
}

/// `log (1/L) sum_l p(t|z_l) p(z_l|x) / q(z_l|x,t)`, `z_l ~ q`.
fn vsi_iw_block(
    params: &VsiParams,
    obs: &Observations,
    encoder_input: ArrayView2<f64>,
    eps: ArrayView2<f64>,
    draws: usize,
) -> Result<Vec<f64>> {
    let prior = GaussRows::from_raw(&params.nets.prior.forward(obs.x.view())?);
    let post = GaussRows::from_raw(&params.nets.encoder.forward(encoder_input)?);
    let z = post.sample(eps, draws);
    let logits = params.decoder_block(z.view())?;
    let log_l = (draws as f64).ln();
    let mut terms = vec![0.0; draws];
    Ok((0..obs.len())
        .map(|i| {
            for (k, term) in terms.iter_mut().enumerate() {
                let r = i * draws + k;
                let row = logits.row(r);
                let ll = observation_loglik(row.as_slice().expect("standard layout"), obs.bins[i], obs.events[i], None);
                *term = ll + prior.log_density(i, z.row(r)) - post.log_density(i, z.row(r));
            }
            log_sum_exp(&terms) - log_l
        })
        .collect())
}

/// Weighted average of sampled representative times; `bins` holds `draws`
/// sampled bins per row of `x`.
fn vsi_point_block(
    params: &VsiParams,
    x: ArrayView2<f64>,
    bins: &[usize],
    eps: ArrayView2<f64>,
    draws: usize,
) -> Result<Vec<PointEstimate>> {
    let n = x.nrows();
    let prior = GaussRows::from_raw(&params.nets.prior.forward(x)?);
    let num_bins = params.grid.num_bins();
    let width = params.nets.encoder.input_width();
    let mut enc_in = Array2::zeros((n * draws, width));
    for i in 0..n {
        let xi = x.row(i).to_vec();
        for k in 0..draws {
            let r = i * draws + k;
            let input = params.encoder_input(&xi, &TargetEncoding::onehot(num_bins, bins[r]), true);
            enc_in.row_mut(r).assign(&ArrayView1::from(&input[..]));
        }
    }
    let post = GaussRows::from_raw(&params.nets.encoder.forward(enc_in.view())?);
    let m = params.latent_dim();
    let mut out = Vec::with_capacity(n);
    let mut log_w = vec![0.0; draws];
    for i in 0..n {
        let times: Vec<f64> = (0..draws).map(|k| params.grid.representative_time(bins[i * draws + k])).collect();
        for (k, lw) in log_w.iter_mut().enumerate() {
            let r = i * draws + k;
            let mut z = vec![0.0; m];
            for j in 0..m {
                z[j] = post.mean[[r, j]] + post.sd[[r, j]] * eps[[r, j]];
            }
            let z = ArrayView1::from(&z[..]);
            *lw = prior.log_density(i, z) - post.log_density(r, z);
        }
        out.push(weighted_mean(&times, &log_w));
    }
    Ok(out)
}

fn weighted_mean(times: &[f64], log_w: &[f64]) -> PointEstimate {
    let max = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max.is_finite() {
        let w: Vec<f64> = log_w.iter().map(|v| (v - max).exp()).collect();
        let total: f64 = w.iter().sum();
        let value = w.iter().zip(times).map(|(a, t)| a * t).sum::<f64>() / total;
        if total > 0.0 && value.is_finite() {
            return PointEstimate { time: value, degenerate: false };
        }
    }
    log::warn!("degenerate importance weights; using the unweighted mean");
    PointEstimate { time: times.iter().sum::<f64>() / times.len() as f64, degenerate: true }
}

fn sample_bins(pmf: &[f64], draws: usize, rng: &mut Rng) -> Result<Vec<usize>> {
    let dist = WeightedIndex::new(pmf).map_err(|e| Error::Numerical(format!("cannot sample from pmf: {e}")))?;
    Ok((0..draws).map(|_| dist.sample(rng)).collect())
}

impl VsiParams {
    fn decoder_block(&self, z: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.nets.decoder.forward(z)
    }
}

fn check_input(model: &SurvivalModel, x: &[f64]) -> Result<()> {
    if x.len() != model.input_width() {
        return Err(Error::Shape { expected: model.input_width(), actual: x.len() });
    }
    Ok(())
}

/// Predictive pmf for covariates `x`. Latent models average the decoder over
/// `samples` prior draws; the others are deterministic.
pub fn predict_distribution(
    model: &SurvivalModel,
    x: &[f64],
    samples: usize,
    rng: &mut Rng,
) -> Result<PredictedDistribution> {
    check_input(model, x)?;
    let pmf = match model {
        SurvivalModel::Vsi(p) => {
            let eps = noise(rng, samples, p.latent_dim());
            latent_predictive(&p.nets.prior, &p.nets.decoder, row_matrix(x).view(), eps.view(), samples)?.remove(0)
        }
        SurvivalModel::VsiNoq(p) => {
            let eps = noise(rng, samples, p.nets.latent_dim());
            latent_predictive(&p.nets.prior, &p.nets.decoder, row_matrix(x).view(), eps.view(), samples)?.remove(0)
        }
        SurvivalModel::Mlp(p) => p.pmf(x)?,
        SurvivalModel::AftWeibull(p) => aft_predict_pmf(p, x, &p.grid),
    };
    Ok(PredictedDistribution { pmf })
}

fn vsi_iw_single(
    params: &VsiParams,
    x: &[f64],
    t: f64,
    event: bool,
    samples: usize,
    rng: &mut Rng,
) -> Result<IwEstimate> {
    if samples == 0 {
        return Err(Error::Config("importance sample count must be at least 1".into()));
    }
    let target = params.target_for(t, event)?;
    let input = params.encoder_input(x, &target, event);
    let obs = Observations { x: row_matrix(x), bins: vec![params.grid.bin_of(t)], events: vec![event] };
    let eps = noise(rng, samples, params.latent_dim());
    let log_value = vsi_iw_block(params, &obs, row_matrix(&input).view(), eps.view(), samples)?[0];
    if log_value == f64::NEG_INFINITY {
        log::warn!("all importance weights vanished");
    }
    let kind = if event { ObservationKind::Event } else { ObservationKind::Censored };
    Ok(IwEstimate { log_value, samples, kind })
}

/// Importance-weighted `log p(t | x)` with the encoder as proposal.
pub fn iw_loglik_event(params: &VsiParams, x: &[f64], t: f64, samples: usize, rng: &mut Rng) -> Result<IwEstimate> {
    vsi_iw_single(params, x, t, true, samples, rng)
}

/// Importance-weighted `log S(t | x)` with the encoder (given the censored
/// target) as proposal.
pub fn iw_loglik_censored(params: &VsiParams, x: &[f64], t: f64, samples: usize, rng: &mut Rng) -> Result<IwEstimate> {
    vsi_iw_single(params, x, t, false, samples, rng)
}

pub fn survival_from_pmf(dist: &PredictedDistribution, bin: usize) -> f64 {
    dist.survival(bin)
}

/// Sampled times from the predictive pmf, each reweighted by
/// `p(z | x) / q(z | x, sampled time)` with `z` drawn from the encoder.
pub fn point_estimate_weighted(params: &VsiParams, x: &[f64], samples: usize, rng: &mut Rng) -> Result<PointEstimate> {
    let dist = predict_distribution(&SurvivalModel::Vsi(params.clone()), x, samples, rng)?;
    let bins = sample_bins(&dist.pmf, samples, rng)?;
    let eps = noise(rng, samples, params.latent_dim());
    Ok(vsi_point_block(params, row_matrix(x).view(), &bins, eps.view(), samples)?[0])
}

pub fn point_estimate_median(dist: &PredictedDistribution, grid: &TimeGrid) -> f64 {
    dist.quantile(grid, 0.5)
}

/// Everything the metrics need for one test subject.
#[derive(Debug, Clone, PartialEq)]
pub struct SubjectPrediction {
    pub pmf: Vec<f64>,
    pub loglik: f64,
    /// Importance-weighted average for the full model, pmf mean otherwise.
    pub point_time: f64,
    pub median_time: f64,
    pub degenerate_weights: bool,
}

impl SubjectPrediction {
    pub fn distribution(&self) -> PredictedDistribution {
        PredictedDistribution { pmf: self.pmf.clone() }
    }
}

/// Predictions for every subject of `dataset`. Subject `i` draws from its own
/// streams derived from `(seed, i)`, so results do not depend on batching.
pub fn predict_dataset(
    model: &SurvivalModel,
    dataset: &SurvivalDataset,
    settings: &EvalSettings,
    seed: u64,
) -> Result<Vec<SubjectPrediction>> {
    settings.validate()?;
    if dataset.width() != model.input_width() {
        let expected = model.schema().feature_names().join(", ");
        let actual = dataset.schema.feature_names().join(", ");
        return Err(Error::Data(format!("test covariates [{actual}] do not match the model's [{expected}]")));
    }
    let grid = model.grid();
    let obs = Observations::new(dataset, grid);
    let x = covariate_matrix(dataset);
    let n = dataset.len();
    let mut out = Vec::with_capacity(n);
    for start in (0..n).step_by(BLOCK) {
        let end = (start + BLOCK).min(n);
        let idx: Vec<usize> = (start..end).collect();
        let block_obs = obs.select(&idx);
        let xb = x.slice(s![start..end, ..]);
        let (pmfs, logliks, points) = match model {
            SurvivalModel::Vsi(p) => vsi_block_predictions(p, dataset, &block_obs, xb, start, settings, seed)?,
            SurvivalModel::VsiNoq(p) => {
                let m = p.nets.latent_dim();
                let eps = stacked_noise(seed, "predictive", start..end, settings.predictive_samples, m);
                let pmfs =
                    latent_predictive(&p.nets.prior, &p.nets.decoder, xb, eps.view(), settings.predictive_samples)?;
                let k = settings.noq_eval_samples;
                let eps = stacked_noise(seed, "loglik", start..end, k, m);
                let (ll, _) = noq_batch_loglik(&p.nets, &block_obs, eps.view(), k, None)?;
                let points = mean_points(&pmfs, grid);
                (pmfs, ll, points)
            }
            SurvivalModel::Mlp(p) => {
                let logits = p.net.forward(xb)?;
                let pmfs: Vec<Vec<f64>> = logits
                    .rows()
                    .into_iter()
                    .map(|r| {
                        let mut pmf = vec![0.0; r.len()];
                        softmax_into(r, &mut pmf, 1.0);
                        pmf
                    })
                    .collect();
                let ll = (0..idx.len())
                    .map(|i| {
                        let row = logits.row(i);
                        observation_loglik(
                            row.as_slice().expect("standard layout"),
                            block_obs.bins[i],
                            block_obs.events[i],
                            None,
                        )
                    })
                    .collect();
                let points = mean_points(&pmfs, grid);
                (pmfs, ll, points)
            }
            SurvivalModel::AftWeibull(p) => {
                let pmfs: Vec<Vec<f64>> =
                    idx.iter().map(|&i| aft_predict_pmf(p, &dataset.records[i].covariates, grid)).collect();
                let ll = pmfs
                    .iter()
                    .zip(&idx)
                    .map(|(pmf, &i)| observation_loglik_pmf(pmf, obs.bins[i], obs.events[i]))
                    .collect();
                let points = mean_points(&pmfs, grid);
                (pmfs, ll, points)
            }
        };
        for ((pmf, loglik), point) in pmfs.into_iter().zip(logliks).zip(points) {
            let median_time = grid.representative_time(quantile_bin(&pmf, 0.5));
            out.push(SubjectPrediction {
                pmf,
                loglik,
                point_time: point.time,
                median_time,
                degenerate_weights: point.degenerate,
            });
        }
    }
    let flagged = out.iter().filter(|p| p.degenerate_weights).count();
    if flagged > 0 {
        log::warn!("{flagged} subject(s) fell back to unweighted point estimates");
    }
    Ok(out)
}

type BlockOutput = (Vec<Vec<f64>>, Vec<f64>, Vec<PointEstimate>);

fn vsi_block_predictions(
    p: &VsiParams,
    dataset: &SurvivalDataset,
    obs: &Observations,
    xb: ArrayView2<f64>,
    start: usize,
    settings: &EvalSettings,
    seed: u64,
) -> Result<BlockOutput> {
    let m = p.latent_dim();
    let range = start..start + obs.len();
    let eps = stacked_noise(seed, "predictive", range.clone(), settings.predictive_samples, m);
    let pmfs = latent_predictive(&p.nets.prior, &p.nets.decoder, xb, eps.view(), settings.predictive_samples)?;

    let width = p.nets.encoder.input_width();
    let mut enc_in = Array2::zeros((obs.len(), width));
    for (row, i) in range.clone().enumerate() {
        let r = &dataset.records[i];
        let input = p.encoder_input(&r.covariates, &p.target_for(r.time, r.event)?, r.event);
        enc_in.row_mut(row).assign(&ArrayView1::from(&input[..]));
    }
    let eps = stacked_noise(seed, "loglik", range.clone(), settings.iw_samples, m);
    let ll = vsi_iw_block(p, obs, enc_in.view(), eps.view(), settings.iw_samples)?;

    let draws = settings.point_samples;
    let mut bins = Vec::with_capacity(obs.len() * draws);
    let mut eps = Array2::zeros((obs.len() * draws, m));
    for (row, i) in range.enumerate() {
        let mut rng = subject_rng(seed, "point", i);
        bins.extend(sample_bins(&pmfs[row], draws, &mut rng)?);
        eps.slice_mut(s![row * draws..(row + 1) * draws, ..]).assign(&noise(&mut rng, draws, m));
    }
    let points = vsi_point_block(p, xb, &bins, eps.view(), draws)?;
    Ok((pmfs, ll, points))
}

fn stacked_noise(seed: u64, stream: &str, range: std::ops::Range<usize>, draws: usize, m: usize) -> Array2<f64> {
    let mut eps = Array2::zeros((range.len() * draws, m));
    for (row, i) in range.enumerate() {
        let mut rng = subject_rng(seed, stream, i);
        eps.slice_mut(s![row * draws..(row + 1) * draws, ..]).assign(&noise(&mut rng, draws, m));
    }
    eps
}

fn mean_points(pmfs: &[Vec<f64>], grid: &TimeGrid) -> Vec<PointEstimate> {
    pmfs.iter()
        .map(|pmf| PointEstimate {
            time: PredictedDistribution { pmf: pmf.clone() }.mean_time(grid),
            degenerate: false,
        })
        .collect()
}

/// Per-subject CSV: id, observed data, likelihood, point estimates, pmf.
pub fn write_predictions_csv(path: &Path, dataset: &SurvivalDataset, predictions: &[SubjectPrediction]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    let num_bins = predictions.first().map_or(0, |p| p.pmf.len());
    let mut header = vec![
        "id".to_string(),
        "time".into(),
        "event".into(),
        "loglik".into(),
        "point_estimate".into(),
        "median".into(),
    ];
    header.extend((0..num_bins).map(|b| format!("pmf_{b}")));
    let csv_err = |e: csv::Error| Error::Data(format!("{}: {e}", path.display()));
    w.write_record(&header).map_err(csv_err)?;
    for (i, (r, p)) in dataset.records.iter().zip(predictions).enumerate() {
        let mut row = vec![
            i.to_string(),
            r.time.to_string(),
            u8::from(r.event).to_string(),
            p.loglik.to_string(),
            p.point_time.to_string(),
            p.median_time.to_string(),
        ];
        row.extend(p.pmf.iter().map(|v| v.to_string()));
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

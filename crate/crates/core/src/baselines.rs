//! Comparison models sharing the grid and metrics stack: the encoder-free
//! latent model (prior draws only), a direct multinomial network, and a
//! Weibull accelerated-failure-time fit.

use ndarray::{s, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::data::{CovariateSchema, SurvivalDataset};
use crate::discrete::{log_sum_exp, observation_loglik, softmax};
use crate::error::{Error, Result};
use crate::gaussian::{clamp_log_var, LOG_VAR_MAX, LOG_VAR_MIN};
use crate::grid::TimeGrid;
use crate::model::{covariate_matrix, early_stopping_loop, standard_normal_matrix, widths, TrainConfig, TrainingLog};
use crate::nn::{join, AdamState, Mlp, Parameters};
use crate::seed::{rng_for, Rng};

/// Marginals below this are floored before taking the log.
pub const MIN_LIKELIHOOD: f64 = 1e-300;

/// Covariates and observed (bin, event) pairs.
#[derive(Debug, Clone)]
pub struct Observations {
    pub x: Array2<f64>,
    pub bins: Vec<usize>,
    pub events: Vec<bool>,
}

impl Observations {
    pub fn new(dataset: &SurvivalDataset, grid: &TimeGrid) -> Self {
        Self {
            x: covariate_matrix(dataset),
            bins: dataset.records.iter().map(|r| grid.bin_of(r.time)).collect(),
            events: dataset.records.iter().map(|r| r.event).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.bins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bins.is_empty()
    }

    pub fn select(&self, idx: &[usize]) -> Self {
        Self {
            x: self.x.select(Axis(0), idx),
            bins: idx.iter().map(|&i| self.bins[i]).collect(),
            events: idx.iter().map(|&i| self.events[i]).collect(),
        }
    }
}

fn single(x: &[f64], bin: usize, event: bool) -> Observations {
    Observations {
        x: Array2::from_shape_vec((1, x.len()), x.to_vec()).expect("row"),
        bins: vec![bin],
        events: vec![event],
    }
}

fn training_grid(train: &SurvivalDataset, bins: usize) -> Result<TimeGrid> {
    let event_times: Vec<f64> = train.events().map(|r| r.time).collect();
    TimeGrid::from_event_times(&event_times, bins)
}

fn check_width(expected: usize, dataset: &SurvivalDataset) -> Result<()> {
    if dataset.width() != expected {
        return Err(Error::Shape { expected, actual: dataset.width() });
    }
    Ok(())
}

/// Mean of `f` over `rows` in chunks of 1000.
fn chunked_mean(n: usize, mut f: impl FnMut(&[usize]) -> Result<f64>) -> Result<f64> {
    let idx: Vec<usize> = (0..n).collect();
    let mut total = 0.0;
    for chunk in idx.chunks(1000) {
        total += f(chunk)?;
    }
    Ok(total / n as f64)
}

fn mask(raw: f64) -> f64 {
    if (LOG_VAR_MIN..=LOG_VAR_MAX).contains(&raw) {
        1.0
    } else {
        0.0
    }
}

// ---------------------------------------------------------------------------
// Encoder-free latent model

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoqNets {
    pub prior: Mlp,
    pub decoder: Mlp,
}

impl Parameters for NoqNets {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &[f64])) {
        self.prior.visit(&join(prefix, "prior"), f);
        self.decoder.visit(&join(prefix, "decoder"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut [f64])) {
        self.prior.visit_mut(&join(prefix, "prior"), f);
        self.decoder.visit_mut(&join(prefix, "decoder"), f);
    }
}

impl NoqNets {
    pub fn new(covariates: usize, num_bins: usize, cfg: &TrainConfig, rng: &mut Rng) -> Self {
        let m = cfg.latent_dim;
        Self {
            prior: Mlp::new(&widths(covariates, &cfg.prior_hidden, 2 * m), cfg.leaky_slope, rng),
            decoder: Mlp::new(&widths(m, &cfg.decoder_hidden, num_bins), cfg.leaky_slope, rng),
        }
    }

    pub fn latent_dim(&self) -> usize {
        self.decoder.input_width()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoqParams {
    pub nets: NoqNets,
    pub grid: TimeGrid,
    pub schema: CovariateSchema,
    pub config: TrainConfig,
}

/// Per-row Monte-Carlo marginal log-likelihood
/// `log mean_k p(t | z_k)`, `z_k = mu(x) + sd(x) * eps_k`.
///
/// `eps` holds `draws` consecutive rows per observation. With `grads`,
/// accumulates the gradient of the negative mean over the batch. The second
/// value counts rows whose marginal was floored at [`MIN_LIKELIHOOD`].
pub fn noq_batch_loglik(
    nets: &NoqNets,
    obs: &Observations,
    eps: ArrayView2<f64>,
    draws: usize,
    grads: Option<&mut NoqNets>,
) -> Result<(Vec<f64>, usize)> {
    let n = obs.len();
    let m = nets.latent_dim();
    if eps.nrows() != n * draws || eps.ncols() != m {
        return Err(Error::Shape { expected: n * draws, actual: eps.nrows() });
    }
    let (p_raw, p_cache) = nets.prior.forward_cached(obs.x.view(), None)?;
    let mu = p_raw.slice(s![.., ..m]);
    let sd = p_raw.slice(s![.., m..]).mapv(|v| (0.5 * clamp_log_var(v)).exp());
    let mut z = Array2::zeros((n * draws, m));
    for i in 0..n {
        for k in 0..draws {
            let r = i * draws + k;
            for j in 0..m {
                z[[r, j]] = mu[[i, j]] + sd[[i, j]] * eps[[r, j]];
            }
        }
    }
    let (logits, d_cache) = nets.decoder.forward_cached(z.view(), None)?;
    let num_bins = logits.ncols();
    let want_grad = grads.is_some();
    let mut d_logits = Array2::zeros((n * draws, num_bins));
    let floor = MIN_LIKELIHOOD.ln();
    let log_k = (draws as f64).ln();
    let mut out = Vec::with_capacity(n);
    let mut floored = 0;
    let mut per_draw = vec![0.0; draws];
    for i in 0..n {
        for (k, v) in per_draw.iter_mut().enumerate() {
            let r = i * draws + k;
            let row = logits.row(r);
            let row = row.as_slice().expect("standard layout");
            let mut g = d_logits.row_mut(r);
            *v = observation_loglik(row, obs.bins[i], obs.events[i], if want_grad { g.as_slice_mut() } else { None });
        }
        let lse = log_sum_exp(&per_draw);
        let ll = lse - log_k;
        if ll < floor || !ll.is_finite() {
            floored += 1;
            out.push(floor);
            d_logits.slice_mut(s![i * draws..(i + 1) * draws, ..]).fill(0.0);
            continue;
        }
        out.push(ll);
        if want_grad {
            for (k, v) in per_draw.iter().enumerate() {
                let w = (v - lse).exp();
                d_logits.row_mut(i * draws + k).mapv_inplace(|g| g * w);
            }
        }
    }
    if floored > 0 {
        log::warn!("{floored} marginal likelihood(s) floored at {MIN_LIKELIHOOD:e}");
    }
    if let Some(grads) = grads {
        d_logits *= -1.0 / n as f64;
        let dz = nets.decoder.backward(&d_cache, d_logits, &mut grads.decoder);
        let mut d_p = Array2::zeros((n, 2 * m));
        for i in 0..n {
            for k in 0..draws {
                let r = i * draws + k;
                for j in 0..m {
                    d_p[[i, j]] += dz[[r, j]];
                    d_p[[i, m + j]] += dz[[r, j]] * eps[[r, j]] * 0.5 * sd[[i, j]];
                }
            }
            for j in 0..m {
                d_p[[i, m + j]] *= mask(p_raw[[i, m + j]]);
            }
        }
        nets.prior.backward(&p_cache, d_p, &mut grads.prior);
    }
    Ok((out, floored))
}

impl NoqParams {
    pub fn init(train: &SurvivalDataset, cfg: &TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let grid = training_grid(train, cfg.bins)?;
        let mut rng = rng_for(cfg.seed, "init");
        let nets = NoqNets::new(train.width(), grid.num_bins(), cfg, &mut rng);
        Ok(Self { nets, grid, schema: train.schema.clone(), config: cfg.clone() })
    }

    /// Negative Monte-Carlo marginal log-likelihood of one observation.
    pub fn loss(&self, x: &[f64], t: f64, event: bool, draws: usize, rng: &mut Rng) -> Result<f64> {
        let obs = single(x, self.grid.bin_of(t), event);
        let eps = standard_normal_matrix(draws, self.nets.latent_dim(), rng);
        Ok(-noq_batch_loglik(&self.nets, &obs, eps.view(), draws, None)?.0[0])
    }

    pub fn mean_loglik(&self, obs: &Observations, draws: usize, rng: &mut Rng) -> Result<f64> {
        chunked_mean(obs.len(), |chunk| {
            let batch = obs.select(chunk);
            let eps = standard_normal_matrix(batch.len() * draws, self.nets.latent_dim(), rng);
            Ok(noq_batch_loglik(&self.nets, &batch, eps.view(), draws, None)?.0.iter().sum())
        })
    }
}

/// `-log mean_k p(t | z_k)` with `draws` prior samples.
pub fn noq_loss(params: &NoqParams, x: &[f64], t: f64, event: bool, draws: usize, rng: &mut Rng) -> Result<f64> {
    params.loss(x, t, event, draws, rng)
}

pub fn train_noq(
    train: &SurvivalDataset,
    valid: &SurvivalDataset,
    cfg: &TrainConfig,
) -> Result<(NoqParams, TrainingLog)> {
    let mut model = NoqParams::init(train, cfg)?;
    let train_obs = Observations::new(train, &model.grid);
    check_width(model.nets.prior.input_width(), valid)?;
    let valid_obs = Observations::new(valid, &model.grid);
    let draws = cfg.noq_train_samples;
    let m = cfg.latent_dim;
    let mut adam = AdamState::new(cfg.learning_rate, model.nets.num_params());
    let mut noise_rng = rng_for(cfg.seed, "noise");
    let base = model.clone();
    let mut nets = model.nets.clone();
    let log = early_stopping_loop(
        &mut nets,
        train_obs.len(),
        cfg,
        |nets, chunk, _, _| {
            let batch = train_obs.select(chunk);
            let eps = standard_normal_matrix(batch.len() * draws, m, &mut noise_rng);
            let mut grads = nets.zeroed();
            let (ll, _) = noq_batch_loglik(nets, &batch, eps.view(), draws, Some(&mut grads))?;
            adam.step(nets, &grads)?;
            Ok(ll.iter().sum::<f64>() / ll.len() as f64)
        },
        |nets| {
            let mut rng = rng_for(cfg.seed, "valid");
            let probe = NoqParams { nets: nets.clone(), ..base.clone() };
            probe.mean_loglik(&valid_obs, draws, &mut rng)
        },
    )?;
    model.nets = nets;
    Ok((model, log))
}

// ---------------------------------------------------------------------------
// Direct multinomial network

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectMlpParams {
    pub net: Mlp,
    pub dropout: f64,
    pub grid: TimeGrid,
    pub schema: CovariateSchema,
    pub config: TrainConfig,
}

/// Per-row log-likelihood of `softmax(net(x))`. Dropout applies only when
/// `dropout` is given; gradients accumulate for the negative batch mean.
pub fn direct_batch_loglik(
    net: &Mlp,
    obs: &Observations,
    dropout: Option<(f64, &mut Rng)>,
    grads: Option<&mut Mlp>,
) -> Result<Vec<f64>> {
    let n = obs.len();
    let (logits, cache) = net.forward_cached(obs.x.view(), dropout)?;
    let want_grad = grads.is_some();
    let mut d_logits = Array2::zeros(logits.raw_dim());
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let row = logits.row(i);
        let row = row.as_slice().expect("standard layout");
        let mut g = d_logits.row_mut(i);
        out.push(observation_loglik(row, obs.bins[i], obs.events[i], if want_grad { g.as_slice_mut() } else { None }));
    }
    if let Some(grads) = grads {
        d_logits *= -1.0 / n as f64;
        net.backward(&cache, d_logits, grads);
    }
    Ok(out)
}

impl DirectMlpParams {
    pub fn init(train: &SurvivalDataset, cfg: &TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let grid = training_grid(train, cfg.bins)?;
        let mut rng = rng_for(cfg.seed, "init");
        let net = Mlp::new(&widths(train.width(), &cfg.mlp_hidden, grid.num_bins()), cfg.leaky_slope, &mut rng);
        Ok(Self { net, dropout: cfg.mlp_dropout, grid, schema: train.schema.clone(), config: cfg.clone() })
    }

    pub fn pmf(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(softmax(&self.net.forward_row(x)?))
    }

    pub fn loss(&self, x: &[f64], t: f64, event: bool) -> Result<f64> {
        let obs = single(x, self.grid.bin_of(t), event);
        Ok(-direct_batch_loglik(&self.net, &obs, None, None)?[0])
    }

    pub fn mean_loglik(&self, obs: &Observations) -> Result<f64> {
        chunked_mean(obs.len(), |chunk| {
            Ok(direct_batch_loglik(&self.net, &obs.select(chunk), None, None)?.iter().sum())
        })
    }
}

/// Cross-entropy at the event bin, or `-log` of the tail mass when censored.
pub fn direct_mlp_loss(params: &DirectMlpParams, x: &[f64], t: f64, event: bool) -> Result<f64> {
    params.loss(x, t, event)
}

pub fn train_direct_mlp(
    train: &SurvivalDataset,
    valid: &SurvivalDataset,
    cfg: &TrainConfig,
) -> Result<(DirectMlpParams, TrainingLog)> {
    let mut model = DirectMlpParams::init(train, cfg)?;
    let train_obs = Observations::new(train, &model.grid);
    check_width(model.net.input_width(), valid)?;
    let valid_obs = Observations::new(valid, &model.grid);
    let mut adam = AdamState::new(cfg.learning_rate, model.net.num_params());
    let mut dropout_rng = rng_for(cfg.seed, "dropout");
    let rate = model.dropout;
    let base = model.clone();
    let mut net = model.net.clone();
    let log = early_stopping_loop(
        &mut net,
        train_obs.len(),
        cfg,
        |net, chunk, _, _| {
            let batch = train_obs.select(chunk);
            let mut grads = net.zeroed();
            let dropout = (rate > 0.0).then_some((rate, &mut dropout_rng));
            let ll = direct_batch_loglik(net, &batch, dropout, Some(&mut grads))?;
            adam.step(net, &grads)?;
            Ok(ll.iter().sum::<f64>() / ll.len() as f64)
        },
        |net| DirectMlpParams { net: net.clone(), ..base.clone() }.mean_loglik(&valid_obs),
    )?;
    model.net = net;
    Ok((model, log))
}

// ---------------------------------------------------------------------------
// Weibull accelerated failure time

/// `log T = mu + theta . x + sigma * W` with `W` standard minimum-extreme-value,
/// so `S(t | x) = exp(-exp(z))`, `z = (log t - mu - theta . x) / sigma`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AftCoefficients {
    pub mu: f64,
    pub log_sigma: f64,
    pub theta: Vec<f64>,
}

impl Parameters for AftCoefficients {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &[f64])) {
        f(&join(prefix, "mu"), std::slice::from_ref(&self.mu));
        f(&join(prefix, "log_sigma"), std::slice::from_ref(&self.log_sigma));
        f(&join(prefix, "theta"), &self.theta);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut [f64])) {
        f(&join(prefix, "mu"), std::slice::from_mut(&mut self.mu));
        f(&join(prefix, "log_sigma"), std::slice::from_mut(&mut self.log_sigma));
        f(&join(prefix, "theta"), &mut self.theta);
    }
}

impl AftCoefficients {
    pub fn sigma(&self) -> f64 {
        self.log_sigma.exp()
    }

    pub fn standardized(&self, x: &[f64], t: f64) -> f64 {
        let lin: f64 = self.theta.iter().zip(x).map(|(a, b)| a * b).sum();
        (t.ln() - self.mu - lin) / self.sigma()
    }

    pub fn cdf(&self, x: &[f64], t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        -(-self.standardized(x, t).exp()).exp_m1()
    }

    pub fn survival(&self, x: &[f64], t: f64) -> f64 {
        if t <= 0.0 {
            return 1.0;
        }
        (-self.standardized(x, t).exp()).exp()
    }
}

/// `delta (log nu - log t + z) - exp(z)` with `nu = 1 / sigma`. With `grad`,
/// adds `scale * d loglik / d coefficients`.
pub fn aft_loglik(
    coefs: &AftCoefficients,
    x: &[f64],
    t: f64,
    event: bool,
    grad: Option<(&mut AftCoefficients, f64)>,
) -> f64 {
    let z = coefs.standardized(x, t);
    let ez = z.exp();
    let d = if event { 1.0 } else { 0.0 };
    let value = d * (-coefs.log_sigma - t.ln() + z) - ez;
    if let Some((g, scale)) = grad {
        let dz = d - ez;
        let inv_sigma = 1.0 / coefs.sigma();
        g.mu -= scale * dz * inv_sigma;
        g.log_sigma += scale * (-d - dz * z);
        for (gj, xj) in g.theta.iter_mut().zip(x) {
            *gj -= scale * dz * xj * inv_sigma;
        }
    }
    value
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AftWeibullParams {
    pub coefficients: AftCoefficients,
    pub grid: TimeGrid,
    pub schema: CovariateSchema,
    /// Replacement for nonpositive observed times, if any were seen.
    pub zero_time: Option<f64>,
}

impl AftWeibullParams {
    pub fn mu(&self) -> f64 {
        self.coefficients.mu
    }

    pub fn sigma(&self) -> f64 {
        self.coefficients.sigma()
    }

    pub fn theta(&self) -> &[f64] {
        &self.coefficients.theta
    }

    pub fn mean_loglik(&self, dataset: &SurvivalDataset) -> f64 {
        let floor = self.zero_time.unwrap_or(f64::MIN_POSITIVE);
        dataset
            .records
            .iter()
            .map(|r| aft_loglik(&self.coefficients, &r.covariates, r.time.max(floor), r.event, None))
            .sum::<f64>()
            / dataset.len() as f64
    }
}

/// Positive stand-in for nonpositive times: smallest positive time times 1e-3.
fn zero_time_shift(dataset: &SurvivalDataset) -> Result<Option<f64>> {
    if dataset.records.iter().all(|r| r.time > 0.0) {
        return Ok(None);
    }
    let smallest = dataset.records.iter().map(|r| r.time).filter(|t| *t > 0.0).fold(f64::INFINITY, f64::min);
    if !smallest.is_finite() {
        return Err(Error::Data("Weibull fit needs at least one positive time".into()));
    }
    log::warn!("nonpositive observed times replaced by {:e}", smallest * 1e-3);
    Ok(Some(smallest * 1e-3))
}

/// Maximum likelihood by Adam ascent on `(mu, log sigma, theta)` with early
/// stopping on the validation log-likelihood.
pub fn fit_aft_weibull(
    train: &SurvivalDataset,
    valid: &SurvivalDataset,
    cfg: &TrainConfig,
) -> Result<(AftWeibullParams, TrainingLog)> {
    cfg.validate()?;
    check_width(train.width(), valid)?;
    let grid = training_grid(train, cfg.bins)?;
    let zero_time = zero_time_shift(train)?;
    let shift = |t: f64| if t > 0.0 { t } else { zero_time.unwrap_or(f64::MIN_POSITIVE) };
    let logs: Vec<f64> = train.records.iter().map(|r| shift(r.time).ln()).collect();
    let mean = logs.iter().sum::<f64>() / logs.len() as f64;
    let var = logs.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / logs.len() as f64;
    let mut coefs = AftCoefficients {
        mu: mean,
        log_sigma: if var > 0.0 { 0.5 * var.ln() } else { 0.0 },
        theta: vec![0.0; train.width()],
    };
    let mut adam = AdamState::new(cfg.learning_rate, coefs.num_params());
    let records = &train.records;
    let valid_records = &valid.records;
    let log = early_stopping_loop(
        &mut coefs,
        records.len(),
        cfg,
        |c, chunk, _, _| {
            let mut grads = c.zeroed();
            // Gradient of the negative mean for the descent step.
            let scale = -1.0 / chunk.len() as f64;
            let mut total = 0.0;
            for &i in chunk {
                let r = &records[i];
                total += aft_loglik(c, &r.covariates, shift(r.time), r.event, Some((&mut grads, scale)));
            }
            adam.step(c, &grads)?;
            Ok(total / chunk.len() as f64)
        },
        |c| {
            let total: f64 =
                valid_records.iter().map(|r| aft_loglik(c, &r.covariates, shift(r.time), r.event, None)).sum();
            Ok(total / valid_records.len() as f64)
        },
    )?;
    Ok((AftWeibullParams { coefficients: coefs, grid, schema: train.schema.clone(), zero_time }, log))
}

/// Weibull conditional distribution discretized on the grid: mass between
/// consecutive edges, with the overflow bin taking the survival past the
/// last edge.
pub fn aft_predict_pmf(params: &AftWeibullParams, x: &[f64], grid: &TimeGrid) -> Vec<f64> {
    let c = &params.coefficients;
    let mut pmf = Vec::with_capacity(grid.num_bins());
    let mut prev = 1.0;
    for &e in grid.edges() {
        let s = c.survival(x, e);
        pmf.push((prev - s).max(0.0));
        prev = s;
    }
    pmf.push(prev);
    pmf
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{SchemaColumn, SurvivalRecord};
    use rand::SeedableRng;
    use rand_distr::{Distribution, Open01};

    fn tiny_cfg() -> TrainConfig {
        TrainConfig {
            bins: 5,
            latent_dim: 2,
            prior_hidden: vec![3],
            decoder_hidden: vec![4],
            mlp_hidden: vec![4],
            ..TrainConfig::default()
        }
    }

    fn toy(n: usize) -> SurvivalDataset {
        let mut rng = Rng::seed_from_u64(8);
        let records = (0..n)
            .map(|i| {
                let x: f64 = Open01.sample(&mut rng);
                let u: f64 = Open01.sample(&mut rng);
                SurvivalRecord { covariates: vec![x - 0.5], time: 1.0 + 3.0 * u + x, event: i % 4 != 0 }
            })
            .collect();
        let schema = CovariateSchema {
            columns: vec![SchemaColumn {
                name: "x".into(),
                encoding: crate::data::ColumnEncoding::Continuous { median: 0.0, mean: 0.0, std: 1.0 },
            }],
        };
        SurvivalDataset { records, schema }
    }

    #[test]
    fn direct_uniform_logits() {
        let ds = toy(30);
        let mut p = DirectMlpParams::init(&ds, &tiny_cfg()).unwrap();
        p.net = p.net.zeroed();
        let k = p.grid.num_bins() as f64;
        assert!((direct_mlp_loss(&p, &[0.2], 1.5, true).unwrap() - k.ln()).abs() < 1e-12);
        let last = *p.grid.edges().last().unwrap();
        assert!((direct_mlp_loss(&p, &[0.2], last + 1.0, false).unwrap() - k.ln()).abs() < 1e-12);
    }

    #[test]
    fn noq_censored_in_overflow_uses_last_bin() {
        let ds = toy(30);
        let mut p = NoqParams::init(&ds, &tiny_cfg()).unwrap();
        p.nets = p.nets.zeroed();
        let k = p.grid.num_bins() as f64;
        let mut rng = Rng::seed_from_u64(1);
        let last = *p.grid.edges().last().unwrap();
        let v = noq_loss(&p, &[0.0], last + 5.0, false, 7, &mut rng).unwrap();
        assert!((v - k.ln()).abs() < 1e-12);
    }

    #[test]
    fn noq_single_draw_with_tiny_variance_is_deterministic_net() {
        let ds = toy(30);
        let mut p = NoqParams::init(&ds, &tiny_cfg()).unwrap();
        // Force log-variance outputs to the lower clamp.
        let last = p.nets.prior.layers.len() - 1;
        let m = p.nets.latent_dim();
        p.nets.prior.layers[last].bias.slice_mut(s![m..]).fill(-1e3);
        let x = [0.3];
        let raw = p.nets.prior.forward_row(&x).unwrap();
        let pmf = softmax(&p.nets.decoder.forward_row(&raw[..m]).unwrap());
        let bin = 2;
        let t = p.grid.representative_time(bin);
        let v = noq_loss(&p, &x, t, true, 1, &mut Rng::seed_from_u64(3)).unwrap();
        assert!((v + pmf[bin].ln()).abs() < 1e-2);
    }

    #[test]
    fn noq_variance_shrinks_with_draws() {
        let ds = toy(30);
        let p = NoqParams::init(&ds, &tiny_cfg()).unwrap();
        let spread = |k: usize| {
            let mut rng = Rng::seed_from_u64(k as u64);
            let v: Vec<f64> = (0..100).map(|_| noq_loss(&p, &[0.4], 2.0, true, k, &mut rng).unwrap()).collect();
            let mean = v.iter().sum::<f64>() / 100.0;
            v.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / 99.0
        };
        assert!(spread(50) < spread(2));
    }

    #[test]
    fn aft_pmf_normalized_and_ordered() {
        let grid = TimeGrid::from_edges(vec![1.0, 2.0, 3.0, 5.0]).unwrap();
        let params = AftWeibullParams {
            coefficients: AftCoefficients { mu: 1.0, log_sigma: -0.5, theta: vec![0.7] },
            grid: grid.clone(),
            schema: CovariateSchema { columns: vec![] },
            zero_time: None,
        };
        let pmf = aft_predict_pmf(&params, &[0.0], &grid);
        assert!((pmf.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        // Smaller theta.x means larger z at every time, hence a larger CDF.
        let a = aft_predict_pmf(&params, &[-1.0], &grid);
        let b = aft_predict_pmf(&params, &[1.0], &grid);
        for k in 0..grid.m() {
            assert!(crate::discrete::cdf_through(&a, k) > crate::discrete::cdf_through(&b, k));
        }
    }

    #[test]
    fn aft_exponential_special_case() {
        // sigma = 1: F(t) = 1 - exp(-t exp(-mu - theta.x)).
        let c = AftCoefficients { mu: 0.4, log_sigma: 0.0, theta: vec![0.3] };
        let x = [1.5];
        let rate = (-0.4f64 - 0.45).exp();
        for t in [0.2, 1.0, 4.0] {
            assert!((c.cdf(&x, t) - (1.0 - (-rate * t).exp())).abs() < 1e-14);
        }
    }

    #[test]
    fn aft_shifts_zero_times() {
        let mut ds = toy(40);
        ds.records[0].time = 0.0;
        let cfg = TrainConfig { max_epochs: 2, ..tiny_cfg() };
        let (p, _) = fit_aft_weibull(&ds, &ds, &cfg).unwrap();
        let smallest = ds.records[1..].iter().map(|r| r.time).fold(f64::INFINITY, f64::min);
        assert_eq!(p.zero_time, Some(smallest * 1e-3));
        assert!(p.mean_loglik(&ds).is_finite());
    }
}

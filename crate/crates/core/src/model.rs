//! The variational survival model: covariate-conditioned Gaussian prior,
//! `(x, t)`-conditioned Gaussian encoder, softmax decoder over the time bins,
//! and training on the event / censored evidence lower bounds.

use ndarray::{s, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{CovariateSchema, SurvivalDataset};
use crate::discrete::{observation_loglik, softmax};
use crate::error::{Error, Result};
use crate::gaussian::{clamp_log_var, kl_terms, kl_terms_grad, GaussianDiag, LOG_VAR_MAX, LOG_VAR_MIN};
use crate::grid::{encode_censored, encode_event, NelsonAalenCurve, TargetEncoding, TimeGrid};
use crate::nn::{join, AdamState, Mlp, Parameters, DEFAULT_LEAKY_SLOPE};
use crate::seed::{rng_for, Rng};

/// What the encoder sees for a censored subject.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CensoredInput {
    /// Nelson-Aalen tail mass after the censoring bin.
    #[default]
    SoftEncoding,
    /// One-hot of the observed bin plus an explicit event-indicator input.
    Indicator,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    pub latent_dim: usize,
    pub bins: usize,
    pub mc_samples_train: usize,
    pub leaky_slope: f64,
    pub prior_hidden: Vec<usize>,
    pub encoder_hidden: Vec<usize>,
    pub decoder_hidden: Vec<usize>,
    pub censored_input: CensoredInput,
    /// Prior draws per subject for the no-encoder ablation during training.
    pub noq_train_samples: usize,
    /// Hidden widths of the direct multinomial baseline.
    pub mlp_hidden: Vec<usize>,
    /// Dropout rate of the direct baseline (0 disables it).
    pub mlp_dropout: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 5e-4,
            batch_size: 100,
            max_epochs: 200,
            patience: 10,
            seed: 0,
            latent_dim: 32,
            bins: 100,
            mc_samples_train: 1,
            leaky_slope: DEFAULT_LEAKY_SLOPE,
            prior_hidden: vec![32, 32],
            encoder_hidden: vec![32, 32],
            decoder_hidden: vec![32, 32, 32],
            censored_input: CensoredInput::SoftEncoding,
            noq_train_samples: 10,
            mlp_hidden: vec![64, 64, 32],
            mlp_dropout: 0.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("batch_size", self.batch_size),
            ("max_epochs", self.max_epochs),
            ("latent_dim", self.latent_dim),
            ("mc_samples_train", self.mc_samples_train),
            ("noq_train_samples", self.noq_train_samples),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if self.bins < 2 {
            return Err(Error::Config("bins must be at least 2".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        if !(self.leaky_slope >= 0.0 && self.leaky_slope < 1.0) {
            return Err(Error::Config("leaky_slope must be in [0, 1)".into()));
        }
        if !(0.0..1.0).contains(&self.mlp_dropout) {
            return Err(Error::Config("mlp_dropout must be in [0, 1)".into()));
        }
        for (name, widths) in [
            ("prior_hidden", &self.prior_hidden),
            ("encoder_hidden", &self.encoder_hidden),
            ("decoder_hidden", &self.decoder_hidden),
            ("mlp_hidden", &self.mlp_hidden),
        ] {
            if widths.iter().any(|&w| w == 0) {
                return Err(Error::Config(format!("{name} widths must be positive")));
            }
        }
        Ok(())
    }
}

pub(crate) fn widths(input: usize, hidden: &[usize], output: usize) -> Vec<usize> {
    let mut w = vec![input];
    w.extend_from_slice(hidden);
    w.push(output);
    w
}

/// The three trainable networks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VsiNets {
    pub prior: Mlp,
    pub encoder: Mlp,
    pub decoder: Mlp,
}

impl Parameters for VsiNets {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &[f64])) {
        self.prior.visit(&join(prefix, "prior"), f);
        self.encoder.visit(&join(prefix, "encoder"), f);
        self.decoder.visit(&join(prefix, "decoder"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut [f64])) {
        self.prior.visit_mut(&join(prefix, "prior"), f);
        self.encoder.visit_mut(&join(prefix, "encoder"), f);
        self.decoder.visit_mut(&join(prefix, "decoder"), f);
    }
}

impl VsiNets {
    pub fn new(covariates: usize, num_bins: usize, cfg: &TrainConfig, rng: &mut Rng) -> Self {
        let m = cfg.latent_dim;
        let target_width = encoder_target_width(num_bins, cfg.censored_input);
        Self {
            prior: Mlp::new(&widths(covariates, &cfg.prior_hidden, 2 * m), cfg.leaky_slope, rng),
            encoder: Mlp::new(&widths(covariates + target_width, &cfg.encoder_hidden, 2 * m), cfg.leaky_slope, rng),
            decoder: Mlp::new(&widths(m, &cfg.decoder_hidden, num_bins), cfg.leaky_slope, rng),
        }
    }

    pub fn latent_dim(&self) -> usize {
        self.decoder.input_width()
    }
}

fn encoder_target_width(num_bins: usize, mode: CensoredInput) -> usize {
    match mode {
        CensoredInput::SoftEncoding => num_bins,
        CensoredInput::Indicator => num_bins + 1,
    }
}

/// Rows ready for the networks: covariates, encoder inputs, observed bins.
#[derive(Debug, Clone)]
pub struct EncodedRows {
    pub x: Array2<f64>,
    pub encoder_input: Array2<f64>,
    pub bins: Vec<usize>,
    pub events: Vec<bool>,
}

impl EncodedRows {
    pub fn len(&self) -> usize {
        self.bins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bins.is_empty()
    }

    pub fn select(&self, idx: &[usize]) -> Self {
        Self {
            x: self.x.select(Axis(0), idx),
            encoder_input: self.encoder_input.select(Axis(0), idx),
            bins: idx.iter().map(|&i| self.bins[i]).collect(),
            events: idx.iter().map(|&i| self.events[i]).collect(),
        }
    }

    /// Each row repeated `k` times consecutively.
    pub fn repeat(&self, k: usize) -> Self {
        let idx: Vec<usize> = (0..self.len()).flat_map(|i| std::iter::repeat_n(i, k)).collect();
        self.select(&idx)
    }
}

pub(crate) fn covariate_matrix(dataset: &SurvivalDataset) -> Array2<f64> {
    let p = dataset.width();
    let mut x = Array2::zeros((dataset.len(), p));
    for (i, r) in dataset.records.iter().enumerate() {
        for (j, v) in r.covariates.iter().enumerate() {
            x[[i, j]] = *v;
        }
    }
    x
}

/// Sample-level gradient bookkeeping: `d loss / d raw log_var` is zero where
/// the clamp was active.
fn clamp_mask(raw: f64) -> f64 {
    if (LOG_VAR_MIN..=LOG_VAR_MAX).contains(&raw) {
        1.0
    } else {
        0.0
    }
}

/// Per-row ELBO for a batch with fixed standard-normal noise `eps`
/// (`rows x latent_dim`). With `grads`, accumulates the gradient of
/// `-mean(ELBO)` over the batch.
pub fn batch_elbo(
    nets: &VsiNets,
    rows: &EncodedRows,
    eps: ArrayView2<f64>,
    grads: Option<&mut VsiNets>,
) -> Result<Vec<f64>> {
    let n = rows.len();
    let m = nets.latent_dim();
    let (p_raw, p_cache) = nets.prior.forward_cached(rows.x.view(), None)?;
    let (q_raw, q_cache) = nets.encoder.forward_cached(rows.encoder_input.view(), None)?;
    let mu_p = p_raw.slice(s![.., ..m]);
    let lv_p = p_raw.slice(s![.., m..]).mapv(clamp_log_var);
    let mu_q = q_raw.slice(s![.., ..m]);
    let lv_q = q_raw.slice(s![.., m..]).mapv(clamp_log_var);
    let sd_q = lv_q.mapv(|v| (0.5 * v).exp());
    let z = &mu_q + &(&sd_q * &eps);
    let (logits, d_cache) = nets.decoder.forward_cached(z.view(), None)?;

    let want_grad = grads.is_some();
    let num_bins = logits.ncols();
    let mut d_logits = Array2::zeros((n, num_bins));
    let mut elbo = Vec::with_capacity(n);
    for i in 0..n {
        let row = logits.row(i);
        let row = row.as_slice().expect("standard layout");
        let mut g = d_logits.row_mut(i);
        let recon = if want_grad {
            observation_loglik(row, rows.bins[i], rows.events[i], g.as_slice_mut())
        } else {
            observation_loglik(row, rows.bins[i], rows.events[i], None)
        };
        let kl = kl_terms(
            mu_q.row(i).as_slice().expect("layout"),
            lv_q.row(i).as_slice().expect("layout"),
            mu_p.row(i).as_slice().expect("layout"),
            lv_p.row(i).as_slice().expect("layout"),
        );
        elbo.push(recon - kl);
    }

    if let Some(grads) = grads {
        let scale = -1.0 / n as f64;
        d_logits *= scale;
        let dz = nets.decoder.backward(&d_cache, d_logits, &mut grads.decoder);
        let mut d_q = Array2::zeros((n, 2 * m));
        let mut d_p = Array2::zeros((n, 2 * m));
        for i in 0..n {
            let mut gq_mean = vec![0.0; m];
            let mut gq_lv = vec![0.0; m];
            let mut gp_mean = vec![0.0; m];
            let mut gp_lv = vec![0.0; m];
            // d(-ELBO)/d KL = +1, averaged over the batch.
            kl_terms_grad(
                mu_q.row(i).as_slice().expect("layout"),
                lv_q.row(i).as_slice().expect("layout"),
                mu_p.row(i).as_slice().expect("layout"),
                lv_p.row(i).as_slice().expect("layout"),
                -scale,
                (&mut gq_mean, &mut gq_lv, &mut gp_mean, &mut gp_lv),
            );
            for j in 0..m {
                let dzij = dz[[i, j]];
                d_q[[i, j]] = dzij + gq_mean[j];
                let lv_grad = dzij * eps[[i, j]] * 0.5 * sd_q[[i, j]] + gq_lv[j];
                d_q[[i, m + j]] = lv_grad * clamp_mask(q_raw[[i, m + j]]);
                d_p[[i, j]] = gp_mean[j];
                d_p[[i, m + j]] = gp_lv[j] * clamp_mask(p_raw[[i, m + j]]);
            }
        }
        nets.encoder.backward(&q_cache, d_q, &mut grads.encoder);
        nets.prior.backward(&p_cache, d_p, &mut grads.prior);
    }
    Ok(elbo)
}

pub(crate) fn standard_normal_matrix(rows: usize, cols: usize, rng: &mut Rng) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| StandardNormal.sample(rng))
}

/// One epoch's record in the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean training objective (higher is better); absent for the
    /// pre-training row.
    pub train_objective: Option<f64>,
    pub valid_objective: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub stopped_early: bool,
}

impl TrainingLog {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_objective,valid_objective\n");
        for e in &self.epochs {
            let train = e.train_objective.map(|v| v.to_string()).unwrap_or_default();
            out.push_str(&format!("{},{},{}\n", e.epoch, train, e.valid_objective));
        }
        out
    }
}

/// Shared epoch loop with best-validation checkpointing. `step` runs one
/// minibatch update and returns its mean objective; `validate` scores the
/// current parameters (higher is better).
pub(crate) fn early_stopping_loop<P: Clone>(
    params: &mut P,
    n_train: usize,
    cfg: &TrainConfig,
    mut step: impl FnMut(&mut P, &[usize], usize, usize) -> Result<f64>,
    mut validate: impl FnMut(&P) -> Result<f64>,
) -> Result<TrainingLog> {
    let mut log = TrainingLog::default();
    let mut best = validate(params)?;
    if !best.is_finite() {
        return Err(Error::Numerical("non-finite validation objective before training".into()));
    }
    log.epochs.push(EpochRecord { epoch: 0, train_objective: None, valid_objective: best });
    let mut best_params = params.clone();
    let mut shuffle_rng = rng_for(cfg.seed, "shuffle");
    let mut order: Vec<usize> = (0..n_train).collect();
    let mut stale = 0;
    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut shuffle_rng);
        let mut total = 0.0;
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let value = step(params, chunk, epoch, b)?;
            if !value.is_finite() {
                return Err(Error::Numerical(format!("non-finite objective at epoch {epoch}, batch {b}")));
            }
            total += value * chunk.len() as f64;
        }
        let valid = validate(params)?;
        if !valid.is_finite() {
            return Err(Error::Numerical(format!("non-finite validation objective at epoch {epoch}")));
        }
        log.epochs.push(EpochRecord { epoch, train_objective: Some(total / n_train as f64), valid_objective: valid });
        log::debug!("epoch {epoch}: train {:.5} valid {valid:.5}", total / n_train as f64);
        if valid > best {
            best = valid;
            best_params = params.clone();
            log.best_epoch = epoch;
            stale = 0;
        } else {
            stale += 1;
            if stale > cfg.patience {
                log.stopped_early = true;
                break;
            }
        }
    }
    *params = best_params;
    Ok(log)
}

/// A trained (or freshly initialized) model with everything needed to
/// predict from raw covariates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VsiParams {
    pub nets: VsiNets,
    pub grid: TimeGrid,
    pub schema: CovariateSchema,
    pub na_curve: NelsonAalenCurve,
    pub config: TrainConfig,
}

impl VsiParams {
    /// Grid and Nelson-Aalen curve fitted on `train`, networks initialized.
    pub fn init(train: &SurvivalDataset, cfg: &TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let event_times: Vec<f64> = train.events().map(|r| r.time).collect();
        let grid = TimeGrid::from_event_times(&event_times, cfg.bins)?;
        let na_curve = NelsonAalenCurve::fit(train, &grid);
        let mut rng = rng_for(cfg.seed, "init");
        let nets = VsiNets::new(train.width(), grid.num_bins(), cfg, &mut rng);
        Ok(Self { nets, grid, schema: train.schema.clone(), na_curve, config: cfg.clone() })
    }

    pub fn latent_dim(&self) -> usize {
        self.nets.latent_dim()
    }

    pub fn prior(&self, x: &[f64]) -> Result<GaussianDiag> {
        Ok(GaussianDiag::from_network_output(&self.nets.prior.forward_row(x)?))
    }

    /// Encoder input for an observation: target weights, plus the event
    /// indicator in [`CensoredInput::Indicator`] mode.
    pub fn encoder_input(&self, x: &[f64], target: &TargetEncoding, event: bool) -> Vec<f64> {
        let mut input = Vec::with_capacity(self.nets.encoder.input_width());
        input.extend_from_slice(x);
        input.extend_from_slice(&target.weights);
        if self.config.censored_input == CensoredInput::Indicator {
            input.push(if event { 1.0 } else { 0.0 });
        }
        input
    }

    pub fn encoder(&self, x: &[f64], target: &TargetEncoding) -> Result<GaussianDiag> {
        let event = target.kind == crate::grid::TargetKind::EventOnehot;
        let input = self.encoder_input(x, target, event);
        Ok(GaussianDiag::from_network_output(&self.nets.encoder.forward_row(&input)?))
    }

    pub fn decoder_logits(&self, z: &[f64]) -> Result<Vec<f64>> {
        self.nets.decoder.forward_row(z)
    }

    pub fn decoder_pmf(&self, z: &[f64]) -> Result<Vec<f64>> {
        Ok(softmax(&self.decoder_logits(z)?))
    }

    /// Encoder target for an observed `(t, event)` pair.
    pub fn target_for(&self, t: f64, event: bool) -> Result<TargetEncoding> {
        match (event, self.config.censored_input) {
            (true, _) => encode_event(t, &self.grid),
            (false, CensoredInput::SoftEncoding) => encode_censored(t, &self.grid, &self.na_curve),
            (false, CensoredInput::Indicator) => {
                let mut enc = encode_event(t, &self.grid)?;
                enc.kind = crate::grid::TargetKind::CensoredSoft;
                Ok(enc)
            }
        }
    }

    pub fn encode_rows(&self, dataset: &SurvivalDataset) -> Result<EncodedRows> {
        if dataset.width() != self.nets.prior.input_width() {
            return Err(Error::Shape { expected: self.nets.prior.input_width(), actual: dataset.width() });
        }
        let x = covariate_matrix(dataset);
        let width = self.nets.encoder.input_width();
        let mut encoder_input = Array2::zeros((dataset.len(), width));
        let mut bins = Vec::with_capacity(dataset.len());
        let mut events = Vec::with_capacity(dataset.len());
        for (i, r) in dataset.records.iter().enumerate() {
            let target = self.target_for(r.time, r.event)?;
            let input = self.encoder_input(&r.covariates, &target, r.event);
            encoder_input.row_mut(i).assign(&ndarray::ArrayView1::from(&input[..]));
            bins.push(self.grid.bin_of(r.time));
            events.push(r.event);
        }
        Ok(EncodedRows { x, encoder_input, bins, events })
    }

    fn single_row(&self, x: &[f64], t: f64, event: bool) -> Result<EncodedRows> {
        let target = self.target_for(t, event)?;
        let input = self.encoder_input(x, &target, event);
        Ok(EncodedRows {
            x: Array2::from_shape_vec((1, x.len()), x.to_vec()).expect("row"),
            encoder_input: Array2::from_shape_vec((1, input.len()), input).expect("row"),
            bins: vec![self.grid.bin_of(t)],
            events: vec![event],
        })
    }

    /// Monte-Carlo ELBO of one observation with `samples` reparameterized
    /// draws; returns the per-draw values.
    pub fn elbo_draws(&self, x: &[f64], t: f64, event: bool, samples: usize, rng: &mut Rng) -> Result<Vec<f64>> {
        let rows = self.single_row(x, t, event)?.repeat(samples);
        let eps = standard_normal_matrix(samples, self.latent_dim(), rng);
        batch_elbo(&self.nets, &rows, eps.view(), None)
    }

    /// `E_q[log p(t|z)] - KL(q || prior)` for an observed event.
    pub fn elbo_event(&self, x: &[f64], t: f64, rng: &mut Rng) -> Result<f64> {
        let draws = self.elbo_draws(x, t, true, self.config.mc_samples_train, rng)?;
        Ok(draws.iter().sum::<f64>() / draws.len() as f64)
    }

    /// `E_q[log S(t|z)] - KL(q || prior)` for a censored observation.
    pub fn elbo_censored(&self, x: &[f64], t: f64, rng: &mut Rng) -> Result<f64> {
        let draws = self.elbo_draws(x, t, false, self.config.mc_samples_train, rng)?;
        Ok(draws.iter().sum::<f64>() / draws.len() as f64)
    }

    /// Mean ELBO over a dataset with noise from `rng`.
    pub fn mean_elbo(&self, rows: &EncodedRows, rng: &mut Rng) -> Result<f64> {
        let mut total = 0.0;
        let idx: Vec<usize> = (0..rows.len()).collect();
        for chunk in idx.chunks(1000) {
            let batch = rows.select(chunk);
            let eps = standard_normal_matrix(batch.len(), self.latent_dim(), rng);
            total += batch_elbo(&self.nets, &batch, eps.view(), None)?.iter().sum::<f64>();
        }
        Ok(total / rows.len() as f64)
    }
}

/// Fits grid and population curve on `train`, then maximizes the mean ELBO
/// with Adam over shuffled minibatches, keeping the parameters of the best
/// validation epoch.
pub fn train(train: &SurvivalDataset, valid: &SurvivalDataset, cfg: &TrainConfig) -> Result<(VsiParams, TrainingLog)> {
    let mut model = VsiParams::init(train, cfg)?;
    let log = train_from(&mut model, train, valid)?;
    Ok((model, log))
}

/// Trains an initialized model in place.
pub fn train_from(model: &mut VsiParams, train: &SurvivalDataset, valid: &SurvivalDataset) -> Result<TrainingLog> {
    let cfg = model.config.clone();
    let train_rows = model.encode_rows(train)?;
    let valid_rows = model.encode_rows(valid)?;
    let mut adam = AdamState::new(cfg.learning_rate, model.nets.num_params());
    let mut noise_rng = rng_for(cfg.seed, "noise");
    let mc = cfg.mc_samples_train;
    let m = cfg.latent_dim;
    let base = model.clone();
    let mut nets = model.nets.clone();
    let log = early_stopping_loop(
        &mut nets,
        train_rows.len(),
        &cfg,
        |nets, chunk, _, _| {
            let mut batch = train_rows.select(chunk);
            if mc > 1 {
                batch = batch.repeat(mc);
            }
            let eps = standard_normal_matrix(batch.len(), m, &mut noise_rng);
            let mut grads = nets.zeroed();
            let elbo = batch_elbo(nets, &batch, eps.view(), Some(&mut grads))?;
            let mean = elbo.iter().sum::<f64>() / elbo.len() as f64;
            if mean.is_finite() {
                adam.step(nets, &grads)?;
            }
            Ok(mean)
        },
        |nets| {
            // Same noise every epoch so validation scores are comparable.
            let mut rng = rng_for(cfg.seed, "valid");
            let probe = VsiParams { nets: nets.clone(), ..base.clone() };
            probe.mean_elbo(&valid_rows, &mut rng)
        },
    )?;
    model.nets = nets;
    Ok(log)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{fit_schema, transform, RawTable, SurvivalRecord};
    use rand::SeedableRng;

    pub(crate) fn toy_dataset(n: usize, seed: u64) -> SurvivalDataset {
        let mut rng = Rng::seed_from_u64(seed);
        let records: Vec<SurvivalRecord> = (0..n)
            .map(|i| {
                let x0: f64 = StandardNormal.sample(&mut rng);
                let x1: f64 = StandardNormal.sample(&mut rng);
                let e: f64 = StandardNormal.sample(&mut rng);
                let t = (1.0 + 0.8 * x0 - 0.3 * x1 + 0.3 * e).exp();
                SurvivalRecord { covariates: vec![x0, x1], time: t, event: i % 3 != 0 }
            })
            .collect();
        let raw = RawTable::from_records(&["a", "b"], &records);
        let schema = fit_schema(&raw).unwrap();
        transform(&raw, &schema).unwrap()
    }

    fn tiny_cfg() -> TrainConfig {
        TrainConfig {
            bins: 6,
            latent_dim: 3,
            prior_hidden: vec![5],
            encoder_hidden: vec![4],
            decoder_hidden: vec![6, 5],
            max_epochs: 3,
            batch_size: 16,
            ..TrainConfig::default()
        }
    }

    fn zero_model(ds: &SurvivalDataset) -> VsiParams {
        let mut m = VsiParams::init(ds, &tiny_cfg()).unwrap();
        m.nets = m.nets.zeroed();
        m
    }

    #[test]
    fn zero_nets_give_standard_prior_and_uniform_decoder() {
        let ds = toy_dataset(60, 1);
        let m = zero_model(&ds);
        let p = m.prior(&[0.3, -0.2]).unwrap();
        assert_eq!(p, GaussianDiag::standard(3));
        let t = m.target_for(ds.records[1].time, true).unwrap();
        assert_eq!(m.encoder(&[0.3, -0.2], &t).unwrap(), GaussianDiag::standard(3));
        let pmf = m.decoder_pmf(&[1.0, 2.0, 3.0]).unwrap();
        let k = m.grid.num_bins() as f64;
        assert!(pmf.iter().all(|p| (p - 1.0 / k).abs() < 1e-15));
    }

    #[test]
    fn zero_nets_elbo_is_uniform_reconstruction() {
        let ds = toy_dataset(60, 2);
        let m = zero_model(&ds);
        let mut rng = Rng::seed_from_u64(0);
        let k = m.grid.num_bins() as f64;
        // Encoder equals prior, so the KL term vanishes.
        let e = m.elbo_event(&[0.1, 0.1], 1.0, &mut rng).unwrap();
        assert!((e + k.ln()).abs() < 1e-12);
        // Censored before the first edge: tail holds all but one bin.
        let c = m.elbo_censored(&[0.1, 0.1], 0.0, &mut rng).unwrap();
        assert!((c - ((k - 1.0) / k).ln()).abs() < 1e-12);
        // Censored in the last finite bin: only the overflow bin remains.
        let last = m.grid.edges()[m.grid.m() - 1];
        let c = m.elbo_censored(&[0.1, 0.1], last, &mut rng).unwrap();
        assert!((c - (1.0 / k).ln()).abs() < 1e-12);
    }

    #[test]
    fn targets_change_posterior() {
        let ds = toy_dataset(80, 3);
        let m = VsiParams::init(&ds, &tiny_cfg()).unwrap();
        let x = [0.5, -1.0];
        let t = m.grid.edges()[1];
        let a = m.encoder(&x, &m.target_for(t, true).unwrap()).unwrap();
        let b = m.encoder(&x, &m.target_for(t, false).unwrap()).unwrap();
        let c = m.encoder(&x, &m.target_for(m.grid.edges()[3], true).unwrap()).unwrap();
        assert_ne!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn mixed_batch_matches_single_rows() {
        let ds = toy_dataset(40, 4);
        let m = VsiParams::init(&ds, &tiny_cfg()).unwrap();
        let rows = m.encode_rows(&ds).unwrap();
        let eps = standard_normal_matrix(rows.len(), 3, &mut Rng::seed_from_u64(1));
        let batch = batch_elbo(&m.nets, &rows, eps.view(), None).unwrap();
        for i in 0..rows.len() {
            let single = rows.select(&[i]);
            let e = eps.slice(s![i..i + 1, ..]);
            let v = batch_elbo(&m.nets, &single, e, None).unwrap()[0];
            assert!((v - batch[i]).abs() < 1e-12);
        }
        // Permuting rows permutes values.
        let perm: Vec<usize> = (0..rows.len()).rev().collect();
        let eps_p = eps.select(Axis(0), &perm);
        let permuted = batch_elbo(&m.nets, &rows.select(&perm), eps_p.view(), None).unwrap();
        for (k, &i) in perm.iter().enumerate() {
            assert!((permuted[k] - batch[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn patience_zero_stops_after_first_stale_epoch() {
        let mut calls = 0;
        let mut p = 0.0f64;
        let cfg = TrainConfig { patience: 0, max_epochs: 50, ..TrainConfig::default() };
        let scores = [1.0, 2.0, 1.5, 3.0];
        let log = early_stopping_loop(
            &mut p,
            10,
            &cfg,
            |p, _, _, _| {
                *p += 1.0;
                Ok(0.0)
            },
            |_| {
                let v = scores[calls];
                calls += 1;
                Ok(v)
            },
        )
        .unwrap();
        assert!(log.stopped_early);
        assert_eq!(log.epochs.len(), 3);
        assert_eq!(log.best_epoch, 1);
        // Restored to the best epoch's parameters: one epoch of 1 batch.
        assert_eq!(p, 1.0);
    }

    #[test]
    fn training_is_deterministic() {
        let ds = toy_dataset(120, 5);
        let (a, la) = train(&ds, &ds, &tiny_cfg()).unwrap();
        let (b, lb) = train(&ds, &ds, &tiny_cfg()).unwrap();
        assert_eq!(a, b);
        assert_eq!(la, lb);
        assert!(la.epochs.len() <= 4);
    }
}

//! Cox-Gompertz synthetic cohort (uranium-miner style: age and radon
//! exposure) with uniform censoring, plus its exact conditional CDF.

use rand::Rng as _;
use rand_distr::{Distribution, Normal, Open01};
use serde::{Deserialize, Serialize};

use crate::data::{RawTable, SurvivalRecord};
use crate::error::{Error, Result};
use crate::seed::{rng_for, Rng};

pub const COVARIATE_NAMES: [&str; 2] = ["age", "radon"];

/// Censoring presets reaching roughly 100%, 50% and 30% observed events.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EventRate {
    #[serde(rename = "er100")]
    Er100,
    #[serde(rename = "er50")]
    Er50,
    #[serde(rename = "er30")]
    Er30,
}

impl EventRate {
    pub const ALL: [EventRate; 3] = [EventRate::Er100, EventRate::Er50, EventRate::Er30];

    pub fn censor_horizon(self) -> Option<f64> {
        match self {
            EventRate::Er100 => None,
            EventRate::Er50 => Some(100.0),
            EventRate::Er30 => Some(70.0),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            EventRate::Er100 => "er100",
            EventRate::Er50 => "er50",
            EventRate::Er30 => "er30",
        }
    }

    pub fn percent(self) -> u32 {
        match self {
            EventRate::Er100 => 100,
            EventRate::Er50 => 50,
            EventRate::Er30 => 30,
        }
    }

    pub fn from_percent(p: u32) -> Result<Self> {
        match p {
            100 => Ok(EventRate::Er100),
            50 => Ok(EventRate::Er50),
            30 => Ok(EventRate::Er30),
            other => Err(Error::Config(format!("event rate must be 100, 50 or 30, got {other}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GompertzConfig {
    pub alpha: f64,
    pub lambda: f64,
    pub beta_age: f64,
    pub beta_radon: f64,
    pub age_mean: f64,
    pub age_sd: f64,
    pub radon_mean: f64,
    pub radon_sd: f64,
    /// Upper end of the uniform censoring distribution; `None` disables censoring.
    pub censor_horizon: Option<f64>,
    pub n: usize,
    pub seed: u64,
}

impl Default for GompertzConfig {
    fn default() -> Self {
        Self {
            alpha: 0.2138,
            lambda: 7e-8,
            beta_age: 0.15,
            beta_radon: 0.001,
            age_mean: 24.3,
            age_sd: 8.4,
            radon_mean: 266.8,
            radon_sd: 507.8,
            censor_horizon: None,
            n: 50_000,
            seed: 0,
        }
    }
}

impl GompertzConfig {
    pub fn preset(rate: EventRate, n: usize, seed: u64) -> Self {
        Self { censor_horizon: rate.censor_horizon(), n, seed, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.lambda > 0.0) {
            return Err(Error::Config("alpha and lambda must be positive".into()));
        }
        if self.n == 0 {
            return Err(Error::Config("sample count must be at least 1".into()));
        }
        if !(self.age_sd >= 0.0 && self.radon_sd >= 0.0) {
            return Err(Error::Config("covariate standard deviations must be nonnegative".into()));
        }
        if let Some(c) = self.censor_horizon {
            if !(c > 0.0 && c.is_finite()) {
                return Err(Error::Config(format!("censoring horizon {c} must be positive and finite")));
            }
        }
        Ok(())
    }

    fn linear_predictor(&self, x: &[f64]) -> f64 {
        self.beta_age * x[0] + self.beta_radon * x[1]
    }

    /// Event time for uniform draw `u` by inverting the conditional CDF.
    pub fn event_time(&self, x: &[f64], u: f64) -> f64 {
        let scale = self.lambda * self.linear_predictor(x).exp();
        (-self.alpha * u.ln() / scale).ln_1p() / self.alpha
    }

    /// `F(t | x) = 1 - exp(-(lambda / alpha) e^{beta.x} (e^{alpha t} - 1))`.
    pub fn truth_cdf(&self, x: &[f64], t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        let cum_hazard = self.lambda / self.alpha * self.linear_predictor(x).exp() * (self.alpha * t).exp_m1();
        -(-cum_hazard).exp_m1()
    }

    pub fn hazard(&self, x: &[f64], t: f64) -> f64 {
        self.lambda * self.linear_predictor(x).exp() * (self.alpha * t).exp()
    }
}

/// Draws `cfg.n` records with covariates `(age, radon)` on their raw scale.
pub fn simulate(cfg: &GompertzConfig) -> Result<Vec<SurvivalRecord>> {
    cfg.validate()?;
    let mut rng: Rng = rng_for(cfg.seed, "simulate");
    let age = Normal::new(cfg.age_mean, cfg.age_sd).map_err(|e| Error::Config(e.to_string()))?;
    let radon = Normal::new(cfg.radon_mean, cfg.radon_sd).map_err(|e| Error::Config(e.to_string()))?;
    let mut records = Vec::with_capacity(cfg.n);
    for _ in 0..cfg.n {
        let x = vec![age.sample(&mut rng), radon.sample(&mut rng)];
        let u: f64 = Open01.sample(&mut rng);
        let event_time = cfg.event_time(&x, u);
        let (time, event) = match cfg.censor_horizon {
            None => (event_time, true),
            Some(c) => {
                let censor = rng.random::<f64>() * c;
                if event_time < censor {
                    (event_time, true)
                } else {
                    (censor, false)
                }
            }
        };
        records.push(SurvivalRecord { covariates: x, time, event });
    }
    Ok(records)
}

pub fn to_raw_table(records: &[SurvivalRecord]) -> RawTable {
    RawTable::from_records(&COVARIATE_NAMES, records)
}

//! Experiment configuration files (TOML: top-level keys plus `[data]`,
//! `[train]`, `[eval]` and `[metrics]` sections).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::ColumnRoles;
use crate::error::{Error, Result};
use crate::inference::{EvalSettings, ModelKind};
use crate::model::TrainConfig;
use crate::sim::{EventRate, GompertzConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSource {
    /// Cox-Gompertz cohort regenerated from the root seed.
    Synthetic {
        #[serde(default = "default_rate")]
        event_rate: u32,
        #[serde(default = "default_n")]
        n: usize,
        /// Overrides the horizon implied by `event_rate`.
        #[serde(default)]
        censor_horizon: Option<f64>,
    },
    Csv {
        path: PathBuf,
        time_column: String,
        event_column: String,
        #[serde(default)]
        covariates: Option<Vec<String>>,
        #[serde(default)]
        categorical: Vec<String>,
        #[serde(default)]
        delimiter: Option<char>,
        #[serde(default)]
        missing_token: Option<String>,
    },
}

fn default_rate() -> u32 {
    100
}

fn default_n() -> usize {
    50_000
}

impl Default for DataSource {
    fn default() -> Self {
        DataSource::Synthetic { event_rate: default_rate(), n: default_n(), censor_horizon: None }
    }
}

impl DataSource {
    pub fn roles(&self) -> Option<ColumnRoles> {
        match self {
            DataSource::Synthetic { .. } => None,
            DataSource::Csv {
                time_column, event_column, covariates, categorical, delimiter, missing_token, ..
            } => {
                let mut roles = ColumnRoles::new(time_column, event_column);
                roles.covariates = covariates.clone();
                roles.categorical = categorical.clone();
                if let Some(d) = delimiter {
                    roles.delimiter = *d;
                }
                roles.missing_token = missing_token.clone();
                Some(roles)
            }
        }
    }

    /// Simulator settings for a synthetic source.
    pub fn gompertz(&self, seed: u64) -> Result<Option<GompertzConfig>> {
        match self {
            DataSource::Synthetic { event_rate, n, censor_horizon } => {
                let rate = EventRate::from_percent(*event_rate)?;
                let mut cfg = GompertzConfig::preset(rate, *n, seed);
                if censor_horizon.is_some() {
                    cfg.censor_horizon = *censor_horizon;
                }
                cfg.validate()?;
                Ok(Some(cfg))
            }
            DataSource::Csv { .. } => Ok(None),
        }
    }

    /// Short name used in reports (`er50`, or the CSV file stem).
    pub fn label(&self) -> String {
        match self {
            DataSource::Synthetic { event_rate, censor_horizon: None, .. } => format!("er{event_rate}"),
            DataSource::Synthetic { event_rate, censor_horizon: Some(c), .. } => format!("er{event_rate}_c{c}"),
            DataSource::Csv { path, .. } => {
                path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "csv".into())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetricSettings {
    pub bootstrap_resamples: usize,
    /// Score ties earn no credit in the concordance metrics.
    pub strict_ties: bool,
}

impl Default for MetricSettings {
    fn default() -> Self {
        Self { bootstrap_resamples: 1000, strict_ties: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_model")]
    pub model: ModelKind,
    #[serde(default = "default_out")]
    pub out_dir: PathBuf,
    /// Root seeds for `reproduce-tables`; defaults to `[seed]`.
    #[serde(default)]
    pub sweep_seeds: Option<Vec<u64>>,
    #[serde(default)]
    pub data: DataSource,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub eval: EvalSettings,
    #[serde(default)]
    pub metrics: MetricSettings,
}

fn default_model() -> ModelKind {
    ModelKind::Vsi
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            model: default_model(),
            out_dir: default_out(),
            sweep_seeds: None,
            data: DataSource::default(),
            train: TrainConfig::default(),
            eval: EvalSettings::default(),
            metrics: MetricSettings::default(),
        }
    }
}

/// Command-line overrides applied on top of a file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub model: Option<ModelKind>,
    pub event_rate: Option<u32>,
    pub n: Option<usize>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn apply(&mut self, o: &Overrides) -> Result<()> {
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(d) = &o.out_dir {
            self.out_dir = d.clone();
        }
        if let Some(m) = o.model {
            self.model = m;
        }
        if o.event_rate.is_some() || o.n.is_some() {
            match &mut self.data {
                DataSource::Synthetic { event_rate, n, censor_horizon } => {
                    if let Some(r) = o.event_rate {
                        *event_rate = r;
                        *censor_horizon = None;
                    }
                    if let Some(v) = o.n {
                        *n = v;
                    }
                }
                DataSource::Csv { .. } => {
                    return Err(Error::Config("--event-rate and --N apply only to synthetic data".into()));
                }
            }
        }
        Ok(())
    }

    /// Checks everything up front; the training seed follows the root seed.
    pub fn validate(&mut self) -> Result<()> {
        self.train.seed = self.seed;
        self.train.validate()?;
        self.eval.validate()?;
        if self.metrics.bootstrap_resamples == 0 {
            return Err(Error::Config("bootstrap_resamples must be positive".into()));
        }
        self.data.gompertz(self.seed)?;
        if let DataSource::Csv { path, .. } = &self.data {
            if path.as_os_str().is_empty() {
                return Err(Error::Config("data path is empty".into()));
            }
        }
        if let Some(seeds) = &self.sweep_seeds {
            if seeds.is_empty() {
                return Err(Error::Config("sweep_seeds must not be empty".into()));
            }
        }
        Ok(())
    }

    /// First 16 hex digits of SHA-256 over the canonical TOML form.
    pub fn hash(&self) -> Result<String> {
        let digest = Sha256::digest(self.to_toml()?.as_bytes());
        Ok(digest[..8].iter().map(|b| format!("{b:02x}")).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_rejected() {
        assert!(matches!(ExperimentConfig::from_toml("seeed = 3"), Err(Error::Config(_))));
        assert!(ExperimentConfig::from_toml("[train]\nlearning_rte = 0.1").is_err());
        assert!(ExperimentConfig::from_toml("[data]\nsource = \"synthetic\"\nbogus = 1").is_err());
    }

    #[test]
    fn sections_parse() {
        let text = "seed = 4\nmodel = \"mlp\"\n[data]\nsource = \"synthetic\"\nevent_rate = 30\nn = 500\n[train]\nbins = 20\n[eval]\niw_samples = 10\n";
        let mut cfg = ExperimentConfig::from_toml(text).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.model, ModelKind::Mlp);
        assert_eq!(cfg.train.bins, 20);
        assert_eq!(cfg.train.seed, 4);
        assert_eq!(cfg.eval.iw_samples, 10);
        assert_eq!(cfg.data.label(), "er30");
        assert_eq!(cfg.data.gompertz(4).unwrap().unwrap().censor_horizon, Some(70.0));
    }

    #[test]
    fn bad_rate_or_horizon_is_config_error() {
        let mut cfg = ExperimentConfig::from_toml("[data]\nsource = \"synthetic\"\nevent_rate = 40").unwrap();
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        let mut cfg = ExperimentConfig::from_toml("[data]\nsource = \"synthetic\"\ncensor_horizon = -1.0").unwrap();
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn toml_round_trip_and_stable_hash() {
        let mut cfg = ExperimentConfig::default();
        cfg.validate().unwrap();
        let back = ExperimentConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.hash().unwrap(), cfg.hash().unwrap());
        assert_eq!(cfg.hash().unwrap().len(), 16);
    }

    #[test]
    fn overrides_apply() {
        let mut cfg = ExperimentConfig::default();
        cfg.apply(&Overrides { event_rate: Some(50), n: Some(100), seed: Some(2), ..Default::default() }).unwrap();
        assert_eq!(cfg.data.label(), "er50");
        assert_eq!(cfg.seed, 2);
    }
}

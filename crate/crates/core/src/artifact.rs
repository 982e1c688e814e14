//! Versioned JSON container for trained models.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::{ModelKind, SurvivalModel};

pub const FORMAT_TAG: &str = "vsi-survival-model";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelArtifact {
    pub format: String,
    pub version: u32,
    pub model_kind: ModelKind,
    pub config_hash: String,
    pub seed: u64,
    pub model: SurvivalModel,
}

impl ModelArtifact {
    pub fn new(model: SurvivalModel, config_hash: &str, seed: u64) -> Self {
        Self {
            format: FORMAT_TAG.into(),
            version: FORMAT_VERSION,
            model_kind: model.kind(),
            config_hash: config_hash.into(),
            seed,
            model,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Data(format!("cannot serialize model: {e}")))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let artifact: Self =
            serde_json::from_str(text).map_err(|e| Error::Data(format!("malformed model artifact: {e}")))?;
        if artifact.format != FORMAT_TAG {
            return Err(Error::Data(format!("not a model artifact (format tag `{}`)", artifact.format)));
        }
        if artifact.version != FORMAT_VERSION {
            return Err(Error::Data(format!("unsupported artifact version {}", artifact.version)));
        }
        if artifact.model_kind != artifact.model.kind() {
            return Err(Error::Data(format!(
                "artifact kind tag `{}` does not match its contents `{}`",
                artifact.model_kind,
                artifact.model.kind()
            )));
        }
        Ok(artifact)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

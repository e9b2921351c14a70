//! Versioned JSON checkpoints: named parameter tensors plus the model and
//! loss settings and the decision threshold needed to score new data.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::loss::LossConfig;
use crate::model::{Model, ModelConfig};
use crate::numcore::{NumError, ParamStore};
use crate::trainer::Fitted;

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;
const KIND: &str = "checkpoint";

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("malformed checkpoint: {0}")]
    Format(#[from] serde_json::Error),
    #[error("checkpoint format version {found} is not supported (expected {CHECKPOINT_FORMAT_VERSION})")]
    Version { found: u32 },
    #[error("not a checkpoint (kind {0:?})")]
    Kind(String),
    #[error("checkpoint does not match its model settings: {0}")]
    Shape(#[from] NumError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format_version: u32,
    pub kind: String,
    pub trial: usize,
    pub seed: u64,
    pub model: ModelConfig,
    pub loss: LossConfig,
    pub threshold: f64,
    pub params: ParamStore,
}

impl Checkpoint {
    pub fn from_fitted(fitted: &Fitted, trial: usize, seed: u64) -> Self {
        Checkpoint {
            format_version: CHECKPOINT_FORMAT_VERSION,
            kind: KIND.into(),
            trial,
            seed,
            model: fitted.model.config.clone(),
            loss: fitted.loss.clone(),
            threshold: fitted.threshold,
            params: fitted.model.params.clone(),
        }
    }

    /// Rebuilds the trained state, checking every tensor shape.
    pub fn into_fitted(self) -> Result<Fitted, CheckpointError> {
        self.loss.validate()?;
        let model = Model::from_parts(self.model, self.params)?;
        Ok(Fitted {
            model,
            loss: self.loss,
            threshold: self.threshold,
            curve: Vec::new(),
        })
    }

    pub fn to_json(&self) -> Result<Vec<u8>, CheckpointError> {
        let mut bytes = serde_json::to_vec_pretty(self)?;
        bytes.push(b'\n');
        Ok(bytes)
    }

    pub fn parse(text: &str) -> Result<Self, CheckpointError> {
        // Check the version before the full schema so old files get a clear
        // message rather than a field error.
        #[derive(Deserialize)]
        struct Head {
            format_version: u32,
            kind: String,
        }
        let head: Head = serde_json::from_str(text)?;
        if head.format_version != CHECKPOINT_FORMAT_VERSION {
            return Err(CheckpointError::Version {
                found: head.format_version,
            });
        }
        if head.kind != KIND {
            return Err(CheckpointError::Kind(head.kind));
        }
        Ok(serde_json::from_str(text)?)
    }

    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        crate::fsutil::write_atomic(path, &self.to_json()?).map_err(|source| CheckpointError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self, CheckpointError> {
        let text = std::fs::read_to_string(path).map_err(|source| CheckpointError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diagnostics::small_model_config;
    use crate::rng::substream;

    fn sample() -> Checkpoint {
        let model = Model::init(small_model_config(), &mut substream(1, "t", &[])).unwrap();
        let fitted = Fitted {
            model,
            loss: LossConfig::default(),
            threshold: 0.1 + 0.2,
            curve: Vec::new(),
        };
        Checkpoint::from_fitted(&fitted, 2, 99)
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let ck = sample();
        let back = Checkpoint::parse(std::str::from_utf8(&ck.to_json().unwrap()).unwrap()).unwrap();
        assert_eq!(back.threshold.to_bits(), ck.threshold.to_bits());
        for ((na, a), (nb, b)) in ck.params.iter().zip(back.params.iter()) {
            assert_eq!(na, nb);
            assert_eq!(a.shape(), b.shape());
            assert!(a.data().iter().zip(b.data()).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
        assert_eq!(back, ck);
        assert!(back.into_fitted().is_ok());
    }

    #[test]
    fn version_and_shape_errors() {
        let mut ck = sample();
        ck.format_version = 7;
        let text = String::from_utf8(ck.to_json().unwrap()).unwrap();
        assert!(matches!(Checkpoint::parse(&text), Err(CheckpointError::Version { found: 7 })));

        let mut ck = sample();
        ck.model.hidden = 9;
        assert!(matches!(ck.into_fitted(), Err(CheckpointError::Shape(_))));
        assert!(Checkpoint::parse("{}").is_err());
    }
}

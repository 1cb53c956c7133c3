//! Pipeline configuration with JSON overrides.

use std::fs;
use std::path::Path;

use scenetone_core::audio::TlrConfig;
use scenetone_core::evaluation::SpectrogramParams;
use scenetone_core::lstm::{TrainConfig, DEFAULT_HIDDEN};
use scenetone_core::visual::VisualConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnfisParams {
    pub n_mfs: usize,
    pub epochs: usize,
    pub learning_rate: f64,
}

impl Default for AnfisParams {
    fn default() -> Self {
        Self { n_mfs: 4, epochs: 50, learning_rate: 0.01 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LstmParams {
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub learning_rate: f64,
    pub grad_clip_norm: f64,
}

impl Default for LstmParams {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            hidden: DEFAULT_HIDDEN.to_vec(),
            epochs: t.epochs,
            learning_rate: t.learning_rate,
            grad_clip_norm: t.grad_clip_norm,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Seconds per audio segment and per visual descriptor.
    pub segment_duration: f64,
    pub tlr: TlrConfig,
    pub visual: VisualConfig,
    pub anfis: AnfisParams,
    pub lstm: LstmParams,
    /// Crossfade between generated segments, in samples.
    pub crossfade: usize,
    pub evaluation: SpectrogramParams,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            segment_duration: 0.5,
            tlr: TlrConfig::default(),
            visual: VisualConfig::default(),
            anfis: AnfisParams::default(),
            lstm: LstmParams::default(),
            crossfade: 0,
            evaluation: SpectrogramParams::default(),
            seed: 0,
        }
    }
}

/// Feature extraction settings that a stored feature set depends on.
#[derive(Serialize)]
struct ExtractionKey<'a> {
    segment_duration: f64,
    tlr: &'a TlrConfig,
    visual: &'a VisualConfig,
    visual_seed: u64,
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io("reading config", path, e))?;
        let cfg: Self = serde_json::from_str(&text).map_err(|e| Error::Validation(format!("config {}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Defaults overlaid by each JSON layer in turn; objects merge key by
    /// key, anything else replaces.
    pub fn layered(layers: &[&serde_json::Value]) -> Result<Self> {
        let mut merged = serde_json::to_value(Self::default()).expect("config serializes");
        for layer in layers {
            if !layer.is_object() {
                return Err(Error::Validation("configuration overrides must be a JSON object".into()));
            }
            merge(&mut merged, layer);
        }
        let cfg: Self = serde_json::from_value(merged).map_err(|e| Error::Validation(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads an override file without applying defaults.
    pub fn read_overrides(path: &Path) -> Result<serde_json::Value> {
        let text = fs::read_to_string(path).map_err(|e| Error::io("reading config", path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Validation(format!("config {}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Validation(m));
        if !(self.segment_duration > 0.0) || !self.segment_duration.is_finite() {
            return bad(format!("segment_duration must be positive, got {}", self.segment_duration));
        }
        if self.anfis.n_mfs == 0 || self.anfis.epochs == 0 || !(self.anfis.learning_rate > 0.0) {
            return bad("anfis needs n_mfs >= 1, epochs >= 1 and a positive learning rate".into());
        }
        if self.lstm.hidden.is_empty() || self.lstm.hidden.contains(&0) {
            return bad(format!("lstm hidden sizes must be non-empty and positive, got {:?}", self.lstm.hidden));
        }
        let t = &self.lstm;
        if t.epochs == 0 || !(t.learning_rate > 0.0) || !(t.grad_clip_norm > 0.0) {
            return bad("lstm needs epochs >= 1, a positive learning rate and a positive clip norm".into());
        }
        if self.visual.side == 0 {
            return bad("visual.side must be positive".into());
        }
        Ok(())
    }

    /// Visual settings with the pipeline seed applied.
    pub fn visual_config(&self) -> VisualConfig {
        VisualConfig { seed: self.seed, ..self.visual.clone() }
    }

    /// Training settings for the model of quadrant `index`.
    pub fn lstm_train_config(&self, index: usize) -> TrainConfig {
        TrainConfig {
            epochs: self.lstm.epochs,
            learning_rate: self.lstm.learning_rate,
            grad_clip_norm: self.lstm.grad_clip_norm,
            seed: self.lstm_seed(index),
        }
    }

    pub fn lstm_seed(&self, index: usize) -> u64 {
        self.seed.wrapping_mul(4).wrapping_add(index as u64)
    }

    /// Hex SHA-256 over the extraction settings.
    pub fn extraction_hash(&self) -> String {
        let key = ExtractionKey {
            segment_duration: self.segment_duration,
            tlr: &self.tlr,
            visual: &self.visual,
            visual_seed: self.seed,
        };
        let bytes = serde_json::to_vec(&key).expect("config serializes");
        hex(&Sha256::digest(&bytes))
    }
}

fn merge(base: &mut serde_json::Value, overlay: &serde_json::Value) {
    match (base, overlay) {
        (serde_json::Value::Object(b), serde_json::Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k.clone(), v.clone());
                    }
                }
            }
        }
        (slot, v) => *slot = v.clone(),
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

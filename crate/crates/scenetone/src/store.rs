//! Cached per-clip features: HSI and TLR descriptors with the raw segments.

use std::fs;
use std::path::Path;

use scenetone_core::anfis::EmotionQuadrant;
use scenetone_core::audio::{AudioSegment, TlrDescriptor};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::blob::{self, Tensor, TensorSet};
use crate::config::{hex, PipelineConfig};
use crate::error::{Error, Result};

pub const STORE_VERSION: u32 = 1;
const INDEX: &str = "store.json";
const BLOB: &str = "features.bin";

#[derive(Debug, Clone, PartialEq)]
pub struct StoredClip {
    pub id: String,
    pub mos_valence: f64,
    pub mos_arousal: f64,
    pub fps: f64,
    pub clip_tempo: f64,
    pub clip_tempo_defaulted: bool,
    pub hsi: Vec<Vec<f64>>,
    pub tlr: Vec<TlrDescriptor>,
    pub segments: Vec<AudioSegment>,
}

impl StoredClip {
    pub fn quadrant(&self) -> EmotionQuadrant {
        EmotionQuadrant::from_scores(self.mos_valence, self.mos_arousal)
    }

    pub fn mean_hsi(&self) -> Vec<f64> {
        scenetone_core::generation::mean_descriptor(&self.hsi).expect("stored clips have descriptors")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureStore {
    pub config_hash: String,
    /// Effective configuration at ingest time.
    pub config: PipelineConfig,
    pub segment_duration: f64,
    pub sample_rate: u32,
    pub clips: Vec<StoredClip>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ClipIndex {
    id: String,
    mos_valence: f64,
    mos_arousal: f64,
    fps: f64,
    clip_tempo: f64,
    clip_tempo_defaulted: bool,
    segments: usize,
    segment_len: usize,
    tempo_defaulted: Vec<bool>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StoreIndex {
    format_version: u32,
    config_hash: String,
    config: PipelineConfig,
    segment_duration: f64,
    sample_rate: u32,
    features_sha256: String,
    clips: Vec<ClipIndex>,
}

impl FeatureStore {
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io("creating store", dir, e))?;
        let mut tensors = Vec::new();
        let mut clips = Vec::new();
        for c in &self.clips {
            let n = c.segments.len();
            let dim = c.hsi.first().map_or(0, Vec::len);
            let seg_len = c.segments.first().map_or(0, |s| s.samples.len());
            tensors.push(Tensor::new(format!("{}/hsi", c.id), &[n, dim], c.hsi.concat()));
            tensors.push(Tensor::new(
                format!("{}/tlr", c.id),
                &[n, 3],
                c.tlr.iter().flat_map(|d| d.to_array()).collect(),
            ));
            tensors.push(Tensor::new(
                format!("{}/audio", c.id),
                &[n, seg_len],
                c.segments.iter().flat_map(|s| s.samples.iter().copied()).collect(),
            ));
            clips.push(ClipIndex {
                id: c.id.clone(),
                mos_valence: c.mos_valence,
                mos_arousal: c.mos_arousal,
                fps: c.fps,
                clip_tempo: c.clip_tempo,
                clip_tempo_defaulted: c.clip_tempo_defaulted,
                segments: n,
                segment_len: seg_len,
                tempo_defaulted: c.tlr.iter().map(|d| d.tempo_defaulted).collect(),
            });
        }
        let bytes = blob::encode(&tensors);
        let index = StoreIndex {
            format_version: STORE_VERSION,
            config_hash: self.config_hash.clone(),
            config: self.config.clone(),
            segment_duration: self.segment_duration,
            sample_rate: self.sample_rate,
            features_sha256: hex(&Sha256::digest(&bytes)),
            clips,
        };
        write_atomic(&dir.join(BLOB), &bytes)?;
        write_atomic(&dir.join(INDEX), &json_bytes(&index))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let index_path = dir.join(INDEX);
        let text = fs::read_to_string(&index_path).map_err(|e| Error::io("reading store index", &index_path, e))?;
        let index: StoreIndex =
            serde_json::from_str(&text).map_err(|e| Error::format("parsing store index", &index_path, e))?;
        if index.format_version != STORE_VERSION {
            return Err(Error::Validation(format!(
                "feature store version {} is not supported (expected {STORE_VERSION}); re-run ingest",
                index.format_version
            )));
        }
        let blob_path = dir.join(BLOB);
        let bytes = fs::read(&blob_path).map_err(|e| Error::io("reading features", &blob_path, e))?;
        if hex(&Sha256::digest(&bytes)) != index.features_sha256 {
            return Err(Error::format("reading features", &blob_path, "checksum mismatch"));
        }
        let set = TensorSet::read(&bytes, &blob_path)?;
        let mut clips = Vec::new();
        for c in index.clips {
            let hsi = set.get_shaped(&format!("{}/hsi", c.id), 2)?;
            let tlr = set.get_shaped(&format!("{}/tlr", c.id), 2)?;
            let audio = set.get_shaped(&format!("{}/audio", c.id), 2)?;
            let n = c.segments;
            if hsi.shape[0] != n || tlr.shape != [n, 3] || audio.shape != [n, c.segment_len] || c.tempo_defaulted.len() != n {
                return Err(Error::format("reading features", &blob_path, format!("clip '{}' has inconsistent shapes", c.id)));
            }
            let dim = hsi.shape[1];
            clips.push(StoredClip {
                hsi: hsi.data.chunks(dim.max(1)).map(<[f64]>::to_vec).take(n).collect(),
                tlr: tlr
                    .data
                    .chunks_exact(3)
                    .zip(&c.tempo_defaulted)
                    .map(|(v, &flag)| TlrDescriptor { tempo_defaulted: flag, ..TlrDescriptor::from_slice(v) })
                    .collect(),
                segments: (0..n)
                    .map(|k| AudioSegment {
                        samples: audio.data[k * c.segment_len..(k + 1) * c.segment_len].to_vec(),
                        sample_rate: index.sample_rate,
                        index: k,
                    })
                    .collect(),
                id: c.id,
                mos_valence: c.mos_valence,
                mos_arousal: c.mos_arousal,
                fps: c.fps,
                clip_tempo: c.clip_tempo,
                clip_tempo_defaulted: c.clip_tempo_defaulted,
            });
        }
        Ok(Self {
            config_hash: index.config_hash,
            config: index.config,
            segment_duration: index.segment_duration,
            sample_rate: index.sample_rate,
            clips,
        })
    }
}

pub(crate) fn json_bytes<T: Serialize>(value: &T) -> Vec<u8> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("index serializes");
    bytes.push(b'\n');
    bytes
}

/// Writes through a temporary sibling and renames it into place.
pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    fs::write(&tmp, bytes).map_err(|e| Error::io("writing", &tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io("renaming into place", path, e))
}

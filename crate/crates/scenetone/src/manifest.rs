//! Dataset manifest: clips with frame directories, audio and MOS labels.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use scenetone_core::anfis::{EmotionQuadrant, MOS_MAX, MOS_MIN};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClipEntry {
    pub id: String,
    /// Directory of numbered `.ppm` frames, relative to the manifest.
    pub frames_dir: PathBuf,
    /// PCM16 WAV, relative to the manifest.
    pub audio_path: PathBuf,
    pub fps: f64,
    pub mos_valence: f64,
    pub mos_arousal: f64,
}

impl ClipEntry {
    pub fn quadrant(&self) -> EmotionQuadrant {
        EmotionQuadrant::from_scores(self.mos_valence, self.mos_arousal)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub clips: Vec<ClipEntry>,
    /// Partial pipeline configuration applied beneath `--config`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<serde_json::Value>,
    /// Directory the relative paths resolve against; not serialized.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io("reading manifest", path, e))?;
        let mut m: Self =
            serde_json::from_str(&text).map_err(|e| Error::Validation(format!("manifest {}: {e}", path.display())))?;
        m.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        m.validate()?;
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self).expect("manifest serializes");
        text.push('\n');
        fs::write(path, text).map_err(|e| Error::io("writing manifest", path, e))
    }

    pub fn validate(&self) -> Result<()> {
        if self.clips.is_empty() {
            return Err(Error::Validation("manifest lists no clips".into()));
        }
        let mut seen: BTreeMap<&str, usize> = BTreeMap::new();
        for (k, clip) in self.clips.iter().enumerate() {
            if clip.id.is_empty() {
                return Err(Error::Validation(format!("clip #{k} has an empty id")));
            }
            if let Some(first) = seen.insert(&clip.id, k) {
                return Err(Error::Validation(format!(
                    "duplicate clip id '{}' at clips #{first} and #{k}",
                    clip.id
                )));
            }
            if !(clip.fps > 0.0) || !clip.fps.is_finite() {
                return Err(Error::Validation(format!("clip '{}': fps must be positive, got {}", clip.id, clip.fps)));
            }
            for (axis, v) in [("valence", clip.mos_valence), ("arousal", clip.mos_arousal)] {
                if !(MOS_MIN..=MOS_MAX).contains(&v) {
                    return Err(Error::Validation(format!(
                        "clip '{}': {axis} MOS {v} outside [{MOS_MIN}, {MOS_MAX}]",
                        clip.id
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }
}

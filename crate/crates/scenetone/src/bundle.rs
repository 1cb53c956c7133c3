//! Model bundle directory: a JSON index plus one tensor blob per model.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use scenetone_core::anfis::{AnfisModel, BellMf, EmotionQuadrant};
use scenetone_core::audio::AudioSegment;
use scenetone_core::generation::{DictionaryEntry, GenerationModels, SegmentDictionary};
use scenetone_core::lstm::DeepLstmModel;
use scenetone_core::stats::FeatureStats;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::blob::{self, Tensor, TensorSet};
use crate::config::{hex, PipelineConfig};
use crate::error::{Context, Error, Result};
use crate::store::json_bytes;

pub const FORMAT_VERSION: u32 = 1;
pub const INDEX: &str = "bundle.json";

#[derive(Debug, Clone, PartialEq)]
pub struct ModelBundle {
    pub models: GenerationModels,
    pub config: PipelineConfig,
}

impl ModelBundle {
    pub fn quadrants(&self) -> Vec<EmotionQuadrant> {
        self.models.lstm.keys().copied().collect()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EntryIndex {
    source_clip: String,
    index: usize,
    len: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LstmIndex {
    input_size: usize,
    hidden: Vec<usize>,
    output_size: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BundleIndex {
    format_version: u32,
    config: PipelineConfig,
    sample_rate: u32,
    quadrants: Vec<EmotionQuadrant>,
    lstm: BTreeMap<EmotionQuadrant, LstmIndex>,
    dictionaries: BTreeMap<EmotionQuadrant, Vec<EntryIndex>>,
    /// SHA-256 of every blob, by file name.
    files: BTreeMap<String, String>,
}

fn stats_tensors(prefix: &str, s: &FeatureStats) -> [Tensor; 2] {
    [
        Tensor::new(format!("{prefix}.mean"), &[s.mean.len()], s.mean.clone()),
        Tensor::new(format!("{prefix}.std"), &[s.std.len()], s.std.clone()),
    ]
}

fn anfis_tensors(m: &AnfisModel) -> Vec<Tensor> {
    let mut out: Vec<Tensor> = m
        .mfs
        .iter()
        .enumerate()
        .map(|(j, mfs)| {
            Tensor::new(format!("input{j}.mfs"), &[mfs.len(), 3], mfs.iter().flat_map(|f| [f.a, f.b, f.c]).collect())
        })
        .collect();
    out.push(Tensor::new("consequents", &[m.n_rules(), m.n_inputs() + 1], m.consequents.concat()));
    out
}

fn lstm_tensors(m: &DeepLstmModel) -> Vec<Tensor> {
    let mut shapes = Vec::new();
    let mut fan_in = m.input_size;
    for l in &m.layers {
        let g = 4 * l.hidden_size;
        shapes.extend([vec![g, fan_in], vec![g, l.hidden_size], vec![g]]);
        fan_in = l.hidden_size;
    }
    shapes.extend([vec![m.output_size(), fan_in], vec![m.output_size()]]);
    m.named_params()
        .into_iter()
        .zip(shapes)
        .map(|((name, p), shape)| Tensor::new(name, &shape, p.to_vec()))
        .collect()
}

fn dictionary_tensors(d: &SegmentDictionary) -> Vec<Tensor> {
    let keys: Vec<f64> = d.entries.iter().flat_map(|e| e.key.iter().copied()).collect();
    let samples: Vec<f64> = d.entries.iter().flat_map(|e| e.segment.samples.iter().copied()).collect();
    let dim = d.entries.first().map_or(0, |e| e.key.len());
    vec![
        Tensor::new("keys", &[d.entries.len(), dim], keys),
        Tensor::new("samples", &[samples.len()], samples),
    ]
}

fn lstm_file(q: EmotionQuadrant) -> String {
    format!("lstm_{q}.bin")
}

fn dict_file(q: EmotionQuadrant) -> String {
    format!("dict_{q}.bin")
}

/// Every blob of the bundle with its file name, in a fixed order.
fn blobs(b: &ModelBundle) -> Vec<(String, Vec<u8>)> {
    let m = &b.models;
    let mut out = Vec::new();
    let mut stats = stats_tensors("hsi", &m.hsi_stats).to_vec();
    stats.extend(stats_tensors("tlr", &m.tlr_stats));
    out.push(("stats.bin".to_owned(), blob::encode(&stats)));
    out.push(("anfis_valence.bin".to_owned(), blob::encode(&anfis_tensors(&m.anfis_valence))));
    out.push(("anfis_arousal.bin".to_owned(), blob::encode(&anfis_tensors(&m.anfis_arousal))));
    for (q, net) in &m.lstm {
        out.push((lstm_file(*q), blob::encode(&lstm_tensors(net))));
    }
    for (q, d) in &m.dictionaries {
        out.push((dict_file(*q), blob::encode(&dictionary_tensors(d))));
    }
    out
}

fn check_consistent(m: &GenerationModels) -> Result<()> {
    for q in m.lstm.keys() {
        if !m.dictionaries.contains_key(q) {
            return Err(Error::Validation(format!("bundle has an LSTM for {q} but no dictionary")));
        }
    }
    Ok(())
}

/// Writes the bundle into a sibling temporary directory and swaps it into
/// place, so a reader never sees a half-written bundle.
pub fn save_bundle(bundle: &ModelBundle, dir: &Path) -> Result<()> {
    check_consistent(&bundle.models)?;
    let m = &bundle.models;
    let blobs = blobs(bundle);
    let sample_rate = m.dictionaries.values().flat_map(|d| d.entries.first()).map(|e| e.segment.sample_rate).next();
    let index = BundleIndex {
        format_version: FORMAT_VERSION,
        config: bundle.config.clone(),
        sample_rate: sample_rate.unwrap_or(crate::wav::ANALYSIS_RATE),
        quadrants: bundle.quadrants(),
        lstm: m
            .lstm
            .iter()
            .map(|(q, n)| {
                (*q, LstmIndex { input_size: n.input_size, hidden: n.hidden_sizes(), output_size: n.output_size() })
            })
            .collect(),
        dictionaries: m
            .dictionaries
            .iter()
            .map(|(q, d)| {
                let entries = d
                    .entries
                    .iter()
                    .map(|e| EntryIndex {
                        source_clip: e.source_clip.clone(),
                        index: e.segment.index,
                        len: e.segment.samples.len(),
                    })
                    .collect();
                (*q, entries)
            })
            .collect(),
        files: blobs.iter().map(|(name, bytes)| (name.clone(), hex(&Sha256::digest(bytes)))).collect(),
    };

    let tmp = sibling(dir, "tmp");
    if tmp.exists() {
        fs::remove_dir_all(&tmp).map_err(|e| Error::io("clearing stale bundle", &tmp, e))?;
    }
    fs::create_dir_all(&tmp).map_err(|e| Error::io("creating bundle", &tmp, e))?;
    for (name, bytes) in &blobs {
        let p = tmp.join(name);
        fs::write(&p, bytes).map_err(|e| Error::io("writing bundle blob", &p, e))?;
    }
    let p = tmp.join(INDEX);
    fs::write(&p, json_bytes(&index)).map_err(|e| Error::io("writing bundle index", &p, e))?;

    let old = sibling(dir, "old");
    if dir.exists() {
        if old.exists() {
            fs::remove_dir_all(&old).map_err(|e| Error::io("clearing old bundle", &old, e))?;
        }
        fs::rename(dir, &old).map_err(|e| Error::io("moving old bundle aside", dir, e))?;
    }
    fs::rename(&tmp, dir).map_err(|e| Error::io("moving bundle into place", dir, e))?;
    if old.exists() {
        fs::remove_dir_all(&old).map_err(|e| Error::io("removing old bundle", &old, e))?;
    }
    Ok(())
}

fn sibling(dir: &Path, tag: &str) -> PathBuf {
    let mut name = dir.file_name().map(|n| n.to_owned()).unwrap_or_else(|| "bundle".into());
    name.push(format!(".{tag}"));
    dir.with_file_name(name)
}

fn read_blob(dir: &Path, name: &str, index: &BundleIndex) -> Result<TensorSet> {
    let path = &dir.join(name);
    let expected = index
        .files
        .get(name)
        .ok_or_else(|| Error::format("loading bundle", path, "blob is not listed in the index"))?;
    let bytes = fs::read(path).map_err(|e| Error::io("reading bundle blob", path, e))?;
    if &hex(&Sha256::digest(&bytes)) != expected {
        return Err(Error::format("loading bundle", path, "checksum mismatch"));
    }
    TensorSet::read(&bytes, path)
}

fn load_stats(set: &TensorSet, prefix: &str) -> Result<FeatureStats> {
    let mean = set.get_shaped(&format!("{prefix}.mean"), 1)?.data.clone();
    let std = set.get_shaped(&format!("{prefix}.std"), 1)?.data.clone();
    if mean.len() != std.len() {
        return Err(Error::format("loading bundle", &set.path, format!("{prefix} mean and std differ in length")));
    }
    Ok(FeatureStats { mean, std })
}

fn load_anfis(set: &TensorSet) -> Result<AnfisModel> {
    let bad = |m: String| Error::format("loading bundle", &set.path, m);
    let mut mfs = Vec::new();
    while let Ok(t) = set.get(&format!("input{}.mfs", mfs.len())) {
        if t.shape.len() != 2 || t.shape[1] != 3 {
            return Err(bad(format!("'{}' must have shape [m, 3]", t.name)));
        }
        mfs.push(t.data.chunks_exact(3).map(|p| BellMf { a: p[0], b: p[1], c: p[2] }).collect::<Vec<_>>());
    }
    let mut model = AnfisModel::new(mfs).context(|| format!("ANFIS in {}", set.path.display()))?;
    let cons = set.get_shaped("consequents", 2)?;
    if cons.shape != [model.n_rules(), model.n_inputs() + 1] {
        return Err(bad(format!("consequents have shape {:?}, rules need [{}, {}]", cons.shape, model.n_rules(), model.n_inputs() + 1)));
    }
    model.consequents = cons.data.chunks_exact(model.n_inputs() + 1).map(<[f64]>::to_vec).collect();
    Ok(model)
}

fn load_lstm(set: &TensorSet, meta: &LstmIndex) -> Result<DeepLstmModel> {
    let mut model = DeepLstmModel::new(meta.input_size, &meta.hidden, meta.output_size, 0)
        .context(|| format!("LSTM in {}", set.path.display()))?;
    let names: Vec<String> = model.named_params().into_iter().map(|(n, _)| n).collect();
    for (name, slot) in names.iter().zip(model.params_mut()) {
        let t = set.get(name)?;
        if t.data.len() != slot.len() {
            return Err(Error::format(
                "loading bundle",
                &set.path,
                format!("'{name}' has {} values, expected {}", t.data.len(), slot.len()),
            ));
        }
        slot.copy_from_slice(&t.data);
    }
    Ok(model)
}

fn load_dictionary(
    set: &TensorSet,
    q: EmotionQuadrant,
    meta: &[EntryIndex],
    stats: &FeatureStats,
    sample_rate: u32,
) -> Result<SegmentDictionary> {
    let bad = |m: String| Error::format("loading bundle", &set.path, m);
    let keys = set.get_shaped("keys", 2)?;
    let samples = set.get_shaped("samples", 1)?;
    if keys.shape[0] != meta.len() {
        return Err(bad(format!("{} keys for {} entries", keys.shape[0], meta.len())));
    }
    let total: usize = meta.iter().map(|e| e.len).sum();
    if total != samples.data.len() {
        return Err(bad(format!("{} samples stored, entries need {total}", samples.data.len())));
    }
    let dim = keys.shape[1];
    let mut offset = 0;
    let entries = meta
        .iter()
        .enumerate()
        .map(|(k, e)| {
            let seg = samples.data[offset..offset + e.len].to_vec();
            offset += e.len;
            DictionaryEntry {
                key: keys.data[k * dim..(k + 1) * dim].to_vec(),
                segment: AudioSegment { samples: seg, sample_rate, index: e.index },
                source_clip: e.source_clip.clone(),
            }
        })
        .collect();
    Ok(SegmentDictionary { quadrant: q, stats: stats.clone(), entries })
}

pub fn load_bundle(dir: &Path) -> Result<ModelBundle> {
    let index_path = dir.join(INDEX);
    let text = fs::read_to_string(&index_path).map_err(|e| Error::io("reading bundle index", &index_path, e))?;
    let raw: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| Error::format("parsing bundle index", &index_path, e))?;
    match raw.get("format_version").and_then(serde_json::Value::as_u64) {
        Some(v) if v == FORMAT_VERSION as u64 => {}
        Some(v) => {
            return Err(Error::Validation(format!(
                "bundle {} has format_version {v}; this build reads version {FORMAT_VERSION}, migration required",
                dir.display()
            )))
        }
        None => return Err(Error::format("parsing bundle index", &index_path, "missing format_version")),
    }
    let index: BundleIndex =
        serde_json::from_value(raw).map_err(|e| Error::format("parsing bundle index", &index_path, e))?;

    let stats = read_blob(dir, "stats.bin", &index)?;
    let hsi_stats = load_stats(&stats, "hsi")?;
    let tlr_stats = load_stats(&stats, "tlr")?;
    let anfis_valence = load_anfis(&read_blob(dir, "anfis_valence.bin", &index)?)?;
    let anfis_arousal = load_anfis(&read_blob(dir, "anfis_arousal.bin", &index)?)?;

    let mut lstm = BTreeMap::new();
    let mut dictionaries = BTreeMap::new();
    for &q in &index.quadrants {
        let meta = index
            .lstm
            .get(&q)
            .ok_or_else(|| Error::format("parsing bundle index", &index_path, format!("no LSTM entry for {q}")))?;
        lstm.insert(q, load_lstm(&read_blob(dir, &lstm_file(q), &index)?, meta)?);
        let entries = index
            .dictionaries
            .get(&q)
            .ok_or_else(|| Error::format("parsing bundle index", &index_path, format!("no dictionary entry for {q}")))?;
        let set = read_blob(dir, &dict_file(q), &index)?;
        dictionaries.insert(q, load_dictionary(&set, q, entries, &tlr_stats, index.sample_rate)?);
    }
    let models = GenerationModels { anfis_valence, anfis_arousal, lstm, dictionaries, hsi_stats, tlr_stats };
    check_consistent(&models)?;
    Ok(ModelBundle { models, config: index.config })
}

/// Human-readable summary for `inspect-bundle`.
pub fn describe(bundle: &ModelBundle) -> serde_json::Value {
    let m = &bundle.models;
    let per_quadrant: BTreeMap<String, serde_json::Value> = m
        .lstm
        .iter()
        .map(|(q, net)| {
            let dict = &m.dictionaries[q];
            let clips: std::collections::BTreeSet<&str> = dict.entries.iter().map(|e| e.source_clip.as_str()).collect();
            (
                q.to_string(),
                serde_json::json!({
                    "lstm_hidden": net.hidden_sizes(),
                    "lstm_parameters": net.param_count(),
                    "dictionary_entries": dict.len(),
                    "dictionary_clips": clips,
                }),
            )
        })
        .collect();
    serde_json::json!({
        "format_version": FORMAT_VERSION,
        "quadrants": per_quadrant,
        "anfis": {
            "inputs": m.anfis_valence.n_inputs(),
            "rules": m.anfis_valence.n_rules(),
        },
        "hsi_stats": m.hsi_stats,
        "tlr_stats": m.tlr_stats,
        "config": bundle.config,
    })
}

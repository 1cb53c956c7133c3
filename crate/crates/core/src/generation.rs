//! Concatenative synthesis from a dictionary of (TLR key, audio) pairs.
//!
//! Predicted descriptors are matched against stored keys by mean absolute
//! error in z-scored feature space; the winning segments are concatenated.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;


use crate::anfis::{classify_quadrant, AnfisModel, EmotionQuadrant, EmotionScore};
use crate::audio::{AudioSegment, TlrDescriptor};
use crate::dsp::AudioSignal;
use crate::error::invalid;
use crate::lstm::{self, DeepLstmModel};
use crate::stats::FeatureStats;
use crate::visual::{clip_descriptors, RgbImage, VisualConfig};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct DictionaryEntry {
    /// z-scored TLR descriptor.
    pub key: Vec<f64>,
    pub segment: AudioSegment,
    pub source_clip: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentDictionary {
    pub quadrant: EmotionQuadrant,
    pub stats: FeatureStats,
    pub entries: Vec<DictionaryEntry>,
}

impl SegmentDictionary {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Audio segments of one training clip with their descriptors.
#[derive(Debug, Clone, PartialEq)]
pub struct ClipSegments {
    pub id: String,
    pub segments: Vec<(TlrDescriptor, AudioSegment)>,
}

/// One entry per segment, clip order then segment order.
pub fn build_dictionary(clips: &[ClipSegments], stats: &FeatureStats, quadrant: EmotionQuadrant) -> Result<SegmentDictionary> {
    let entries: Vec<DictionaryEntry> = clips
        .iter()
        .flat_map(|clip| {
            clip.segments.iter().map(move |(tlr, seg)| DictionaryEntry {
                key: stats.normalize(&tlr.to_array()),
                segment: seg.clone(),
                source_clip: clip.id.clone(),
            })
        })
        .collect();
    if entries.is_empty() {
        return Err(invalid!("dictionary for {quadrant} would be empty"));
    }
    if entries.iter().any(|e| e.key.iter().any(|v| !v.is_finite())) {
        return Err(Error::NonFinite(alloc::format!("dictionary key for {quadrant}")));
    }
    Ok(SegmentDictionary { quadrant, stats: stats.clone(), entries })
}

/// `(1/n) sum |d_j - f_j|`.
pub fn mae(d: &[f64], f: &[f64]) -> Result<f64> {
    if d.len() != f.len() || d.is_empty() {
        return Err(invalid!("MAE needs equal non-empty vectors, got {} and {}", d.len(), f.len()));
    }
    Ok(d.iter().zip(f).map(|(a, b)| (a - b).abs()).sum::<f64>() / d.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Retrieval {
    pub index: usize,
    pub mae: f64,
}

/// Exhaustive scan; the lowest index wins ties.
pub fn nearest_segment(dict: &SegmentDictionary, query: &[f64]) -> Result<Retrieval> {
    let mut best: Option<Retrieval> = None;
    for (index, entry) in dict.entries.iter().enumerate() {
        let d = mae(query, &entry.key)?;
        if best.map_or(true, |b| d < b.mae) {
            best = Some(Retrieval { index, mae: d });
        }
    }
    best.ok_or_else(|| Error::InvalidState(alloc::format!("dictionary for {} is empty", dict.quadrant)))
}

/// Concatenates segments, optionally overlapping neighbours by `crossfade`
/// samples with a linear ramp.
pub fn assemble_audio(segments: &[&AudioSegment], crossfade: usize) -> Result<AudioSignal> {
    let first = segments.first().ok_or_else(|| invalid!("nothing to assemble"))?;
    let rate = first.sample_rate;
    if let Some(s) = segments.iter().find(|s| s.sample_rate != rate) {
        return Err(invalid!("mixed sample rates {rate} and {}", s.sample_rate));
    }
    if crossfade > 0 && segments.iter().any(|s| s.samples.len() < crossfade) {
        return Err(invalid!("segment shorter than the {crossfade}-sample crossfade"));
    }
    let total: usize = segments.iter().map(|s| s.samples.len()).sum::<usize>() - (segments.len() - 1) * crossfade;
    let mut out = Vec::with_capacity(total);
    out.extend_from_slice(&first.samples);
    for seg in &segments[1..] {
        let start = out.len() - crossfade;
        for k in 0..crossfade {
            let r = (k + 1) as f64 / (crossfade + 1) as f64;
            out[start + k] = out[start + k] * (1.0 - r) + seg.samples[k] * r;
        }
        out.extend_from_slice(&seg.samples[crossfade..]);
    }
    AudioSignal::new(out, rate)
}

/// Everything generation needs from training.
#[derive(Debug, Clone, PartialEq)]
pub struct GenerationModels {
    pub anfis_valence: AnfisModel,
    pub anfis_arousal: AnfisModel,
    pub lstm: BTreeMap<EmotionQuadrant, DeepLstmModel>,
    pub dictionaries: BTreeMap<EmotionQuadrant, SegmentDictionary>,
    pub hsi_stats: FeatureStats,
    pub tlr_stats: FeatureStats,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerationStep {
    /// LSTM output in z-scored TLR space.
    pub predicted_key: Vec<f64>,
    pub predicted: TlrDescriptor,
    pub entry_index: usize,
    pub mae: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerationReport {
    pub quadrant: EmotionQuadrant,
    pub score: EmotionScore,
    pub steps: Vec<GenerationStep>,
    pub total_duration: f64,
}

pub fn mean_descriptor(descriptors: &[Vec<f64>]) -> Result<Vec<f64>> {
    let first = descriptors.first().ok_or_else(|| invalid!("no descriptors"))?;
    let mut mean = alloc::vec![0.0; first.len()];
    for d in descriptors {
        for (m, v) in mean.iter_mut().zip(d) {
            *m += v;
        }
    }
    let n = descriptors.len() as f64;
    mean.iter_mut().for_each(|m| *m /= n);
    Ok(mean)
}

/// Classifies the clip from its mean descriptor, runs that quadrant's LSTM
/// over the per-step descriptors and retrieves one segment per step.
pub fn generate_from_descriptors(
    descriptors: &[Vec<f64>],
    models: &GenerationModels,
    crossfade: usize,
) -> Result<(AudioSignal, EmotionQuadrant, GenerationReport)> {
    let mean = mean_descriptor(descriptors)?;
    let (score, quadrant) = classify_quadrant(&models.anfis_valence, &models.anfis_arousal, &mean)?;
    let net = models.lstm.get(&quadrant).ok_or(Error::MissingModel(quadrant))?;
    let dict = models.dictionaries.get(&quadrant).ok_or(Error::MissingModel(quadrant))?;

    let inputs: Vec<Vec<f64>> = descriptors.iter().map(|d| models.hsi_stats.normalize(d)).collect();
    let outputs = lstm::forward(net, &inputs)?;
    let mut steps = Vec::with_capacity(outputs.len());
    for key in outputs {
        let hit = nearest_segment(dict, &key)?;
        steps.push(GenerationStep {
            predicted: TlrDescriptor::from_slice(&models.tlr_stats.denormalize(&key)),
            predicted_key: key,
            entry_index: hit.index,
            mae: hit.mae,
        });
    }
    let chosen: Vec<&AudioSegment> = steps.iter().map(|s| &dict.entries[s.entry_index].segment).collect();
    let audio = assemble_audio(&chosen, crossfade)?;
    let report = GenerationReport { quadrant, score, steps, total_duration: audio.duration() };
    Ok((audio, quadrant, report))
}

/// Frame-level entry point: one frame per output segment.
pub fn generate(
    frames: &[RgbImage],
    models: &GenerationModels,
    visual: &VisualConfig,
    crossfade: usize,
) -> Result<(AudioSignal, EmotionQuadrant, GenerationReport)> {
    let descriptors = clip_descriptors(frames, visual)?;
    generate_from_descriptors(&descriptors, models, crossfade)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn seg(value: f64, len: usize, index: usize) -> AudioSegment {
        AudioSegment { samples: vec![value; len], sample_rate: 8_000, index }
    }

    fn dict_from_keys(keys: &[[f64; 3]]) -> SegmentDictionary {
        SegmentDictionary {
            quadrant: EmotionQuadrant::PosHigh,
            stats: FeatureStats { mean: vec![0.0; 3], std: vec![1.0; 3] },
            entries: keys
                .iter()
                .enumerate()
                .map(|(i, k)| DictionaryEntry { key: k.to_vec(), segment: seg(i as f64, 4, i), source_clip: "c".into() })
                .collect(),
        }
    }

    #[test]
    fn mae_cases() {
        assert_eq!(mae(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap(), 0.0);
        assert_eq!(mae(&[1.0, 2.0, 3.0], &[2.0, 2.0, 5.0]).unwrap(), 1.0);
        assert!(mae(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn ties_go_to_lowest_index() {
        let d = dict_from_keys(&[[1.0, 0.0, 0.0], [-1.0, 0.0, 0.0], [0.0, 0.0, 0.0]]);
        assert_eq!(nearest_segment(&d, &[0.0, 0.0, 0.0]).unwrap().index, 2);
        assert_eq!(nearest_segment(&d, &[0.0, 0.5, 0.0]).unwrap().index, 2);
        let d = dict_from_keys(&[[1.0, 0.0, 0.0], [-1.0, 0.0, 0.0]]);
        assert_eq!(nearest_segment(&d, &[0.0, 0.0, 0.0]).unwrap().index, 0);
        let empty = dict_from_keys(&[]);
        assert!(matches!(nearest_segment(&empty, &[0.0; 3]), Err(Error::InvalidState(_))));
    }

    #[test]
    fn assembly_concatenates() {
        let a = seg(0.25, 5, 0);
        let b = seg(-0.5, 3, 1);
        assert_eq!(assemble_audio(&[&a], 0).unwrap().samples, a.samples);
        let joined = assemble_audio(&[&a, &b], 0).unwrap();
        assert_eq!(joined.samples, [a.samples.clone(), b.samples.clone()].concat());
        let other_rate = AudioSegment { sample_rate: 16_000, ..b.clone() };
        assert!(assemble_audio(&[&a, &other_rate], 0).is_err());
    }

    #[test]
    fn crossfade_ramp() {
        let a = seg(1.0, 8_000, 0);
        let b = seg(0.0, 8_000, 1);
        let out = assemble_audio(&[&a, &b], 80).unwrap();
        assert_eq!(out.len(), 16_000 - 80);
        let ramp = &out.samples[8_000 - 80..8_000];
        for k in 0..80 {
            let expected = 1.0 - (k + 1) as f64 / 81.0;
            assert!((ramp[k] - expected).abs() < 1e-15);
        }
        assert!(ramp.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn dictionary_keys_and_order() {
        let tlr = |t: f64| TlrDescriptor { tempo: t, loudness: -10.0 - t / 10.0, rhythm: t / 50.0, tempo_defaulted: false };
        let clips = vec![
            ClipSegments { id: "a".into(), segments: (0..3).map(|i| (tlr(100.0 + i as f64), seg(i as f64, 4, i))).collect() },
            ClipSegments { id: "b".into(), segments: (0..2).map(|i| (tlr(140.0 + i as f64), seg(9.0 + i as f64, 4, i))).collect() },
        ];
        let rows: Vec<[f64; 3]> = clips.iter().flat_map(|c| c.segments.iter().map(|(t, _)| t.to_array())).collect();
        let stats = FeatureStats::fit(&rows).unwrap();
        let d = build_dictionary(&clips, &stats, EmotionQuadrant::NegLow).unwrap();
        assert_eq!(d.len(), 5);
        assert_eq!(d.entries[3].source_clip, "b");
        assert_eq!(d.entries[3].segment.samples, vec![9.0; 4]);
        for dim in 0..3 {
            let m: f64 = d.entries.iter().map(|e| e.key[dim]).sum::<f64>() / 5.0;
            assert!(m.abs() < 1e-9);
        }
        for (i, e) in d.entries.iter().enumerate() {
            let hit = nearest_segment(&d, &e.key).unwrap();
            assert_eq!((hit.index, hit.mae), (i, 0.0));
        }
        assert!(build_dictionary(&[], &stats, EmotionQuadrant::NegLow).is_err());
    }
}

//! Ingest, train, generate and evaluate.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use log::{info, warn};
use rayon::prelude::*;
use scenetone_core::anfis::{self, classify_quadrant, grid_partition_init, EmotionQuadrant, EmotionScore};
use scenetone_core::audio::{extract_tlr, segment_audio, tempo};
use scenetone_core::dsp::AudioSignal;
use scenetone_core::evaluation::{db_mel_spectrogram, spectrogram_mae, spectrogram_raster};
use scenetone_core::generation::{self, build_dictionary, ClipSegments, GenerationModels, GenerationReport};
use scenetone_core::lstm::{bptt_train, DeepLstmModel};
use scenetone_core::stats::FeatureStats;
use scenetone_core::visual::{clip_descriptors, RgbImage};
use serde::Serialize;

use crate::bundle::ModelBundle;
use crate::config::PipelineConfig;
use crate::error::{Context, Error, Result};
use crate::manifest::{ClipEntry, Manifest};
use crate::pnm::{list_frames, read_ppm, write_pgm};
use crate::store::{json_bytes, FeatureStore, StoredClip};
use crate::wav::{read_wav, write_wav};

/// Upper bound on ANFIS rules; the grid partition grows as `n_mfs^inputs`.
pub const MAX_ANFIS_RULES: usize = 4_096;

/// Whole segments covered by `n_frames` frames.
pub fn segment_count(n_frames: usize, fps: f64, segment_duration: f64) -> usize {
    (n_frames as f64 / fps / segment_duration + 1e-9).floor() as usize
}

/// Frame shown at the start of segment `k`.
pub fn frame_index(k: usize, fps: f64, segment_duration: f64, n_frames: usize) -> usize {
    ((k as f64 * segment_duration * fps).round() as usize).min(n_frames.saturating_sub(1))
}

/// One frame per segment, at most `limit` of them; returns the frame
/// indices used alongside the images.
pub fn sample_frames(dir: &Path, fps: f64, segment_duration: f64, limit: Option<usize>) -> Result<(Vec<usize>, Vec<RgbImage>)> {
    let paths = list_frames(dir)?;
    if paths.is_empty() {
        return Err(Error::Validation(format!("no .ppm frames in {}", dir.display())));
    }
    let mut steps = segment_count(paths.len(), fps, segment_duration).max(1);
    if let Some(limit) = limit {
        steps = steps.min(limit);
    }
    let indices: Vec<usize> = (0..steps).map(|k| frame_index(k, fps, segment_duration, paths.len())).collect();
    let frames = indices.iter().map(|&i| read_ppm(&paths[i])).collect::<Result<Vec<_>>>()?;
    Ok((indices, frames))
}

fn ingest_clip(manifest: &Manifest, clip: &ClipEntry, cfg: &PipelineConfig) -> Result<StoredClip> {
    let audio_path = manifest.resolve(&clip.audio_path);
    let signal = read_wav(&audio_path)?;
    let mut segments = segment_audio(&signal, cfg.segment_duration).context(|| format!("segmenting {}", audio_path.display()))?;

    let frames_dir = manifest.resolve(&clip.frames_dir);
    let n_frames = list_frames(&frames_dir)?.len();
    if n_frames == 0 {
        return Err(Error::Validation(format!("no .ppm frames in {}", frames_dir.display())));
    }
    let video_segments = segment_count(n_frames, clip.fps, cfg.segment_duration).max(1);
    if video_segments.abs_diff(segments.len()) > 1 {
        warn!(
            "clip '{}': video covers {video_segments} segments but audio covers {}; truncating to the shorter",
            clip.id,
            segments.len()
        );
    }
    let n = video_segments.min(segments.len());
    segments.truncate(n);
    let (_, frames) = sample_frames(&frames_dir, clip.fps, cfg.segment_duration, Some(n))?;
    let hsi = clip_descriptors(&frames, &cfg.visual_config()).context(|| format!("describing frames of {}", frames_dir.display()))?;

    let clip_est = tempo(&signal, &cfg.tlr.tempo).context(|| format!("tempo of {}", audio_path.display()))?;
    let fallback = (!clip_est.defaulted).then_some(clip_est.bpm);
    let tlr = segments
        .iter()
        .map(|s| extract_tlr(s, fallback, &cfg.tlr))
        .collect::<scenetone_core::Result<Vec<_>>>()
        .context(|| format!("audio features of {}", audio_path.display()))?;
    info!(
        "clip '{}': {n} segments, clip tempo {:.1} bpm{}",
        clip.id,
        clip_est.bpm,
        if clip_est.defaulted { " (default)" } else { "" }
    );
    Ok(StoredClip {
        id: clip.id.clone(),
        mos_valence: clip.mos_valence,
        mos_arousal: clip.mos_arousal,
        fps: clip.fps,
        clip_tempo: clip_est.bpm,
        clip_tempo_defaulted: clip_est.defaulted,
        hsi,
        tlr,
        segments,
    })
}

/// Extracts descriptors for every clip of the manifest, clips in parallel.
pub fn ingest(manifest: &Manifest, cfg: &PipelineConfig) -> Result<FeatureStore> {
    manifest.validate()?;
    let clips = manifest
        .clips
        .par_iter()
        .map(|clip| ingest_clip(manifest, clip, cfg).map_err(|e| e.prefixed(&format!("clip '{}'", clip.id))))
        .collect::<Result<Vec<_>>>()?;
    Ok(FeatureStore {
        config_hash: cfg.extraction_hash(),
        config: cfg.clone(),
        segment_duration: cfg.segment_duration,
        sample_rate: crate::wav::ANALYSIS_RATE,
        clips,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainSummary {
    pub clips: usize,
    pub clips_per_quadrant: BTreeMap<EmotionQuadrant, usize>,
    /// Share of clips whose thresholded ANFIS prediction matches the label.
    pub anfis_accuracy: f64,
    pub anfis_rmse_valence: f64,
    pub anfis_rmse_arousal: f64,
    pub lstm_final_loss: BTreeMap<EmotionQuadrant, f64>,
    pub omitted_quadrants: Vec<EmotionQuadrant>,
}

fn input_ranges(xs: &[Vec<f64>]) -> Vec<(f64, f64)> {
    (0..xs[0].len())
        .map(|j| {
            xs.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(x[j]), hi.max(x[j])))
        })
        .collect()
}

pub fn train(store: &FeatureStore, cfg: &PipelineConfig) -> Result<(ModelBundle, TrainSummary)> {
    if store.config_hash != cfg.extraction_hash() {
        return Err(Error::Validation(
            "feature store was extracted with different segment, audio or visual settings; re-run ingest".into(),
        ));
    }
    if store.clips.is_empty() || store.clips.iter().any(|c| c.segments.is_empty()) {
        return Err(Error::Validation("feature store has no clips or a clip without segments".into()));
    }

    let hsi_rows: Vec<&[f64]> = store.clips.iter().flat_map(|c| c.hsi.iter().map(Vec::as_slice)).collect();
    let hsi_stats = FeatureStats::fit(&hsi_rows).context(|| "HSI statistics".into())?;
    let tlr_rows: Vec<[f64; 3]> = store.clips.iter().flat_map(|c| c.tlr.iter().map(|d| d.to_array())).collect();
    let tlr_stats = FeatureStats::fit(&tlr_rows).context(|| "TLR statistics".into())?;

    let xs: Vec<Vec<f64>> = store.clips.iter().map(StoredClip::mean_hsi).collect();
    let n_rules = cfg.anfis.n_mfs.checked_pow(xs[0].len() as u32).unwrap_or(usize::MAX);
    if n_rules > MAX_ANFIS_RULES {
        return Err(Error::Validation(format!(
            "{} MFs over {} inputs gives {n_rules} rules (limit {MAX_ANFIS_RULES})",
            cfg.anfis.n_mfs,
            xs[0].len()
        )));
    }
    let init = grid_partition_init(&input_ranges(&xs), cfg.anfis.n_mfs).context(|| "ANFIS init".into())?;
    let fit = |ys: Vec<f64>, axis: &str| {
        anfis::train_hybrid(&init, &xs, &ys, cfg.anfis.epochs, cfg.anfis.learning_rate)
            .context(|| format!("training the {axis} ANFIS"))
    };
    let (anfis_valence, trace_v) = fit(store.clips.iter().map(|c| c.mos_valence).collect(), "valence")?;
    let (anfis_arousal, trace_a) = fit(store.clips.iter().map(|c| c.mos_arousal).collect(), "arousal")?;
    let mut agree = 0;
    for (clip, x) in store.clips.iter().zip(&xs) {
        let (_, q) = classify_quadrant(&anfis_valence, &anfis_arousal, x).context(|| "ANFIS inference".into())?;
        agree += usize::from(q == clip.quadrant());
    }

    let mut by_quadrant: BTreeMap<EmotionQuadrant, Vec<&StoredClip>> = BTreeMap::new();
    for clip in &store.clips {
        by_quadrant.entry(clip.quadrant()).or_default().push(clip);
    }
    let omitted: Vec<EmotionQuadrant> =
        EmotionQuadrant::ALL.into_iter().filter(|q| !by_quadrant.contains_key(q)).collect();
    for q in &omitted {
        info!("no training clips for {q}; its model is omitted");
    }

    let trained = by_quadrant
        .par_iter()
        .map(|(&q, clips)| {
            let sequences: Vec<(Vec<Vec<f64>>, Vec<Vec<f64>>)> = clips
                .iter()
                .map(|c| {
                    let x = c.hsi.iter().map(|h| hsi_stats.normalize(h)).collect();
                    let y = c.tlr.iter().map(|d| tlr_stats.normalize(&d.to_array())).collect();
                    (x, y)
                })
                .collect();
            let init = DeepLstmModel::new(hsi_stats.dim(), &cfg.lstm.hidden, 3, cfg.lstm_seed(q.index()))
                .context(|| format!("LSTM for {q}"))?;
            let (net, report) =
                bptt_train(&init, &sequences, &cfg.lstm_train_config(q.index())).context(|| format!("training the {q} LSTM"))?;
            let segments: Vec<ClipSegments> = clips
                .iter()
                .map(|c| ClipSegments {
                    id: c.id.clone(),
                    segments: c.tlr.iter().copied().zip(c.segments.iter().cloned()).collect(),
                })
                .collect();
            let dict = build_dictionary(&segments, &tlr_stats, q).context(|| format!("dictionary for {q}"))?;
            let loss = report.final_loss().unwrap_or(f64::NAN);
            info!("{q}: {} clips, final LSTM loss {loss:.6}, {} dictionary entries", clips.len(), dict.len());
            Ok((q, net, dict, loss))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut lstm = BTreeMap::new();
    let mut dictionaries = BTreeMap::new();
    let mut losses = BTreeMap::new();
    for (q, net, dict, loss) in trained {
        lstm.insert(q, net);
        dictionaries.insert(q, dict);
        losses.insert(q, loss);
    }
    let summary = TrainSummary {
        clips: store.clips.len(),
        clips_per_quadrant: by_quadrant.iter().map(|(q, c)| (*q, c.len())).collect(),
        anfis_accuracy: agree as f64 / store.clips.len() as f64,
        anfis_rmse_valence: trace_v.final_rmse,
        anfis_rmse_arousal: trace_a.final_rmse,
        lstm_final_loss: losses,
        omitted_quadrants: omitted,
    };
    let models = GenerationModels { anfis_valence, anfis_arousal, lstm, dictionaries, hsi_stats, tlr_stats };
    Ok((ModelBundle { models, config: cfg.clone() }, summary))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PredictedTlr {
    pub tempo: f64,
    pub loudness: f64,
    pub rhythm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepReport {
    pub frame_index: usize,
    pub predicted: PredictedTlr,
    pub predicted_key: Vec<f64>,
    pub dictionary_index: usize,
    pub source_clip: String,
    pub source_segment: usize,
    pub mae: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GenerateReport {
    pub quadrant: EmotionQuadrant,
    pub score: EmotionScore,
    pub sample_rate: u32,
    pub total_duration: f64,
    pub steps: Vec<StepReport>,
}

impl GenerateReport {
    fn new(report: &GenerationReport, bundle: &ModelBundle, frame_indices: &[usize], sample_rate: u32) -> Self {
        let dict = &bundle.models.dictionaries[&report.quadrant];
        let steps = report
            .steps
            .iter()
            .zip(frame_indices)
            .map(|(s, &frame_index)| {
                let entry = &dict.entries[s.entry_index];
                StepReport {
                    frame_index,
                    predicted: PredictedTlr { tempo: s.predicted.tempo, loudness: s.predicted.loudness, rhythm: s.predicted.rhythm },
                    predicted_key: s.predicted_key.clone(),
                    dictionary_index: s.entry_index,
                    source_clip: entry.source_clip.clone(),
                    source_segment: entry.segment.index,
                    mae: s.mae,
                }
            })
            .collect();
        Self { quadrant: report.quadrant, score: report.score, sample_rate, total_duration: report.total_duration, steps }
    }

    /// Share of steps `k` that retrieved segment `k` of `clip_id`.
    pub fn retrieval_exactness(&self, clip_id: &str) -> f64 {
        let hits = self
            .steps
            .iter()
            .enumerate()
            .filter(|(k, s)| s.source_clip == clip_id && s.source_segment == *k)
            .count();
        hits as f64 / self.steps.len() as f64
    }
}

/// Audio for a directory of frames.
pub fn generate_from_dir(bundle: &ModelBundle, frames_dir: &Path, fps: f64) -> Result<(AudioSignal, GenerateReport)> {
    if !(fps > 0.0) || !fps.is_finite() {
        return Err(Error::Validation(format!("fps must be positive, got {fps}")));
    }
    let cfg = &bundle.config;
    let (indices, frames) = sample_frames(frames_dir, fps, cfg.segment_duration, None)?;
    let (audio, _, report) = generation::generate(&frames, &bundle.models, &cfg.visual_config(), cfg.crossfade)
        .context(|| format!("generating from {}", frames_dir.display()))?;
    let report = GenerateReport::new(&report, bundle, &indices, audio.sample_rate);
    Ok((audio, report))
}

/// Report path written next to a generated WAV.
pub fn report_path(out_wav: &Path) -> PathBuf {
    out_wav.with_extension("json")
}

pub fn write_generation(out_wav: &Path, audio: &AudioSignal, report: &GenerateReport) -> Result<()> {
    write_wav(out_wav, audio)?;
    let p = report_path(out_wav);
    fs::write(&p, json_bytes(report)).map_err(|e| Error::io("writing report", &p, e))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClipEvaluation {
    pub id: String,
    pub label_quadrant: EmotionQuadrant,
    pub predicted_quadrant: EmotionQuadrant,
    pub spectrogram_mae: f64,
    pub duration_compared: f64,
    pub retrieval_exactness: f64,
    pub steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvaluationSummary {
    pub clips: Vec<ClipEvaluation>,
    pub mean_spectrogram_mae: f64,
    pub mean_retrieval_exactness: f64,
}

impl EvaluationSummary {
    /// Plain-text table with a closing mean row.
    pub fn render(&self) -> String {
        let width = self.clips.iter().map(|c| c.id.len()).max().unwrap_or(0).max(4);
        let mut out = format!("{:<width$}  {:>9}  {:>9}  {:>5}\n", "clip", "quadrant", "MAE", "exact");
        for c in &self.clips {
            out.push_str(&format!(
                "{:<width$}  {:>9}  {:>9.4}  {:>5.2}\n",
                c.id, c.predicted_quadrant, c.spectrogram_mae, c.retrieval_exactness
            ));
        }
        out.push_str(&format!(
            "{:<width$}  {:>9}  {:>9.4}  {:>5.2}\n",
            "mean", "", self.mean_spectrogram_mae, self.mean_retrieval_exactness
        ));
        out
    }
}

fn evaluate_clip(bundle: &ModelBundle, manifest: &Manifest, clip: &ClipEntry, out_dir: &Path) -> Result<ClipEvaluation> {
    let params = &bundle.config.evaluation;
    let (generated, report) = generate_from_dir(bundle, &manifest.resolve(&clip.frames_dir), clip.fps)?;
    let original = read_wav(&manifest.resolve(&clip.audio_path))?;
    let eval = spectrogram_mae(&generated, &original, params).context(|| "spectrogram MAE".into())?;

    write_generation(&out_dir.join(format!("{}.wav", clip.id)), &generated, &report)?;
    for (tag, signal) in [("generated", &generated), ("original", &original)] {
        let spec = db_mel_spectrogram(signal, params).context(|| format!("{tag} spectrogram"))?;
        let raster = spectrogram_raster(&spec, params.floor_db).context(|| format!("{tag} raster"))?;
        write_pgm(&out_dir.join(format!("{}_{tag}.pgm", clip.id)), &raster)?;
    }
    Ok(ClipEvaluation {
        id: clip.id.clone(),
        label_quadrant: clip.quadrant(),
        predicted_quadrant: report.quadrant,
        spectrogram_mae: eval.spectrogram_mae,
        duration_compared: eval.duration_compared,
        retrieval_exactness: report.retrieval_exactness(&clip.id),
        steps: report.steps.len(),
    })
}

/// Generates every manifest clip, compares it with the clip's own audio
/// and writes WAVs, spectrogram rasters and the summary into `out_dir`.
pub fn evaluate(bundle: &ModelBundle, manifest: &Manifest, out_dir: &Path) -> Result<EvaluationSummary> {
    fs::create_dir_all(out_dir).map_err(|e| Error::io("creating output directory", out_dir, e))?;
    let clips = manifest
        .clips
        .par_iter()
        .map(|clip| evaluate_clip(bundle, manifest, clip, out_dir).map_err(|e| e.prefixed(&format!("clip '{}'", clip.id))))
        .collect::<Result<Vec<_>>>()?;
    let n = clips.len() as f64;
    let summary = EvaluationSummary {
        mean_spectrogram_mae: clips.iter().map(|c| c.spectrogram_mae).sum::<f64>() / n,
        mean_retrieval_exactness: clips.iter().map(|c| c.retrieval_exactness).sum::<f64>() / n,
        clips,
    };
    let p = out_dir.join("summary.json");
    fs::write(&p, json_bytes(&summary)).map_err(|e| Error::io("writing summary", &p, e))?;
    let p = out_dir.join("summary.csv");
    let mut w = csv::Writer::from_path(&p).map_err(|e| csv_error(&p, e))?;
    let io = |e| csv_error(&p, e);
    w.write_record(["clip_id", "label_quadrant", "predicted_quadrant", "spectrogram_mae", "retrieval_exactness"]).map_err(io)?;
    for c in &summary.clips {
        w.write_record([
            c.id.clone(),
            c.label_quadrant.to_string(),
            c.predicted_quadrant.to_string(),
            c.spectrogram_mae.to_string(),
            c.retrieval_exactness.to_string(),
        ])
        .map_err(io)?;
    }
    w.write_record([
        "mean".to_owned(),
        String::new(),
        String::new(),
        summary.mean_spectrogram_mae.to_string(),
        summary.mean_retrieval_exactness.to_string(),
    ])
    .map_err(io)?;
    w.flush().map_err(|e| Error::io("writing summary", &p, e))?;
    Ok(summary)
}

pub(crate) fn csv_error(path: &Path, e: csv::Error) -> Error {
    if e.is_io_error() {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io("writing CSV", path, io),
            other => Error::format("writing CSV", path, format!("{other:?}")),
        }
    } else {
        Error::format("CSV", path, e)
    }
}

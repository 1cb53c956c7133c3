//! Spectrogram MAE, MOS statistics and the reporting tables.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt::Write;

#[allow(unused_imports)]
use num_traits::Float;


use crate::anfis::EmotionQuadrant;
use crate::dsp::{self, AudioSignal, MelFilterbank, Spectrogram, SpectrogramScale};
use crate::error::invalid;
use crate::Result;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct SpectrogramParams {
    pub sample_rate: u32,
    pub window_len: usize,
    pub hop: usize,
    pub n_mels: usize,
    pub floor_db: f64,
}

impl Default for SpectrogramParams {
    fn default() -> Self {
        Self { sample_rate: 8_000, window_len: 512, hop: 256, n_mels: 40, floor_db: -80.0 }
    }
}

/// dB mel spectrogram of `signal` after resampling; signals shorter than
/// one window are zero padded.
pub fn db_mel_spectrogram(signal: &AudioSignal, params: &SpectrogramParams) -> Result<Spectrogram> {
    let mut x = dsp::resample(signal, params.sample_rate)?;
    if x.len() < params.window_len {
        x.samples.resize(params.window_len, 0.0);
    }
    let spec = dsp::stft(&x, params.window_len, params.hop)?;
    let bank = MelFilterbank::new(params.n_mels, params.window_len, params.sample_rate, 0.0, params.sample_rate as f64 / 2.0)?;
    Ok(dsp::mel_spectrogram(&spec, &bank)?.to_db(params.floor_db))
}

/// Maps `[floor_db, 0]` linearly onto `[0, 1]`.
pub fn normalize_db(db: f64, floor_db: f64) -> f64 {
    ((db - floor_db) / -floor_db).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub spectrogram_mae: f64,
    pub duration_compared: f64,
    pub params: SpectrogramParams,
}

/// Mean absolute difference of the normalized dB mel spectrograms over
/// their common frames.
pub fn spectrogram_mae(a: &AudioSignal, b: &AudioSignal, params: &SpectrogramParams) -> Result<EvalReport> {
    if a.is_empty() || b.is_empty() {
        return Err(invalid!("cannot compare empty audio"));
    }
    let sa = db_mel_spectrogram(a, params)?;
    let sb = db_mel_spectrogram(b, params)?;
    let frames = sa.n_frames.min(sb.n_frames);
    let mut total = 0.0;
    for bin in 0..sa.n_bins {
        for t in 0..frames {
            let x = normalize_db(sa.get(bin, t), params.floor_db);
            let y = normalize_db(sb.get(bin, t), params.floor_db);
            total += (x - y).abs();
        }
    }
    let covered = (frames - 1) * params.hop + params.window_len;
    Ok(EvalReport {
        spectrogram_mae: total / (sa.n_bins * frames) as f64,
        duration_compared: covered as f64 / params.sample_rate as f64,
        params: params.clone(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MosAxis {
    Valence,
    Arousal,
}

impl MosAxis {
    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "valence" => Some(Self::Valence),
            "arousal" => Some(Self::Arousal),
            _ => None,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Valence => "valence",
            Self::Arousal => "arousal",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MosSample {
    pub scores: Vec<f64>,
    pub axis: MosAxis,
}

pub fn mos_mean(s: &MosSample) -> Result<f64> {
    if s.scores.is_empty() {
        return Err(invalid!("MOS mean of no scores"));
    }
    Ok(s.scores.iter().sum::<f64>() / s.scores.len() as f64)
}

/// Unbiased sample variance (`N - 1` denominator).
pub fn mos_variance(s: &MosSample) -> Result<f64> {
    if s.scores.len() < 2 {
        return Err(invalid!("MOS variance needs at least two scores, got {}", s.scores.len()));
    }
    let mu = mos_mean(s)?;
    Ok(s.scores.iter().map(|y| (y - mu) * (y - mu)).sum::<f64>() / (s.scores.len() - 1) as f64)
}

/// `"m ± s"` with two decimals. A single score reports a zero spread.
pub fn format_mos(s: &MosSample) -> Result<String> {
    let mean = mos_mean(s)?;
    let std = if s.scores.len() < 2 { 0.0 } else { mos_variance(s)?.sqrt() };
    Ok(format!("{mean:.2} ± {std:.2}"))
}

/// Counts per valence-arousal quadrant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ClassDistribution {
    pub pos_high: usize,
    pub pos_low: usize,
    pub neg_high: usize,
    pub neg_low: usize,
}

impl ClassDistribution {
    pub fn count(&self, q: EmotionQuadrant) -> usize {
        match q {
            EmotionQuadrant::PosHigh => self.pos_high,
            EmotionQuadrant::PosLow => self.pos_low,
            EmotionQuadrant::NegHigh => self.neg_high,
            EmotionQuadrant::NegLow => self.neg_low,
        }
    }

    pub fn high_total(&self) -> usize {
        self.pos_high + self.neg_high
    }

    pub fn low_total(&self) -> usize {
        self.pos_low + self.neg_low
    }

    pub fn positive_total(&self) -> usize {
        self.pos_high + self.pos_low
    }

    pub fn negative_total(&self) -> usize {
        self.neg_high + self.neg_low
    }

    pub fn grand_total(&self) -> usize {
        self.high_total() + self.low_total()
    }

    /// Arousal rows, valence columns, totals in the margins.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<8}{:>10}{:>10}{:>10}", "Arousal", "Positive", "Negative", "Total");
        let _ = writeln!(out, "{:<8}{:>10}{:>10}{:>10}", "High", self.pos_high, self.neg_high, self.high_total());
        let _ = writeln!(out, "{:<8}{:>10}{:>10}{:>10}", "Low", self.pos_low, self.neg_low, self.low_total());
        let _ = writeln!(
            out,
            "{:<8}{:>10}{:>10}{:>10}",
            "Total",
            self.positive_total(),
            self.negative_total(),
            self.grand_total()
        );
        out
    }
}

pub fn class_distribution(labels: &[EmotionQuadrant]) -> ClassDistribution {
    let mut d = ClassDistribution::default();
    for q in labels {
        match q {
            EmotionQuadrant::PosHigh => d.pos_high += 1,
            EmotionQuadrant::PosLow => d.pos_low += 1,
            EmotionQuadrant::NegHigh => d.neg_high += 1,
            EmotionQuadrant::NegLow => d.neg_low += 1,
        }
    }
    d
}

/// 8-bit grayscale raster, row-major, top row first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

/// Frames become columns and the lowest bin the bottom row; dB values map
/// linearly from `[floor_db, 0]` to `[0, 255]`.
pub fn spectrogram_raster(spec: &Spectrogram, floor_db: f64) -> Result<GrayImage> {
    if spec.scale != SpectrogramScale::Decibel {
        return Err(invalid!("raster needs a dB spectrogram"));
    }
    let mut pixels = vec![0u8; spec.n_bins * spec.n_frames];
    for bin in 0..spec.n_bins {
        let row = spec.n_bins - 1 - bin;
        for t in 0..spec.n_frames {
            let v = normalize_db(spec.get(bin, t), floor_db);
            pixels[row * spec.n_frames + t] = (v * 255.0).round() as u8;
        }
    }
    Ok(GrayImage { width: spec.n_frames, height: spec.n_bins, pixels })
}

/// Decimals the comparison table is printed with.
pub const TABLE_DECIMALS: i32 = 3;

fn round_to(v: f64, decimals: i32) -> f64 {
    let s = 10f64.powi(decimals);
    (v * s).round() / s
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelComparison {
    pub current: Vec<f64>,
    pub previous: Vec<f64>,
    pub mean_current: f64,
    pub mean_previous: f64,
    /// `(mean_previous - mean_current) / mean_previous` in percent, taken
    /// over the means as printed (three decimals).
    pub improvement_pct: f64,
}

impl ModelComparison {
    pub fn render(&self, label_current: &str, label_previous: &str) -> String {
        let mut out = String::new();
        let width = label_current.len().max(label_previous.len()).max(12);
        let _ = write!(out, "{:<width$}", "Video sample");
        for i in 1..=self.current.len() {
            let _ = write!(out, "\t{i}");
        }
        let _ = writeln!(out, "\tMean");
        for (label, values, mean) in [
            (label_current, &self.current, self.mean_current),
            (label_previous, &self.previous, self.mean_previous),
        ] {
            let _ = write!(out, "{label:<width$}");
            for v in values {
                let _ = write!(out, "\t{v:.3}");
            }
            let _ = writeln!(out, "\t{mean:.3}");
        }
        let _ = writeln!(out, "Improvement: {:.2}%", self.improvement_pct);
        out
    }
}

/// Side-by-side mean MAE of two models on the same samples.
pub fn compare_models(current: &[f64], previous: &[f64]) -> Result<ModelComparison> {
    if current.len() != previous.len() {
        return Err(invalid!("{} current results but {} previous", current.len(), previous.len()));
    }
    if current.is_empty() {
        return Err(invalid!("nothing to compare"));
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (mean_current, mean_previous) = (mean(current), mean(previous));
    let (shown_current, shown_previous) = (round_to(mean_current, TABLE_DECIMALS), round_to(mean_previous, TABLE_DECIMALS));
    let improvement_pct = if shown_previous == 0.0 {
        0.0
    } else {
        100.0 * (shown_previous - shown_current) / shown_previous
    };
    Ok(ModelComparison {
        current: current.to_vec(),
        previous: previous.to_vec(),
        mean_current,
        mean_previous,
        improvement_pct,
    })
}

pub fn compare_reports(current: &[EvalReport], previous: &[EvalReport]) -> Result<ModelComparison> {
    let a: Vec<f64> = current.iter().map(|r| r.spectrogram_mae).collect();
    let b: Vec<f64> = previous.iter().map(|r| r.spectrogram_mae).collect();
    compare_models(&a, &b)
}

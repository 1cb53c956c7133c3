//! Audio segmentation and the tempo / loudness / rhythm (TLR) descriptor.
//!
//! Tempo follows the onset-autocorrelation recipe: mel spectral flux at
//! 8 kHz, Gaussian smoothing, autocorrelation, then a log-time Gaussian
//! preference around 120 bpm. Loudness is A-weighted mean power in dB re
//! full scale and rhythm is the log-variance of the periodogram.

use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;


use crate::dsp::{self, AudioSignal, MelFilterbank};
use crate::error::invalid;
use crate::Result;

pub use crate::stats::FeatureStats;

pub const DEFAULT_TEMPO_BPM: f64 = 120.0;

#[derive(Debug, Clone, PartialEq)]
pub struct AudioSegment {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
    /// Position within the source clip.
    pub index: usize,
}

impl AudioSegment {
    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub fn to_signal(&self) -> AudioSignal {
        AudioSignal { samples: self.samples.clone(), sample_rate: self.sample_rate }
    }
}

/// Cuts `signal` into consecutive non-overlapping segments of
/// `round(seg_duration * rate)` samples. A trailing remainder is dropped.
pub fn segment_audio(signal: &AudioSignal, seg_duration: f64) -> Result<Vec<AudioSegment>> {
    if !(seg_duration > 0.0) || !seg_duration.is_finite() {
        return Err(invalid!("segment duration must be positive, got {seg_duration}"));
    }
    let seg_len = (seg_duration * signal.sample_rate as f64).round() as usize;
    if seg_len == 0 || signal.len() < seg_len {
        return Err(invalid!(
            "signal of {:.3} s is shorter than one {seg_duration} s segment",
            signal.duration()
        ));
    }
    Ok(signal
        .samples
        .chunks_exact(seg_len)
        .enumerate()
        .map(|(index, chunk)| AudioSegment {
            samples: chunk.to_vec(),
            sample_rate: signal.sample_rate,
            index,
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct OnsetConfig {
    pub analysis_rate: u32,
    pub window_len: usize,
    pub hop: usize,
    pub n_mels: usize,
    pub floor_db: f64,
    /// Gaussian smoothing width in envelope frames.
    pub smooth_sigma: f64,
    /// Width in frames of the centered sliding minimum removed from the
    /// smoothed flux.
    pub running_min_frames: usize,
}

impl Default for OnsetConfig {
    fn default() -> Self {
        Self {
            analysis_rate: 8_000,
            window_len: 256,
            hop: 80,
            n_mels: 40,
            floor_db: -80.0,
            smooth_sigma: 2.0,
            running_min_frames: 101,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OnsetEnvelope {
    pub values: Vec<f64>,
    /// Envelope frames per second.
    pub frame_rate: f64,
}

/// Mel spectral-flux onset strength.
pub fn onset_envelope(signal: &AudioSignal, cfg: &OnsetConfig) -> Result<OnsetEnvelope> {
    if signal.is_empty() {
        return Err(invalid!("onset envelope of an empty signal"));
    }
    let x = dsp::resample(signal, cfg.analysis_rate)?;
    if x.len() < cfg.window_len {
        return Err(invalid!(
            "clip of {:.4} s is too short for one {}-sample analysis frame",
            signal.duration(),
            cfg.window_len
        ));
    }
    let spec = dsp::stft(&x, cfg.window_len, cfg.hop)?;
    let bank = MelFilterbank::new(
        cfg.n_mels,
        cfg.window_len,
        cfg.analysis_rate,
        0.0,
        cfg.analysis_rate as f64 / 2.0,
    )?;
    let mel = dsp::mel_spectrogram(&spec, &bank)?.to_db(cfg.floor_db);

    let n = mel.n_frames;
    let mut flux = vec![0.0; n];
    for band in 0..mel.n_bins {
        let row = mel.row(band);
        for t in 1..n {
            flux[t] += (row[t] - row[t - 1]).max(0.0);
        }
    }
    let smooth = dsp::gaussian_smooth(&flux, cfg.smooth_sigma)?;
    let half = cfg.running_min_frames / 2;
    let values = (0..n)
        .map(|t| {
            let lo = t.saturating_sub(half);
            let hi = (t + half + 1).min(n);
            let floor = smooth[lo..hi].iter().copied().fold(f64::INFINITY, f64::min);
            (smooth[t] - floor).max(0.0)
        })
        .collect();
    Ok(OnsetEnvelope {
        values,
        frame_rate: cfg.analysis_rate as f64 / cfg.hop as f64,
    })
}

/// Log-time Gaussian tempo preference.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct TempoWeighting {
    /// Preferred beat period in seconds.
    pub tau0: f64,
    /// Width in octaves.
    pub sigma_tau: f64,
}

impl Default for TempoWeighting {
    fn default() -> Self {
        Self { tau0: 0.5, sigma_tau: 1.4 }
    }
}

pub fn perceptual_weight(tau: f64, w: &TempoWeighting) -> Result<f64> {
    if !(tau > 0.0) {
        return Err(invalid!("beat period must be positive, got {tau}"));
    }
    Ok(weight_unchecked(tau, w))
}

fn weight_unchecked(tau: f64, w: &TempoWeighting) -> f64 {
    let octaves = (tau / w.tau0).log2() / w.sigma_tau;
    (-0.5 * octaves * octaves).exp()
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct TempoConfig {
    pub onset: OnsetConfig,
    pub weighting: TempoWeighting,
    pub min_bpm: f64,
    pub max_bpm: f64,
}

impl Default for TempoConfig {
    fn default() -> Self {
        Self {
            onset: OnsetConfig::default(),
            weighting: TempoWeighting::default(),
            min_bpm: 30.0,
            max_bpm: 300.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TempoEstimate {
    pub bpm: f64,
    /// Set when no periodicity peak was found and `bpm` is the 120 bpm
    /// default.
    pub defaulted: bool,
}

impl TempoEstimate {
    const DEFAULT: Self = Self { bpm: DEFAULT_TEMPO_BPM, defaulted: true };
}

/// Tempo from the strongest weighted autocorrelation lag of the onset
/// envelope.
///
/// The winning lag has to be a local maximum of the weighted
/// autocorrelation, and is refined with a parabola through its neighbours.
/// A flat envelope, or a winner sitting on the edge of the searchable lags
/// (clip too short to show a full period), yields the default.
pub fn tempo(signal: &AudioSignal, cfg: &TempoConfig) -> Result<TempoEstimate> {
    let env = onset_envelope(signal, &cfg.onset)?;
    Ok(tempo_from_envelope(&env, cfg))
}

pub fn tempo_from_envelope(env: &OnsetEnvelope, cfg: &TempoConfig) -> TempoEstimate {
    let fr = env.frame_rate;
    let min_lag = ((60.0 / cfg.max_bpm) * fr).ceil().max(1.0) as usize;
    let max_lag = ((60.0 / cfg.min_bpm) * fr).floor() as usize;
    let available = env.values.len().saturating_sub(1);
    let hi = max_lag.min(available);
    if hi < min_lag {
        return TempoEstimate::DEFAULT;
    }
    let ac_len = (hi + 1).min(available);
    let ac = dsp::autocorrelate(&env.values, ac_len);
    let tps = |lag: usize| weight_unchecked(lag as f64 / fr, &cfg.weighting) * ac[lag];

    let mut best = min_lag;
    let mut best_val = tps(min_lag);
    for lag in min_lag + 1..=hi {
        let v = tps(lag);
        if v > best_val {
            best = lag;
            best_val = v;
        }
    }
    if !(best_val > 0.0) || best == min_lag || best + 1 > ac_len {
        return TempoEstimate::DEFAULT;
    }
    let (left, right) = (tps(best - 1), tps(best + 1));
    if !(best_val > left && best_val >= right) {
        return TempoEstimate::DEFAULT;
    }
    let curvature = left - 2.0 * best_val + right;
    let shift = if curvature < 0.0 { 0.5 * (left - right) / curvature } else { 0.0 };
    let lag = best as f64 + shift.clamp(-0.5, 0.5);
    TempoEstimate { bpm: (60.0 * fr / lag).clamp(cfg.min_bpm, cfg.max_bpm), defaulted: false }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct LoudnessConfig {
    pub window_len: usize,
    pub hop: usize,
    pub floor_db: f64,
}

impl Default for LoudnessConfig {
    fn default() -> Self {
        Self { window_len: 256, hop: 128, floor_db: -120.0 }
    }
}

/// A-weighting power gain at `freq` Hz (the +2.0 dB offset puts 1 kHz at
/// unity).
pub fn a_weighting_gain(freq: f64) -> f64 {
    let f2 = freq * freq;
    let c1 = 20.598_997 * 20.598_997;
    let c2 = 107.652_65 * 107.652_65;
    let c3 = 737.862_23 * 737.862_23;
    let c4 = 12_194.217 * 12_194.217;
    let ra = c4 * f2 * f2 / ((f2 + c1) * ((f2 + c2) * (f2 + c3)).sqrt() * (f2 + c4));
    ra * ra * 10f64.powf(2.0 / 10.0)
}

/// A-weighted mean power of the segment in dB re a full-scale square wave
/// (a full-scale 1 kHz sine reads about -3 dB).
///
/// Frames shorter than the window are zero padded. Powers are averaged
/// across frames before the dB conversion; the result is floored.
pub fn loudness(segment: &AudioSegment, cfg: &LoudnessConfig) -> Result<f64> {
    if segment.samples.is_empty() {
        return Err(invalid!("loudness of an empty segment"));
    }
    let n = cfg.window_len;
    let mut samples = segment.samples.clone();
    if samples.len() < n {
        samples.resize(n, 0.0);
    }
    let spec = dsp::stft(&AudioSignal { samples, sample_rate: segment.sample_rate }, n, cfg.hop)?;
    let gains: Vec<f64> = spec
        .bin_freqs
        .iter()
        .enumerate()
        .map(|(k, &f)| {
            let fold = if k == 0 || k == n / 2 { 1.0 } else { 2.0 };
            fold * a_weighting_gain(f)
        })
        .collect();
    let window_energy: f64 = dsp::hann(n).iter().map(|w| w * w).sum();
    let norm = 1.0 / (n as f64 * window_energy);
    let mut total = 0.0;
    for t in 0..spec.n_frames {
        total += spec.frame(t).zip(&gains).map(|(p, g)| p * g).sum::<f64>() * norm;
    }
    let mean_power = total / spec.n_frames as f64;
    Ok(if mean_power > 0.0 { (10.0 * mean_power.log10()).max(cfg.floor_db) } else { cfg.floor_db })
}

pub const RHYTHM_EPS: f64 = 1e-12;

/// `ln(var(psd) + 1e-12)`, population variance over periodogram bins.
pub fn rhythm(segment: &AudioSegment) -> Result<f64> {
    let p = dsp::psd(&segment.to_signal())?;
    let n = p.len() as f64;
    let mean = p.iter().sum::<f64>() / n;
    let var = p.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    Ok((var + RHYTHM_EPS).ln())
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TlrDescriptor {
    pub tempo: f64,
    pub loudness: f64,
    pub rhythm: f64,
    pub tempo_defaulted: bool,
}

impl TlrDescriptor {
    pub fn to_array(&self) -> [f64; 3] {
        [self.tempo, self.loudness, self.rhythm]
    }

    pub fn from_slice(v: &[f64]) -> Self {
        Self { tempo: v[0], loudness: v[1], rhythm: v[2], tempo_defaulted: false }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct TlrConfig {
    pub tempo: TempoConfig,
    pub loudness: LoudnessConfig,
}

/// TLR descriptor of one segment. When the segment is too short to show a
/// beat period the clip-level tempo (or 120 bpm) is used instead.
pub fn extract_tlr(segment: &AudioSegment, clip_tempo: Option<f64>, cfg: &TlrConfig) -> Result<TlrDescriptor> {
    let est = tempo(&segment.to_signal(), &cfg.tempo)?;
    let (tempo, tempo_defaulted) = if est.defaulted {
        match clip_tempo {
            Some(bpm) => (bpm, false),
            None => (DEFAULT_TEMPO_BPM, true),
        }
    } else {
        (est.bpm, false)
    };
    Ok(TlrDescriptor {
        tempo,
        loudness: loudness(segment, &cfg.loudness)?,
        rhythm: rhythm(segment)?,
        tempo_defaulted,
    })
}

//! Synthetic dataset whose frame colours and click tracks are planted per
//! quadrant, so visual features predict audio features by construction.

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use scenetone_core::anfis::EmotionQuadrant;
use scenetone_core::dsp::AudioSignal;
use scenetone_core::visual::RgbImage;

use crate::error::{Context, Error, Result};
use crate::manifest::{ClipEntry, Manifest};
use crate::pnm::{frame_name, write_ppm};
use crate::wav::{write_wav, ANALYSIS_RATE};

#[derive(Debug, Clone, PartialEq)]
pub struct FixtureSpec {
    pub clips_per_quadrant: usize,
    pub duration: f64,
    pub fps: f64,
    pub width: usize,
    pub height: usize,
    /// Segment length the loudness staircase is aligned to.
    pub segment_duration: f64,
}

impl Default for FixtureSpec {
    fn default() -> Self {
        Self { clips_per_quadrant: 2, duration: 6.0, fps: 4.0, width: 40, height: 30, segment_duration: 0.5 }
    }
}

/// Planted look and sound of one quadrant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Planting {
    pub hue: f64,
    pub saturation: f64,
    pub value: f64,
    pub bpm: f64,
    pub amplitude: f64,
    pub tone_hz: f64,
    pub mos: (f64, f64),
}

pub fn planting(q: EmotionQuadrant) -> Planting {
    match q {
        EmotionQuadrant::PosHigh => Planting {
            hue: 0.06,
            saturation: 0.9,
            value: 0.95,
            bpm: 150.0,
            amplitude: 0.9,
            tone_hz: 2_500.0,
            mos: (7.5, 7.5),
        },
        EmotionQuadrant::PosLow => Planting {
            hue: 0.5,
            saturation: 0.3,
            value: 0.9,
            bpm: 90.0,
            amplitude: 0.45,
            tone_hz: 1_200.0,
            mos: (7.0, 3.0),
        },
        EmotionQuadrant::NegHigh => Planting {
            hue: 0.78,
            saturation: 0.85,
            value: 0.4,
            bpm: 130.0,
            amplitude: 0.8,
            tone_hz: 500.0,
            mos: (3.0, 7.0),
        },
        EmotionQuadrant::NegLow => Planting {
            hue: 0.62,
            saturation: 0.15,
            value: 0.25,
            bpm: 60.0,
            amplitude: 0.2,
            tone_hz: 250.0,
            mos: (2.5, 2.5),
        },
    }
}

fn hsv_to_rgb(h: f64, s: f64, v: f64) -> [f64; 3] {
    let h6 = h.rem_euclid(1.0) * 6.0;
    let c = v * s;
    let x = c * (1.0 - (h6 % 2.0 - 1.0).abs());
    let (r, g, b) = match h6 as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    [r + m, g + m, b + m]
}

/// Three horizontal bands of one hue at 60, 80 and 100 % brightness with
/// light pixel noise.
fn frame(spec: &FixtureSpec, hue: f64, sat: f64, value: f64, rng: &mut ChaCha8Rng) -> RgbImage {
    let mut pixels = Vec::with_capacity(spec.width * spec.height);
    for y in 0..spec.height {
        let band = [0.6, 0.8, 1.0][(3 * y / spec.height).min(2)];
        for _ in 0..spec.width {
            let rgb = hsv_to_rgb(hue, sat, value * band);
            pixels.push(rgb.map(|c| (c + rng.gen_range(-0.01..0.01)).clamp(0.0, 1.0)));
        }
    }
    RgbImage { width: spec.width, height: spec.height, pixels }
}

/// Click track with a per-segment loudness staircase over a quiet drone.
fn click_track(spec: &FixtureSpec, p: &Planting, bpm: f64, phase: f64) -> Vec<f64> {
    let rate = ANALYSIS_RATE as f64;
    let n = (spec.duration * rate).round() as usize;
    let seg_len = (spec.segment_duration * rate).round() as usize;
    let n_segments = (n / seg_len).max(1);
    let period = 60.0 / bpm;
    let burst = (0.03 * rate) as usize;
    let mut out = vec![0.0; n];
    for (t, v) in out.iter_mut().enumerate() {
        *v = 0.03 * (2.0 * PI * 110.0 * t as f64 / rate).sin();
    }
    let mut onset = phase * period;
    while onset < spec.duration {
        let start = (onset * rate).round() as usize;
        for k in 0..burst.min(n.saturating_sub(start)) {
            let t = k as f64 / rate;
            out[start + k] += p.amplitude * (-t / 0.006).exp() * (2.0 * PI * p.tone_hz * t).sin();
        }
        onset += period;
    }
    for (t, v) in out.iter_mut().enumerate() {
        let seg = (t / seg_len).min(n_segments - 1);
        let gain = 0.05f64.powf(1.0 - seg as f64 / (n_segments - 1).max(1) as f64);
        *v = (*v * gain).clamp(-1.0, 1.0);
    }
    out
}

fn clip_id(q: EmotionQuadrant, variant: usize) -> String {
    format!("{q}_{variant}")
}

/// Writes frames, WAVs and `manifest.json` under `out_dir`; returns the
/// manifest path.
pub fn synth_fixture(out_dir: &Path, seed: u64, spec: &FixtureSpec) -> Result<PathBuf> {
    if spec.clips_per_quadrant == 0 || !(spec.duration > 0.0) || !(spec.fps > 0.0) || spec.width == 0 || spec.height == 0 {
        return Err(Error::Validation("fixture needs clips, a positive duration and fps, and non-empty frames".into()));
    }
    fs::create_dir_all(out_dir).map_err(|e| Error::io("creating fixture directory", out_dir, e))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_frames = (spec.duration * spec.fps).round() as usize;
    let mut clips = Vec::new();
    for q in EmotionQuadrant::ALL {
        let p = planting(q);
        for variant in 0..spec.clips_per_quadrant {
            let id = clip_id(q, variant);
            let frames_dir = PathBuf::from(&id).join("frames");
            let abs_frames = out_dir.join(&frames_dir);
            fs::create_dir_all(&abs_frames).map_err(|e| Error::io("creating frame directory", &abs_frames, e))?;
            let hue = p.hue + 0.04 * variant as f64 + rng.gen_range(-0.005..0.005);
            let sat = (p.saturation + rng.gen_range(-0.02..0.02)).clamp(0.0, 1.0);
            for k in 0..n_frames {
                let ramp = 0.7 + 0.3 * k as f64 / (n_frames - 1).max(1) as f64;
                let img = frame(spec, hue, sat, p.value * ramp, &mut rng);
                write_ppm(&abs_frames.join(frame_name(k)), &img)?;
            }

            let bpm = p.bpm + 20.0 * variant as f64;
            let phase = rng.gen_range(0.05..0.3);
            let audio_path = PathBuf::from(&id).join("audio.wav");
            let signal = AudioSignal::new(click_track(spec, &p, bpm, phase), ANALYSIS_RATE)
                .context(|| format!("fixture audio for {id}"))?;
            write_wav(&out_dir.join(&audio_path), &signal)?;

            let jitter = |rng: &mut ChaCha8Rng| (rng.gen_range(-0.3f64..0.3) * 10.0).round() / 10.0;
            clips.push(ClipEntry {
                id,
                frames_dir,
                audio_path,
                fps: spec.fps,
                mos_valence: p.mos.0 + jitter(&mut rng),
                mos_arousal: p.mos.1 + jitter(&mut rng),
            });
        }
    }
    let manifest = Manifest { clips, config: None, base_dir: out_dir.to_path_buf() };
    manifest.validate()?;
    let path = out_dir.join("manifest.json");
    manifest.save(&path)?;
    Ok(path)
}

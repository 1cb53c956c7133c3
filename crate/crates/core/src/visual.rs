//! Fuzzy HSI frame descriptors.
//!
//! Each frame is resized to `M x M`, converted to HSI, and every channel is
//! clustered into three fuzzy c-means centers. The descriptor is either the
//! largest center per channel (3 values) or all sorted centers (9 values).

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

#[allow(unused_imports)]
use num_traits::Float;


use crate::error::invalid;
use crate::Result;

/// Arbitrary-size RGB image with channels in `[0, 1]`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct RgbImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<[f64; 3]>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize, pixels: Vec<[f64; 3]>) -> Result<Self> {
        if width == 0 || height == 0 || pixels.len() != width * height {
            return Err(invalid!("{width}x{height} image needs {} pixels, got {}", width * height, pixels.len()));
        }
        if pixels.iter().flatten().any(|c| !(0.0..=1.0).contains(c)) {
            return Err(invalid!("RGB channels must lie in [0, 1]"));
        }
        Ok(Self { width, height, pixels })
    }

    pub fn filled(width: usize, height: usize, rgb: [f64; 3]) -> Self {
        Self { width, height, pixels: vec![rgb; width * height] }
    }
}

/// Square `M x M` RGB frame.
pub type Frame = RgbImage;

pub const DEFAULT_SIDE: usize = 256;

/// Nearest-neighbour resize to `side x side`; destination index `d` reads
/// source index `floor(d * src / dst)`.
pub fn resize_frame(image: &RgbImage, side: usize) -> Frame {
    if image.width == side && image.height == side {
        return image.clone();
    }
    let mut pixels = Vec::with_capacity(side * side);
    for y in 0..side {
        let sy = y * image.height / side;
        for x in 0..side {
            let sx = x * image.width / side;
            pixels.push(image.pixels[sy * image.width + sx]);
        }
    }
    RgbImage { width: side, height: side, pixels }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HsiFrame {
    pub side: usize,
    /// Hue angle divided by 2 pi.
    pub h: Vec<f64>,
    pub s: Vec<f64>,
    pub i: Vec<f64>,
}

/// HSI of one RGB triple. Gray pixels (zero saturation) get hue 0.
pub fn rgb_to_hsi_pixel([r, g, b]: [f64; 3]) -> [f64; 3] {
    let i = (r + g + b) / 3.0;
    if i <= 0.0 {
        return [0.0, 0.0, 0.0];
    }
    let min = r.min(g).min(b);
    let s = (1.0 - min / i).clamp(0.0, 1.0);
    let num = 0.5 * ((r - g) + (r - b));
    let den = ((r - g) * (r - g) + (r - b) * (g - b)).sqrt();
    if s == 0.0 || den == 0.0 {
        return [0.0, 0.0, i];
    }
    let theta = (num / den).clamp(-1.0, 1.0).acos();
    let angle = if b <= g { theta } else { 2.0 * PI - theta };
    let h = angle / (2.0 * PI);
    [if h >= 1.0 { 0.0 } else { h }, s, i]
}

pub fn rgb_to_hsi(frame: &Frame) -> HsiFrame {
    let n = frame.pixels.len();
    let (mut h, mut s, mut i) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
    for &p in &frame.pixels {
        let [hh, ss, ii] = rgb_to_hsi_pixel(p);
        h.push(hh);
        s.push(ss);
        i.push(ii);
    }
    HsiFrame { side: frame.width, h, s, i }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct FcmConfig {
    pub clusters: usize,
    /// Fuzzifier `m > 1`.
    pub fuzzifier: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for FcmConfig {
    fn default() -> Self {
        Self { clusters: 3, fuzzifier: 2.0, tol: 1e-5, max_iter: 300 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FcmResult {
    /// Sorted ascending.
    pub centers: Vec<f64>,
    /// Row-major `[n_points x clusters]`, columns follow `centers`.
    pub memberships: Vec<f64>,
    pub iterations: usize,
    /// `sum u^m d^2` after each membership update.
    pub objective_trace: Vec<f64>,
    pub final_objective: f64,
}

impl FcmResult {
    pub fn membership_row(&self, point: usize) -> &[f64] {
        let c = self.centers.len();
        &self.memberships[point * c..(point + 1) * c]
    }
}

/// One-dimensional fuzzy c-means.
///
/// Centers start at evenly spaced quantiles of the data (min, median, max
/// for three clusters). A point coinciding with one or more centers splits
/// its membership evenly among them.
pub fn fcm(points: &[f64], cfg: &FcmConfig) -> Result<FcmResult> {
    if points.is_empty() {
        return Err(invalid!("fuzzy c-means on an empty point set"));
    }
    if cfg.clusters == 0 {
        return Err(invalid!("need at least one cluster"));
    }
    if !(cfg.fuzzifier > 1.0) {
        return Err(invalid!("fuzzifier must exceed 1, got {}", cfg.fuzzifier));
    }
    if let Some(p) = points.iter().find(|p| !p.is_finite()) {
        return Err(invalid!("non-finite point {p}"));
    }
    let c = cfg.clusters;
    let m = cfg.fuzzifier;
    let exponent = 2.0 / (m - 1.0);

    let mut sorted = points.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut centers: Vec<f64> = (0..c)
        .map(|j| {
            let q = if c == 1 { 0.5 } else { j as f64 / (c - 1) as f64 };
            quantile(&sorted, q)
        })
        .collect();

    let n = points.len();
    let mut u = vec![0.0; n * c];
    let mut trace = Vec::new();
    let mut iterations = 0;
    loop {
        iterations += 1;
        update_memberships(points, &centers, exponent, &mut u);
        trace.push(objective(points, &centers, &u, m));

        let mut moved = 0.0f64;
        for (j, center) in centers.iter_mut().enumerate() {
            let (mut num, mut den) = (0.0, 0.0);
            for (i, &x) in points.iter().enumerate() {
                let w = u[i * c + j].powf(m);
                num += w * x;
                den += w;
            }
            if den > 0.0 {
                let next = num / den;
                moved = moved.max((next - *center).abs());
                *center = next;
            }
        }
        if moved < cfg.tol || iterations >= cfg.max_iter {
            break;
        }
    }
    update_memberships(points, &centers, exponent, &mut u);
    let final_objective = objective(points, &centers, &u, m);

    let mut order: Vec<usize> = (0..c).collect();
    order.sort_by(|&a, &b| centers[a].total_cmp(&centers[b]));
    let memberships = (0..n)
        .flat_map(|i| order.iter().map(move |&j| (i, j)))
        .map(|(i, j)| u[i * c + j])
        .collect();
    Ok(FcmResult {
        centers: order.iter().map(|&j| centers[j]).collect(),
        memberships,
        iterations,
        objective_trace: trace,
        final_objective,
    })
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

fn update_memberships(points: &[f64], centers: &[f64], exponent: f64, u: &mut [f64]) {
    let c = centers.len();
    for (i, &x) in points.iter().enumerate() {
        let row = &mut u[i * c..(i + 1) * c];
        let coincident = centers.iter().filter(|&&v| v == x).count();
        if coincident > 0 {
            let share = 1.0 / coincident as f64;
            for (r, &v) in row.iter_mut().zip(centers) {
                *r = if v == x { share } else { 0.0 };
            }
            continue;
        }
        for (j, r) in row.iter_mut().enumerate() {
            let dj = (x - centers[j]).abs();
            let s: f64 = centers.iter().map(|&v| (dj / (x - v).abs()).powf(exponent)).sum();
            *r = 1.0 / s;
        }
    }
}

pub fn fcm_objective(points: &[f64], centers: &[f64], memberships: &[f64], fuzzifier: f64) -> f64 {
    objective(points, centers, memberships, fuzzifier)
}

fn objective(points: &[f64], centers: &[f64], u: &[f64], m: f64) -> f64 {
    let c = centers.len();
    points
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            centers
                .iter()
                .enumerate()
                .map(|(j, &v)| u[i * c + j].powf(m) * (x - v) * (x - v))
                .sum::<f64>()
        })
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum DescriptorMode {
    /// Largest center of H, S and I.
    #[default]
    Max3,
    /// Sorted centers of H, then S, then I.
    Concat9,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct VisualConfig {
    pub side: usize,
    pub fcm: FcmConfig,
    /// Per-channel cap on clustered pixels; a uniform stride subsamples
    /// larger frames.
    pub max_points: usize,
    /// Picks the stride offset when subsampling.
    #[cfg_attr(feature = "serde", serde(skip))]
    pub seed: u64,
    pub mode: DescriptorMode,
}

impl Default for VisualConfig {
    fn default() -> Self {
        Self {
            side: DEFAULT_SIDE,
            fcm: FcmConfig::default(),
            max_points: 4_096,
            seed: 0,
            mode: DescriptorMode::Max3,
        }
    }
}

fn subsample(values: &[f64], max_points: usize, seed: u64) -> Vec<f64> {
    if max_points == 0 || values.len() <= max_points {
        return values.to_vec();
    }
    let stride = values.len().div_ceil(max_points);
    let offset = (seed % stride as u64) as usize;
    values.iter().skip(offset).step_by(stride).copied().collect()
}

pub fn frame_descriptor(frame: &HsiFrame, cfg: &VisualConfig) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(9);
    for channel in [&frame.h, &frame.s, &frame.i] {
        let pts = subsample(channel, cfg.max_points, cfg.seed);
        let res = fcm(&pts, &FcmConfig { clusters: 3, ..cfg.fcm.clone() })?;
        match cfg.mode {
            DescriptorMode::Max3 => out.push(*res.centers.last().expect("three centers")),
            DescriptorMode::Concat9 => out.extend_from_slice(&res.centers),
        }
    }
    Ok(out)
}

/// Resize, convert and describe every frame, in order.
pub fn clip_descriptors(frames: &[RgbImage], cfg: &VisualConfig) -> Result<Vec<Vec<f64>>> {
    if frames.is_empty() {
        return Err(invalid!("clip has no frames"));
    }
    frames
        .iter()
        .map(|f| frame_descriptor(&rgb_to_hsi(&resize_frame(f, cfg.side)), cfg))
        .collect()
}

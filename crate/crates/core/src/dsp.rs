//! Signal-processing kernels shared by feature extraction and evaluation.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

#[allow(unused_imports)]
use num_traits::Float;

use num_complex::Complex64;

use crate::error::invalid;
use crate::Result;

/// Mono audio with amplitudes nominally in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioSignal {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl AudioSignal {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(invalid!("sample rate must be positive"));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(invalid!("sample {i} is not finite"));
        }
        Ok(Self { samples, sample_rate })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpectrogramScale {
    LinearPower,
    Decibel,
}

/// Row-major `[n_bins x n_frames]` magnitude matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    pub values: Vec<f64>,
    pub n_bins: usize,
    pub n_frames: usize,
    pub bin_freqs: Vec<f64>,
    pub hop: usize,
    pub window_len: usize,
    pub scale: SpectrogramScale,
}

impl Spectrogram {
    #[inline]
    pub fn get(&self, bin: usize, frame: usize) -> f64 {
        self.values[bin * self.n_frames + frame]
    }

    pub fn row(&self, bin: usize) -> &[f64] {
        &self.values[bin * self.n_frames..(bin + 1) * self.n_frames]
    }

    pub fn frame(&self, frame: usize) -> impl Iterator<Item = f64> + '_ {
        (0..self.n_bins).map(move |b| self.get(b, frame))
    }

    /// Converts a power spectrogram to dB relative to its own maximum.
    pub fn to_db(&self, floor_db: f64) -> Spectrogram {
        Spectrogram {
            values: power_to_db(&self.values, floor_db),
            scale: SpectrogramScale::Decibel,
            ..self.clone()
        }
    }
}

/// Triangular filters on the HTK mel scale, `[n_mels x n_fft_bins]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MelFilterbank {
    pub n_mels: usize,
    pub n_fft_bins: usize,
    pub weights: Vec<f64>,
    pub center_freqs: Vec<f64>,
}

pub fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

pub fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

impl MelFilterbank {
    /// Builds `n_mels` triangles spanning `[f_min, f_max]` over the
    /// `window_len / 2 + 1` bins of an STFT at `sample_rate`.
    ///
    /// A triangle too narrow to cover any bin gets a single unit weight on
    /// the bin nearest its center, so every row stays non-empty.
    pub fn new(n_mels: usize, window_len: usize, sample_rate: u32, f_min: f64, f_max: f64) -> Result<Self> {
        if n_mels == 0 || window_len < 2 {
            return Err(invalid!("mel filterbank needs n_mels >= 1 and window_len >= 2"));
        }
        let nyquist = sample_rate as f64 / 2.0;
        if !(f_min >= 0.0 && f_min < f_max && f_max <= nyquist) {
            return Err(invalid!("mel range [{f_min}, {f_max}] outside [0, {nyquist}]"));
        }
        let n_fft_bins = window_len / 2 + 1;
        let bin_hz = sample_rate as f64 / window_len as f64;
        let (mel_lo, mel_hi) = (hz_to_mel(f_min), hz_to_mel(f_max));
        let edges: Vec<f64> = (0..n_mels + 2)
            .map(|i| mel_to_hz(mel_lo + (mel_hi - mel_lo) * i as f64 / (n_mels + 1) as f64))
            .collect();

        let mut weights = vec![0.0; n_mels * n_fft_bins];
        for m in 0..n_mels {
            let (lo, center, hi) = (edges[m], edges[m + 1], edges[m + 2]);
            let row = &mut weights[m * n_fft_bins..(m + 1) * n_fft_bins];
            for (k, w) in row.iter_mut().enumerate() {
                let f = k as f64 * bin_hz;
                let v = if f > lo && f <= center {
                    (f - lo) / (center - lo)
                } else if f > center && f < hi {
                    (hi - f) / (hi - center)
                } else {
                    0.0
                };
                *w = v;
            }
            if row.iter().all(|&w| w <= 0.0) {
                let nearest = ((center / bin_hz).round() as usize).min(n_fft_bins - 1);
                row[nearest] = 1.0;
            }
        }
        Ok(Self {
            n_mels,
            n_fft_bins,
            weights,
            center_freqs: edges[1..=n_mels].to_vec(),
        })
    }

    pub fn row(&self, m: usize) -> &[f64] {
        &self.weights[m * self.n_fft_bins..(m + 1) * self.n_fft_bins]
    }
}

/// Linear-interpolation resampler.
///
/// Output length is `round(len * target / source)`; output sample `k` sits at
/// source position `k * source / target`.
pub fn resample(signal: &AudioSignal, target_rate: u32) -> Result<AudioSignal> {
    if signal.is_empty() {
        return Err(invalid!("cannot resample an empty signal"));
    }
    if target_rate == 0 {
        return Err(invalid!("target sample rate must be positive"));
    }
    if target_rate == signal.sample_rate {
        return Ok(signal.clone());
    }
    let src = signal.sample_rate as u64;
    let dst = target_rate as u64;
    let n_in = signal.len() as u64;
    let n_out = ((n_in * dst + src / 2) / src).max(1) as usize;
    let x = &signal.samples;
    let last = x.len() - 1;
    let ratio = signal.sample_rate as f64 / target_rate as f64;
    let samples = (0..n_out)
        .map(|k| {
            let pos = k as f64 * ratio;
            let i = pos.floor() as usize;
            if i >= last {
                x[last]
            } else {
                let frac = pos - i as f64;
                x[i] + (x[i + 1] - x[i]) * frac
            }
        })
        .collect();
    Ok(AudioSignal { samples, sample_rate: target_rate })
}

/// Periodic Hann window.
pub fn hann(len: usize) -> Vec<f64> {
    (0..len)
        .map(|n| 0.5 - 0.5 * (2.0 * PI * n as f64 / len as f64).cos())
        .collect()
}

/// In-place iterative radix-2 FFT. `buf.len()` must be a power of two.
pub fn fft_in_place(buf: &mut [Complex64]) {
    let n = buf.len();
    debug_assert!(n.is_power_of_two());
    if n <= 1 {
        return;
    }
    let mut j = 0usize;
    for i in 1..n {
        let mut bit = n >> 1;
        while j & bit != 0 {
            j ^= bit;
            bit >>= 1;
        }
        j |= bit;
        if i < j {
            buf.swap(i, j);
        }
    }
    let mut len = 2;
    while len <= n {
        let step = -2.0 * PI / len as f64;
        let half = len / 2;
        for start in (0..n).step_by(len) {
            for k in 0..half {
                let w = Complex64::from_polar(1.0, step * k as f64);
                let a = buf[start + k];
                let b = buf[start + k + half] * w;
                buf[start + k] = a + b;
                buf[start + k + half] = a - b;
            }
        }
        len <<= 1;
    }
}

/// `|X_k|^2` for `k = 0..=n/2` of the real input zero-padded to `n`.
pub(crate) fn power_spectrum(frame: &[f64], n: usize) -> Vec<f64> {
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    for (b, &x) in buf.iter_mut().zip(frame) {
        b.re = x;
    }
    fft_in_place(&mut buf);
    buf[..=n / 2].iter().map(|c| c.norm_sqr()).collect()
}

/// Hann-windowed short-time power spectrum.
///
/// `window_len` must be a power of two; the FFT length equals the window so
/// there are `window_len / 2 + 1` bins.
pub fn stft(signal: &AudioSignal, window_len: usize, hop: usize) -> Result<Spectrogram> {
    if hop == 0 || hop > window_len {
        return Err(invalid!("hop {hop} must be in 1..={window_len}"));
    }
    if !window_len.is_power_of_two() {
        return Err(invalid!("window length {window_len} is not a power of two"));
    }
    if signal.len() < window_len {
        return Err(invalid!(
            "signal of {} samples is shorter than the {window_len}-sample window",
            signal.len()
        ));
    }
    let n_frames = (signal.len() - window_len) / hop + 1;
    let n_bins = window_len / 2 + 1;
    let window = hann(window_len);
    let mut values = vec![0.0; n_bins * n_frames];
    let mut frame = vec![0.0; window_len];
    for t in 0..n_frames {
        let chunk = &signal.samples[t * hop..t * hop + window_len];
        for ((f, &x), &w) in frame.iter_mut().zip(chunk).zip(&window) {
            *f = x * w;
        }
        for (k, p) in power_spectrum(&frame, window_len).into_iter().enumerate() {
            values[k * n_frames + t] = p;
        }
    }
    let bin_hz = signal.sample_rate as f64 / window_len as f64;
    Ok(Spectrogram {
        values,
        n_bins,
        n_frames,
        bin_freqs: (0..n_bins).map(|k| k as f64 * bin_hz).collect(),
        hop,
        window_len,
        scale: SpectrogramScale::LinearPower,
    })
}

pub fn mel_spectrogram(spec: &Spectrogram, bank: &MelFilterbank) -> Result<Spectrogram> {
    if spec.scale != SpectrogramScale::LinearPower {
        return Err(invalid!("mel projection needs a linear power spectrogram"));
    }
    if spec.n_bins != bank.n_fft_bins {
        return Err(invalid!(
            "filterbank expects {} bins, spectrogram has {}",
            bank.n_fft_bins,
            spec.n_bins
        ));
    }
    let mut values = vec![0.0; bank.n_mels * spec.n_frames];
    for m in 0..bank.n_mels {
        let weights = bank.row(m);
        let out = &mut values[m * spec.n_frames..(m + 1) * spec.n_frames];
        for (k, &w) in weights.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            for (o, &p) in out.iter_mut().zip(spec.row(k)) {
                *o += w * p;
            }
        }
    }
    Ok(Spectrogram {
        values,
        n_bins: bank.n_mels,
        n_frames: spec.n_frames,
        bin_freqs: bank.center_freqs.clone(),
        hop: spec.hop,
        window_len: spec.window_len,
        scale: SpectrogramScale::LinearPower,
    })
}

/// `max(10 log10(v / v_max), floor_db)` with `v_max` the largest input.
///
/// An all-zero input maps uniformly to `floor_db`.
pub fn power_to_db(values: &[f64], floor_db: f64) -> Vec<f64> {
    let reference = values.iter().copied().fold(0.0, f64::max);
    if reference <= 0.0 {
        return vec![floor_db; values.len()];
    }
    values
        .iter()
        .map(|&v| {
            if v <= 0.0 {
                floor_db
            } else {
                (10.0 * (v / reference).log10()).max(floor_db)
            }
        })
        .collect()
}

/// `out[lag] = sum_t x[t] * x[t - lag]` for `lag = 0..=max_lag`, with `x`
/// zero outside its support.
pub fn autocorrelate(x: &[f64], max_lag: usize) -> Vec<f64> {
    (0..=max_lag)
        .map(|lag| x.get(lag..).unwrap_or(&[]).iter().zip(x).map(|(a, b)| a * b).sum())
        .collect()
}

/// Same-length convolution with a unit-area Gaussian truncated at 4 sigma;
/// samples beyond the ends count as zero.
pub fn gaussian_smooth(x: &[f64], sigma: f64) -> Result<Vec<f64>> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(invalid!("sigma must be positive, got {sigma}"));
    }
    let kernel = gaussian_kernel(sigma);
    let radius = (kernel.len() / 2) as isize;
    let n = x.len() as isize;
    Ok((0..n)
        .map(|i| {
            kernel
                .iter()
                .enumerate()
                .filter_map(|(k, &w)| {
                    let j = i + k as isize - radius;
                    (0..n).contains(&j).then(|| w * x[j as usize])
                })
                .sum()
        })
        .collect())
}

pub(crate) fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (4.0 * sigma).ceil() as isize;
    let raw: Vec<f64> = (-radius..=radius)
        .map(|k| (-0.5 * (k as f64 / sigma).powi(2)).exp())
        .collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|w| w / total).collect()
}

/// Single-frame periodogram `|FFT(x)|^2 / N` over bins `0..=N/2`, with `N`
/// the next power of two at or above the signal length.
pub fn psd(signal: &AudioSignal) -> Result<Vec<f64>> {
    if signal.is_empty() {
        return Err(invalid!("psd of an empty signal"));
    }
    let n = signal.len().next_power_of_two();
    let scale = 1.0 / n as f64;
    Ok(power_spectrum(&signal.samples, n)
        .into_iter()
        .map(|p| p * scale)
        .collect())
}

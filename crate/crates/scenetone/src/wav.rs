//! 16-bit PCM WAV reading and writing.

use std::path::Path;

use scenetone_core::dsp::{resample, AudioSignal};

use crate::error::{Context, Error, Result};

pub const ANALYSIS_RATE: u32 = 8_000;
pub const MIN_RATE: u32 = 8_000;
pub const MAX_RATE: u32 = 48_000;

const SCALE: f64 = 32_768.0;

/// Reads a PCM16 WAV, averaging channels, without resampling.
pub fn read_wav_raw(path: &Path) -> Result<AudioSignal> {
    let mut reader = hound::WavReader::open(path).map_err(|e| wav_error("opening WAV", path, e))?;
    let spec = reader.spec();
    if spec.sample_format != hound::SampleFormat::Int || spec.bits_per_sample != 16 {
        return Err(Error::format("reading WAV", path, format!("{}-bit {:?} is not 16-bit PCM", spec.bits_per_sample, spec.sample_format)));
    }
    if !(MIN_RATE..=MAX_RATE).contains(&spec.sample_rate) {
        return Err(Error::format(
            "reading WAV",
            path,
            format!("sample rate {} outside {MIN_RATE}..={MAX_RATE} Hz", spec.sample_rate),
        ));
    }
    let channels = spec.channels as usize;
    if channels == 0 || channels > 2 {
        return Err(Error::format("reading WAV", path, format!("{channels} channels; mono or stereo expected")));
    }
    let raw: Vec<i16> = reader
        .samples::<i16>()
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| wav_error("reading WAV samples", path, e))?;
    let samples = raw
        .chunks_exact(channels)
        .map(|frame| frame.iter().map(|&s| s as f64).sum::<f64>() / (channels as f64 * SCALE))
        .collect();
    AudioSignal::new(samples, spec.sample_rate).context(|| format!("WAV {}", path.display()))
}

/// Reads a WAV and brings it to the analysis rate.
pub fn read_wav(path: &Path) -> Result<AudioSignal> {
    let raw = read_wav_raw(path)?;
    if raw.is_empty() {
        return Err(Error::format("reading WAV", path, "no samples"));
    }
    resample(&raw, ANALYSIS_RATE).context(|| format!("resampling {}", path.display()))
}

/// Quantizes to PCM16 with clipping.
pub fn to_pcm16(samples: &[f64]) -> Vec<i16> {
    samples.iter().map(|&v| (v * SCALE).round().clamp(i16::MIN as f64, i16::MAX as f64) as i16).collect()
}

pub fn write_wav(path: &Path, signal: &AudioSignal) -> Result<()> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: signal.sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(|e| wav_error("creating WAV", path, e))?;
    for s in to_pcm16(&signal.samples) {
        writer.write_sample(s).map_err(|e| wav_error("writing WAV", path, e))?;
    }
    writer.finalize().map_err(|e| wav_error("finishing WAV", path, e))
}

fn wav_error(context: &str, path: &Path, e: hound::Error) -> Error {
    match e {
        hound::Error::IoError(io) => Error::io(context, path, io),
        other => Error::format(context, path, other),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pcm_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.wav");
        let samples: Vec<f64> = (-300..300).map(|i| (i * 109) as f64 / SCALE).collect();
        write_wav(&path, &AudioSignal::new(samples.clone(), 8_000).unwrap()).unwrap();
        let back = read_wav(&path).unwrap();
        assert_eq!(back.samples, samples);
        assert_eq!(back.sample_rate, 8_000);
    }

    #[test]
    fn stereo_is_averaged_and_resampled() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.wav");
        let spec = hound::WavSpec { channels: 2, sample_rate: 16_000, bits_per_sample: 16, sample_format: hound::SampleFormat::Int };
        let mut w = hound::WavWriter::create(&path, spec).unwrap();
        for _ in 0..1600 {
            w.write_sample(1000i16).unwrap();
            w.write_sample(3000i16).unwrap();
        }
        w.finalize().unwrap();
        let raw = read_wav_raw(&path).unwrap();
        assert_eq!(raw.len(), 1600);
        assert!(raw.samples.iter().all(|&v| v == 2000.0 / SCALE));
        assert_eq!(read_wav(&path).unwrap().len(), 800);
    }

    #[test]
    fn out_of_range_rate_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.wav");
        write_wav(&path, &AudioSignal::new(vec![0.0; 10], 4_000).unwrap()).unwrap();
        assert_eq!(read_wav(&path).unwrap_err().exit_code(), 3);
    }

    #[test]
    fn clipping() {
        assert_eq!(to_pcm16(&[2.0, -2.0, 0.5]), vec![i16::MAX, i16::MIN, 16_384]);
    }
}

//! Numeric core for turning a sequence of video frames into emotionally
//! matched music.
//!
//! The crate is `no_std` (with `alloc`): every operation is a pure function
//! of its inputs. File formats, the dataset pipeline and the command line
//! live in the `scenetone` companion crate.
//!
//! * [`dsp`]: resampling, STFT, mel filterbank, dB conversion,
//!   autocorrelation, Gaussian smoothing, periodogram.
//! * [`audio`]: segmentation and the tempo / loudness / rhythm descriptor.
//! * [`visual`]: RGB to HSI, fuzzy c-means, per-frame HSI descriptors.
//! * [`anfis`]: first-order Sugeno ANFIS with generalized Bell MFs.
//! * [`lstm`]: stacked LSTM regressor trained with full BPTT, plus the
//!   vanilla RNN cell used as a baseline.
//! * [`generation`]: segment dictionary, nearest-segment retrieval and
//!   audio assembly.
//! * [`evaluation`]: spectrogram MAE, MOS statistics, class tables.

#![no_std]

extern crate alloc;

pub mod anfis;
pub mod audio;
pub mod dsp;
mod error;
pub mod evaluation;
pub mod generation;
pub mod lstm;
pub mod stats;
pub mod visual;

pub use error::{Error, Result};

//! File formats, dataset handling and orchestration around `scenetone-core`.
//!
//! The `scenetone` binary exposes the pipeline as subcommands; everything it
//! does is reachable from here as well.

pub mod blob;
pub mod bundle;
pub mod config;
pub mod error;
pub mod fixture;
pub mod manifest;
pub mod mos_stats;
pub mod pipeline;
pub mod pnm;
pub mod store;
pub mod wav;

pub use bundle::{load_bundle, save_bundle, ModelBundle};
pub use config::PipelineConfig;
pub use error::{Error, Result};
pub use manifest::Manifest;
pub use store::FeatureStore;

#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use scenetone::fixture::{synth_fixture, FixtureSpec};
use scenetone::{pipeline, FeatureStore, Manifest, ModelBundle, PipelineConfig};

pub struct Shared {
    pub root: PathBuf,
    pub manifest_path: PathBuf,
    pub manifest: Manifest,
    pub cfg: PipelineConfig,
    pub store: FeatureStore,
    pub bundle: ModelBundle,
}

pub fn tiny_config() -> PipelineConfig {
    PipelineConfig::layered(&[&serde_json::json!({ "lstm": { "hidden": [4], "epochs": 3 } })]).unwrap()
}

/// Fixture, store and a quickly trained bundle, built once per test binary.
pub fn shared(tag: &str) -> &'static Shared {
    static CELL: OnceLock<Shared> = OnceLock::new();
    CELL.get_or_init(|| {
        let root = Path::new(env!("CARGO_TARGET_TMPDIR")).join(format!("scenetone-{tag}"));
        let _ = fs::remove_dir_all(&root);
        let manifest_path = synth_fixture(&root.join("fx"), 0, &FixtureSpec::default()).unwrap();
        let manifest = Manifest::load(&manifest_path).unwrap();
        let cfg = tiny_config();
        let store = pipeline::ingest(&manifest, &cfg).unwrap();
        let (bundle, _) = pipeline::train(&store, &cfg).unwrap();
        Shared { root, manifest_path, manifest, cfg, store, bundle }
    })
}

pub fn dir_bytes(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.insert(path.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&path).unwrap());
            }
        }
    }
    out
}

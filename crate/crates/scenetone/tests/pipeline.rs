mod common;

use std::fs;

use common::{dir_bytes, shared, tiny_config};
use scenetone::fixture::{synth_fixture, FixtureSpec};
use scenetone::{load_bundle, pipeline, save_bundle, Error, Manifest};
use scenetone_core::anfis::EmotionQuadrant;

const PROBE: &str = "pos_low_1";

fn probe_frames(s: &common::Shared) -> std::path::PathBuf {
    s.root.join("fx").join(PROBE).join("frames")
}

#[test]
fn fixture_bytes_depend_only_on_seed() {
    let dir = tempfile::tempdir().unwrap();
    let spec = FixtureSpec { clips_per_quadrant: 1, duration: 2.0, ..FixtureSpec::default() };
    synth_fixture(&dir.path().join("a"), 5, &spec).unwrap();
    synth_fixture(&dir.path().join("b"), 5, &spec).unwrap();
    synth_fixture(&dir.path().join("c"), 6, &spec).unwrap();
    let a = dir_bytes(&dir.path().join("a"));
    assert_eq!(a.len(), 4 * 8 + 4 + 1);
    assert_eq!(a, dir_bytes(&dir.path().join("b")));
    assert_ne!(a, dir_bytes(&dir.path().join("c")));
}

#[test]
fn planted_quadrants_differ_in_extracted_features() {
    let s = shared("pipeline");
    let clip = |id: &str| s.store.clips.iter().find(|c| c.id == id).unwrap();
    let mean_loudness = |id: &str| {
        let c = clip(id);
        c.tlr.iter().map(|d| d.loudness).sum::<f64>() / c.tlr.len() as f64
    };
    for v in 0..2 {
        let (hi, lo) = (format!("pos_high_{v}"), format!("neg_low_{v}"));
        assert!(clip(&hi).mean_hsi()[2] > clip(&lo).mean_hsi()[2] + 0.15);
        assert!(clip(&hi).clip_tempo > clip(&lo).clip_tempo + 40.0);
        assert!(mean_loudness(&hi) > mean_loudness(&lo));
    }
    assert!(s.store.clips.iter().all(|c| c.segments.len() == 12 && c.hsi.len() == 12 && !c.clip_tempo_defaulted));
}

#[test]
fn ingest_is_deterministic() {
    let s = shared("pipeline");
    let again = pipeline::ingest(&s.manifest, &s.cfg).unwrap();
    assert_eq!(again, s.store);
    let dir = tempfile::tempdir().unwrap();
    s.store.save(&dir.path().join("a")).unwrap();
    again.save(&dir.path().join("b")).unwrap();
    assert_eq!(dir_bytes(&dir.path().join("a")), dir_bytes(&dir.path().join("b")));
}

#[test]
fn duplicate_clip_ids_are_rejected() {
    let s = shared("pipeline");
    let mut m = s.manifest.clone();
    m.clips.push(m.clips[0].clone());
    let err = pipeline::ingest(&m, &s.cfg).unwrap_err();
    assert!(matches!(err, Error::Validation(_)), "{err}");
    assert!(err.to_string().contains(&m.clips[0].id), "{err}");
}

#[test]
fn train_rejects_store_from_other_settings() {
    let s = shared("pipeline");
    let mut cfg = tiny_config();
    cfg.segment_duration = 0.25;
    let err = pipeline::train(&s.store, &cfg).unwrap_err();
    assert!(err.to_string().contains("re-run ingest"), "{err}");
}

#[test]
fn bundle_round_trip_preserves_inference() {
    let s = shared("pipeline");
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bundle");
    save_bundle(&s.bundle, &path).unwrap();
    let loaded = load_bundle(&path).unwrap();
    assert_eq!(loaded, s.bundle);
    let before = pipeline::generate_from_dir(&s.bundle, &probe_frames(s), 4.0).unwrap();
    let after = pipeline::generate_from_dir(&loaded, &probe_frames(s), 4.0).unwrap();
    assert_eq!(before.0.samples, after.0.samples);
    assert_eq!(before.1, after.1);

    save_bundle(&loaded, &path).unwrap();
    assert!(!dir.path().join("bundle.tmp").exists() && !dir.path().join("bundle.old").exists());
}

#[test]
fn corrupted_bundle_file_is_named() {
    let s = shared("pipeline");
    let dir = tempfile::tempdir().unwrap();
    save_bundle(&s.bundle, dir.path()).unwrap();
    let target = dir.path().join("stats.bin");
    let mut bytes = fs::read(&target).unwrap();
    let last = bytes.len() - 1;
    bytes[last] ^= 0x40;
    fs::write(&target, bytes).unwrap();
    let err = load_bundle(dir.path()).unwrap_err();
    assert_eq!(err.exit_code(), 3);
    assert!(err.to_string().contains("stats.bin"), "{err}");

    fs::remove_file(&target).unwrap();
    let err = load_bundle(dir.path()).unwrap_err();
    assert!(err.to_string().contains("stats.bin"), "{err}");
}

#[test]
fn unknown_bundle_version_asks_for_migration() {
    let s = shared("pipeline");
    let dir = tempfile::tempdir().unwrap();
    save_bundle(&s.bundle, dir.path()).unwrap();
    let index = dir.path().join("bundle.json");
    let mut raw: serde_json::Value = serde_json::from_slice(&fs::read(&index).unwrap()).unwrap();
    raw["format_version"] = 99.into();
    fs::write(&index, serde_json::to_vec(&raw).unwrap()).unwrap();
    let err = load_bundle(dir.path()).unwrap_err();
    assert!(matches!(err, Error::Validation(_)) && err.to_string().contains("migration"), "{err}");
}

#[test]
fn report_has_one_step_per_descriptor() {
    let s = shared("pipeline");
    let (audio, report) = pipeline::generate_from_dir(&s.bundle, &probe_frames(s), 4.0).unwrap();
    assert_eq!(report.steps.len(), pipeline::segment_count(24, 4.0, 0.5));
    for (k, step) in report.steps.iter().enumerate() {
        assert_eq!(step.frame_index, pipeline::frame_index(k, 4.0, 0.5, 24));
        let dict = &s.bundle.models.dictionaries[&report.quadrant];
        assert_eq!(dict.entries[step.dictionary_index].source_clip, step.source_clip);
    }
    assert!((audio.samples.len() as f64 / audio.sample_rate as f64 - report.total_duration).abs() < 1e-9);
}

#[test]
fn single_quadrant_store_trains_one_model() {
    let s = shared("pipeline");
    let mut store = s.store.clone();
    store.clips.retain(|c| c.quadrant() == EmotionQuadrant::PosHigh);
    let (bundle, summary) = pipeline::train(&store, &s.cfg).unwrap();
    assert_eq!(bundle.models.lstm.len(), 1);
    assert_eq!(bundle.models.dictionaries.len(), 1);
    assert_eq!(summary.omitted_quadrants.len(), 3);

    let dir = tempfile::tempdir().unwrap();
    save_bundle(&bundle, dir.path()).unwrap();
    assert_eq!(load_bundle(dir.path()).unwrap().quadrants(), vec![EmotionQuadrant::PosHigh]);
}

#[test]
fn generating_for_a_missing_quadrant_fails() {
    let s = shared("pipeline");
    let (_, report) = pipeline::generate_from_dir(&s.bundle, &probe_frames(s), 4.0).unwrap();
    let mut bundle = s.bundle.clone();
    bundle.models.lstm.remove(&report.quadrant);
    bundle.models.dictionaries.remove(&report.quadrant);
    let err = pipeline::generate_from_dir(&bundle, &probe_frames(s), 4.0).unwrap_err();
    assert_eq!(err.exit_code(), 2, "{err}");
}

#[test]
fn single_clip_evaluation_mean_equals_row() {
    let s = shared("pipeline");
    let m = Manifest { clips: vec![s.manifest.clips[3].clone()], ..s.manifest.clone() };
    let dir = tempfile::tempdir().unwrap();
    let summary = pipeline::evaluate(&s.bundle, &m, dir.path()).unwrap();
    assert_eq!(summary.clips.len(), 1);
    assert_eq!(summary.mean_spectrogram_mae, summary.clips[0].spectrogram_mae);
    assert_eq!(summary.mean_retrieval_exactness, summary.clips[0].retrieval_exactness);
    assert_eq!(summary.render().lines().count(), 3);

    let csv = fs::read_to_string(dir.path().join("summary.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
    let id = &m.clips[0].id;
    for name in [format!("{id}.wav"), format!("{id}.json"), format!("{id}_generated.pgm"), format!("{id}_original.pgm")] {
        assert!(dir.path().join(&name).is_file(), "{name} missing");
    }
}

use std::fs;
use std::path::Path;

use gramstyle::gram::store::{manifest_path, FeatureStore};
use gramstyle::gram::FlattenMode;
use gramstyle::network::{small_extractor_spec, Network};
use gramstyle::pipeline::{
    ingest, preprocess, run_extraction, ExtractionConfig, LabeledDataset, PreprocessConfig,
};
use gramstyle::synthetic::{texture, write_corpus, TextureKind};

fn write_labels(dir: &Path, rows: &[(&str, &str)]) -> std::path::PathBuf {
    let path = dir.join("labels.csv");
    let mut body = String::from("filename,style\n");
    for (f, s) in rows {
        body.push_str(&format!("{f},{s}\n"));
    }
    fs::write(&path, body).unwrap();
    path
}

fn extraction_config(workers: usize, resume: bool) -> ExtractionConfig {
    ExtractionConfig {
        taps: vec!["ReLU1_1".into(), "ReLU3_1".into()],
        mode: FlattenMode::StrictUpper,
        preprocess: PreprocessConfig {
            resize: 32,
            crop: 32,
            mean: [0.5; 3],
            flip: false,
        },
        workers,
        resume,
    }
}

fn corpus(dir: &Path, per_class: usize) -> LabeledDataset {
    let csv = write_corpus(dir, per_class, 32, 7).unwrap();
    ingest(dir, csv).unwrap().0
}

#[test]
fn ingest_skips_missing_files() {
    let dir = tempfile::tempdir().unwrap();
    for (name, kind, seed) in [
        ("a.png", TextureKind::Stripes, 1),
        ("b.png", TextureKind::Dots, 2),
        ("c.png", TextureKind::Stripes, 3),
    ] {
        texture(kind, 16, seed).save(dir.path().join(name)).unwrap();
    }
    let csv = write_labels(
        dir.path(),
        &[
            ("a.png", "stripes"),
            ("b.png", "dots"),
            ("c.png", "stripes"),
            ("gone.png", "dots"),
        ],
    );
    let (ds, report) = ingest(dir.path(), &csv).unwrap();
    assert_eq!(ds.len(), 3);
    assert_eq!(report.skipped(), 1);
    assert_eq!(report.missing, 1);
    assert_eq!(ds.classes, vec!["dots", "stripes"]);
    assert_eq!(ds.class_counts(), vec![1, 2]);
    let mean = ds.channel_mean.unwrap();
    assert!(mean.iter().all(|m| (0.0..=1.0).contains(m)));
}

#[test]
fn ingest_counts_undecodable_files() {
    let dir = tempfile::tempdir().unwrap();
    texture(TextureKind::Noise, 16, 1)
        .save(dir.path().join("ok.png"))
        .unwrap();
    fs::write(dir.path().join("bad.png"), b"not an image").unwrap();
    let csv = write_labels(dir.path(), &[("ok.png", "noise"), ("bad.png", "noise")]);
    let (ds, report) = ingest(dir.path(), &csv).unwrap();
    assert_eq!((ds.len(), report.undecodable), (1, 1));
}

#[test]
fn ingest_rejects_empty_label_files() {
    let dir = tempfile::tempdir().unwrap();
    let csv = write_labels(dir.path(), &[]);
    assert!(ingest(dir.path(), &csv).is_err());
}

#[test]
fn dataset_manifests_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let ds = corpus(dir.path(), 2);
    let path = dir.path().join("dataset.json");
    ds.save(&path).unwrap();
    assert_eq!(LabeledDataset::load(&path).unwrap(), ds);
}

#[test]
fn preprocessing_yields_cropped_chw() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.png");
    image::RgbImage::from_fn(40, 24, |x, y| image::Rgb([x as u8, y as u8, 9]))
        .save(&path)
        .unwrap();
    let cfg = PreprocessConfig {
        resize: 20,
        crop: 16,
        ..PreprocessConfig::default()
    };
    assert_eq!(preprocess(&path, &cfg).unwrap().shape(), &[3, 16, 16]);
}

#[test]
fn empty_dataset_gives_empty_store() {
    let dir = tempfile::tempdir().unwrap();
    let ds = LabeledDataset {
        classes: vec!["x".into()],
        records: Vec::new(),
        channel_mean: None,
    };
    let net = Network::random(small_extractor_spec(), 1).unwrap();
    let store = dir.path().join("f.nsf");
    let report = run_extraction(&ds, &net, &store, &extraction_config(1, false)).unwrap();
    assert_eq!(report.written, 0);
    assert_eq!(FeatureStore::open(&store).unwrap().len(), 0);
    assert!(manifest_path(&store).is_file());
}

#[test]
fn extraction_is_independent_of_worker_count_and_resumable() {
    let dir = tempfile::tempdir().unwrap();
    let ds = corpus(&dir.path().join("img"), 3);
    let net = Network::random(small_extractor_spec(), 2).unwrap();

    let one = dir.path().join("one.nsf");
    let three = dir.path().join("three.nsf");
    run_extraction(&ds, &net, &one, &extraction_config(1, false)).unwrap();
    run_extraction(&ds, &net, &three, &extraction_config(3, false)).unwrap();
    assert_eq!(fs::read(&one).unwrap(), fs::read(&three).unwrap());
    assert_eq!(
        fs::read(manifest_path(&one)).unwrap(),
        fs::read(manifest_path(&three)).unwrap()
    );

    let resumed = dir.path().join("resumed.nsf");
    let head = LabeledDataset {
        records: ds.records[..4].to_vec(),
        ..ds.clone()
    };
    run_extraction(&head, &net, &resumed, &extraction_config(2, false)).unwrap();
    let report = run_extraction(&ds, &net, &resumed, &extraction_config(2, true)).unwrap();
    assert_eq!(report.skipped_existing, 4);
    assert_eq!(report.written, ds.len() - 4);
    assert_eq!(fs::read(&one).unwrap(), fs::read(&resumed).unwrap());
}

#[test]
fn corrupt_images_fail_without_aborting() {
    let dir = tempfile::tempdir().unwrap();
    let mut ds = corpus(dir.path(), 1);
    fs::write(&ds.records[1].path, b"garbage").unwrap();
    ds.records[1].id = "broken".into();
    let net = Network::random(small_extractor_spec(), 3).unwrap();
    let store = dir.path().join("f.nsf");
    let report = run_extraction(&ds, &net, &store, &extraction_config(2, false)).unwrap();
    assert_eq!(report.written, ds.len() - 1);
    assert_eq!(report.failed.len(), 1);
    assert_eq!(report.failed[0].0, "broken");
    let ids: Vec<_> = FeatureStore::open(&store)
        .unwrap()
        .records()
        .unwrap()
        .into_iter()
        .map(|r| r.image_id)
        .collect();
    assert!(!ids.contains(&"broken".to_string()));
}

#[test]
fn unknown_taps_are_rejected_before_work_starts() {
    let dir = tempfile::tempdir().unwrap();
    let ds = corpus(dir.path(), 1);
    let net = Network::random(small_extractor_spec(), 3).unwrap();
    let mut cfg = extraction_config(1, false);
    cfg.taps.push("ReLU9_9".into());
    let err = run_extraction(&ds, &net, dir.path().join("f.nsf"), &cfg).unwrap_err();
    assert!(matches!(err, gramstyle::Error::UnknownTap(_)));
}

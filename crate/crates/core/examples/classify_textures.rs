//! Style classification on a procedural texture corpus: Gram features of a
//! small random-weight network, a random forest with and without PCA, and a
//! linear softmax classifier.
//!
//! Run with `cargo run --release --example classify_textures`.

use gramstyle::classifiers::{
    apply_normalizer, fit_normalizer, pca_fit, pca_transform, per_class_recall, predict_forest,
    predict_linear, top1_accuracy, train_forest, train_linear, AdamConfig, ForestConfig,
};
use gramstyle::gram::FlattenMode;
use gramstyle::network::{small_extractor_spec, Network};
use gramstyle::pipeline::{
    ingest, load_features, run_extraction, stratified_split, ExtractionConfig, PreprocessConfig,
};
use gramstyle::synthetic::write_corpus;

fn main() -> gramstyle::Result<()> {
    let dir = tempfile::tempdir()?;
    let labels = write_corpus(dir.path().join("images"), 150, 32, 7)?;
    let (ds, _) = ingest(dir.path().join("images"), &labels)?;
    let (train, val) = stratified_split(&ds, 0.1, 7)?;
    println!(
        "{} training and {} validation images over {:?}",
        train.len(),
        val.len(),
        ds.classes
    );

    let net = Network::random(small_extractor_spec(), 11)?;
    let cfg = ExtractionConfig {
        taps: vec!["ReLU1_1".into()],
        mode: FlattenMode::StrictUpper,
        preprocess: PreprocessConfig {
            resize: 32,
            crop: 32,
            mean: ds.channel_mean.unwrap_or_default(),
            flip: false,
        },
        workers: 2,
        resume: false,
    };
    let train_store = dir.path().join("train.nsf");
    let val_store = dir.path().join("val.nsf");
    run_extraction(&train, &net, &train_store, &cfg)?;
    run_extraction(&val, &net, &val_store, &cfg)?;
    let tr = load_features(&train_store, &[])?;
    let va = load_features(&val_store, &[])?;
    let (ytr, yva) = (tr.label_indices()?, va.label_indices()?);
    println!("{} Gram features per image", tr.x.cols());

    let forest_cfg = ForestConfig {
        seed: 3,
        ..ForestConfig::default()
    };
    let forest = train_forest(&tr.x, &ytr, &forest_cfg)?;
    let pred = predict_forest(&forest, &va.x)?.labels;
    println!("forest top-1: {:.3}", top1_accuracy(&pred, &yva)?);
    println!(
        "forest per-class recall: {:?}",
        per_class_recall(&pred, &yva, ds.classes.len())?
    );
    if let Some(oob) = forest.oob_accuracy(&tr.x, &ytr)? {
        println!("forest out-of-bag accuracy: {oob:.3}");
    }

    let pca = pca_fit(&tr.x, 0.9)?;
    let forest_pca = train_forest(&pca_transform(&pca, &tr.x)?, &ytr, &forest_cfg)?;
    let pred = predict_forest(&forest_pca, &pca_transform(&pca, &va.x)?)?.labels;
    println!(
        "forest on {} principal components: {:.3}",
        pca.k(),
        top1_accuracy(&pred, &yva)?
    );

    let norm = fit_normalizer(&tr.x)?;
    let (mut linear, trace) = train_linear(
        &apply_normalizer(&norm, &tr.x)?,
        &ytr,
        ds.classes.len(),
        &AdamConfig::default(),
    )?;
    linear.normalizer = Some(norm);
    let pred = predict_linear(&linear, &va.x)?.labels;
    println!(
        "linear top-1: {:.3} (loss {:.3} -> {:.3})",
        top1_accuracy(&pred, &yva)?,
        trace[0],
        trace[trace.len() - 1]
    );
    Ok(())
}

//! Trains the fractional-max-pooling baseline classifier directly on pixels
//! of a small procedural texture corpus and reports validation accuracy.
//!
//! Run with `cargo run --release --example train_baseline_cnn`.

use gramstyle::network::{baseline_cnn_spec, evaluate_accuracy, train_classifier, Network, TrainConfig};
use gramstyle::pipeline::{ingest, load_images, stratified_split, PreprocessConfig};
use gramstyle::synthetic::write_corpus;

fn main() -> gramstyle::Result<()> {
    let dir = tempfile::tempdir()?;
    let labels = write_corpus(dir.path(), 40, 32, 9)?;
    let (ds, _) = ingest(dir.path(), &labels)?;
    let (train, val) = stratified_split(&ds, 0.2, 1)?;

    let pre = PreprocessConfig {
        resize: 32,
        crop: 32,
        mean: ds.channel_mean.unwrap_or_default(),
        flip: false,
    };
    let (xtr, xva) = (load_images(&train, &pre)?, load_images(&val, &pre)?);
    let spec = baseline_cnn_spec(ds.classes.len(), [3, 32, 32])?;
    println!("{} layers, {} parameter tensors", spec.layers.len(), spec.parameter_shapes().len());

    let net = Network::random(spec, 1)?;
    let cfg = TrainConfig {
        epochs: 12,
        batch: 16,
        lr: 0.01,
        seed: 2,
        lr_decay_epochs: vec![8],
        ..TrainConfig::default()
    };
    let (net, stats) = train_classifier(&net, &xtr, &train.labels(), &cfg)?;
    for s in &stats {
        println!(
            "epoch {:>2}  lr {:.4}  loss {:.4}  train top-1 {:.3}",
            s.epoch, s.lr, s.loss, s.accuracy
        );
    }
    println!("validation top-1: {:.3}", evaluate_accuracy(&net, &xva, &val.labels())?);
    Ok(())
}

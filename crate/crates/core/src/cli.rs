//! The `gramstyle` command-line tool.
//!
//! Every subcommand reads and writes the crate's file formats: JSON dataset
//! manifests, NSW1 weight containers, NSF1 feature stores with their CSV
//! manifests, NSRF forests, and CSV embeddings. Trained models get a JSON
//! sidecar at `<model>.json` recording how they were produced, which `eval`
//! uses to reload them.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::classifiers::{
    apply_normalizer, argmax, fit_normalizer, pca_fit, pca_transform, per_class_recall,
    predict_forest, predict_linear, top1_accuracy, train_forest, train_linear, AdamConfig,
    ForestConfig, ForestModel, LinearModel, PcaModel,
};
use crate::error::{Error, Result};
use crate::gram::FlattenMode;
use crate::network::{
    baseline_cnn_spec, load_weights, small_extractor_spec, train_classifier, vgg19_extractor_spec,
    EpochStats, Network, NetworkSpec, TensorContainer, TrainConfig, VGG_STYLE_TAPS,
};
use crate::optim::AdamParams;
use crate::pipeline::{
    ingest, load_features, load_images, min_class_filter, preprocess, run_extraction, save_png,
    stratified_split, ExtractionConfig, LabeledDataset, LoadedFeatures, PreprocessConfig,
};
use crate::seed;
use crate::styletransfer::{transfer, InitMode, TransferConfig};
use crate::synthetic::write_corpus;
use crate::tsne::{tsne_embed, write_embedding_csv, write_run_metadata, RunMetadata, TsneConfig};

#[derive(Parser, Debug)]
#[command(
    name = "gramstyle",
    version,
    about = "Gram-matrix style features, classifiers, style transfer and t-SNE"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Normalize {
    Zscore,
    None,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Flatten {
    Strict,
    Diagonal,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Init {
    Noise,
    Content,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build a dataset manifest from an image directory and a `filename,style` CSV.
    Ingest {
        #[arg(long)]
        images: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Drop classes with fewer images than this.
        #[arg(long)]
        min_class: Option<usize>,
    },
    /// Stratified train/validation split of a manifest.
    Split {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, default_value_t = 0.1)]
        fraction: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out_train: PathBuf,
        #[arg(long)]
        out_val: PathBuf,
    },
    /// Write Gram features of every manifest image to an NSF1 store.
    Extract {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        weights: PathBuf,
        /// `vgg19`, `small`, or a JSON network spec file.
        #[arg(long, default_value = "vgg19")]
        arch: String,
        #[arg(long, value_delimiter = ',', default_values_t = VGG_STYLE_TAPS.map(String::from))]
        taps: Vec<String>,
        #[arg(long)]
        store: PathBuf,
        #[arg(long, default_value_t = 1)]
        workers: usize,
        #[arg(long, default_value_t = 256)]
        resize: u32,
        #[arg(long, default_value_t = 224)]
        crop: u32,
        /// Per-channel mean `r,g,b`; defaults to the manifest's measured mean.
        #[arg(long, value_delimiter = ',', num_args = 3)]
        mean: Option<Vec<f64>>,
        #[arg(long, value_enum, default_value_t = Flatten::Strict)]
        flatten: Flatten,
        /// Keep records already in the store.
        #[arg(long)]
        resume: bool,
    },
    /// Softmax regression on stored features.
    TrainLinear {
        #[arg(long)]
        store: PathBuf,
        /// `all` or a comma-separated list of layers.
        #[arg(long, default_value = "all")]
        layers: String,
        #[arg(long, value_enum, default_value_t = Normalize::Zscore)]
        normalize: Normalize,
        #[arg(long, default_value_t = 55)]
        epochs: usize,
        #[arg(long, default_value_t = 32)]
        batch: usize,
        #[arg(long, default_value_t = 1e-3)]
        lr: f64,
        #[arg(long, default_value_t = 0.0)]
        l2: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Random forest on stored features.
    TrainForest {
        #[arg(long)]
        store: PathBuf,
        #[arg(long, default_value = "all")]
        layer: String,
        #[arg(long, default_value_t = 200)]
        trees: usize,
        #[arg(long)]
        max_depth: Option<usize>,
        #[arg(long, default_value_t = 1)]
        min_leaf: usize,
        #[arg(long)]
        mtry: Option<usize>,
        /// Project features with a model written by `pca` first.
        #[arg(long)]
        pca: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit principal components retaining a fraction of the variance.
    Pca {
        #[arg(long)]
        store: PathBuf,
        #[arg(long, default_value = "all")]
        layer: String,
        #[arg(long, default_value_t = 0.90)]
        variance: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Top-1 accuracy and per-class recall of a trained model, as CSV.
    Eval {
        #[arg(long)]
        model: PathBuf,
        /// Feature store, for linear and forest models.
        #[arg(long)]
        store: Option<PathBuf>,
        /// Dataset manifest, for CNN models; names classes otherwise.
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// Name of the evaluated split, echoed in the output.
        #[arg(long, default_value = "val")]
        split: String,
    },
    /// Train the baseline CNN classifier on raw images.
    TrainCnn {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, default_value_t = 55)]
        epochs: usize,
        /// Head width; defaults to the manifest's class count.
        #[arg(long)]
        classes: Option<usize>,
        #[arg(long, default_value_t = 64)]
        size: u32,
        #[arg(long, default_value_t = 32)]
        batch: usize,
        #[arg(long, default_value_t = 0.01)]
        lr: f64,
        #[arg(long)]
        no_flip: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Synthesize an image with one image's content and another's style.
    Transfer {
        #[arg(long)]
        content: PathBuf,
        #[arg(long)]
        style: PathBuf,
        #[arg(long)]
        weights: PathBuf,
        #[arg(long, default_value = "vgg19")]
        arch: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 500)]
        iters: usize,
        #[arg(long, default_value_t = 1000.0)]
        style_weight: f64,
        #[arg(long, default_value_t = 1.0)]
        content_weight: f64,
        #[arg(long, value_delimiter = ',', default_values_t = ["ReLU4_1".to_string()])]
        content_layers: Vec<String>,
        #[arg(long, value_delimiter = ',', default_values_t = VGG_STYLE_TAPS.map(String::from))]
        style_layers: Vec<String>,
        #[arg(long, default_value_t = 224)]
        size: u32,
        #[arg(long, default_value_t = 0.02)]
        step: f64,
        #[arg(long, value_enum, default_value_t = Init::Noise)]
        init: Init,
        #[arg(long, value_delimiter = ',', num_args = 3)]
        mean: Option<Vec<f64>>,
        /// Also write the per-iteration loss as CSV.
        #[arg(long)]
        trace: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Two-dimensional Barnes-Hut t-SNE of stored features.
    Tsne {
        #[arg(long)]
        store: PathBuf,
        #[arg(long, default_value = "all")]
        layer: String,
        /// Embed a seeded random subset when the store is larger.
        #[arg(long, default_value_t = 20000)]
        sample: usize,
        #[arg(long, default_value_t = 30.0)]
        perplexity: f64,
        #[arg(long, default_value_t = 0.5)]
        theta: f64,
        #[arg(long, default_value_t = 1000)]
        iters: usize,
        #[arg(long)]
        pca_dims: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write He-initialized weights for an architecture.
    InitWeights {
        #[arg(long, default_value = "vgg19")]
        arch: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a procedural stripes/dots/noise corpus with a label CSV.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 150)]
        per_class: usize,
        #[arg(long, default_value_t = 32)]
        size: u32,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

/// How a trained model was produced; stored next to it as `<model>.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelInfo {
    Linear {
        layers: Vec<String>,
        normalized: bool,
        config: AdamConfig,
        loss_trace: Vec<f64>,
    },
    Forest {
        layers: Vec<String>,
        pca: Option<PathBuf>,
        config: ForestConfig,
    },
    Pca {
        layers: Vec<String>,
        variance: f64,
        components: usize,
    },
    Cnn {
        spec: NetworkSpec,
        classes: Vec<String>,
        preprocess: PreprocessConfig,
        config: TrainConfig,
        stats: Vec<EpochStats>,
    },
}

pub fn sidecar_path(model: &Path) -> PathBuf {
    let mut s = model.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

impl ModelInfo {
    pub fn save(&self, model: &Path) -> Result<()> {
        fs::write(
            sidecar_path(model),
            serde_json::to_string_pretty(self)? + "\n",
        )?;
        Ok(())
    }

    pub fn load(model: &Path) -> Result<Self> {
        Ok(serde_json::from_slice(&fs::read(sidecar_path(model))?)?)
    }
}

/// Process exit code for an error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::InvalidArgument(_) | Error::UnknownTap(_) => 1,
        Error::NonFinite(_) => 3,
        _ => 2,
    }
}

/// Resolves `vgg19`, `small`, or a path to a JSON network spec.
pub fn arch_spec(arch: &str) -> Result<NetworkSpec> {
    match arch {
        "vgg19" => Ok(vgg19_extractor_spec()),
        "small" => Ok(small_extractor_spec()),
        path => {
            let spec: NetworkSpec = serde_json::from_slice(&fs::read(path)?)?;
            spec.validate()?;
            Ok(spec)
        }
    }
}

fn layer_list(arg: &str) -> Vec<String> {
    if arg.eq_ignore_ascii_case("all") {
        Vec::new()
    } else {
        arg.split(',').map(|s| s.trim().to_string()).collect()
    }
}

fn mean_arg(mean: Option<Vec<f64>>, fallback: Option<[f64; 3]>) -> [f64; 3] {
    match mean {
        Some(m) => [m[0], m[1], m[2]],
        None => fallback.unwrap_or_default(),
    }
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn execute(cmd: Command) -> Result<()> {
    match cmd {
        Command::Ingest {
            images,
            labels,
            out,
            min_class,
        } => {
            let (mut ds, report) = ingest(&images, &labels)?;
            if let Some(n) = min_class {
                ds = min_class_filter(&ds, n)?;
            }
            ds.save(&out)?;
            println!(
                "{} images in {} classes; skipped {} missing, {} undecodable, {} duplicate",
                ds.len(),
                ds.classes.len(),
                report.missing,
                report.undecodable,
                report.duplicates
            );
        }
        Command::Split {
            manifest,
            fraction,
            seed,
            out_train,
            out_val,
        } => {
            let ds = LabeledDataset::load(&manifest)?;
            let (train, val) = stratified_split(&ds, fraction, seed)?;
            train.save(&out_train)?;
            val.save(&out_val)?;
            println!("{} training, {} validation", train.len(), val.len());
        }
        Command::Extract {
            manifest,
            weights,
            arch,
            taps,
            store,
            workers,
            resize,
            crop,
            mean,
            flatten,
            resume,
        } => {
            let ds = LabeledDataset::load(&manifest)?;
            let net = load_weights(arch_spec(&arch)?, &weights)?;
            let cfg = ExtractionConfig {
                taps,
                mode: match flatten {
                    Flatten::Strict => FlattenMode::StrictUpper,
                    Flatten::Diagonal => FlattenMode::WithDiagonal,
                },
                preprocess: PreprocessConfig {
                    resize,
                    crop,
                    mean: mean_arg(mean, ds.channel_mean),
                    flip: false,
                },
                workers,
                resume,
            };
            let report = run_extraction(&ds, &net, &store, &cfg)?;
            println!(
                "wrote {} records, kept {} existing, {} failed",
                report.written,
                report.skipped_existing,
                report.failed.len()
            );
        }
        Command::TrainLinear {
            store,
            layers,
            normalize,
            epochs,
            batch,
            lr,
            l2,
            seed,
            out,
        } => {
            let f = load_features(&store, &layer_list(&layers))?;
            let y = f.label_indices()?;
            let classes = y.iter().max().map_or(0, |m| m + 1);
            let cfg = AdamConfig {
                adam: AdamParams {
                    step: lr,
                    ..AdamParams::default()
                },
                epochs,
                batch: batch.min(f.x.rows()),
                seed,
                l2,
            };
            let normalized = matches!(normalize, Normalize::Zscore);
            let (model, trace) = if normalized {
                let norm = fit_normalizer(&f.x)?;
                let (mut m, t) = train_linear(&apply_normalizer(&norm, &f.x)?, &y, classes, &cfg)?;
                m.normalizer = Some(norm);
                (m, t)
            } else {
                train_linear(&f.x, &y, classes, &cfg)?
            };
            model.to_container().write(&out)?;
            let acc = top1_accuracy(&predict_linear(&model, &f.x)?.labels, &y)?;
            println!(
                "{} features, {} classes; final loss {:.6}; training top-1 {acc:.4}",
                f.x.cols(),
                classes,
                trace.last().copied().unwrap_or(f64::NAN)
            );
            ModelInfo::Linear {
                layers: f.layers,
                normalized,
                config: cfg,
                loss_trace: trace,
            }
            .save(&out)?;
        }
        Command::TrainForest {
            store,
            layer,
            trees,
            max_depth,
            min_leaf,
            mtry,
            pca,
            seed,
            out,
        } => {
            let f = load_features(&store, &layer_list(&layer))?;
            let y = f.label_indices()?;
            let x = match &pca {
                Some(p) => {
                    pca_transform(&PcaModel::from_container(&TensorContainer::read(p)?)?, &f.x)?
                }
                None => f.x.clone(),
            };
            let cfg = ForestConfig {
                trees,
                max_depth,
                min_leaf,
                mtry,
                seed,
            };
            let model = train_forest(&x, &y, &cfg)?.with_layers(f.layers.clone());
            model.save(&out)?;
            match model.oob_accuracy(&x, &y)? {
                Some(oob) => println!(
                    "{} trees on {} features; out-of-bag accuracy {oob:.4}",
                    trees,
                    x.cols()
                ),
                None => println!("{} trees on {} features", trees, x.cols()),
            }
            ModelInfo::Forest {
                layers: f.layers,
                pca,
                config: cfg,
            }
            .save(&out)?;
        }
        Command::Pca {
            store,
            layer,
            variance,
            out,
        } => {
            let f = load_features(&store, &layer_list(&layer))?;
            let model = pca_fit(&f.x, variance)?;
            model.to_container().write(&out)?;
            let kept: f64 = model.ratios.data().iter().map(|&r| r as f64).sum();
            println!(
                "{} of {} components retain {kept:.4} of the variance",
                model.k(),
                f.x.cols()
            );
            ModelInfo::Pca {
                layers: f.layers,
                variance,
                components: model.k(),
            }
            .save(&out)?;
        }
        Command::Eval {
            model,
            store,
            manifest,
            split,
        } => eval(&model, store.as_deref(), manifest.as_deref(), &split)?,
        Command::TrainCnn {
            manifest,
            epochs,
            classes,
            size,
            batch,
            lr,
            no_flip,
            seed,
            out,
        } => {
            let ds = LabeledDataset::load(&manifest)?;
            let classes = classes.unwrap_or(ds.classes.len());
            if classes != ds.classes.len() {
                return Err(Error::InvalidArgument(format!(
                    "--classes {classes} but the manifest has {}",
                    ds.classes.len()
                )));
            }
            let spec = baseline_cnn_spec(classes, [3, size as usize, size as usize])?;
            let pre = PreprocessConfig {
                resize: size,
                crop: size,
                mean: ds.channel_mean.unwrap_or_default(),
                flip: false,
            };
            let images = load_images(&ds, &pre)?;
            let cfg = TrainConfig {
                epochs,
                batch: batch.min(images.len()),
                lr,
                seed,
                augment_hflip: !no_flip,
                ..TrainConfig::default()
            };
            let net = Network::random(spec.clone(), seed::derive(seed, &[0]))?;
            let (net, stats) = train_classifier(&net, &images, &ds.labels(), &cfg)?;
            net.save_weights(&out)?;
            for s in &stats {
                println!(
                    "epoch {:>3}  lr {:.5}  loss {:.5}  train top-1 {:.4}",
                    s.epoch, s.lr, s.loss, s.accuracy
                );
            }
            ModelInfo::Cnn {
                spec,
                classes: ds.classes,
                preprocess: pre,
                config: cfg,
                stats,
            }
            .save(&out)?;
        }
        Command::Transfer {
            content,
            style,
            weights,
            arch,
            out,
            iters,
            style_weight,
            content_weight,
            content_layers,
            style_layers,
            size,
            step,
            init,
            mean,
            trace,
            seed,
        } => {
            let net = load_weights(arch_spec(&arch)?, &weights)?;
            let mean = mean_arg(mean, None);
            let pre = PreprocessConfig {
                resize: size,
                crop: size,
                mean,
                flip: false,
            };
            let cfg = TransferConfig {
                content_layers,
                style_layers,
                content_weight,
                style_weight,
                iterations: iters,
                adam: AdamParams {
                    step,
                    ..AdamParams::default()
                },
                seed,
                init: match init {
                    Init::Noise => InitMode::Noise,
                    Init::Content => InitMode::ContentCopy,
                },
                channel_mean: mean.to_vec(),
                ..TransferConfig::default()
            };
            let result = transfer(
                &net,
                &preprocess(&content, &pre)?,
                &preprocess(&style, &pre)?,
                &cfg,
            )?;
            save_png(&result.image, mean, &out)?;
            if let Some(path) = trace {
                let mut w = csv::Writer::from_path(path)?;
                w.write_record(["iteration", "total", "content", "style"])?;
                for (i, l) in result.trace.iter().enumerate() {
                    w.write_record([
                        i.to_string(),
                        l.total.to_string(),
                        l.content.to_string(),
                        l.style.to_string(),
                    ])?;
                }
                w.flush()?;
            }
            let (first, last) = (&result.trace[0], &result.trace[result.trace.len() - 1]);
            println!("loss {:.6e} -> {:.6e}", first.total, last.total);
        }
        Command::Tsne {
            store,
            layer,
            sample,
            perplexity,
            theta,
            iters,
            pca_dims,
            seed,
            out,
        } => {
            let mut f = load_features(&store, &layer_list(&layer))?;
            if f.ids.len() > sample {
                let mut rng = ChaCha8Rng::seed_from_u64(seed::derive(seed, &[1]));
                let mut keep = rand::seq::index::sample(&mut rng, f.ids.len(), sample).into_vec();
                keep.sort_unstable();
                f = f.select(&keep);
            }
            let cfg = TsneConfig {
                perplexity,
                theta,
                iterations: iters,
                pca_dims,
                seed,
                ..TsneConfig::default()
            };
            let e = tsne_embed(&f.x, &cfg)?;
            write_embedding_csv(&out, &f.ids, &f.labels, &e)?;
            write_run_metadata(
                sidecar_path(&out),
                &RunMetadata {
                    config: cfg,
                    points: f.ids.len(),
                    final_kl: e.kl,
                    kl_trace: e.kl_trace.clone(),
                    layer: (!f.layers.is_empty()).then(|| f.layers.join(",")),
                },
            )?;
            println!("{} points embedded; final KL {:.5}", f.ids.len(), e.kl);
        }
        Command::InitWeights { arch, seed, out } => {
            let net = Network::<f32>::random(arch_spec(&arch)?, seed)?;
            net.save_weights(&out)?;
            println!("{} parameter tensors written", net.params().len());
        }
        Command::Synth {
            out,
            per_class,
            size,
            seed,
        } => {
            let csv = write_corpus(&out, per_class, size, seed)?;
            println!("labels written to {}", csv.display());
        }
    }
    Ok(())
}

fn features_for(store: Option<&Path>, layers: &[String]) -> Result<LoadedFeatures> {
    let store = store.ok_or_else(|| Error::invalid("--store is required for this model"))?;
    load_features(store, layers)
}

fn eval(model: &Path, store: Option<&Path>, manifest: Option<&Path>, split: &str) -> Result<()> {
    let info = ModelInfo::load(model)?;
    let names = manifest
        .map(LabeledDataset::load)
        .transpose()?
        .map(|d| d.classes);
    let (pred, truth, classes) = match &info {
        ModelInfo::Linear { layers, .. } => {
            let m = LinearModel::from_container(&TensorContainer::read(model)?)?;
            let f = features_for(store, layers)?;
            (
                predict_linear(&m, &f.x)?.labels,
                f.label_indices()?,
                m.classes(),
            )
        }
        ModelInfo::Forest { layers, pca, .. } => {
            let m = ForestModel::load(model)?;
            let f = features_for(store, layers)?;
            let x = match pca {
                Some(p) => {
                    pca_transform(&PcaModel::from_container(&TensorContainer::read(p)?)?, &f.x)?
                }
                None => f.x,
            };
            (
                predict_forest(&m, &x)?.labels,
                f.labels
                    .iter()
                    .map(|l| l.map(|l| l as usize))
                    .collect::<Option<Vec<_>>>()
                    .ok_or_else(|| Error::Data("store has unlabeled records".into()))?,
                m.classes,
            )
        }
        ModelInfo::Pca { .. } => return Err(Error::invalid("a PCA model is not a classifier")),
        ModelInfo::Cnn {
            spec,
            classes,
            preprocess: pre,
            ..
        } => {
            let manifest =
                manifest.ok_or_else(|| Error::invalid("--manifest is required for CNN models"))?;
            let ds = LabeledDataset::load(manifest)?;
            if &ds.classes != classes {
                return Err(Error::Data(
                    "manifest classes differ from the model's".into(),
                ));
            }
            let net = load_weights(spec.clone(), model)?;
            let pred = load_images(&ds, pre)?
                .iter()
                .map(|img| net.predict(img).map(|p| argmax(&p)))
                .collect::<Result<Vec<_>>>()?;
            (pred, ds.labels(), classes.len())
        }
    };
    let recall = per_class_recall(&pred, &truth, classes)?;
    println!("split,metric,class,value");
    println!("{split},top1,,{:.6}", top1_accuracy(&pred, &truth)?);
    for (c, r) in recall.iter().enumerate() {
        let name = names
            .as_ref()
            .and_then(|n| n.get(c))
            .cloned()
            .unwrap_or_else(|| c.to_string());
        let value = r.map(|v| format!("{v:.6}")).unwrap_or_default();
        println!("{split},recall,{name},{value}");
    }
    Ok(())
}

use std::path::Path;

use rayon::prelude::*;

use super::{preprocess, LabeledDataset, PreprocessConfig};
use crate::classifiers::FeatureMatrix;
use crate::error::{Error, Result};
use crate::gram::store::{FeatureRecord, FeatureStore, FeatureStoreWriter};
use crate::gram::{extract_style_features, FlattenMode};
use crate::network::Network;

#[derive(Clone, Debug)]
pub struct ExtractionConfig {
    pub taps: Vec<String>,
    pub mode: FlattenMode,
    pub preprocess: PreprocessConfig,
    pub workers: usize,
    /// Keep records already in the store and compute only the rest.
    pub resume: bool,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ExtractionReport {
    pub written: usize,
    pub skipped_existing: usize,
    /// Image ids that failed, with the reason.
    pub failed: Vec<(String, String)>,
}

/// Images handed to the worker pool per round.
const ROUND_PER_WORKER: usize = 4;

/// Writes one feature record per image to an NSF1 store.
///
/// Images are processed in parallel and written in dataset order, so the
/// store bytes do not depend on the worker count. Per-image failures are
/// logged and reported, not fatal.
pub fn run_extraction(
    ds: &LabeledDataset,
    net: &Network<f32>,
    store_path: impl AsRef<Path>,
    cfg: &ExtractionConfig,
) -> Result<ExtractionReport> {
    if cfg.workers == 0 {
        return Err(Error::invalid("at least one worker is required"));
    }
    let taps: Vec<&str> = cfg.taps.iter().map(String::as_str).collect();
    for t in &taps {
        net.spec().layer_index(t)?;
    }
    let mut writer = if cfg.resume {
        FeatureStoreWriter::resume(store_path.as_ref())?
    } else {
        FeatureStoreWriter::create(store_path.as_ref())?
    };
    let mut report = ExtractionReport::default();
    let todo: Vec<_> = ds
        .records
        .iter()
        .filter(|r| {
            let done = writer.contains(&r.id);
            report.skipped_existing += usize::from(done);
            !done
        })
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| Error::invalid(e.to_string()))?;
    for round in todo.chunks(cfg.workers * ROUND_PER_WORKER) {
        let results: Vec<Result<FeatureRecord>> = pool.install(|| {
            round
                .par_iter()
                .map(|r| {
                    let img = preprocess(&r.path, &cfg.preprocess)?;
                    let f = extract_style_features(net, &img, &taps, cfg.mode, r.id.clone())?;
                    Ok(FeatureRecord {
                        image_id: r.id.clone(),
                        label: Some(r.label as u32),
                        layers: f.flattened,
                    })
                })
                .collect()
        });
        for (r, res) in round.iter().zip(results) {
            match res {
                Ok(rec) => {
                    writer.append(&rec)?;
                    report.written += 1;
                }
                Err(e) => {
                    log::warn!("extraction failed for `{}`: {e}", r.id);
                    report.failed.push((r.id.clone(), e.to_string()));
                }
            }
        }
    }
    Ok(report)
}

/// Feature rows read back from a store.
#[derive(Clone, Debug)]
pub struct LoadedFeatures {
    pub ids: Vec<String>,
    pub labels: Vec<Option<u32>>,
    pub layers: Vec<String>,
    pub x: FeatureMatrix,
}

impl LoadedFeatures {
    /// Labels as indices; an error if any record is unlabeled.
    pub fn label_indices(&self) -> Result<Vec<usize>> {
        self.labels
            .iter()
            .zip(&self.ids)
            .map(|(l, id)| {
                l.map(|l| l as usize)
                    .ok_or_else(|| Error::Data(format!("record `{id}` is unlabeled")))
            })
            .collect()
    }

    pub fn select(&self, keep: &[usize]) -> LoadedFeatures {
        LoadedFeatures {
            ids: keep.iter().map(|&i| self.ids[i].clone()).collect(),
            labels: keep.iter().map(|&i| self.labels[i]).collect(),
            layers: self.layers.clone(),
            x: self.x.select_rows(keep),
        }
    }
}

/// Concatenates the named layers of every record, in manifest order.
/// An empty `layers` list selects every layer of the first record.
pub fn load_features(store: impl AsRef<Path>, layers: &[String]) -> Result<LoadedFeatures> {
    let store = FeatureStore::open(store)?;
    let records = store.records()?;
    let layers: Vec<String> = if layers.is_empty() {
        records
            .first()
            .map(|r| r.layers.iter().map(|l| l.layer.clone()).collect())
            .unwrap_or_default()
    } else {
        layers.to_vec()
    };
    let mut rows = Vec::with_capacity(records.len());
    let mut canonical = layers.clone();
    for r in &records {
        let mut row = Vec::new();
        for (k, name) in layers.iter().enumerate() {
            let lv = r
                .layers
                .iter()
                .find(|l| l.layer.eq_ignore_ascii_case(name))
                .ok_or_else(|| {
                    Error::Data(format!("record `{}` lacks layer `{name}`", r.image_id))
                })?;
            canonical[k] = lv.layer.clone();
            row.extend_from_slice(&lv.values);
        }
        rows.push(row);
    }
    Ok(LoadedFeatures {
        ids: records.iter().map(|r| r.image_id.clone()).collect(),
        labels: records.iter().map(|r| r.label).collect(),
        layers: canonical,
        x: FeatureMatrix::from_rows(&rows)?,
    })
}

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageRecord {
    pub id: String,
    pub path: PathBuf,
    pub label: usize,
}

/// Labelled image references with a dense class table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabeledDataset {
    pub classes: Vec<String>,
    pub records: Vec<ImageRecord>,
    /// Mean RGB over the images in `[0, 1]`, when measured at ingestion.
    #[serde(default)]
    pub channel_mean: Option<[f64; 3]>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct IngestReport {
    pub missing: usize,
    pub undecodable: usize,
    pub duplicates: usize,
}

impl IngestReport {
    pub fn skipped(&self) -> usize {
        self.missing + self.undecodable + self.duplicates
    }
}

#[derive(Deserialize)]
struct LabelRow {
    filename: String,
    style: String,
}

impl LabeledDataset {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.classes.len()];
        for r in &self.records {
            c[r.label] += 1;
        }
        c
    }

    pub fn labels(&self) -> Vec<usize> {
        self.records.iter().map(|r| r.label).collect()
    }

    /// Checks dense labels and unique ids.
    pub fn validate(&self) -> Result<()> {
        let mut ids = HashSet::new();
        for r in &self.records {
            if r.label >= self.classes.len() {
                return Err(Error::Data(format!(
                    "`{}` has label {} of {}",
                    r.id,
                    r.label,
                    self.classes.len()
                )));
            }
            if !ids.insert(&r.id) {
                return Err(Error::Data(format!("duplicate id `{}`", r.id)));
            }
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let ds: LabeledDataset = serde_json::from_slice(&fs::read(path)?)?;
        ds.validate()?;
        Ok(ds)
    }
}

fn image_mean(path: &Path) -> Result<[f64; 3]> {
    let img = image::open(path)?.to_rgb8();
    let mut sum = [0u64; 3];
    for p in img.pixels() {
        for c in 0..3 {
            sum[c] += p[c] as u64;
        }
    }
    let n = (img.width() as u64 * img.height() as u64).max(1) as f64 * 255.0;
    Ok([sum[0] as f64 / n, sum[1] as f64 / n, sum[2] as f64 / n])
}

/// Reads `filename,style` rows, keeping rows whose file exists and decodes.
///
/// Classes are numbered in sorted style-name order. The channel mean is the
/// average of per-image mean colours.
pub fn ingest(
    images_dir: impl AsRef<Path>,
    labels_csv: impl AsRef<Path>,
) -> Result<(LabeledDataset, IngestReport)> {
    let dir = images_dir.as_ref();
    let mut rdr = csv::Reader::from_path(labels_csv.as_ref())?;
    let rows: Vec<LabelRow> = rdr.deserialize().collect::<Result<_, _>>()?;
    if rows.is_empty() {
        return Err(Error::Data("label CSV has no rows".into()));
    }
    let mut report = IngestReport::default();
    let mut seen = HashSet::new();
    let mut present = Vec::new();
    for row in rows {
        if !seen.insert(row.filename.clone()) {
            log::warn!("duplicate row for `{}` skipped", row.filename);
            report.duplicates += 1;
            continue;
        }
        let path = dir.join(&row.filename);
        if !path.is_file() {
            log::warn!("missing image `{}` skipped", path.display());
            report.missing += 1;
            continue;
        }
        present.push((row, path));
    }
    let means: Vec<Result<[f64; 3]>> = present.par_iter().map(|(_, p)| image_mean(p)).collect();
    let mut kept = Vec::new();
    let mut mean_sum = [0.0; 3];
    for ((row, path), m) in present.into_iter().zip(means) {
        match m {
            Ok(m) => {
                for c in 0..3 {
                    mean_sum[c] += m[c];
                }
                kept.push((row, path));
            }
            Err(e) => {
                log::warn!("undecodable image `{}` skipped: {e}", path.display());
                report.undecodable += 1;
            }
        }
    }
    if kept.is_empty() {
        return Err(Error::Data("no decodable images".into()));
    }
    let classes: Vec<String> = kept
        .iter()
        .map(|(r, _)| r.style.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let index: BTreeMap<&str, usize> = classes
        .iter()
        .enumerate()
        .map(|(i, c)| (c.as_str(), i))
        .collect();
    let n = kept.len() as f64;
    let records = kept
        .iter()
        .map(|(r, p)| ImageRecord {
            id: r.filename.clone(),
            path: p.clone(),
            label: index[r.style.as_str()],
        })
        .collect();
    Ok((
        LabeledDataset {
            classes: classes.clone(),
            records,
            channel_mean: Some([mean_sum[0] / n, mean_sum[1] / n, mean_sum[2] / n]),
        },
        report,
    ))
}

/// Drops classes with fewer than `min_count` images and renumbers the rest
/// in their original order.
pub fn min_class_filter(ds: &LabeledDataset, min_count: usize) -> Result<LabeledDataset> {
    let counts = ds.class_counts();
    let mut remap = vec![None; ds.classes.len()];
    let mut classes = Vec::new();
    for (c, &k) in counts.iter().enumerate() {
        if k >= min_count {
            remap[c] = Some(classes.len());
            classes.push(ds.classes[c].clone());
        } else {
            log::info!("class `{}` dropped with {k} images", ds.classes[c]);
        }
    }
    if classes.is_empty() {
        return Err(Error::Data(format!(
            "no classes remain with at least {min_count} images"
        )));
    }
    let records = ds
        .records
        .iter()
        .filter_map(|r| remap[r.label].map(|label| ImageRecord { label, ..r.clone() }))
        .collect();
    Ok(LabeledDataset {
        classes,
        records,
        channel_mean: ds.channel_mean,
    })
}

/// Number of a class's `count` items held out at `fraction`.
pub fn holdout_count(count: usize, fraction: f64) -> usize {
    let v = (fraction * count as f64).round() as usize;
    let v = if count as f64 >= 1.0 / fraction {
        v.max(1)
    } else {
        v
    };
    v.min(count.saturating_sub(1))
}

/// Holds out `round(fraction · count)` items of every class, chosen by a
/// seeded shuffle, keeping at least one item of each class for training.
/// Both halves keep the dataset's record order.
pub fn stratified_split(
    ds: &LabeledDataset,
    fraction: f64,
    seed: u64,
) -> Result<(LabeledDataset, LabeledDataset)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::invalid(format!(
            "holdout fraction {fraction} outside (0, 1)"
        )));
    }
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); ds.classes.len()];
    for (i, r) in ds.records.iter().enumerate() {
        by_class[r.label].push(i);
    }
    let mut held = vec![false; ds.records.len()];
    for (c, members) in by_class.iter_mut().enumerate() {
        let want = (fraction * members.len() as f64).round() as usize;
        let take = holdout_count(members.len(), fraction);
        if take < want {
            log::warn!(
                "class `{}` has {} item(s); keeping them all for training",
                ds.classes[c],
                members.len()
            );
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed::derive(seed, &[c as u64]));
        members.shuffle(&mut rng);
        for &i in &members[..take] {
            held[i] = true;
        }
    }
    let part = |keep: bool| LabeledDataset {
        classes: ds.classes.clone(),
        records: ds
            .records
            .iter()
            .zip(&held)
            .filter(|(_, &h)| h == keep)
            .map(|(r, _)| r.clone())
            .collect(),
        channel_mean: ds.channel_mean,
    };
    Ok((part(false), part(true)))
}

//! NSF1 feature store: concatenated binary records plus a CSV manifest.
//!
//! Record layout, all little-endian:
//!
//! ```text
//! "NSF1" | u32 version = 1 | u32 layer_count
//! layer_count × ( u16 name_len | name | u32 len | len × f32 )
//! u16 id_len | id (UTF-8) | u32 label (0xFFFFFFFF = unlabeled)
//! ```
//!
//! The sidecar manifest `<store>.csv` has columns `id,label,offset`, where
//! `offset` is the byte position of the record in the store and `label` is
//! empty for unlabeled records.

use std::collections::HashSet;
use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::LayerVector;
use crate::error::{Error, Result};
use crate::network::container::{put_f32s, put_str16, Reader};

const MAGIC: &[u8; 4] = b"NSF1";
const VERSION: u32 = 1;
const UNLABELED: u32 = u32::MAX;

/// Flattened style features of one image.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureRecord {
    pub image_id: String,
    pub label: Option<u32>,
    pub layers: Vec<LayerVector>,
}

impl FeatureRecord {
    pub fn layer(&self, name: &str) -> Option<&[f32]> {
        self.layers
            .iter()
            .find(|l| l.layer.eq_ignore_ascii_case(name))
            .map(|l| l.values.as_slice())
    }

    pub fn encode(&self) -> Result<Vec<u8>> {
        if self.label == Some(UNLABELED) {
            return Err(Error::format("NSF1", "label 0xFFFFFFFF is reserved"));
        }
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.layers.len() as u32).to_le_bytes());
        for l in &self.layers {
            put_str16(&mut out, &l.layer, "NSF1")?;
            let len = u32::try_from(l.values.len())
                .map_err(|_| Error::format("NSF1", "layer too long"))?;
            out.extend_from_slice(&len.to_le_bytes());
            put_f32s(&mut out, &l.values);
        }
        put_str16(&mut out, &self.image_id, "NSF1")?;
        out.extend_from_slice(&self.label.unwrap_or(UNLABELED).to_le_bytes());
        Ok(out)
    }

    /// Decodes one record from the front of `bytes`, returning it and its length.
    pub fn decode(bytes: &[u8]) -> Result<(Self, usize)> {
        let mut r = Reader::new(bytes, "NSF1");
        r.magic(MAGIC)?;
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::format(
                "NSF1",
                format!("unsupported version {version}"),
            ));
        }
        let count = r.u32()?;
        let mut layers = Vec::new();
        for _ in 0..count {
            let name_len = r.u16()? as usize;
            let layer = r.string(name_len)?;
            let len = r.u32()? as usize;
            layers.push(LayerVector {
                layer,
                values: r.f32s(len)?,
            });
        }
        let id_len = r.u16()? as usize;
        let image_id = r.string(id_len)?;
        let label = match r.u32()? {
            UNLABELED => None,
            l => Some(l),
        };
        Ok((
            FeatureRecord {
                image_id,
                label,
                layers,
            },
            r.position(),
        ))
    }
}

/// Decodes every record of a concatenated store image, in file order.
pub fn decode_all(bytes: &[u8]) -> Result<Vec<FeatureRecord>> {
    let mut out = Vec::new();
    let mut pos = 0;
    while pos < bytes.len() {
        let (rec, used) = FeatureRecord::decode(&bytes[pos..])?;
        out.push(rec);
        pos += used;
    }
    Ok(out)
}

/// One manifest row.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub label: Option<u32>,
    pub offset: u64,
}

/// Sidecar manifest path for a store.
pub fn manifest_path(store: &Path) -> PathBuf {
    let mut s = store.as_os_str().to_owned();
    s.push(".csv");
    PathBuf::from(s)
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestEntry>> {
    let mut rdr = csv::Reader::from_path(path)?;
    rdr.deserialize().map(|r| r.map_err(Error::from)).collect()
}

/// An opened store: the manifest index plus the record bytes.
#[derive(Clone, Debug)]
pub struct FeatureStore {
    bytes: Vec<u8>,
    entries: Vec<ManifestEntry>,
}

impl FeatureStore {
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path)?;
        let mpath = manifest_path(path);
        let entries = if mpath.exists() {
            read_manifest(&mpath)?
        } else {
            Vec::new()
        };
        Ok(FeatureStore { bytes, entries })
    }

    pub fn entries(&self) -> &[ManifestEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn record(&self, entry: &ManifestEntry) -> Result<FeatureRecord> {
        let start =
            usize::try_from(entry.offset).map_err(|_| Error::format("NSF1", "offset overflow"))?;
        if start >= self.bytes.len() {
            return Err(Error::format(
                "NSF1",
                format!("offset {start} beyond store end"),
            ));
        }
        let (rec, _) = FeatureRecord::decode(&self.bytes[start..])?;
        if rec.image_id != entry.id {
            return Err(Error::format(
                "NSF1",
                format!(
                    "manifest id `{}` points at record `{}`",
                    entry.id, rec.image_id
                ),
            ));
        }
        Ok(rec)
    }

    /// All records in manifest order.
    pub fn records(&self) -> Result<Vec<FeatureRecord>> {
        self.entries.iter().map(|e| self.record(e)).collect()
    }
}

/// Appends records to a store and keeps its manifest in step.
pub struct FeatureStoreWriter {
    store: BufWriter<File>,
    manifest: csv::Writer<File>,
    offset: u64,
    known: HashSet<String>,
}

impl FeatureStoreWriter {
    /// Starts an empty store, replacing any existing one.
    pub fn create(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let store = File::create(path)?;
        let mut manifest = csv::WriterBuilder::new()
            .has_headers(false)
            .from_path(manifest_path(path))?;
        manifest.write_record(["id", "label", "offset"])?;
        manifest.flush()?;
        Ok(FeatureStoreWriter {
            store: BufWriter::new(store),
            manifest,
            offset: 0,
            known: HashSet::new(),
        })
    }

    /// Reopens a store for appending. Bytes past the last indexed record
    /// (an interrupted write) are discarded.
    pub fn resume(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mpath = manifest_path(path);
        if !path.exists() || !mpath.exists() {
            return Self::create(path);
        }
        let entries = read_manifest(&mpath)?;
        let bytes = fs::read(path)?;
        let end = match entries.iter().max_by_key(|e| e.offset) {
            None => 0,
            Some(e) => {
                let start = e.offset as usize;
                let (_, used) = FeatureRecord::decode(bytes.get(start..).unwrap_or_default())?;
                (start + used) as u64
            }
        };
        let mut store = OpenOptions::new().write(true).open(path)?;
        store.set_len(end)?;
        store.seek(SeekFrom::End(0))?;
        let manifest_file = OpenOptions::new().append(true).open(&mpath)?;
        Ok(FeatureStoreWriter {
            store: BufWriter::new(store),
            manifest: csv::WriterBuilder::new()
                .has_headers(false)
                .from_writer(manifest_file),
            offset: end,
            known: entries.into_iter().map(|e| e.id).collect(),
        })
    }

    pub fn contains(&self, id: &str) -> bool {
        self.known.contains(id)
    }

    /// Writes a record and indexes it; returns its offset.
    pub fn append(&mut self, record: &FeatureRecord) -> Result<u64> {
        if !self.known.insert(record.image_id.clone()) {
            return Err(Error::Data(format!(
                "record `{}` already stored",
                record.image_id
            )));
        }
        let bytes = record.encode()?;
        let offset = self.offset;
        self.store.write_all(&bytes)?;
        self.store.flush()?;
        self.offset += bytes.len() as u64;
        self.manifest.serialize(ManifestEntry {
            id: record.image_id.clone(),
            label: record.label,
            offset,
        })?;
        self.manifest.flush()?;
        Ok(offset)
    }
}

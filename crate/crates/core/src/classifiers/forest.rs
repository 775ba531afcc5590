//! Random forests of CART trees with Gini splits, plus the NSRF model file.
//!
//! NSRF layout, little-endian:
//!
//! ```text
//! "NSRF" | u32 version = 1 | u32 classes | u32 features
//! u32 layer_count × ( u16 len | name )
//! u32 max_depth (0xFFFFFFFF = none) | u32 min_leaf | u32 mtry | u64 seed
//! u32 tree_count × ( u64 tree_seed | u32 node_count | node_count × node )
//! node = u32 feature (0xFFFFFFFF = leaf) | f32 threshold | classes × u32 count
//! ```
//!
//! Nodes are in preorder: a split's left child follows it directly.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{argmax, check_labels, FeatureMatrix};
use crate::error::{Error, Result};
use crate::network::container::{put_str16, Reader};

const MAGIC: &[u8; 4] = b"NSRF";
const VERSION: u32 = 1;
const NONE: u32 = u32::MAX;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForestConfig {
    pub trees: usize,
    pub max_depth: Option<usize>,
    pub min_leaf: usize,
    /// Features examined per split; `None` means `floor(sqrt(d))`.
    pub mtry: Option<usize>,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig {
            trees: 200,
            max_depth: None,
            min_leaf: 1,
            mtry: None,
            seed: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Split {
    pub feature: u32,
    /// Samples with `x[feature] <= threshold` go left.
    pub threshold: f32,
    /// Index of the right child; the left child is the next node.
    pub right: u32,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Node {
    pub split: Option<Split>,
    /// Bootstrap samples reaching this node, per class.
    pub histogram: Vec<u32>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Tree {
    pub seed: u64,
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn leaf(&self, x: &[f32]) -> &Node {
        let mut i = 0;
        while let Some(s) = self.nodes[i].split {
            i = if x[s.feature as usize] <= s.threshold {
                i + 1
            } else {
                s.right as usize
            };
        }
        &self.nodes[i]
    }

    pub fn predict(&self, x: &[f32]) -> usize {
        argmax(&self.leaf(x).histogram)
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match nodes[i].split {
                None => 0,
                Some(s) => 1 + walk(nodes, i + 1).max(walk(nodes, s.right as usize)),
            }
        }
        walk(&self.nodes, 0)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ForestModel {
    pub classes: usize,
    pub features: usize,
    /// Names of the feature blocks the model was trained on.
    pub layers: Vec<String>,
    /// Training configuration with `mtry` resolved.
    pub config: ForestConfig,
    pub trees: Vec<Tree>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ForestPrediction {
    pub labels: Vec<usize>,
    /// Tree votes per class, one row per sample.
    pub votes: Vec<Vec<u32>>,
}

fn bootstrap(n: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    (0..n).map(|_| rng.random_range(0..n)).collect()
}

struct Builder<'a> {
    x: &'a FeatureMatrix,
    labels: &'a [usize],
    classes: usize,
    mtry: usize,
    max_depth: usize,
    min_leaf: usize,
    rng: ChaCha8Rng,
    order: Vec<u32>,
    nodes: Vec<Node>,
}

/// Sum of squared class counts over the side size: larger is purer.
fn purity(hist: &[u32], size: u32) -> f64 {
    hist.iter().map(|&h| (h as f64) * (h as f64)).sum::<f64>() / size as f64
}

impl Builder<'_> {
    fn histogram(&self, idx: &[usize]) -> Vec<u32> {
        let mut h = vec![0u32; self.classes];
        for &i in idx {
            h[self.labels[i]] += 1;
        }
        h
    }

    /// Best split over up to `mtry` non-constant features, visited in random order.
    fn best_split(&mut self, idx: &[usize]) -> Option<(u32, f32)> {
        let d = self.order.len();
        let mut best: Option<(f64, u32, f32)> = None;
        let mut tried = 0;
        let mut pairs: Vec<(f32, usize)> = Vec::with_capacity(idx.len());
        for k in 0..d {
            if tried == self.mtry {
                break;
            }
            let j = self.rng.random_range(k..d);
            self.order.swap(k, j);
            let f = self.order[k];
            pairs.clear();
            pairs.extend(
                idx.iter()
                    .map(|&i| (self.x.row(i)[f as usize], self.labels[i])),
            );
            pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
            if pairs[0].0 == pairs[pairs.len() - 1].0 {
                continue;
            }
            tried += 1;
            let mut left = vec![0u32; self.classes];
            let mut right = self.histogram(idx);
            let n = pairs.len();
            for p in 0..n - 1 {
                let c = pairs[p].1;
                left[c] += 1;
                right[c] -= 1;
                let (a, b) = (pairs[p].0, pairs[p + 1].0);
                let nl = p + 1;
                if a == b || nl < self.min_leaf || n - nl < self.min_leaf {
                    continue;
                }
                let score = purity(&left, nl as u32) + purity(&right, (n - nl) as u32);
                if best.is_none_or(|(s, _, _)| score > s) {
                    let mut t = (a as f64 + (b as f64 - a as f64) / 2.0) as f32;
                    if t >= b {
                        t = a;
                    }
                    best = Some((score, f, t));
                }
            }
        }
        best.map(|(_, f, t)| (f, t))
    }

    fn grow(&mut self, idx: &[usize], depth: usize) {
        let histogram = self.histogram(idx);
        let here = self.nodes.len();
        self.nodes.push(Node {
            split: None,
            histogram,
        });
        let pure = self.nodes[here]
            .histogram
            .iter()
            .filter(|&&h| h > 0)
            .count()
            <= 1;
        if pure || depth >= self.max_depth || idx.len() < 2 * self.min_leaf {
            return;
        }
        let Some((feature, threshold)) = self.best_split(idx) else {
            return;
        };
        let (left, right): (Vec<usize>, Vec<usize>) = idx
            .iter()
            .partition(|&&i| self.x.row(i)[feature as usize] <= threshold);
        self.grow(&left, depth + 1);
        let right_at = self.nodes.len() as u32;
        self.grow(&right, depth + 1);
        self.nodes[here].split = Some(Split {
            feature,
            threshold,
            right: right_at,
        });
    }
}

fn resolve_mtry(cfg: &ForestConfig, d: usize) -> usize {
    cfg.mtry
        .unwrap_or_else(|| (d as f64).sqrt().floor() as usize)
        .clamp(1, d.max(1))
}

fn tree_seed(base: u64, i: usize) -> u64 {
    base.wrapping_add(i as u64)
}

/// Bagged CART forest. Tree `i` draws its bootstrap sample and split
/// features from a generator seeded with `seed + i`.
pub fn train_forest(
    x: &FeatureMatrix,
    labels: &[usize],
    cfg: &ForestConfig,
) -> Result<ForestModel> {
    let classes = check_labels(x, labels)?;
    if x.rows() < 2 {
        return Err(Error::invalid("a forest needs at least 2 samples"));
    }
    if cfg.trees == 0 || cfg.min_leaf == 0 {
        return Err(Error::invalid(
            "tree count and minimum leaf size must be positive",
        ));
    }
    if x.cols() == 0 {
        return Err(Error::invalid("no features"));
    }
    let mtry = resolve_mtry(cfg, x.cols());
    let trees = (0..cfg.trees)
        .into_par_iter()
        .map(|i| {
            let seed = tree_seed(cfg.seed, i);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let sample = bootstrap(x.rows(), &mut rng);
            let mut b = Builder {
                x,
                labels,
                classes,
                mtry,
                max_depth: cfg.max_depth.unwrap_or(usize::MAX),
                min_leaf: cfg.min_leaf,
                rng,
                order: (0..x.cols() as u32).collect(),
                nodes: Vec::new(),
            };
            b.grow(&sample, 0);
            Tree {
                seed,
                nodes: b.nodes,
            }
        })
        .collect();
    Ok(ForestModel {
        classes,
        features: x.cols(),
        layers: Vec::new(),
        config: ForestConfig {
            mtry: Some(mtry),
            ..cfg.clone()
        },
        trees,
    })
}

/// Majority vote of the trees; ties go to the lowest class index.
pub fn predict_forest(model: &ForestModel, x: &FeatureMatrix) -> Result<ForestPrediction> {
    if x.cols() != model.features {
        return Err(Error::shape(
            "forest",
            format!("{} features, model expects {}", x.cols(), model.features),
        ));
    }
    let votes: Vec<Vec<u32>> = x
        .iter_rows()
        .collect::<Vec<_>>()
        .par_iter()
        .map(|row| {
            let mut v = vec![0u32; model.classes];
            for t in &model.trees {
                v[t.predict(row)] += 1;
            }
            v
        })
        .collect();
    Ok(ForestPrediction {
        labels: votes.iter().map(|v| argmax(v)).collect(),
        votes,
    })
}

impl ForestModel {
    pub fn with_layers(mut self, layers: Vec<String>) -> Self {
        self.layers = layers;
        self
    }

    /// Out-of-bag accuracy over the training set, from bootstrap samples
    /// regenerated from the tree seeds. `None` if no sample is ever out of bag.
    pub fn oob_accuracy(&self, x: &FeatureMatrix, labels: &[usize]) -> Result<Option<f64>> {
        check_labels(x, labels)?;
        let n = x.rows();
        let mut votes = vec![vec![0u32; self.classes]; n];
        for t in &self.trees {
            let mut rng = ChaCha8Rng::seed_from_u64(t.seed);
            let mut in_bag = vec![false; n];
            for i in bootstrap(n, &mut rng) {
                in_bag[i] = true;
            }
            for i in (0..n).filter(|&i| !in_bag[i]) {
                votes[i][t.predict(x.row(i))] += 1;
            }
        }
        let (mut seen, mut hit) = (0usize, 0usize);
        for (v, &l) in votes.iter().zip(labels) {
            if v.iter().any(|&c| c > 0) {
                seen += 1;
                hit += usize::from(argmax(v) == l);
            }
        }
        Ok((seen > 0).then(|| hit as f64 / seen as f64))
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let u32_of = |v: usize, what: &str| {
            u32::try_from(v).map_err(|_| Error::format("NSRF", format!("{what} exceeds u32")))
        };
        let mut out = MAGIC.to_vec();
        out.extend(VERSION.to_le_bytes());
        out.extend(u32_of(self.classes, "class count")?.to_le_bytes());
        out.extend(u32_of(self.features, "feature count")?.to_le_bytes());
        out.extend(u32_of(self.layers.len(), "layer count")?.to_le_bytes());
        for l in &self.layers {
            put_str16(&mut out, l, "NSRF")?;
        }
        let depth = match self.config.max_depth {
            None => NONE,
            Some(d) => u32::try_from(d).unwrap_or(NONE - 1),
        };
        out.extend(depth.to_le_bytes());
        out.extend(u32_of(self.config.min_leaf, "min_leaf")?.to_le_bytes());
        out.extend(u32_of(resolve_mtry(&self.config, self.features), "mtry")?.to_le_bytes());
        out.extend(self.config.seed.to_le_bytes());
        out.extend(u32_of(self.trees.len(), "tree count")?.to_le_bytes());
        for t in &self.trees {
            out.extend(t.seed.to_le_bytes());
            out.extend(u32_of(t.nodes.len(), "node count")?.to_le_bytes());
            for node in &t.nodes {
                let (f, thr) = node.split.map_or((NONE, 0.0), |s| (s.feature, s.threshold));
                out.extend(f.to_le_bytes());
                out.extend(thr.to_le_bytes());
                for &h in &node.histogram {
                    out.extend(h.to_le_bytes());
                }
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes, "NSRF");
        r.magic(MAGIC)?;
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::format(
                "NSRF",
                format!("unsupported version {version}"),
            ));
        }
        let classes = r.u32()? as usize;
        let features = r.u32()? as usize;
        let layers = (0..r.u32()?)
            .map(|_| {
                let len = r.u16()? as usize;
                r.string(len)
            })
            .collect::<Result<Vec<_>>>()?;
        let max_depth = match r.u32()? {
            NONE => None,
            d => Some(d as usize),
        };
        let min_leaf = r.u32()? as usize;
        let mtry = Some(r.u32()? as usize);
        let seed = r.u64()?;
        let tree_count = r.u32()? as usize;
        let mut trees = Vec::new();
        for _ in 0..tree_count {
            let tseed = r.u64()?;
            let count = r.u32()? as usize;
            let mut nodes = Vec::new();
            for _ in 0..count {
                let feature = r.u32()?;
                let threshold = r.f32()?;
                let histogram = (0..classes).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
                if feature != NONE && feature as usize >= features {
                    return Err(Error::format(
                        "NSRF",
                        format!("feature index {feature} ≥ {features}"),
                    ));
                }
                nodes.push(Node {
                    split: (feature != NONE).then_some(Split {
                        feature,
                        threshold,
                        right: 0,
                    }),
                    histogram,
                });
            }
            link_preorder(&mut nodes)?;
            trees.push(Tree { seed: tseed, nodes });
        }
        if r.remaining() != 0 {
            return Err(Error::format(
                "NSRF",
                format!("{} trailing bytes", r.remaining()),
            ));
        }
        Ok(ForestModel {
            classes,
            features,
            layers,
            config: ForestConfig {
                trees: tree_count,
                max_depth,
                min_leaf,
                mtry,
                seed,
            },
            trees,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}

/// Recovers right-child indices of a preorder node list.
fn link_preorder(nodes: &mut [Node]) -> Result<()> {
    fn walk(nodes: &mut [Node], i: usize) -> Result<usize> {
        if i >= nodes.len() {
            return Err(Error::format("NSRF", "tree ends inside a split"));
        }
        if nodes[i].split.is_none() {
            return Ok(i + 1);
        }
        let right = walk(nodes, i + 1)?;
        if let Some(s) = nodes[i].split.as_mut() {
            s.right = right as u32;
        }
        walk(nodes, right)
    }
    if nodes.is_empty() {
        return Err(Error::format("NSRF", "empty tree"));
    }
    let end = walk(nodes, 0)?;
    if end != nodes.len() {
        return Err(Error::format("NSRF", "unreachable nodes after tree"));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line() -> (FeatureMatrix, Vec<usize>) {
        let xs: Vec<[f32; 1]> = (0..20).map(|i| [i as f32 / 20.0]).collect();
        let labels = xs.iter().map(|x| usize::from(x[0] > 0.5)).collect();
        (FeatureMatrix::from_rows(&xs).unwrap(), labels)
    }

    #[test]
    fn single_class_gives_single_leaves() {
        let x = FeatureMatrix::from_rows(&[[0.0], [1.0], [2.0]]).unwrap();
        let m = train_forest(
            &x,
            &[0, 0, 0],
            &ForestConfig {
                trees: 5,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(m.trees.iter().all(|t| t.nodes.len() == 1));
    }

    #[test]
    fn separable_line_is_learned() {
        let (x, y) = line();
        let m = train_forest(
            &x,
            &y,
            &ForestConfig {
                trees: 25,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(predict_forest(&m, &x).unwrap().labels, y);
    }

    #[test]
    fn histograms_count_bootstrap_samples() {
        let (x, y) = line();
        let m = train_forest(
            &x,
            &y,
            &ForestConfig {
                trees: 3,
                ..Default::default()
            },
        )
        .unwrap();
        for t in &m.trees {
            assert_eq!(t.nodes[0].histogram.iter().sum::<u32>(), 20);
            for (i, n) in t.nodes.iter().enumerate() {
                if let Some(s) = n.split {
                    let l = &t.nodes[i + 1].histogram;
                    let r = &t.nodes[s.right as usize].histogram;
                    for c in 0..2 {
                        assert_eq!(l[c] + r[c], n.histogram[c]);
                    }
                }
            }
        }
    }

    #[test]
    fn bytes_round_trip() {
        let (x, y) = line();
        let m = train_forest(
            &x,
            &y,
            &ForestConfig {
                trees: 4,
                max_depth: Some(2),
                ..Default::default()
            },
        )
        .unwrap()
        .with_layers(vec!["ReLU1_1".into()]);
        let bytes = m.to_bytes().unwrap();
        let back = ForestModel::from_bytes(&bytes).unwrap();
        assert_eq!(back.trees, m.trees);
        assert_eq!(back.to_bytes().unwrap(), bytes);
        assert!(m.trees.iter().all(|t| t.depth() <= 2));
        assert!(ForestModel::from_bytes(&bytes[..bytes.len() - 1]).is_err());
    }

    #[test]
    fn vote_ties_go_to_lowest_class() {
        let leaf = |c: usize| Tree {
            seed: 0,
            nodes: vec![Node {
                split: None,
                histogram: if c == 0 { vec![1, 0] } else { vec![0, 1] },
            }],
        };
        let m = ForestModel {
            classes: 2,
            features: 1,
            layers: vec![],
            config: ForestConfig::default(),
            trees: vec![leaf(1), leaf(0)],
        };
        let x = FeatureMatrix::from_rows(&[[0.0]]).unwrap();
        assert_eq!(predict_forest(&m, &x).unwrap().labels, vec![0]);
    }
}

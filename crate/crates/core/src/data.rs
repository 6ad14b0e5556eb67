//! Item features, collaborative pairs, synthetic data, and batching.
//!
//! Feature file: one JSON header line
//! `{"count": N, "dim": D, "ids_file": "<path relative to this file>"}`
//! followed by `N * D` little-endian `f32` values, row-major. The ids file
//! holds one item id per line. When `ids_file` is absent, ids may be given
//! inline as `"ids": [...]`; with neither, items are named `0..N-1`.
//!
//! Pair file: one `trigger_id<TAB>target_id` per line.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::collaborative::PairBatch;
use crate::error::{Error, Result};
use crate::numeric::{Matrix, RngState};

#[derive(Debug, Clone, PartialEq)]
pub struct ItemFeatureTable {
    pub ids: Vec<String>,
    pub features: Matrix,
    index: HashMap<String, usize>,
}

impl ItemFeatureTable {
    pub fn new(ids: Vec<String>, features: Matrix) -> Result<Self> {
        if ids.len() != features.rows() {
            return Err(Error::Data(format!(
                "{} ids for {} feature rows",
                ids.len(),
                features.rows()
            )));
        }
        if !features.is_finite() {
            return Err(Error::Data("non-finite feature value".into()));
        }
        let mut index = HashMap::with_capacity(ids.len());
        for (i, id) in ids.iter().enumerate() {
            if index.insert(id.clone(), i).is_some() {
                return Err(Error::Data(format!("duplicate item id `{id}`")));
            }
        }
        Ok(Self { ids, features, index })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct FeatureHeader {
    count: usize,
    dim: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    ids_file: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    ids: Option<Vec<String>>,
}

pub fn save_features(table: &ItemFeatureTable, path: &Path) -> Result<()> {
    let ids_path = path.with_extension("ids");
    let ids_name = ids_path
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let header = FeatureHeader {
        count: table.len(),
        dim: table.dim(),
        ids_file: Some(ids_name),
        ids: None,
    };
    let mut bytes = serde_json::to_vec(&header).expect("header serializes");
    bytes.push(b'\n');
    for v in table.features.data() {
        bytes.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))?;
    let mut ids = table.ids.join("\n");
    ids.push('\n');
    fs::write(&ids_path, ids).map_err(|e| Error::io(&ids_path, e))
}

pub fn load_features(path: &Path) -> Result<ItemFeatureTable> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let nl = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::Data(format!("{}: missing header line", path.display())))?;
    let header: FeatureHeader = serde_json::from_slice(&bytes[..nl])
        .map_err(|e| Error::Data(format!("{}: malformed header: {e}", path.display())))?;
    let body = &bytes[nl + 1..];
    let expected = header.count * header.dim * 4;
    if body.len() != expected {
        return Err(Error::Data(format!(
            "{}: header declares {}x{} values ({expected} bytes), body has {} bytes",
            path.display(),
            header.count,
            header.dim,
            body.len()
        )));
    }
    let data: Vec<f64> = body
        .chunks_exact(4)
        .map(|c| f64::from(f32::from_le_bytes([c[0], c[1], c[2], c[3]])))
        .collect();
    if let Some(k) = data.iter().position(|v| !v.is_finite()) {
        return Err(Error::Data(format!(
            "{}: non-finite value in row {}",
            path.display(),
            k / header.dim.max(1)
        )));
    }
    let ids = match (header.ids_file, header.ids) {
        (Some(file), _) => {
            let ids_path: PathBuf = path.parent().unwrap_or(Path::new(".")).join(file);
            let text = fs::read_to_string(&ids_path).map_err(|e| Error::io(&ids_path, e))?;
            text.lines().filter(|l| !l.is_empty()).map(str::to_string).collect()
        }
        (None, Some(ids)) => ids,
        (None, None) => (0..header.count).map(|i| i.to_string()).collect(),
    };
    if ids.len() != header.count {
        return Err(Error::Data(format!(
            "{}: {} ids for {} rows",
            path.display(),
            ids.len(),
            header.count
        )));
    }
    ItemFeatureTable::new(ids, Matrix::from_vec(header.count, header.dim, data)?)
}

/// Trigger/target pairs as row positions into an [`ItemFeatureTable`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairList {
    pub pairs: Vec<(usize, usize)>,
}

impl PairList {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

pub fn parse_pairs(text: &str, table: &ItemFeatureTable) -> Result<PairList> {
    let mut pairs = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line_no = n + 1;
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split('\t');
        let (Some(a), Some(b), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(Error::Parse {
                line: line_no,
                message: "expected `trigger_id<TAB>target_id`".into(),
            });
        };
        let lookup = |id: &str| {
            table
                .position(id)
                .ok_or_else(|| Error::Data(format!("line {line_no}: unknown item id `{id}`")))
        };
        let (ia, ib) = (lookup(a)?, lookup(b)?);
        if ia == ib {
            return Err(Error::Data(format!("line {line_no}: self-pair `{a}`")));
        }
        pairs.push((ia, ib));
    }
    Ok(PairList { pairs })
}

pub fn load_pairs(path: &Path, table: &ItemFeatureTable) -> Result<PairList> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_pairs(&text, table)
}

pub fn save_pairs(pairs: &PairList, table: &ItemFeatureTable, path: &Path) -> Result<()> {
    let mut out = String::new();
    for &(a, b) in &pairs.pairs {
        out.push_str(&table.ids[a]);
        out.push('\t');
        out.push_str(&table.ids[b]);
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub n_items: usize,
    pub n_clusters: usize,
    pub dim: usize,
    pub cluster_spread: f64,
    pub pair_within_cluster_prob: f64,
    pub pairs_per_item: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_items: 2000,
            n_clusters: 20,
            dim: 32,
            cluster_spread: 0.1,
            pair_within_cluster_prob: 0.8,
            pairs_per_item: 2,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_clusters == 0 || self.n_clusters > self.n_items {
            return Err(Error::Config("synth.n_clusters must lie in 1..=n_items".into()));
        }
        if self.n_items < 2 || self.dim == 0 {
            return Err(Error::Config("synth needs at least 2 items and dim >= 1".into()));
        }
        if !(self.cluster_spread > 0.0 && self.cluster_spread.is_finite()) {
            return Err(Error::Config("synth.cluster_spread must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.pair_within_cluster_prob) {
            return Err(Error::Config(
                "synth.pair_within_cluster_prob must lie in [0, 1]".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticData {
    pub table: ItemFeatureTable,
    pub pairs: PairList,
    /// Cluster of each item.
    pub labels: Vec<usize>,
}

/// Items scattered around random unit-sphere centers with Gaussian spread
/// per coordinate; each item gets `pairs_per_item` partners, drawn from its
/// own cluster with probability `pair_within_cluster_prob` and uniformly
/// from the other items otherwise.
pub fn gen_synthetic(config: &SynthConfig) -> Result<SyntheticData> {
    config.validate()?;
    let mut rng = RngState::new(config.seed);
    let normal = |rng: &mut RngState| -> f64 { StandardNormal.sample(rng) };

    let mut centers = Matrix::zeros(config.n_clusters, config.dim);
    for c in 0..config.n_clusters {
        let row = centers.row_mut(c);
        loop {
            for v in row.iter_mut() {
                *v = normal(&mut rng);
            }
            let n = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            if n > 1e-12 {
                row.iter_mut().for_each(|v| *v /= n);
                break;
            }
        }
    }

    // round-robin labels keep every cluster populated
    let labels: Vec<usize> = (0..config.n_items).map(|i| i % config.n_clusters).collect();
    let mut features = Matrix::zeros(config.n_items, config.dim);
    for (i, &c) in labels.iter().enumerate() {
        for k in 0..config.dim {
            features[(i, k)] = centers[(c, k)] + config.cluster_spread * normal(&mut rng);
        }
    }
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); config.n_clusters];
    for (i, &c) in labels.iter().enumerate() {
        members[c].push(i);
    }

    let mut pairs = Vec::with_capacity(config.n_items * config.pairs_per_item);
    for (i, &c) in labels.iter().enumerate() {
        for _ in 0..config.pairs_per_item {
            let within = rng.uniform() < config.pair_within_cluster_prob;
            let partner = if within && members[c].len() > 1 {
                loop {
                    let p = members[c][rng.below(members[c].len())];
                    if p != i {
                        break p;
                    }
                }
            } else {
                loop {
                    let p = rng.below(config.n_items);
                    if p != i && (within || labels[p] != c || config.n_clusters == 1) {
                        break p;
                    }
                }
            };
            pairs.push((i, partner));
        }
    }

    let ids = (0..config.n_items).map(|i| format!("item{i}")).collect();
    Ok(SyntheticData {
        table: ItemFeatureTable::new(ids, features)?,
        pairs: PairList { pairs },
        labels,
    })
}

/// Seeded shuffle of the pair list for one epoch, cut into batches of
/// `batch_size`. A trailing batch with fewer than two pairs is dropped.
pub fn batch_iter(pairs: &PairList, batch_size: usize, seed: u64, epoch: u64) -> Vec<Vec<(usize, usize)>> {
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    let mut rng = RngState::with_stream(seed, epoch.wrapping_add(1));
    order.shuffle(rng.inner());
    order
        .chunks(batch_size.max(2))
        .filter(|chunk| chunk.len() >= 2)
        .map(|chunk| chunk.iter().map(|&k| pairs.pairs[k]).collect())
        .collect()
}

/// Concatenates the items of a batch of pairs as triggers then targets.
/// Returns the item rows and the row layout of the pairs within them.
pub fn batch_rows(batch: &[(usize, usize)]) -> (Vec<usize>, PairBatch) {
    let b = batch.len();
    let rows = batch.iter().map(|p| p.0).chain(batch.iter().map(|p| p.1)).collect();
    let layout = PairBatch {
        triggers: (0..b).collect(),
        targets: (b..2 * b).collect(),
    };
    (rows, layout)
}

/// Fraction of pairs whose endpoints share a cluster label.
pub fn within_cluster_fraction(pairs: &PairList, labels: &[usize]) -> f64 {
    if pairs.is_empty() {
        return 0.0;
    }
    let within = pairs.pairs.iter().filter(|(a, b)| labels[*a] == labels[*b]).count();
    within as f64 / pairs.len() as f64
}

/// Distinct items referenced by a pair list.
pub fn referenced_items(pairs: &PairList) -> HashSet<usize> {
    pairs.pairs.iter().flat_map(|&(a, b)| [a, b]).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_table() -> ItemFeatureTable {
        ItemFeatureTable::new(
            vec!["a".into(), "b".into(), "c".into()],
            Matrix::from_vec(3, 2, vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0]).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn features_round_trip_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.bin");
        let t = ItemFeatureTable::new(
            vec!["x".into(), "y".into()],
            Matrix::from_vec(2, 3, vec![0.5, -1.0, 2.0, 3.25, 0.0, 1e-3]).unwrap(),
        )
        .unwrap();
        save_features(&t, &path).unwrap();
        let back = load_features(&path).unwrap();
        assert_eq!(back.ids, t.ids);
        assert_eq!(back.features.shape(), (2, 3));
        assert_eq!(back.features[(1, 0)], 3.25);

        // truncate the body to a single row
        let bytes = fs::read(&path).unwrap();
        fs::write(&path, &bytes[..bytes.len() - 12]).unwrap();
        assert!(matches!(load_features(&path), Err(Error::Data(_))));

        let dup = path.with_file_name("dup.bin");
        let mut body = br#"{"count":2,"dim":1,"ids":["a","a"]}"#.to_vec();
        body.push(b'\n');
        body.extend_from_slice(&1f32.to_le_bytes());
        body.extend_from_slice(&2f32.to_le_bytes());
        fs::write(&dup, body).unwrap();
        let err = load_features(&dup).unwrap_err();
        assert!(err.to_string().contains("duplicate"));

        let nan = path.with_file_name("nan.bin");
        let mut body = br#"{"count":1,"dim":1}"#.to_vec();
        body.push(b'\n');
        body.extend_from_slice(&f32::NAN.to_le_bytes());
        fs::write(&nan, body).unwrap();
        assert!(load_features(&nan).is_err());

        let bad = path.with_file_name("bad.bin");
        fs::write(&bad, b"{not json\n").unwrap();
        assert!(matches!(load_features(&bad), Err(Error::Data(_))));
    }

    #[test]
    fn pair_validation() {
        let t = small_table();
        assert_eq!(parse_pairs("a\tb\n", &t).unwrap().pairs, vec![(0, 1)]);
        assert!(parse_pairs("a\ta\n", &t).unwrap_err().to_string().contains("self-pair"));
        assert!(parse_pairs("a\tz\n", &t).unwrap_err().to_string().contains("unknown"));
        assert!(matches!(parse_pairs("a b\n", &t), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn batches_partition_and_drop_short_tail() {
        let pairs = PairList {
            pairs: (0..10).map(|i| (i, i + 100)).collect(),
        };
        let sizes: Vec<usize> = batch_iter(&pairs, 4, 1, 0).iter().map(Vec::len).collect();
        assert_eq!(sizes, vec![4, 4, 2]);
        let pairs9 = PairList {
            pairs: (0..9).map(|i| (i, i + 100)).collect(),
        };
        let sizes: Vec<usize> = batch_iter(&pairs9, 4, 1, 0).iter().map(Vec::len).collect();
        assert_eq!(sizes, vec![4, 4]);
    }

    #[test]
    fn batch_order_is_seeded_per_epoch() {
        let pairs = PairList {
            pairs: (0..16).map(|i| (i, i + 100)).collect(),
        };
        assert_eq!(batch_iter(&pairs, 4, 3, 0), batch_iter(&pairs, 4, 3, 0));
        assert_ne!(batch_iter(&pairs, 4, 3, 0), batch_iter(&pairs, 4, 3, 1));
    }

    #[test]
    fn synthetic_determinism_and_labels() {
        let cfg = SynthConfig {
            n_items: 200,
            n_clusters: 5,
            dim: 8,
            pair_within_cluster_prob: 1.0,
            ..SynthConfig::default()
        };
        let a = gen_synthetic(&cfg).unwrap();
        assert_eq!(a, gen_synthetic(&cfg).unwrap());
        assert_eq!(within_cluster_fraction(&a.pairs, &a.labels), 1.0);
        assert!(a.pairs.pairs.iter().all(|(x, y)| x != y));

        let tight = SynthConfig {
            cluster_spread: 1e-9,
            ..cfg.clone()
        };
        let t = gen_synthetic(&tight).unwrap();
        for &(x, y) in &t.pairs.pairs {
            let c = crate::numeric::cosine(t.table.features.row(x), t.table.features.row(y)).unwrap();
            assert!(c > 1.0 - 1e-9);
        }

        let bad = SynthConfig { n_clusters: 300, ..cfg };
        assert!(gen_synthetic(&bad).is_err());
    }

    #[test]
    fn within_cluster_fraction_converges() {
        let cfg = SynthConfig {
            n_items: 2500,
            n_clusters: 10,
            dim: 4,
            pairs_per_item: 4,
            pair_within_cluster_prob: 0.6,
            ..SynthConfig::default()
        };
        let d = gen_synthetic(&cfg).unwrap();
        assert!(d.pairs.len() >= 10_000);
        let f = within_cluster_fraction(&d.pairs, &d.labels);
        assert!((f - 0.6).abs() < 0.05, "fraction {f}");
    }
}

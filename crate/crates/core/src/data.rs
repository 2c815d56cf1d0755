//! Toy datasets, non-IID partitioning and label-invariant augmentation.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::{self, Purpose};
use crate::topology::Topology;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("n = {n} is smaller than the class count {classes}")]
    TooFewSamples { n: usize, classes: usize },
    #[error("dataset needs at least one class and one feature dimension")]
    EmptyShape,
    #[error("dataset kind mini_digits requires dataset.path")]
    MissingPath,
    #[error("cannot read dataset file {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}:{line}: {message}")]
    Parse { path: PathBuf, line: usize, message: String },
    #[error("dataset does not cover class {0}")]
    MissingClass(usize),
    #[error("invalid partition spec: {0}")]
    BadPartition(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub features: Vec<f64>,
    pub label: Option<usize>,
}

impl Sample {
    pub fn labeled(features: Vec<f64>, label: usize) -> Self {
        Self { features, label: Some(label) }
    }

    pub fn unlabeled(features: Vec<f64>) -> Self {
        Self { features, label: None }
    }

    pub fn dim(&self) -> usize {
        self.features.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetKind {
    GaussMixture,
    Rings,
    MiniDigits,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSpec {
    #[serde(default = "default_kind")]
    pub kind: DatasetKind,
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default = "default_classes")]
    pub classes: usize,
    #[serde(default = "default_dim")]
    pub dim: usize,
    /// Distance between any two class means, in units of `noise`.
    #[serde(default = "default_separation")]
    pub separation: f64,
    /// Per-coordinate standard deviation around each class mean.
    #[serde(default = "default_noise")]
    pub noise: f64,
    #[serde(default)]
    pub path: Option<PathBuf>,
    /// Fraction held out as the global test split before partitioning.
    #[serde(default = "default_test_fraction")]
    pub test_fraction: f64,
}

fn default_kind() -> DatasetKind {
    DatasetKind::GaussMixture
}
fn default_n() -> usize {
    2000
}
fn default_classes() -> usize {
    4
}
fn default_dim() -> usize {
    8
}
fn default_separation() -> f64 {
    4.0
}
fn default_noise() -> f64 {
    1.0
}
fn default_test_fraction() -> f64 {
    0.2
}

impl Default for DatasetSpec {
    fn default() -> Self {
        Self {
            kind: DatasetKind::GaussMixture,
            n: default_n(),
            classes: default_classes(),
            dim: default_dim(),
            separation: default_separation(),
            noise: default_noise(),
            path: None,
            test_fraction: default_test_fraction(),
        }
    }
}

/// Class means of the Gaussian mixture, pairwise `separation · noise` apart.
///
/// For `C ≤ d` the means sit on scaled coordinate axes, which makes every
/// pairwise distance exact. Otherwise they are random points on a sphere of
/// the same radius.
pub fn gauss_means(spec: &DatasetSpec, seed: u64) -> Vec<Vec<f64>> {
    let radius = spec.separation * spec.noise / std::f64::consts::SQRT_2;
    let mut rng = rng::stream(seed, Purpose::Dataset, &[0]);
    (0..spec.classes)
        .map(|c| {
            if spec.classes <= spec.dim {
                let mut m = vec![0.0; spec.dim];
                m[c] = radius;
                m
            } else {
                let v: Vec<f64> = (0..spec.dim).map(|_| rng.sample(StandardNormal)).collect();
                let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
                v.into_iter().map(|x| x * radius / norm).collect()
            }
        })
        .collect()
}

/// Deterministic toy dataset, balanced across classes (the first `n mod C`
/// classes get one extra sample) and shuffled.
pub fn make_toy_dataset(spec: &DatasetSpec, seed: u64) -> Result<Vec<Sample>, DataError> {
    if spec.classes == 0 || spec.dim == 0 {
        return Err(DataError::EmptyShape);
    }
    if spec.kind != DatasetKind::MiniDigits && spec.n < spec.classes {
        return Err(DataError::TooFewSamples { n: spec.n, classes: spec.classes });
    }
    let mut rng = rng::stream(seed, Purpose::Dataset, &[1]);
    let per_class = |c: usize| spec.n / spec.classes + usize::from(c < spec.n % spec.classes);
    let mut out = Vec::with_capacity(spec.n);
    match spec.kind {
        DatasetKind::GaussMixture => {
            let means = gauss_means(spec, seed);
            for (c, mean) in means.iter().enumerate() {
                for _ in 0..per_class(c) {
                    let x = mean.iter().map(|m| m + spec.noise * rng.sample::<f64, _>(StandardNormal)).collect();
                    out.push(Sample::labeled(x, c));
                }
            }
        }
        DatasetKind::Rings => {
            // Concentric shells: class c at radius (c + 1) · separation · noise / 2.
            for c in 0..spec.classes {
                let radius = (c + 1) as f64 * spec.separation * spec.noise / 2.0;
                for _ in 0..per_class(c) {
                    let dir: Vec<f64> = (0..spec.dim).map(|_| rng.sample(StandardNormal)).collect();
                    let norm = dir.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
                    let r = radius + 0.25 * spec.noise * rng.sample::<f64, _>(StandardNormal);
                    out.push(Sample::labeled(dir.into_iter().map(|x| x / norm * r).collect(), c));
                }
            }
        }
        DatasetKind::MiniDigits => {
            let path = spec.path.as_ref().ok_or(DataError::MissingPath)?;
            let (dim, classes, samples) = read_dataset_file(path)?;
            if dim != spec.dim || classes != spec.classes {
                return Err(DataError::Parse {
                    path: path.clone(),
                    line: 1,
                    message: format!("header says d={dim},C={classes} but config says d={},C={}", spec.dim, spec.classes),
                });
            }
            out = samples;
        }
    }
    out.shuffle(&mut rng);
    Ok(out)
}

/// Reads the line format `d=<dim>,C=<classes>` followed by one
/// `f1,...,fd,label` row per sample.
pub fn read_dataset_file(path: &Path) -> Result<(usize, usize, Vec<Sample>), DataError> {
    let text = fs::read_to_string(path).map_err(|source| DataError::Io { path: path.to_path_buf(), source })?;
    parse_dataset(&text).map_err(|(line, message)| DataError::Parse { path: path.to_path_buf(), line, message })
}

pub fn parse_dataset(text: &str) -> Result<(usize, usize, Vec<Sample>), (usize, String)> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or((1, "empty file".to_string()))?;
    let mut dim = None;
    let mut classes = None;
    for part in header.split(',') {
        match part.trim().split_once('=') {
            Some(("d", v)) => dim = v.trim().parse::<usize>().ok(),
            Some(("C", v)) => classes = v.trim().parse::<usize>().ok(),
            _ => return Err((1, format!("bad header field {part:?}"))),
        }
    }
    let (Some(dim), Some(classes)) = (dim, classes) else {
        return Err((1, "header must be d=<dim>,C=<classes>".into()));
    };
    let mut samples = Vec::new();
    for (idx, line) in lines {
        let lineno = idx + 1;
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != dim + 1 {
            return Err((lineno, format!("expected {} fields, found {}", dim + 1, fields.len())));
        }
        let features = fields[..dim]
            .iter()
            .map(|f| match f.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err((lineno, format!("bad feature {f:?}"))),
            })
            .collect::<Result<Vec<_>, _>>()?;
        let label: usize = fields[dim].parse().map_err(|_| (lineno, format!("bad label {:?}", fields[dim])))?;
        if label >= classes {
            return Err((lineno, format!("label {label} out of range for C={classes}")));
        }
        samples.push(Sample::labeled(features, label));
    }
    Ok((dim, classes, samples))
}

pub fn write_dataset(samples: &[Sample], dim: usize, classes: usize) -> String {
    let mut out = format!("d={dim},C={classes}\n");
    for s in samples {
        for x in &s.features {
            write!(out, "{x},").unwrap();
        }
        writeln!(out, "{}", s.label.unwrap_or(0)).unwrap();
    }
    out
}

/// Splits off `fraction` of the samples (stratified by class) as a test set.
pub fn train_test_split(samples: Vec<Sample>, fraction: f64, classes: usize, seed: u64) -> (Vec<Sample>, Vec<Sample>) {
    let mut by_class: Vec<Vec<Sample>> = vec![Vec::new(); classes];
    for s in samples {
        by_class[s.label.unwrap_or(0)].push(s);
    }
    let mut rng = rng::stream(seed, Purpose::Split, &[]);
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for mut group in by_class {
        group.shuffle(&mut rng);
        let k = (group.len() as f64 * fraction).round() as usize;
        let rest = group.split_off(k);
        test.extend(group);
        train.extend(rest);
    }
    train.shuffle(&mut rng);
    test.shuffle(&mut rng);
    (train, test)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PartitionSpec {
    /// Dirichlet concentration; smaller is more skewed.
    pub alpha: f64,
    /// Fraction of all samples that carry labels.
    #[serde(rename = "r")]
    pub labeled_ratio: f64,
}

impl Default for PartitionSpec {
    fn default() -> Self {
        Self { alpha: 0.1, labeled_ratio: 0.01 }
    }
}

impl PartitionSpec {
    pub fn validate(&self) -> Result<(), DataError> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(DataError::BadPartition(format!("partition.alpha must be > 0, got {}", self.alpha)));
        }
        if !(self.labeled_ratio > 0.0 && self.labeled_ratio <= 1.0) {
            return Err(DataError::BadPartition(format!("partition.r must be in (0, 1], got {}", self.labeled_ratio)));
        }
        Ok(())
    }
}

/// One client's share. Unlabeled samples keep their true class in
/// `hidden_labels` for pseudo-label precision metrics only.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ClientDataset {
    pub labeled: Vec<Sample>,
    pub unlabeled: Vec<Sample>,
    pub hidden_labels: Vec<usize>,
}

impl ClientDataset {
    pub fn len(&self) -> usize {
        self.labeled.len() + self.unlabeled.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Reveals every hidden label, turning the client fully labeled.
    pub fn reveal_labels(&mut self) {
        for (mut s, y) in self.unlabeled.drain(..).zip(self.hidden_labels.drain(..)) {
            s.label = Some(y);
            self.labeled.push(s);
        }
    }
}

#[derive(Debug, Clone)]
pub struct Partition {
    pub clients: Vec<ClientDataset>,
    /// The Dirichlet proportions `p[c][i]` drawn for class c over clients.
    pub proportions: Vec<Vec<f64>>,
    pub warnings: Vec<String>,
}

/// Splits `counts` items into parts proportional to `weights` using the
/// largest-remainder rule, so the parts always sum to `total`.
fn apportion(total: usize, weights: &[f64]) -> Vec<usize> {
    let sum: f64 = weights.iter().sum();
    if weights.is_empty() {
        return Vec::new();
    }
    let shares: Vec<f64> = if sum > 0.0 {
        weights.iter().map(|w| w / sum * total as f64).collect()
    } else {
        vec![total as f64 / weights.len() as f64; weights.len()]
    };
    let mut parts: Vec<usize> = shares.iter().map(|s| s.floor() as usize).collect();
    let mut left = total - parts.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = shares[a] - shares[a].floor();
        let rb = shares[b] - shares[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &k in order.iter().cycle() {
        if left == 0 {
            break;
        }
        parts[k] += 1;
        left -= 1;
    }
    parts
}

/// Symmetric Dirichlet draw via normalized Gamma(alpha, 1) variates.
pub fn dirichlet<R: Rng + ?Sized>(alpha: f64, k: usize, rng: &mut R) -> Vec<f64> {
    let gamma = Gamma::new(alpha, 1.0).expect("alpha > 0");
    let g: Vec<f64> = (0..k).map(|_| gamma.sample(rng)).collect();
    let sum: f64 = g.iter().sum();
    if sum > 0.0 {
        g.into_iter().map(|x| x / sum).collect()
    } else {
        vec![1.0 / k as f64; k]
    }
}

/// Non-IID split of a labeled dataset over the clients of `topology`.
///
/// For every class `c` one Dirichlet(alpha) draw gives proportions over all
/// clients. `round(r · n)` samples, chosen uniformly at random, become the
/// labeled pool; each class's labeled samples go to L and M clients in
/// proportion to their share of that class, and its unlabeled samples go to
/// U and M clients the same way. Every L and M client ends with at least one
/// labeled sample (moved from the client holding the most).
pub fn partition(
    dataset: &[Sample],
    topology: &Topology,
    classes: usize,
    spec: &PartitionSpec,
    seed: u64,
) -> Result<Partition, DataError> {
    spec.validate()?;
    let n = dataset.len();
    let clients = topology.node_count();
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); classes];
    for (idx, s) in dataset.iter().enumerate() {
        match s.label {
            Some(c) if c < classes => by_class[c].push(idx),
            _ => return Err(DataError::BadPartition(format!("sample {idx} has no valid label"))),
        }
    }
    if let Some(c) = by_class.iter().position(Vec::is_empty) {
        return Err(DataError::MissingClass(c));
    }

    let mut rng = rng::stream(seed, Purpose::Partition, &[]);
    let proportions: Vec<Vec<f64>> = (0..classes)
        .map(|_| {
            if clients == 1 {
                vec![1.0]
            } else {
                dirichlet(spec.alpha, clients, &mut rng)
            }
        })
        .collect();

    let mut is_labeled = vec![false; n];
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let labeled_total = ((spec.labeled_ratio * n as f64).round() as usize).min(n);
    for &idx in &order[..labeled_total] {
        is_labeled[idx] = true;
    }

    let holders_l: Vec<usize> = (0..clients).filter(|&i| topology.role(i).holds_labeled()).collect();
    let holders_u: Vec<usize> = (0..clients).filter(|&i| topology.role(i).holds_unlabeled()).collect();
    let mut warnings = Vec::new();
    if holders_l.is_empty() && labeled_total > 0 {
        warnings.push("no L or M client: labeled pool is treated as unlabeled".into());
    }

    let mut out = vec![ClientDataset::default(); clients];
    for (c, members) in by_class.iter_mut().enumerate() {
        members.shuffle(&mut rng);
        let (lab, unl): (Vec<usize>, Vec<usize>) = members.iter().partition(|&&idx| is_labeled[idx]);
        let (lab, unl) = match (holders_l.is_empty(), holders_u.is_empty()) {
            (true, _) => (Vec::new(), [lab, unl].concat()),
            (_, true) => ([lab, unl].concat(), Vec::new()),
            _ => (lab, unl),
        };
        let place = |pool: &[usize], holders: &[usize], out: &mut [ClientDataset], labeled: bool| {
            let weights: Vec<f64> = holders.iter().map(|&i| proportions[c][i]).collect();
            let parts = apportion(pool.len(), &weights);
            let mut cursor = 0;
            for (&client, &count) in holders.iter().zip(&parts) {
                for &idx in &pool[cursor..cursor + count] {
                    let s = &dataset[idx];
                    if labeled {
                        out[client].labeled.push(s.clone());
                    } else {
                        out[client].unlabeled.push(Sample::unlabeled(s.features.clone()));
                        out[client].hidden_labels.push(c);
                    }
                }
                cursor += count;
            }
        };
        place(&lab, &holders_l, &mut out, true);
        place(&unl, &holders_u, &mut out, false);
    }

    // At least one labeled sample per L/M client.
    for &i in &holders_l {
        if out[i].labeled.is_empty() {
            let donor = holders_l.iter().copied().max_by_key(|&j| (out[j].labeled.len(), std::cmp::Reverse(j)));
            match donor {
                Some(j) if out[j].labeled.len() > 1 => {
                    let s = out[j].labeled.pop().expect("donor has samples");
                    out[i].labeled.push(s);
                    warnings.push(format!("client {i} received no labeled sample; moved one from client {j}"));
                }
                _ => warnings.push(format!("client {i} has no labeled sample and none can be spared")),
            }
        }
    }
    for client in &mut out {
        // Interleave classes; the per-class placement above groups them.
        let mut rows: Vec<(Sample, usize)> =
            client.unlabeled.drain(..).zip(client.hidden_labels.drain(..)).collect();
        rows.shuffle(&mut rng);
        (client.unlabeled, client.hidden_labels) = rows.into_iter().unzip();
        client.labeled.shuffle(&mut rng);
    }
    Ok(Partition { clients: out, proportions, warnings })
}

/// Class histogram of everything a client holds (labeled and hidden labels).
pub fn class_histogram(client: &ClientDataset, classes: usize) -> Vec<usize> {
    let mut h = vec![0; classes];
    for s in &client.labeled {
        if let Some(c) = s.label {
            h[c] += 1;
        }
    }
    for &c in &client.hidden_labels {
        h[c] += 1;
    }
    h
}

/// Total-variation distance between two distributions.
pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// Average over non-empty clients of the TV distance between the client's
/// class distribution and `reference`.
pub fn mean_class_skew(clients: &[ClientDataset], classes: usize, reference: &[f64]) -> f64 {
    let dists: Vec<f64> = clients
        .iter()
        .filter(|c| !c.is_empty())
        .map(|c| {
            let h = class_histogram(c, classes);
            let total: usize = h.iter().sum();
            let p: Vec<f64> = h.iter().map(|&k| k as f64 / total as f64).collect();
            total_variation(&p, reference)
        })
        .collect();
    dists.iter().sum::<f64>() / dists.len().max(1) as f64
}

/// Label-invariant augmentation: additive Gaussian jitter with standard
/// deviation `sigma`, drawn from a stream keyed by `(seed, variant)`.
pub fn augment(sample: &Sample, variant: u64, sigma: f64, seed: u64) -> Sample {
    if sigma == 0.0 {
        return sample.clone();
    }
    let mut rng = rng::stream(seed, Purpose::Augment, &[variant]);
    let features = sample.features.iter().map(|x| x + sigma * rng.sample::<f64, _>(StandardNormal)).collect();
    Sample { features, label: sample.label }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::Role;

    fn gauss(n: usize, classes: usize, dim: usize) -> DatasetSpec {
        DatasetSpec { n, classes, dim, ..DatasetSpec::default() }
    }

    #[test]
    fn gauss_mixture_is_balanced() {
        let data = make_toy_dataset(&gauss(300, 3, 4), 1).unwrap();
        let mut counts = [0; 3];
        for s in &data {
            counts[s.label.unwrap()] += 1;
        }
        assert_eq!(counts, [100, 100, 100]);
    }

    #[test]
    fn dataset_is_deterministic() {
        let a = make_toy_dataset(&gauss(90, 3, 5), 42).unwrap();
        let b = make_toy_dataset(&gauss(90, 3, 5), 42).unwrap();
        let bits = |d: &[Sample]| d.iter().flat_map(|s| s.features.iter().map(|x| x.to_bits())).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
        assert_ne!(bits(&a), bits(&make_toy_dataset(&gauss(90, 3, 5), 43).unwrap()));
    }

    #[test]
    fn nearest_centroid_oracle_on_separated_mixture() {
        let spec = gauss(3000, 3, 6);
        let data = make_toy_dataset(&spec, 5).unwrap();
        let means = gauss_means(&spec, 5);
        let correct = data
            .iter()
            .filter(|s| {
                let best = (0..3)
                    .min_by(|&a, &b| {
                        let da: f64 = s.features.iter().zip(&means[a]).map(|(x, m)| (x - m).powi(2)).sum();
                        let db: f64 = s.features.iter().zip(&means[b]).map(|(x, m)| (x - m).powi(2)).sum();
                        da.total_cmp(&db)
                    })
                    .unwrap();
                Some(best) == s.label
            })
            .count();
        // Means are 4σ apart, so each pairwise confusion has probability
        // Φ(−2); the union bound over the two rivals is tight to ~0.005.
        let bayes = 1.0 - 2.0 * 0.022_750_131_948_179;
        let acc = correct as f64 / 3000.0;
        assert!((acc - bayes).abs() < 0.015, "{acc} vs {bayes}");
    }

    #[test]
    fn kind_errors() {
        let spec = DatasetSpec { kind: DatasetKind::MiniDigits, path: None, ..DatasetSpec::default() };
        assert!(matches!(make_toy_dataset(&spec, 0), Err(DataError::MissingPath)));
        let spec = DatasetSpec {
            kind: DatasetKind::MiniDigits,
            path: Some("/nonexistent/digits.csv".into()),
            ..DatasetSpec::default()
        };
        assert!(matches!(make_toy_dataset(&spec, 0), Err(DataError::Io { .. })));
        assert!(matches!(make_toy_dataset(&gauss(2, 3, 2), 0), Err(DataError::TooFewSamples { .. })));
        assert!(serde_json::from_str::<DatasetKind>("\"spirals\"").is_err());
    }

    #[test]
    fn dataset_file_round_trip() {
        let data = make_toy_dataset(&gauss(12, 3, 2), 9).unwrap();
        let text = write_dataset(&data, 2, 3);
        let (d, c, back) = parse_dataset(&text).unwrap();
        assert_eq!((d, c), (2, 3));
        assert_eq!(back, data);
        assert_eq!(parse_dataset("d=2,C=3\n1,2,7\n").unwrap_err().0, 2);
    }

    #[test]
    fn mini_digits_loads_from_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("digits.csv");
        std::fs::write(&path, "d=2,C=2\n0.0,1.0,0\n1.0,0.0,1\n0.5,0.5,1\n").unwrap();
        let spec = DatasetSpec { kind: DatasetKind::MiniDigits, path: Some(path), dim: 2, classes: 2, ..DatasetSpec::default() };
        let data = make_toy_dataset(&spec, 1).unwrap();
        assert_eq!(data.len(), 3);
    }

    #[test]
    fn apportion_sums_to_total() {
        assert_eq!(apportion(10, &[0.5, 0.25, 0.25]), vec![5, 3, 2]);
        assert_eq!(apportion(3, &[0.0, 0.0]), vec![2, 1]);
        assert_eq!(apportion(7, &[1.0]).iter().sum::<usize>(), 7);
    }

    #[test]
    fn labeled_ratio_is_global() {
        let topo = Topology::preset("topo1").unwrap();
        let data = make_toy_dataset(&gauss(1000, 4, 4), 3).unwrap();
        let spec = PartitionSpec { alpha: 0.5, labeled_ratio: 0.005 };
        let p = partition(&data, &topo, 4, &spec, 3).unwrap();
        let labeled: usize = p.clients.iter().map(|c| c.labeled.len()).sum();
        assert_eq!(labeled, 5);
        let total: usize = p.clients.iter().map(ClientDataset::len).sum();
        assert_eq!(total, 1000);
    }

    #[test]
    fn roles_are_respected_and_labeled_holders_get_a_sample() {
        for preset in crate::topology::PRESETS {
            let topo = Topology::preset(preset).unwrap();
            let data = make_toy_dataset(&gauss(800, 4, 4), 11).unwrap();
            let spec = PartitionSpec { alpha: 0.1, labeled_ratio: 0.01 };
            let p = partition(&data, &topo, 4, &spec, 11).unwrap();
            for (i, c) in p.clients.iter().enumerate() {
                match topo.role(i) {
                    Role::Labeled => assert!(c.unlabeled.is_empty() && !c.labeled.is_empty()),
                    Role::Unlabeled => assert!(c.labeled.is_empty()),
                    Role::Mixed => assert!(!c.labeled.is_empty()),
                }
                assert_eq!(c.unlabeled.len(), c.hidden_labels.len());
                assert!(c.unlabeled.iter().all(|s| s.label.is_none()));
            }
        }
    }

    #[test]
    fn partition_rejects_bad_specs() {
        let topo = Topology::preset("topo1").unwrap();
        let data = make_toy_dataset(&gauss(100, 2, 2), 0).unwrap();
        assert!(partition(&data, &topo, 2, &PartitionSpec { alpha: 0.0, labeled_ratio: 0.1 }, 0).is_err());
        assert!(partition(&data, &topo, 2, &PartitionSpec { alpha: 1.0, labeled_ratio: 0.0 }, 0).is_err());
        assert!(matches!(
            partition(&data, &topo, 3, &PartitionSpec { alpha: 1.0, labeled_ratio: 0.1 }, 0),
            Err(DataError::MissingClass(2))
        ));
    }

    #[test]
    fn augment_cases() {
        let s = Sample::labeled(vec![1.0, 2.0, 3.0], 1);
        assert_eq!(augment(&s, 1, 0.0, 9), s);
        let a = augment(&s, 1, 0.1, 9);
        let b = augment(&s, 2, 0.1, 9);
        assert_ne!(a.features, b.features);
        assert_eq!(a.label, Some(1));
        assert_eq!(augment(&s, 1, 0.1, 9), a);
    }
}

//! Synthetic datasets and heterogeneous client partitions.
//!
//! Three partition schemes: s shards per client over label-sorted data
//! (s = 1 gives single-label clients, s = 2 two-label clients), and
//! Dirichlet-sampled label mixes with client sizes from a least-norm
//! allocation. All construction is deterministic in PartitionSpec::seed.

mod idx;
mod least_norm;

pub use idx::load_idx;
pub use least_norm::{solve_least_norm, Allocation, RESIDUAL_TOLERANCE};

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Batch;

/// Labeled samples in row-major feature storage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub features: Vec<f64>,
    pub labels: Vec<usize>,
    pub dims: usize,
    pub class_count: usize,
}

impl Dataset {
    pub fn new(features: Vec<f64>, labels: Vec<usize>, dims: usize, class_count: usize) -> Result<Self> {
        if dims == 0 || class_count == 0 {
            return Err(Error::config("dataset needs positive dims and class count"));
        }
        if features.len() != labels.len() * dims {
            return Err(Error::config(format!(
                "feature buffer holds {} values, expected {} rows × {dims} dims",
                features.len(),
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= class_count) {
            return Err(Error::config(format!(
                "label {bad} out of range for {class_count} classes"
            )));
        }
        Ok(Dataset { features, labels, dims, class_count })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// View over the whole dataset.
    pub fn as_batch(&self) -> Batch<'_> {
        Batch::new(&self.features, &self.labels, self.dims).expect("dataset is internally consistent")
    }

    /// Copy the given rows into the scratch buffers (cleared first).
    pub fn gather(&self, indices: &[usize], features: &mut Vec<f64>, labels: &mut Vec<usize>) {
        features.clear();
        labels.clear();
        for &i in indices {
            features.extend_from_slice(&self.features[i * self.dims..(i + 1) * self.dims]);
            labels.push(self.labels[i]);
        }
    }

    pub fn label_histogram(&self) -> Vec<usize> {
        let mut hist = vec![0; self.class_count];
        for &l in &self.labels {
            hist[l] += 1;
        }
        hist
    }

    fn subset_histogram(&self, indices: &[usize]) -> Vec<usize> {
        let mut hist = vec![0; self.class_count];
        for &i in indices {
            hist[self.labels[i]] += 1;
        }
        hist
    }

    fn take_rows(&self, indices: &[usize]) -> Dataset {
        let mut features = Vec::with_capacity(indices.len() * self.dims);
        let mut labels = Vec::with_capacity(indices.len());
        self.gather(indices, &mut features, &mut labels);
        Dataset {
            features,
            labels,
            dims: self.dims,
            class_count: self.class_count,
        }
    }
}

/// Gaussian class clusters with unit variance. Cluster means are rescaled so
/// every pair sits at distance ≥ `sep`, making `sep` a direct knob for task
/// difficulty.
pub fn gen_synthetic(
    class_count: usize,
    per_class: usize,
    dims: usize,
    sep: f64,
    seed: u64,
) -> Result<Dataset> {
    if class_count == 0 || per_class == 0 || dims == 0 {
        return Err(Error::config("class_count, per_class, and dims must be positive"));
    }
    if !(sep >= 0.0) || !sep.is_finite() {
        return Err(Error::config("sep must be a nonnegative real"));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut means = vec![0.0; class_count * dims];
    for m in &mut means {
        *m = StandardNormal.sample(&mut rng);
    }
    if class_count > 1 && sep > 0.0 {
        let mut min_dist = f64::INFINITY;
        for a in 0..class_count {
            for b in a + 1..class_count {
                let dist: f64 = (0..dims)
                    .map(|k| {
                        let diff = means[a * dims + k] - means[b * dims + k];
                        diff * diff
                    })
                    .sum::<f64>()
                    .sqrt();
                min_dist = min_dist.min(dist);
            }
        }
        if min_dist <= 0.0 {
            return Err(Error::logic("degenerate class means drawn"));
        }
        let scale = sep / min_dist;
        if scale > 1.0 {
            for m in &mut means {
                *m *= scale;
            }
        }
    }

    let total = class_count * per_class;
    let mut features = Vec::with_capacity(total * dims);
    let mut labels = Vec::with_capacity(total);
    for class in 0..class_count {
        for _ in 0..per_class {
            for k in 0..dims {
                let noise: f64 = StandardNormal.sample(&mut rng);
                features.push(means[class * dims + k] + noise);
            }
            labels.push(class);
        }
    }
    Dataset::new(features, labels, dims, class_count)
}

/// Split into (train, eval) stratified by class: per class, a seeded shuffle
/// and the first ⌊count·eval_fraction⌋ samples go to eval.
pub fn split_stratified(ds: &Dataset, eval_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(eval_fraction > 0.0 && eval_fraction < 1.0) {
        return Err(Error::config("eval_fraction must lie strictly between 0 and 1"));
    }
    if ds.is_empty() {
        return Err(Error::config("cannot split an empty dataset"));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut train_idx = Vec::new();
    let mut eval_idx = Vec::new();
    for class in 0..ds.class_count {
        let mut members: Vec<usize> = (0..ds.len()).filter(|&i| ds.labels[i] == class).collect();
        members.shuffle(&mut rng);
        let take = (members.len() as f64 * eval_fraction).floor() as usize;
        eval_idx.extend_from_slice(&members[..take]);
        train_idx.extend_from_slice(&members[take..]);
    }
    train_idx.sort_unstable();
    eval_idx.sort_unstable();
    if train_idx.is_empty() || eval_idx.is_empty() {
        return Err(Error::config("split left train or eval empty; adjust eval_fraction"));
    }
    Ok((ds.take_rows(&train_idx), ds.take_rows(&eval_idx)))
}

/// Partition scheme plus the parameters every scheme needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionSpec {
    pub scheme: Scheme,
    pub clients: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Scheme {
    /// Sort by label, cut into clients·s equal shards, deal s shards to each
    /// client. s = 1 and s = 2 are the single- and two-label settings.
    ShardsPerClient { shards: usize },
    /// Per-client label mix q_i ~ Dir(ζ·prior); sizes from the least-norm
    /// allocation.
    Dirichlet { zeta: f64 },
}

/// Client → sample-index assignment with per-client label counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Partition {
    pub assignment: Vec<Vec<usize>>,
    pub label_histogram: Vec<Vec<usize>>,
}

impl Partition {
    /// Assemble from an explicit assignment; shards are sorted and label
    /// histograms taken from the dataset.
    pub fn from_assignment(ds: &Dataset, assignment: Vec<Vec<usize>>) -> Self {
        build_partition(ds, assignment)
    }
}

/// A partition plus scheme-specific diagnostics.
#[derive(Debug, Clone)]
pub struct PartitionOutcome {
    pub partition: Partition,
    /// Least-norm relative residual; None for shard schemes.
    pub residual: Option<f64>,
}

pub fn partition(ds: &Dataset, spec: &PartitionSpec) -> Result<PartitionOutcome> {
    if spec.clients == 0 {
        return Err(Error::config("partition needs at least one client"));
    }
    if ds.is_empty() {
        return Err(Error::config("cannot partition an empty dataset"));
    }
    match spec.scheme {
        Scheme::ShardsPerClient { shards } => Ok(PartitionOutcome {
            partition: partition_shards(ds, spec.clients, shards, spec.seed)?,
            residual: None,
        }),
        Scheme::Dirichlet { zeta } => {
            let (p, residual) = partition_dirichlet(ds, spec.clients, zeta, spec.seed)?;
            Ok(PartitionOutcome { partition: p, residual: Some(residual) })
        }
    }
}

fn build_partition(ds: &Dataset, mut assignment: Vec<Vec<usize>>) -> Partition {
    for client in &mut assignment {
        client.sort_unstable();
    }
    let label_histogram = assignment.iter().map(|idx| ds.subset_histogram(idx)).collect();
    Partition { assignment, label_histogram }
}

pub fn partition_shards(ds: &Dataset, clients: usize, shards_per_client: usize, seed: u64) -> Result<Partition> {
    if shards_per_client == 0 {
        return Err(Error::config("shards per client must be positive"));
    }
    let shard_count = clients
        .checked_mul(shards_per_client)
        .ok_or_else(|| Error::config("shard count overflows"))?;
    if ds.len() % shard_count != 0 {
        return Err(Error::config(format!(
            "{} samples cannot be cut into {shard_count} equal shards",
            ds.len()
        )));
    }
    let shard_size = ds.len() / shard_count;

    // Stable sort by label keeps original order inside a label.
    let mut order: Vec<usize> = (0..ds.len()).collect();
    order.sort_by_key(|&i| ds.labels[i]);

    let mut shard_ids: Vec<usize> = (0..shard_count).collect();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    shard_ids.shuffle(&mut rng);

    let assignment = (0..clients)
        .map(|c| {
            let mut idx = Vec::with_capacity(shards_per_client * shard_size);
            for &shard in &shard_ids[c * shards_per_client..(c + 1) * shards_per_client] {
                idx.extend_from_slice(&order[shard * shard_size..(shard + 1) * shard_size]);
            }
            idx
        })
        .collect();
    Ok(build_partition(ds, assignment))
}

fn sample_dirichlet(prior: &[f64], zeta: f64, rng: &mut ChaCha20Rng) -> Result<Vec<f64>> {
    // Gamma(ζ·p_l) draws normalized. Tiny shapes can underflow every draw to
    // zero; retry in that case (still deterministic for a fixed seed).
    for _ in 0..100 {
        let mut q = Vec::with_capacity(prior.len());
        for &p in prior {
            let gamma = Gamma::new(zeta * p, 1.0)
                .map_err(|e| Error::config(format!("invalid Dirichlet concentration: {e}")))?;
            q.push(gamma.sample(rng));
        }
        let sum: f64 = q.iter().sum();
        if sum > 0.0 && sum.is_finite() {
            for v in &mut q {
                *v /= sum;
            }
            return Ok(q);
        }
    }
    Err(Error::logic("Dirichlet sampling underflowed repeatedly"))
}

fn partition_dirichlet(ds: &Dataset, clients: usize, zeta: f64, seed: u64) -> Result<(Partition, f64)> {
    if !(zeta > 0.0) || !zeta.is_finite() {
        return Err(Error::config("Dirichlet concentration must be positive"));
    }
    let hist = ds.label_histogram();
    if hist.iter().any(|&c| c == 0) {
        return Err(Error::config("Dirichlet partition requires every class to be present"));
    }
    let l = ds.class_count;
    let total = ds.len() as f64;
    let prior: Vec<f64> = hist.iter().map(|&c| c as f64 / total).collect();

    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut q = vec![0.0; l * clients]; // L×N, column per client
    for client in 0..clients {
        let qi = sample_dirichlet(&prior, zeta, &mut rng)?;
        for (label, &v) in qi.iter().enumerate() {
            q[label * clients + client] = v;
        }
    }

    let d: Vec<f64> = hist.iter().map(|&c| c as f64).collect();
    let alloc = solve_least_norm(&q, l, clients, &d)?;

    // Per-label pools, shuffled once; clients draw in id order.
    let mut pools: Vec<Vec<usize>> = (0..l)
        .map(|label| (0..ds.len()).filter(|&i| ds.labels[i] == label).collect())
        .collect();
    for pool in &mut pools {
        pool.shuffle(&mut rng);
    }
    let mut cursor = vec![0usize; l];

    let mut assignment: Vec<Vec<usize>> = Vec::with_capacity(clients);
    for client in 0..clients {
        let size = alloc.sizes[client];
        let mut idx = Vec::with_capacity(size);
        if size > 0 {
            let weights: Vec<f64> = (0..l).map(|label| q[label * clients + client]).collect();
            let wants = least_norm::apportion(&weights, size);
            for label in 0..l {
                // Availability caps the draw; the least-norm residual keeps
                // the shortfall small.
                let available = pools[label].len() - cursor[label];
                let take = wants[label].min(available);
                idx.extend_from_slice(&pools[label][cursor[label]..cursor[label] + take]);
                cursor[label] += take;
            }
        }
        assignment.push(idx);
    }
    Ok((build_partition(ds, assignment), alloc.relative_residual))
}

/// Mean/stdev of per-client sample counts and distinct-label counts.
/// Stdev is the population form (÷N).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PartitionStats {
    pub clients: usize,
    pub size_mean: f64,
    pub size_stdev: f64,
    pub labels_mean: f64,
    pub labels_stdev: f64,
    pub min_size: usize,
    pub max_size: usize,
}

fn mean_stdev(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

pub fn partition_stats(p: &Partition) -> Result<PartitionStats> {
    if p.assignment.is_empty() {
        return Err(Error::config("partition has no clients"));
    }
    let sizes: Vec<usize> = p.assignment.iter().map(|a| a.len()).collect();
    let labels: Vec<usize> = p
        .label_histogram
        .iter()
        .map(|h| h.iter().filter(|&&c| c > 0).count())
        .collect();
    let (size_mean, size_stdev) = mean_stdev(sizes.iter().map(|&v| v as f64));
    let (labels_mean, labels_stdev) = mean_stdev(labels.iter().map(|&v| v as f64));
    Ok(PartitionStats {
        clients: p.assignment.len(),
        size_mean,
        size_stdev,
        labels_mean,
        labels_stdev,
        min_size: *sizes.iter().min().unwrap(),
        max_size: *sizes.iter().max().unwrap(),
    })
}

/// One line per client: that client's sample indices, space-separated.
/// Empty clients produce empty lines, so the line count equals the client
/// count.
pub fn export_partition(p: &Partition) -> String {
    let mut out = String::new();
    for client in &p.assignment {
        let mut first = true;
        for &i in client {
            if !first {
                out.push(' ');
            }
            out.push_str(&i.to_string());
            first = false;
        }
        out.push('\n');
    }
    out
}

/// Inverse of [`export_partition`]; histograms are rebuilt against `ds` and
/// the assignment is checked for overlaps and out-of-range indices.
pub fn parse_partition(text: &str, ds: &Dataset) -> Result<Partition> {
    let mut assignment = Vec::new();
    let mut seen = vec![false; ds.len()];
    for (lineno, line) in text.lines().enumerate() {
        let mut idx = Vec::new();
        for tok in line.split_whitespace() {
            let i: usize = tok
                .parse()
                .map_err(|_| Error::partition(format!("line {}: bad index {tok:?}", lineno + 1)))?;
            if i >= ds.len() {
                return Err(Error::partition(format!(
                    "line {}: index {i} out of range for {} samples",
                    lineno + 1,
                    ds.len()
                )));
            }
            if seen[i] {
                return Err(Error::partition(format!(
                    "line {}: index {i} assigned twice",
                    lineno + 1
                )));
            }
            seen[i] = true;
            idx.push(i);
        }
        assignment.push(idx);
    }
    if assignment.is_empty() {
        return Err(Error::partition("partition file is empty"));
    }
    Ok(build_partition(ds, assignment))
}

pub fn write_partition_file(p: &Partition, path: &Path) -> Result<()> {
    fs::write(path, export_partition(p))?;
    Ok(())
}

pub fn read_partition_file(path: &Path, ds: &Dataset) -> Result<Partition> {
    let text = fs::read_to_string(path)?;
    parse_partition(&text, ds)
}

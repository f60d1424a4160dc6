//! Independent reference implementations used by the integration tests.
//! Everything here is written for clarity, not speed.

#![allow(dead_code)]

use std::collections::BTreeSet;
use std::path::PathBuf;

use transit_typology::autoencoder::Autoencoder;
use transit_typology::clustering::{Dendrogram, Linkage, Metric};

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

// ---------------------------------------------------------------------------
// Clustering

pub fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    (1.0 - dot / (na * nb)).clamp(0.0, 2.0)
}

pub fn centroid(points: &[Vec<f64>], members: &BTreeSet<usize>) -> Vec<f64> {
    let d = points[0].len();
    let mut c = vec![0.0; d];
    for &i in members {
        for (acc, v) in c.iter_mut().zip(&points[i]) {
            *acc += v;
        }
    }
    c.iter_mut().for_each(|v| *v /= members.len() as f64);
    c
}

/// Within-cluster sum of squares of a partition, from scratch.
pub fn sse(points: &[Vec<f64>], clusters: &[BTreeSet<usize>]) -> f64 {
    clusters
        .iter()
        .map(|m| {
            let c = centroid(points, m);
            m.iter().map(|&i| sq_dist(&points[i], &c)).sum::<f64>()
        })
        .sum()
}

/// Cluster-to-cluster distance recomputed from the member points.
pub fn linkage_distance(
    points: &[Vec<f64>],
    a: &BTreeSet<usize>,
    b: &BTreeSet<usize>,
    linkage: Linkage,
    metric: Metric,
) -> f64 {
    match (linkage, metric) {
        (Linkage::Ward, _) => {
            let (na, nb) = (a.len() as f64, b.len() as f64);
            let d2 = sq_dist(&centroid(points, a), &centroid(points, b));
            (2.0 * na * nb / (na + nb) * d2).sqrt()
        }
        (Linkage::Average, m) => {
            let mut total = 0.0;
            for &i in a {
                for &j in b {
                    total += match m {
                        Metric::Euclidean => sq_dist(&points[i], &points[j]).sqrt(),
                        Metric::Cosine => cosine(&points[i], &points[j]),
                    };
                }
            }
            total / (a.len() * b.len()) as f64
        }
    }
}

/// One oracle merge: the two leaf sets joined and the linkage height.
#[derive(Debug, Clone)]
pub struct NaiveMerge {
    pub a: BTreeSet<usize>,
    pub b: BTreeSet<usize>,
    pub height: f64,
}

/// O(n^3) agglomeration: every step rescans all cluster pairs with distances
/// recomputed from the points. Exact ties are broken by scan order, so only
/// compare against it on continuous random data.
pub fn naive_agglomerate(points: &[Vec<f64>], linkage: Linkage, metric: Metric) -> Vec<NaiveMerge> {
    let mut clusters: Vec<BTreeSet<usize>> =
        (0..points.len()).map(|i| BTreeSet::from([i])).collect();
    let mut merges = Vec::new();
    while clusters.len() > 1 {
        let mut best: Option<(f64, usize, usize)> = None;
        for i in 0..clusters.len() {
            for j in i + 1..clusters.len() {
                let d = linkage_distance(points, &clusters[i], &clusters[j], linkage, metric);
                if best.is_none_or(|(bd, _, _)| d < bd) {
                    best = Some((d, i, j));
                }
            }
        }
        let (height, i, j) = best.expect("two clusters");
        let b = clusters.remove(j);
        let a = clusters.remove(i);
        merges.push(NaiveMerge {
            a: a.clone(),
            b: b.clone(),
            height,
        });
        clusters.push(a.union(&b).copied().collect());
    }
    merges
}

/// Leaf set of every node of a dendrogram.
pub fn node_leaves(tree: &Dendrogram) -> Vec<BTreeSet<usize>> {
    let n = tree.leaves();
    let mut nodes: Vec<BTreeSet<usize>> = (0..n).map(|i| BTreeSet::from([i])).collect();
    for m in tree.merges() {
        let joined = nodes[m.left].union(&nodes[m.right]).copied().collect();
        nodes.push(joined);
    }
    nodes
}

/// Partition left after the first `steps` merges, as sorted leaf sets.
pub fn partition_after(tree: &Dendrogram, steps: usize) -> Vec<BTreeSet<usize>> {
    let n = tree.leaves();
    let leaves = node_leaves(tree);
    let mut alive: BTreeSet<usize> = (0..n).collect();
    for m in &tree.merges()[..steps] {
        alive.remove(&m.left);
        alive.remove(&m.right);
        alive.insert(n + m.step);
    }
    let mut parts: Vec<BTreeSet<usize>> = alive.into_iter().map(|id| leaves[id].clone()).collect();
    parts.sort();
    parts
}

/// Leaf sets of a labelling, sorted.
pub fn partition_of(labels: &[usize]) -> Vec<BTreeSet<usize>> {
    let k = labels.iter().max().map_or(0, |m| m + 1);
    let mut parts = vec![BTreeSet::new(); k];
    for (i, &l) in labels.iter().enumerate() {
        parts[l].insert(i);
    }
    parts.retain(|p| !p.is_empty());
    parts.sort();
    parts
}

// ---------------------------------------------------------------------------
// Autoencoder

/// Forward pass written out directly from the layer parameters. Returns the
/// pre-activations of every layer and the reconstruction.
pub fn forward(model: &Autoencoder, x: &[f64]) -> (Vec<Vec<f64>>, Vec<f64>) {
    let mut a = x.to_vec();
    let mut pres = Vec::new();
    for layer in &model.layers {
        let mut pre = Vec::with_capacity(layer.outputs);
        for o in 0..layer.outputs {
            let row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
            let s: f64 = row.iter().zip(&a).map(|(w, x)| w * x).sum();
            pre.push(layer.biases[o] + s);
        }
        a = if layer.relu {
            pre.iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect()
        } else {
            pre.clone()
        };
        pres.push(pre);
    }
    (pres, a)
}

/// Mean over samples of the summed squared reconstruction error.
pub fn reference_loss(model: &Autoencoder, batch: &[Vec<f64>]) -> f64 {
    batch
        .iter()
        .map(|x| {
            let (_, rec) = forward(model, x);
            sq_dist(x, &rec)
        })
        .sum::<f64>()
        / batch.len() as f64
}

fn rectifier_pattern(model: &Autoencoder, batch: &[Vec<f64>]) -> Vec<bool> {
    let mut out = Vec::new();
    for x in batch {
        let (pres, _) = forward(model, x);
        for (layer, pre) in model.layers.iter().zip(pres) {
            if layer.relu {
                out.extend(pre.iter().map(|&v| v > 0.0));
            }
        }
    }
    out
}

/// Central difference of the reference loss in parameter `index`, or `None`
/// when the perturbation flips some rectifier (the loss is not smooth there).
pub fn central_difference(
    model: &Autoencoder,
    batch: &[Vec<f64>],
    index: usize,
    eps: f64,
) -> Option<f64> {
    let base = model.parameter(index);
    let mut plus = model.clone();
    plus.set_parameter(index, base + eps);
    let mut minus = model.clone();
    minus.set_parameter(index, base - eps);
    let pattern = rectifier_pattern(model, batch);
    if rectifier_pattern(&plus, batch) != pattern || rectifier_pattern(&minus, batch) != pattern {
        return None;
    }
    Some((reference_loss(&plus, batch) - reference_loss(&minus, batch)) / (2.0 * eps))
}

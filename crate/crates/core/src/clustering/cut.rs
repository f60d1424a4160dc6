use serde::{Deserialize, Serialize};

use super::{ClusterError, Dendrogram};

/// A flat partition of the leaves into `k` labelled clusters.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterCut {
    pub k: usize,
    /// Label of each leaf, in `0..k`.
    pub labels: Vec<usize>,
}

impl ClusterCut {
    pub fn members(&self, label: usize) -> impl Iterator<Item = usize> + '_ {
        self.labels
            .iter()
            .enumerate()
            .filter(move |(_, &l)| l == label)
            .map(|(i, _)| i)
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &l in &self.labels {
            sizes[l] += 1;
        }
        sizes
    }
}

/// Labels that survive refinement: when a cluster splits, the larger child
/// keeps the parent's label (on equal sizes, the child holding the lowest
/// leaf index) and the other child takes the next unused label.
#[derive(Debug, Clone)]
pub struct StableLabels<'a> {
    tree: &'a Dendrogram,
    /// Label of every node that appears in some cut up to `max_k`.
    node_label: Vec<Option<usize>>,
    max_k: usize,
}

impl<'a> StableLabels<'a> {
    pub fn new(tree: &'a Dendrogram, max_k: usize) -> Result<Self, ClusterError> {
        let n = tree.leaves();
        if max_k == 0 || max_k > n {
            return Err(ClusterError::InvalidK { k: max_k, n });
        }
        let mut min_leaf: Vec<usize> = (0..2 * n - 1).collect();
        for (step, m) in tree.merges().iter().enumerate() {
            min_leaf[n + step] = min_leaf[m.left].min(min_leaf[m.right]);
        }
        let mut node_label = vec![None; 2 * n - 1];
        node_label[2 * n - 2] = Some(0);
        // Going from k to k + 1 clusters undoes merge n - 1 - k.
        for k in 1..max_k {
            let step = n - 1 - k;
            let m = tree.merges()[step];
            let parent = node_label[n + step].expect("split node is labelled");
            let key = |c: usize| (std::cmp::Reverse(tree.node_size(c)), min_leaf[c]);
            let (keeper, other) = if key(m.left) <= key(m.right) {
                (m.left, m.right)
            } else {
                (m.right, m.left)
            };
            node_label[keeper] = Some(parent);
            node_label[other] = Some(k);
        }
        Ok(StableLabels {
            tree,
            node_label,
            max_k,
        })
    }

    pub fn cut(&self, k: usize) -> Result<ClusterCut, ClusterError> {
        let n = self.tree.leaves();
        if k == 0 || k > self.max_k {
            return Err(ClusterError::InvalidK {
                k,
                n: self.max_k.min(n),
            });
        }
        // Nodes at or above this id are undone at level k.
        let undone_from = n + (n - k);
        let mut labels = vec![usize::MAX; n];
        let mut stack = vec![(2 * n - 2, None::<usize>)];
        while let Some((node, label)) = stack.pop() {
            let label = if node >= undone_from {
                None
            } else {
                label.or(self.node_label[node])
            };
            if node < n {
                labels[node] = label.expect("every leaf sits below a frontier node");
                continue;
            }
            let m = self.tree.merges()[node - n];
            stack.push((m.left, label));
            stack.push((m.right, label));
        }
        Ok(ClusterCut { k, labels })
    }
}

/// Flat cut with `k` clusters and stable labels.
pub fn cut(tree: &Dendrogram, k: usize) -> Result<ClusterCut, ClusterError> {
    StableLabels::new(tree, k)?.cut(k)
}

/// Cuts for every requested `k`, labelled consistently across levels.
pub fn cuts(tree: &Dendrogram, ks: &[usize]) -> Result<Vec<ClusterCut>, ClusterError> {
    let Some(&max_k) = ks.iter().max() else {
        return Ok(Vec::new());
    };
    let labels = StableLabels::new(tree, max_k)?;
    ks.iter().map(|&k| labels.cut(k)).collect()
}

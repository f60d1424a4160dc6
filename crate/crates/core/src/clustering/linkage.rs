use std::cmp::Ordering;

use super::distance::{cosine_distance, squared_euclidean};
use super::{ClusterError, Dendrogram, Linkage, LinkageConfig, Merge, Metric};

/// Condensed symmetric matrix over `n` slots.
struct Condensed {
    n: usize,
    data: Vec<f64>,
}

impl Condensed {
    fn index(&self, i: usize, j: usize) -> usize {
        let (i, j) = if i < j { (i, j) } else { (j, i) };
        i * (2 * self.n - i - 1) / 2 + (j - i - 1)
    }

    fn get(&self, i: usize, j: usize) -> f64 {
        self.data[self.index(i, j)]
    }

    fn set(&mut self, i: usize, j: usize, v: f64) {
        let k = self.index(i, j);
        self.data[k] = v;
    }
}

/// Candidate merge ordered by distance, then by the smaller node id, then
/// the larger one.
#[derive(Clone, Copy, Debug)]
struct Candidate {
    dist: f64,
    lo: usize,
    hi: usize,
    other: usize,
}

impl Candidate {
    fn cmp_key(&self, other: &Candidate) -> Ordering {
        self.dist
            .total_cmp(&other.dist)
            .then(self.lo.cmp(&other.lo))
            .then(self.hi.cmp(&other.hi))
    }
}

/// Greedy agglomeration: each step merges the closest pair of clusters,
/// ties going to the lexicographically smallest `(left, right)` node ids.
///
/// Distances are updated with the Lance-Williams recurrence. Ward keeps
/// squared euclidean distances internally and reports their square root;
/// average linkage uses the size-weighted mean of pairwise distances.
pub fn agglomerate(points: &[Vec<f64>], config: LinkageConfig) -> Result<Dendrogram, ClusterError> {
    let config = LinkageConfig::new(config.linkage, config.metric)?;
    let n = points.len();
    if n < 2 {
        return Err(ClusterError::TooFewPoints(n));
    }
    let dim = points[0].len();
    for p in points {
        if p.len() != dim {
            return Err(ClusterError::LengthMismatch(dim, p.len()));
        }
        if !p.iter().all(|v| v.is_finite()) {
            return Err(ClusterError::NonFiniteInput);
        }
    }

    let mut dist = Condensed {
        n,
        data: Vec::with_capacity(n * (n - 1) / 2),
    };
    for i in 0..n {
        for j in i + 1..n {
            let d = match config.metric {
                Metric::Euclidean => squared_euclidean(&points[i], &points[j]),
                Metric::Cosine => cosine_distance(&points[i], &points[j])?,
            };
            dist.data.push(d);
        }
    }
    if config.metric == Metric::Euclidean && config.linkage == Linkage::Average {
        dist.data.iter_mut().for_each(|d| *d = d.sqrt());
    }

    let mut active = vec![true; n];
    let mut node = (0..n).collect::<Vec<_>>();
    let mut size = vec![1usize; n];
    let candidate = |dist: &Condensed, node: &[usize], i: usize, j: usize| Candidate {
        dist: dist.get(i, j),
        lo: node[i].min(node[j]),
        hi: node[i].max(node[j]),
        other: j,
    };
    let nearest = |dist: &Condensed, active: &[bool], node: &[usize], i: usize| {
        (0..n)
            .filter(|&j| j != i && active[j])
            .map(|j| candidate(dist, node, i, j))
            .min_by(Candidate::cmp_key)
    };
    let mut nn: Vec<Option<Candidate>> =
        (0..n).map(|i| nearest(&dist, &active, &node, i)).collect();

    let mut merges = Vec::with_capacity(n - 1);
    for step in 0..n - 1 {
        let (a, best) = (0..n)
            .filter(|&i| active[i])
            .filter_map(|i| nn[i].map(|c| (i, c)))
            .min_by(|x, y| x.1.cmp_key(&y.1))
            .expect("at least two active clusters");
        let b = best.other;
        let (keep, gone) = (a.min(b), a.max(b));
        let (na, nb) = (size[keep], size[gone]);
        let d_ab = dist.get(keep, gone);
        let height = match config.linkage {
            Linkage::Ward => d_ab.max(0.0).sqrt(),
            Linkage::Average => d_ab,
        };
        merges.push(Merge {
            step,
            left: best.lo,
            right: best.hi,
            height,
            size: na + nb,
        });

        active[gone] = false;
        nn[gone] = None;
        node[keep] = n + step;
        size[keep] = na + nb;
        for k in (0..n).filter(|&k| active[k] && k != keep) {
            let (d_ka, d_kb) = (dist.get(k, keep), dist.get(k, gone));
            let nk = size[k] as f64;
            let (na, nb) = (na as f64, nb as f64);
            let updated = match config.linkage {
                Linkage::Ward => {
                    (((na + nk) * d_ka + (nb + nk) * d_kb - nk * d_ab) / (na + nb + nk)).max(0.0)
                }
                Linkage::Average => (na * d_ka + nb * d_kb) / (na + nb),
            };
            dist.set(k, keep, updated);
        }
        nn[keep] = nearest(&dist, &active, &node, keep);
        for k in (0..n).filter(|&k| active[k] && k != keep) {
            let stale = nn[k].is_none_or(|c| c.other == keep || c.other == gone);
            if stale {
                nn[k] = nearest(&dist, &active, &node, k);
            } else {
                let fresh = candidate(&dist, &node, k, keep);
                if fresh.cmp_key(nn[k].as_ref().expect("checked")) == Ordering::Less {
                    nn[k] = Some(fresh);
                }
            }
        }
    }
    Ok(Dendrogram { n, merges })
}

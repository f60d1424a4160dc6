//! Agglomerative hierarchical clustering and nested flat cuts.

mod cut;
mod distance;
mod linkage;

pub use cut::{cut, cuts, ClusterCut, StableLabels};
pub use distance::{cosine_distance, euclidean_distance};
pub use linkage::agglomerate;

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ClusterError {
    #[error("vector lengths differ ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("cosine distance is undefined for a zero vector")]
    ZeroVector,
    #[error("clustering needs at least two points, got {0}")]
    TooFewPoints(usize),
    #[error("input contains non-finite values")]
    NonFiniteInput,
    #[error("ward linkage requires the euclidean metric")]
    WardRequiresEuclidean,
    #[error("k = {k} is outside 1..={n}")]
    InvalidK { k: usize, n: usize },
    #[error("merges.csv: {0}")]
    Format(String),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Linkage {
    #[default]
    Ward,
    Average,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    #[default]
    Euclidean,
    Cosine,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawLinkageConfig")]
pub struct LinkageConfig {
    pub linkage: Linkage,
    pub metric: Metric,
}

#[derive(Deserialize)]
struct RawLinkageConfig {
    #[serde(default)]
    linkage: Linkage,
    #[serde(default)]
    metric: Metric,
}

impl TryFrom<RawLinkageConfig> for LinkageConfig {
    type Error = ClusterError;

    fn try_from(raw: RawLinkageConfig) -> Result<Self, Self::Error> {
        LinkageConfig::new(raw.linkage, raw.metric)
    }
}

impl LinkageConfig {
    pub const WARD: LinkageConfig = LinkageConfig {
        linkage: Linkage::Ward,
        metric: Metric::Euclidean,
    };
    pub const AVERAGE_COSINE: LinkageConfig = LinkageConfig {
        linkage: Linkage::Average,
        metric: Metric::Cosine,
    };

    pub fn new(linkage: Linkage, metric: Metric) -> Result<Self, ClusterError> {
        if linkage == Linkage::Ward && metric != Metric::Euclidean {
            return Err(ClusterError::WardRequiresEuclidean);
        }
        Ok(LinkageConfig { linkage, metric })
    }
}

/// One merge. Leaves are nodes `0..n`; merge `step` creates node `n + step`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Merge {
    pub step: usize,
    pub left: usize,
    pub right: usize,
    pub height: f64,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dendrogram {
    n: usize,
    merges: Vec<Merge>,
}

impl Dendrogram {
    /// Checks that `merges` form a complete binary tree over `n` leaves.
    pub fn from_merges(n: usize, merges: Vec<Merge>) -> Result<Self, ClusterError> {
        let bad = |m: String| Err(ClusterError::Format(m));
        if n < 2 || merges.len() != n - 1 {
            return bad(format!("{} merges cannot join {n} leaves", merges.len()));
        }
        let mut used = vec![false; 2 * n - 1];
        let mut sizes = vec![1usize; 2 * n - 1];
        for (step, m) in merges.iter().enumerate() {
            let node = n + step;
            if m.step != step || m.left >= node || m.right >= node || m.left == m.right {
                return bad(format!("merge {step} references invalid nodes"));
            }
            if used[m.left] || used[m.right] {
                return bad(format!("merge {step} reuses a node"));
            }
            used[m.left] = true;
            used[m.right] = true;
            sizes[node] = sizes[m.left] + sizes[m.right];
            if sizes[node] != m.size {
                return bad(format!(
                    "merge {step} has size {} but joins {}",
                    m.size, sizes[node]
                ));
            }
        }
        Ok(Dendrogram { n, merges })
    }

    pub fn leaves(&self) -> usize {
        self.n
    }

    pub fn merges(&self) -> &[Merge] {
        &self.merges
    }

    pub fn node_size(&self, node: usize) -> usize {
        if node < self.n {
            1
        } else {
            self.merges[node - self.n].size
        }
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> csv::Result<()> {
        let mut out = csv::Writer::from_writer(writer);
        out.write_record(["step", "left", "right", "height", "size"])?;
        for m in &self.merges {
            out.write_record([
                m.step.to_string(),
                m.left.to_string(),
                m.right.to_string(),
                m.height.to_string(),
                m.size.to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self, ClusterError> {
        let mut input = csv::Reader::from_reader(reader);
        let merges = input
            .deserialize::<Merge>()
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| ClusterError::Format(e.to_string()))?;
        Dendrogram::from_merges(merges.len() + 1, merges)
    }
}

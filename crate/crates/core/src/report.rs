//! Analysis artifacts over cluster cuts: per-city shares, hourly boxplot
//! statistics, aggregated scatter rows, typology levels and map exports.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::clustering::{ClusterCut, Dendrogram};
use crate::features::{AggregatedFeatures, RegionFeatureVector};
use crate::normalize::Block;
use crate::percent::Percent;
use crate::region::RegionKey;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("city `{0}` has no regions")]
    EmptyCity(String),
    #[error("label {label} does not exist in the {k}-cluster cut")]
    UnknownLabel { k: usize, label: usize },
    #[error("no cut with k = {0}")]
    MissingCut(usize),
    #[error("{what}: expected {expected} entries, got {actual}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("cell geometry unavailable for region {0}")]
    GeometryFailure(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn expect_len(what: &'static str, expected: usize, actual: usize) -> Result<(), ReportError> {
    if expected == actual {
        Ok(())
    } else {
        Err(ReportError::LengthMismatch {
            what,
            expected,
            actual,
        })
    }
}

/// Percentage of each city's regions falling in each label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ShareTable {
    pub k: usize,
    pub cities: Vec<String>,
    /// `counts[label][city]`
    pub counts: Vec<Vec<u64>>,
    /// `shares[label][city]`, rounded half-up to two decimals.
    pub shares: Vec<Vec<Percent>>,
}

impl ShareTable {
    pub fn share(&self, label: usize, city: &str) -> Option<Percent> {
        let c = self.cities.iter().position(|x| x == city)?;
        self.shares.get(label).map(|row| row[c])
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), ReportError> {
        let mut out = csv::Writer::from_writer(writer);
        let mut header = vec!["label".to_owned()];
        header.extend(self.cities.iter().cloned());
        out.write_record(&header)?;
        for (label, row) in self.shares.iter().enumerate() {
            let mut record = vec![label.to_string()];
            record.extend(row.iter().map(Percent::to_string));
            out.write_record(&record)?;
        }
        out.flush()?;
        Ok(())
    }
}

/// `cities` lists the columns; `region_cities[i]` is the city of leaf `i`.
pub fn share_table<S: AsRef<str>>(
    cut: &ClusterCut,
    region_cities: &[S],
    cities: &[String],
) -> Result<ShareTable, ReportError> {
    expect_len("region cities", cut.labels.len(), region_cities.len())?;
    let column: BTreeMap<&str, usize> = cities
        .iter()
        .enumerate()
        .map(|(i, c)| (c.as_str(), i))
        .collect();
    let mut counts = vec![vec![0u64; cities.len()]; cut.k];
    let mut totals = vec![0u64; cities.len()];
    for (&label, city) in cut.labels.iter().zip(region_cities) {
        if let Some(&c) = column.get(city.as_ref()) {
            counts[label][c] += 1;
            totals[c] += 1;
        }
    }
    if let Some(i) = totals.iter().position(|&t| t == 0) {
        return Err(ReportError::EmptyCity(cities[i].clone()));
    }
    let shares = counts
        .iter()
        .map(|row| {
            row.iter()
                .zip(&totals)
                .map(|(&n, &t)| Percent::of(n, t).expect("non-zero total"))
                .collect()
        })
        .collect();
    Ok(ShareTable {
        k: cut.k,
        cities: cities.to_vec(),
        counts,
        shares,
    })
}

/// Tukey boxplot summary with linearly interpolated quartiles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoxStats {
    pub n: usize,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    pub whisker_low: f64,
    pub whisker_high: f64,
    pub outliers: usize,
}

fn quantile(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

impl BoxStats {
    /// `None` for an empty sample.
    pub fn of(values: &[f64]) -> Option<BoxStats> {
        if values.is_empty() {
            return None;
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let (q1, median, q3) = (
            quantile(&sorted, 0.25),
            quantile(&sorted, 0.5),
            quantile(&sorted, 0.75),
        );
        let iqr = q3 - q1;
        let (lo_fence, hi_fence) = (q1 - 1.5 * iqr, q3 + 1.5 * iqr);
        let inside = || {
            sorted
                .iter()
                .copied()
                .filter(|&v| v >= lo_fence && v <= hi_fence)
        };
        Some(BoxStats {
            n: sorted.len(),
            min: sorted[0],
            q1,
            median,
            q3,
            max: sorted[sorted.len() - 1],
            // Quartiles always lie inside the fences, so both exist.
            whisker_low: inside().next().expect("q1 inside fences"),
            whisker_high: inside().next_back().expect("q3 inside fences"),
            outliers: sorted
                .iter()
                .filter(|&&v| v < lo_fence || v > hi_fence)
                .count(),
        })
    }
}

/// Hourly boxplots of one cluster's raw features.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HourProfileStats {
    pub k: usize,
    pub label: usize,
    pub hours: Vec<u32>,
    pub trips: Vec<BoxStats>,
    pub directions: Vec<BoxStats>,
}

impl HourProfileStats {
    pub fn family(&self, block: Block) -> &[BoxStats] {
        match block {
            Block::Trips => &self.trips,
            Block::Directions => &self.directions,
        }
    }
}

pub fn hour_profile(
    cut: &ClusterCut,
    raw: &[RegionFeatureVector],
    label: usize,
) -> Result<HourProfileStats, ReportError> {
    expect_len("raw features", cut.labels.len(), raw.len())?;
    let members: Vec<&RegionFeatureVector> = cut.members(label).map(|i| &raw[i]).collect();
    let Some(first) = members.first() else {
        return Err(ReportError::UnknownLabel { k: cut.k, label });
    };
    let window = first.window;
    let column = |pick: fn(&RegionFeatureVector) -> &Vec<u32>, slot: usize| {
        let values: Vec<f64> = members.iter().map(|fv| f64::from(pick(fv)[slot])).collect();
        BoxStats::of(&values).expect("cluster has members")
    };
    Ok(HourProfileStats {
        k: cut.k,
        label,
        hours: window.hours().collect(),
        trips: (0..window.len())
            .map(|s| column(|fv| &fv.trips, s))
            .collect(),
        directions: (0..window.len())
            .map(|s| column(|fv| &fv.directions, s))
            .collect(),
    })
}

pub fn write_profiles_csv<W: Write>(
    writer: W,
    profiles: &[HourProfileStats],
) -> Result<(), ReportError> {
    let mut out = csv::Writer::from_writer(writer);
    out.write_record([
        "label",
        "family",
        "hour",
        "n",
        "min",
        "q1",
        "median",
        "q3",
        "max",
        "whisker_low",
        "whisker_high",
        "outliers",
    ])?;
    for p in profiles {
        for block in [Block::Trips, Block::Directions] {
            for (hour, s) in p.hours.iter().zip(p.family(block)) {
                out.write_record([
                    p.label.to_string(),
                    block.to_string(),
                    hour.to_string(),
                    s.n.to_string(),
                    s.min.to_string(),
                    s.q1.to_string(),
                    s.median.to_string(),
                    s.q3.to_string(),
                    s.max.to_string(),
                    s.whisker_low.to_string(),
                    s.whisker_high.to_string(),
                    s.outliers.to_string(),
                ])?;
            }
        }
    }
    out.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ScatterRow {
    pub key: RegionKey,
    pub sum_trips: u64,
    pub directions_whole_day: u64,
    /// One label per cut, in the order the cuts were given.
    pub labels: Vec<usize>,
}

pub fn scatter_data(
    cuts: &[ClusterCut],
    aggregates: &[AggregatedFeatures],
) -> Result<Vec<ScatterRow>, ReportError> {
    for c in cuts {
        expect_len("aggregates", c.labels.len(), aggregates.len())?;
    }
    Ok(aggregates
        .iter()
        .enumerate()
        .map(|(i, a)| ScatterRow {
            key: RegionKey {
                city: a.city.clone(),
                region: a.region,
            },
            sum_trips: a.sum_trips,
            directions_whole_day: a.directions_whole_day,
            labels: cuts.iter().map(|c| c.labels[i]).collect(),
        })
        .collect())
}

pub fn write_scatter_csv<W: Write>(
    writer: W,
    ks: &[usize],
    rows: &[ScatterRow],
) -> Result<(), ReportError> {
    let mut out = csv::Writer::from_writer(writer);
    let mut header: Vec<String> = ["region_id", "city", "sum_trips", "directions_whole_day"]
        .map(str::to_owned)
        .to_vec();
    header.extend(ks.iter().map(|k| format!("label_k{k}")));
    out.write_record(&header)?;
    for r in rows {
        let mut record = vec![
            r.key.region.to_string(),
            r.key.city.clone(),
            r.sum_trips.to_string(),
            r.directions_whole_day.to_string(),
        ];
        record.extend(r.labels.iter().map(usize::to_string));
        out.write_record(&record)?;
    }
    out.flush()?;
    Ok(())
}

/// Analyst-supplied names: `k -> label -> name`.
pub type TypeNames = BTreeMap<usize, BTreeMap<usize, String>>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TypologyLevel {
    /// 1-based level number.
    pub level: usize,
    pub k: usize,
    pub names: BTreeMap<usize, String>,
    /// Label at the previous level containing each label; empty on level 1.
    pub parents: BTreeMap<usize, usize>,
    pub sizes: BTreeMap<usize, usize>,
}

/// Levels are taken in ascending `k` regardless of the order given.
pub fn typology_levels(
    cuts: &[ClusterCut],
    level_ks: &[usize],
    names: &TypeNames,
) -> Result<Vec<TypologyLevel>, ReportError> {
    let ks: BTreeSet<usize> = level_ks.iter().copied().collect();
    let mut levels = Vec::with_capacity(ks.len());
    let mut previous: Option<&ClusterCut> = None;
    for (i, &k) in ks.iter().enumerate() {
        let cut = cuts
            .iter()
            .find(|c| c.k == k)
            .ok_or(ReportError::MissingCut(k))?;
        let mut parents = BTreeMap::new();
        if let Some(prev) = previous {
            for (&label, &parent) in cut.labels.iter().zip(&prev.labels) {
                parents.entry(label).or_insert(parent);
            }
        }
        let level_names = names.get(&k).cloned().unwrap_or_default();
        levels.push(TypologyLevel {
            level: i + 1,
            k,
            names: (0..k)
                .map(|l| (l, level_names.get(&l).cloned().unwrap_or_default()))
                .collect(),
            parents,
            sizes: cut.sizes().into_iter().enumerate().collect(),
        });
        previous = Some(cut);
    }
    Ok(levels)
}

/// One hexagon feature per region with `region_id`, `city` and `label`.
pub fn export_geojson(cut: &ClusterCut, regions: &[RegionKey]) -> Result<Value, ReportError> {
    expect_len("regions", cut.labels.len(), regions.len())?;
    let features: Vec<Value> = regions
        .iter()
        .zip(&cut.labels)
        .map(|(key, label)| {
            let ring = key.region.boundary_ring();
            if ring.len() < 4 {
                return Err(ReportError::GeometryFailure(key.region.to_string()));
            }
            Ok(json!({
                "type": "Feature",
                "geometry": {"type": "Polygon", "coordinates": [ring]},
                "properties": {
                    "region_id": key.region.to_string(),
                    "city": key.city,
                    "label": label,
                },
            }))
        })
        .collect::<Result<_, _>>()?;
    Ok(json!({"type": "FeatureCollection", "features": features}))
}

/// The merge table plus a running sum of heights.
pub fn export_dendrogram<W: Write>(writer: W, tree: &Dendrogram) -> Result<(), ReportError> {
    let mut out = csv::Writer::from_writer(writer);
    out.write_record([
        "step",
        "left",
        "right",
        "height",
        "size",
        "cumulative_height",
    ])?;
    let mut cumulative = 0.0;
    for m in tree.merges() {
        cumulative += m.height;
        out.write_record([
            m.step.to_string(),
            m.left.to_string(),
            m.right.to_string(),
            m.height.to_string(),
            m.size.to_string(),
            cumulative.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

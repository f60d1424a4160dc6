//! Per-region quantity (trips) and variety (distinct headsigns) features.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gtfs::{DepartureEvent, HourWindow};
use crate::region::{CellId, RegionSet};

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("stop `{stop_id}` of city `{city}` is not assigned to any region")]
    UnassignedStop { city: String, stop_id: String },
    #[error("features.csv: {0}")]
    Format(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Hourly trips and directions of one micro-region, for every hour of the
/// window. `trips[i]` and `directions[i]` refer to `window.first() + i`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegionFeatureVector {
    pub region: CellId,
    pub city: String,
    pub window: HourWindow,
    pub trips: Vec<u32>,
    pub directions: Vec<u32>,
}

impl RegionFeatureVector {
    pub fn zeros(region: CellId, city: &str, window: HourWindow) -> Self {
        RegionFeatureVector {
            region,
            city: city.to_owned(),
            window,
            trips: vec![0; window.len()],
            directions: vec![0; window.len()],
        }
    }

    pub fn trips_at(&self, hour: u32) -> Option<u32> {
        self.window.offset(hour).map(|i| self.trips[i])
    }

    pub fn directions_at(&self, hour: u32) -> Option<u32> {
        self.window.offset(hour).map(|i| self.directions[i])
    }

    /// Trips block followed by the directions block.
    pub fn values(&self) -> Vec<f64> {
        self.trips
            .iter()
            .chain(&self.directions)
            .map(|&v| f64::from(v))
            .collect()
    }

    pub fn len(&self) -> usize {
        self.trips.len() + self.directions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Day-level summary of a region.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AggregatedFeatures {
    pub region: CellId,
    pub city: String,
    pub sum_trips: u64,
    /// Distinct headsigns over the whole window (not a sum of hourly counts).
    pub directions_whole_day: u64,
}

/// Builds one vector per region of `city`.
///
/// A trip calling at several stops of the same region counts once per stop.
pub fn build_features(
    city: &str,
    events: &[DepartureEvent],
    regions: &RegionSet,
    window: HourWindow,
) -> Result<Vec<RegionFeatureVector>, FeatureError> {
    let mut vectors: BTreeMap<CellId, RegionFeatureVector> = regions
        .cells(city)
        .map(|cell| (cell, RegionFeatureVector::zeros(cell, city, window)))
        .collect();
    let mut headsigns: BTreeMap<(CellId, usize), BTreeSet<&str>> = BTreeMap::new();
    for event in events {
        let cell = regions.cell_of_stop(city, &event.stop_id).ok_or_else(|| {
            FeatureError::UnassignedStop {
                city: city.to_owned(),
                stop_id: event.stop_id.clone(),
            }
        })?;
        let Some(slot) = window.offset(event.hour_bucket) else {
            continue;
        };
        vectors.get_mut(&cell).expect("cell from region set").trips[slot] += 1;
        headsigns
            .entry((cell, slot))
            .or_default()
            .insert(event.headsign.trim());
    }
    for ((cell, slot), set) in headsigns {
        vectors
            .get_mut(&cell)
            .expect("cell from region set")
            .directions[slot] = set.len() as u32;
    }
    Ok(vectors.into_values().collect())
}

/// Day-level aggregate of one region from its vector and its own events.
pub fn aggregate<'a>(
    features: &RegionFeatureVector,
    events: impl IntoIterator<Item = &'a DepartureEvent>,
) -> AggregatedFeatures {
    let heads: BTreeSet<&str> = events
        .into_iter()
        .filter(|e| features.window.contains(e.hour_bucket))
        .map(|e| e.headsign.trim())
        .collect();
    AggregatedFeatures {
        region: features.region,
        city: features.city.clone(),
        sum_trips: features.trips.iter().map(|&t| u64::from(t)).sum(),
        directions_whole_day: heads.len() as u64,
    }
}

/// [`aggregate`] for every vector of `city`, routing events by region.
pub fn aggregate_all(
    city: &str,
    features: &[RegionFeatureVector],
    events: &[DepartureEvent],
    regions: &RegionSet,
) -> Vec<AggregatedFeatures> {
    let mut by_cell: BTreeMap<CellId, Vec<&DepartureEvent>> = BTreeMap::new();
    for event in events {
        if let Some(cell) = regions.cell_of_stop(city, &event.stop_id) {
            by_cell.entry(cell).or_default().push(event);
        }
    }
    features
        .iter()
        .map(|fv| aggregate(fv, by_cell.get(&fv.region).into_iter().flatten().copied()))
        .collect()
}

pub fn feature_header(window: HourWindow) -> Vec<String> {
    let mut header = vec!["region_id".to_owned(), "city".to_owned()];
    header.extend(window.hours().map(|h| format!("trips_at_{h}")));
    header.extend(window.hours().map(|h| format!("directions_at_{h}")));
    header
}

pub fn write_features_csv<W: Write>(
    writer: W,
    window: HourWindow,
    rows: &[RegionFeatureVector],
) -> Result<(), FeatureError> {
    let mut out = csv::Writer::from_writer(writer);
    out.write_record(feature_header(window))?;
    for fv in rows {
        let mut record = vec![fv.region.to_string(), fv.city.clone()];
        record.extend(fv.trips.iter().chain(&fv.directions).map(u32::to_string));
        out.write_record(record)?;
    }
    out.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn read_features_csv<R: Read>(reader: R) -> Result<Vec<RegionFeatureVector>, FeatureError> {
    let mut input = csv::Reader::from_reader(reader);
    let header: Vec<String> = input.headers()?.iter().map(str::to_owned).collect();
    let hours: Vec<u32> = header
        .iter()
        .filter_map(|h| h.strip_prefix("trips_at_"))
        .map(|h| {
            h.parse()
                .map_err(|_| FeatureError::Format(format!("bad column trips_at_{h}")))
        })
        .collect::<Result<_, _>>()?;
    let (Some(&first), Some(&last)) = (hours.first(), hours.last()) else {
        return Err(FeatureError::Format("no trips_at_* columns".into()));
    };
    let window = HourWindow::new(first, last).map_err(|e| FeatureError::Format(e.to_string()))?;
    if header != feature_header(window) {
        return Err(FeatureError::Format("unexpected header".into()));
    }
    let n = window.len();
    let mut rows = Vec::new();
    for record in input.records() {
        let record = record?;
        let region = record[0]
            .parse()
            .map_err(|e: crate::region::RegionError| FeatureError::Format(e.to_string()))?;
        let values: Vec<u32> = record
            .iter()
            .skip(2)
            .map(|v| {
                v.parse()
                    .map_err(|_| FeatureError::Format(format!("bad count `{v}`")))
            })
            .collect::<Result<_, _>>()?;
        rows.push(RegionFeatureVector {
            region,
            city: record[1].to_owned(),
            window,
            trips: values[..n].to_vec(),
            directions: values[n..].to_vec(),
        });
    }
    Ok(rows)
}

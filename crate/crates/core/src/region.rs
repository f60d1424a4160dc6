//! H3 micro-regions: stop assignment and boundary coverage statistics.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use geo::{Coord, LineString, MultiPolygon, Polygon};
use h3o::geom::{ContainmentMode, TilerBuilder};
use h3o::{CellIndex, LatLng, Resolution};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::Value;
use thiserror::Error;

use crate::gtfs::FeedBundle;
use crate::percent::Percent;

/// Resolution used throughout the pipeline (cells roughly 900 m across).
pub const DEFAULT_RESOLUTION: u8 = 8;

#[derive(Debug, Error, PartialEq)]
pub enum RegionError {
    #[error("invalid coordinate ({lat}, {lng}){}", context.as_ref().map(|s| format!(" for stop `{s}`")).unwrap_or_default())]
    InvalidCoordinate {
        lat: f64,
        lng: f64,
        context: Option<String>,
    },
    #[error("invalid H3 resolution {0}")]
    InvalidResolution(u8),
    #[error("invalid boundary: {0}")]
    InvalidBoundary(String),
    #[error("invalid H3 cell index `{0}`")]
    InvalidCell(String),
}

/// An H3 cell. Rendered as the lowercase hexadecimal index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CellId(CellIndex);

impl CellId {
    pub fn index(self) -> CellIndex {
        self.0
    }

    pub fn resolution(self) -> u8 {
        u8::from(self.0.resolution())
    }

    pub fn parent(self, resolution: u8) -> Option<CellId> {
        let res = Resolution::try_from(resolution).ok()?;
        self.0.parent(res).map(CellId)
    }

    /// Closed hexagon (or pentagon) ring as `[lng, lat]` pairs.
    pub fn boundary_ring(self) -> Vec<[f64; 2]> {
        let boundary = self.0.boundary();
        let mut ring: Vec<[f64; 2]> = boundary.iter().map(|c| [c.lng(), c.lat()]).collect();
        if let Some(&first) = ring.first() {
            ring.push(first);
        }
        ring
    }

    pub fn center(self) -> (f64, f64) {
        let c = LatLng::from(self.0);
        (c.lat(), c.lng())
    }
}

impl From<CellIndex> for CellId {
    fn from(index: CellIndex) -> Self {
        CellId(index)
    }
}

impl fmt::Display for CellId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:x}", self.0)
    }
}

impl FromStr for CellId {
    type Err = RegionError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let raw =
            u64::from_str_radix(s.trim(), 16).map_err(|_| RegionError::InvalidCell(s.into()))?;
        CellIndex::try_from(raw)
            .map(CellId)
            .map_err(|_| RegionError::InvalidCell(s.into()))
    }
}

impl Serialize for CellId {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for CellId {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

fn resolution(res: u8) -> Result<Resolution, RegionError> {
    Resolution::try_from(res).map_err(|_| RegionError::InvalidResolution(res))
}

pub fn cell_of(lat: f64, lng: f64, res: u8) -> Result<CellId, RegionError> {
    let res = resolution(res)?;
    let invalid = || RegionError::InvalidCoordinate {
        lat,
        lng,
        context: None,
    };
    if !(-90.0..=90.0).contains(&lat) || !(-180.0..=180.0).contains(&lng) {
        return Err(invalid());
    }
    let point = LatLng::new(lat, lng).map_err(|_| invalid())?;
    Ok(CellId(point.to_cell(res)))
}

/// A micro-region of a particular city.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RegionKey {
    pub city: String,
    pub region: CellId,
}

/// Micro-regions of one or more cities: every cell holds at least one stop.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RegionSet {
    cities: BTreeMap<String, BTreeMap<CellId, BTreeSet<String>>>,
    stop_index: BTreeMap<(String, String), CellId>,
}

impl RegionSet {
    pub fn insert(&mut self, city: &str, stop_id: &str, cell: CellId) {
        self.cities
            .entry(city.to_owned())
            .or_default()
            .entry(cell)
            .or_default()
            .insert(stop_id.to_owned());
        if let Some(old) = self
            .stop_index
            .insert((city.to_owned(), stop_id.to_owned()), cell)
        {
            if old != cell {
                let stops = self.cities.get_mut(city).expect("city just inserted");
                if let Some(set) = stops.get_mut(&old) {
                    set.remove(stop_id);
                    if set.is_empty() {
                        stops.remove(&old);
                    }
                }
            }
        }
    }

    pub fn extend(&mut self, other: RegionSet) {
        for ((city, stop), cell) in other.stop_index {
            self.insert(&city, &stop, cell);
        }
    }

    pub fn cities(&self) -> impl Iterator<Item = &str> {
        self.cities.keys().map(String::as_str)
    }

    pub fn cells(&self, city: &str) -> impl Iterator<Item = CellId> + '_ {
        self.cities
            .get(city)
            .into_iter()
            .flat_map(|m| m.keys().copied())
    }

    pub fn stops_in(&self, city: &str, cell: CellId) -> Option<&BTreeSet<String>> {
        self.cities.get(city)?.get(&cell)
    }

    pub fn cell_of_stop(&self, city: &str, stop_id: &str) -> Option<CellId> {
        self.stop_index
            .get(&(city.to_owned(), stop_id.to_owned()))
            .copied()
    }

    pub fn region_count(&self) -> usize {
        self.cities.values().map(BTreeMap::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.region_count() == 0
    }

    /// `(city, cell)` pairs in sorted order.
    pub fn regions(&self) -> impl Iterator<Item = (&str, CellId)> {
        self.cities
            .iter()
            .flat_map(|(city, cells)| cells.keys().map(move |c| (city.as_str(), *c)))
    }
}

/// Maps every platform/stop record of `feed` to its cell.
pub fn assign_stops(feed: &FeedBundle, res: u8) -> Result<RegionSet, RegionError> {
    let mut set = RegionSet::default();
    for stop in feed.platform_stops() {
        let cell = cell_of(stop.lat, stop.lng, res).map_err(|e| match e {
            RegionError::InvalidCoordinate { lat, lng, .. } => RegionError::InvalidCoordinate {
                lat,
                lng,
                context: Some(stop.stop_id.clone()),
            },
            other => other,
        })?;
        set.insert(&feed.city_tag, &stop.stop_id, cell);
    }
    Ok(set)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CoverageReport {
    pub resolution: u8,
    pub total_cells: u64,
    pub cells_with_stops: u64,
    pub empty_cells: u64,
    pub empty_percentage: Percent,
}

impl CoverageReport {
    pub fn from_counts(resolution: u8, total_cells: u64, empty_cells: u64) -> Option<Self> {
        if empty_cells > total_cells {
            return None;
        }
        Some(CoverageReport {
            resolution,
            total_cells,
            cells_with_stops: total_cells - empty_cells,
            empty_cells,
            empty_percentage: Percent::of(empty_cells, total_cells)?,
        })
    }
}

impl fmt::Display for CoverageReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "resolution {}: {} of {} cells without a stop ({}%)",
            self.resolution, self.empty_cells, self.total_cells, self.empty_percentage
        )
    }
}

/// Counts the cells covering `boundary` (centroid containment) and how
/// many of them hold no stop.
pub fn coverage_stats(
    feed: &FeedBundle,
    boundary: &Value,
    res: u8,
) -> Result<CoverageReport, RegionError> {
    let covering = covering_cells(boundary, res)?;
    let occupied: BTreeSet<CellIndex> = assign_stops(feed, res)?
        .regions()
        .map(|(_, c)| c.index())
        .collect();
    coverage_of(&covering, &occupied, res)
}

/// [`coverage_stats`] for stops that were already assigned to cells.
pub fn coverage_of_regions(
    regions: &RegionSet,
    boundary: &Value,
    res: u8,
) -> Result<CoverageReport, RegionError> {
    let covering = covering_cells(boundary, res)?;
    let occupied: BTreeSet<CellIndex> = regions.regions().map(|(_, c)| c.index()).collect();
    coverage_of(&covering, &occupied, res)
}

fn coverage_of(
    covering: &BTreeSet<CellIndex>,
    occupied: &BTreeSet<CellIndex>,
    res: u8,
) -> Result<CoverageReport, RegionError> {
    let total = covering.len() as u64;
    let with_stops = covering.intersection(occupied).count() as u64;
    Ok(CoverageReport::from_counts(res, total, total - with_stops).expect("non-empty covering"))
}

fn covering_cells(boundary: &Value, res: u8) -> Result<BTreeSet<CellIndex>, RegionError> {
    let h3_res = resolution(res)?;
    let polygons = parse_boundary(boundary)?;
    let mut tiler = TilerBuilder::new(h3_res)
        .containment_mode(ContainmentMode::ContainsCentroid)
        .build();
    for polygon in polygons {
        tiler
            .add(polygon)
            .map_err(|e| RegionError::InvalidBoundary(e.to_string()))?;
    }
    let covering: BTreeSet<CellIndex> = tiler.into_coverage().collect();
    if covering.is_empty() {
        return Err(RegionError::InvalidBoundary(
            "boundary covers no cell at this resolution".into(),
        ));
    }
    Ok(covering)
}

/// Accepts a GeoJSON Polygon, MultiPolygon, Feature or FeatureCollection.
pub fn parse_boundary(value: &Value) -> Result<MultiPolygon<f64>, RegionError> {
    let bad = |m: &str| RegionError::InvalidBoundary(m.to_owned());
    let kind = value
        .get("type")
        .and_then(Value::as_str)
        .ok_or_else(|| bad("missing `type`"))?;
    let mut out = Vec::new();
    match kind {
        "FeatureCollection" => {
            let features = value
                .get("features")
                .and_then(Value::as_array)
                .ok_or_else(|| bad("FeatureCollection without `features`"))?;
            for f in features {
                out.extend(parse_boundary(f)?);
            }
        }
        "Feature" => {
            let geometry = value
                .get("geometry")
                .ok_or_else(|| bad("Feature without geometry"))?;
            out.extend(parse_boundary(geometry)?);
        }
        "Polygon" => out.push(parse_polygon(coordinates(value)?)?),
        "MultiPolygon" => {
            let parts = coordinates(value)?
                .as_array()
                .ok_or_else(|| bad("MultiPolygon coordinates must be an array"))?;
            for part in parts {
                out.push(parse_polygon(part)?);
            }
        }
        other => return Err(bad(&format!("unsupported geometry type `{other}`"))),
    }
    if out.is_empty() {
        return Err(bad("no polygon found"));
    }
    Ok(MultiPolygon::new(out))
}

fn coordinates(value: &Value) -> Result<&Value, RegionError> {
    value
        .get("coordinates")
        .ok_or_else(|| RegionError::InvalidBoundary("geometry without coordinates".into()))
}

fn parse_polygon(rings: &Value) -> Result<Polygon<f64>, RegionError> {
    let bad = |m: &str| RegionError::InvalidBoundary(m.to_owned());
    let rings = rings
        .as_array()
        .ok_or_else(|| bad("polygon must be an array of rings"))?;
    let mut parsed = rings.iter().map(|ring| {
        let points = ring
            .as_array()
            .ok_or_else(|| bad("ring must be an array"))?;
        let coords = points
            .iter()
            .map(|p| match p.as_array().map(Vec::as_slice) {
                Some([x, y, ..]) => match (x.as_f64(), y.as_f64()) {
                    (Some(x), Some(y))
                        if (-180.0..=180.0).contains(&x) && (-90.0..=90.0).contains(&y) =>
                    {
                        Ok(Coord { x, y })
                    }
                    _ => Err(bad("position out of WGS84 range or not numeric")),
                },
                _ => Err(bad("position must be [lng, lat]")),
            })
            .collect::<Result<Vec<_>, _>>()?;
        if coords.len() < 4 {
            return Err(bad("ring needs at least four positions"));
        }
        Ok(LineString::new(coords))
    });
    let exterior = parsed
        .next()
        .ok_or_else(|| bad("polygon without exterior ring"))??;
    let interiors = parsed.collect::<Result<Vec<_>, _>>()?;
    Ok(Polygon::new(exterior, interiors))
}

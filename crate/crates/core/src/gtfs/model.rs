use std::collections::BTreeMap;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::calendar::ServiceCalendar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LocationType {
    PlatformOrStop,
    Station,
    Other,
}

impl LocationType {
    pub fn from_code(code: Option<u32>) -> Self {
        match code {
            None | Some(0) => LocationType::PlatformOrStop,
            Some(1) => LocationType::Station,
            Some(_) => LocationType::Other,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StopRecord {
    pub stop_id: String,
    pub name: String,
    pub lat: f64,
    pub lng: f64,
    pub location_type: LocationType,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RouteRecord {
    pub route_id: String,
    pub route_type: i32,
    pub short_name: String,
    pub long_name: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TripRecord {
    pub trip_id: String,
    pub route_id: String,
    pub service_id: String,
    pub headsign: Option<String>,
}

impl TripRecord {
    /// The headsign trimmed of surrounding whitespace, if non-empty.
    pub fn trimmed_headsign(&self) -> Option<&str> {
        self.headsign
            .as_deref()
            .map(str::trim)
            .filter(|h| !h.is_empty())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StopTimeRecord {
    pub trip_id: String,
    pub stop_id: String,
    pub stop_sequence: u32,
    pub departure_secs: u32,
    pub arrival_secs: Option<u32>,
}

/// One row of `frequencies.txt`: the trip repeats every `headway_secs`
/// starting at `start_secs` while the start stays before `end_secs`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrequencyRecord {
    pub trip_id: String,
    pub start_secs: u32,
    pub end_secs: u32,
    pub headway_secs: u32,
}

impl FrequencyRecord {
    pub fn trip_starts(&self) -> impl Iterator<Item = u32> + '_ {
        (self.start_secs..self.end_secs).step_by(self.headway_secs.max(1) as usize)
    }
}

/// A parsed and referentially consistent GTFS feed for one city.
///
/// Stop times are grouped per trip and sorted by strictly increasing
/// `stop_sequence`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeedBundle {
    pub city_tag: String,
    pub stops: BTreeMap<String, StopRecord>,
    pub routes: BTreeMap<String, RouteRecord>,
    pub trips: BTreeMap<String, TripRecord>,
    pub stop_times: BTreeMap<String, Vec<StopTimeRecord>>,
    pub frequencies: BTreeMap<String, Vec<FrequencyRecord>>,
    pub calendars: ServiceCalendar,
    pub validity_window: (NaiveDate, NaiveDate),
}

impl FeedBundle {
    pub fn stop_times_of(&self, trip_id: &str) -> &[StopTimeRecord] {
        self.stop_times.get(trip_id).map_or(&[], Vec::as_slice)
    }

    pub fn all_stop_times(&self) -> impl Iterator<Item = &StopTimeRecord> {
        self.stop_times.values().flatten()
    }

    pub fn platform_stops(&self) -> impl Iterator<Item = &StopRecord> {
        self.stops
            .values()
            .filter(|s| s.location_type == LocationType::PlatformOrStop)
    }

    pub fn contains_date(&self, date: NaiveDate) -> bool {
        self.validity_window.0 <= date && date <= self.validity_window.1
    }
}

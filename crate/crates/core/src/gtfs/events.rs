use std::collections::BTreeSet;

use chrono::{Datelike, NaiveDate, Weekday};
use serde::{Deserialize, Serialize};

use super::calendar::active_services;
use super::model::LocationType;
use super::{FeedBundle, GtfsError};

/// Inclusive range of service-day hours.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "[u32; 2]", into = "[u32; 2]")]
pub struct HourWindow {
    first: u32,
    last: u32,
}

impl HourWindow {
    pub const DAYTIME: HourWindow = HourWindow { first: 6, last: 22 };

    pub fn new(first: u32, last: u32) -> Result<Self, GtfsError> {
        if first > last || last > 23 {
            return Err(GtfsError::InvalidHours(first, last));
        }
        Ok(HourWindow { first, last })
    }

    pub fn first(&self) -> u32 {
        self.first
    }

    pub fn last(&self) -> u32 {
        self.last
    }

    pub fn len(&self) -> usize {
        (self.last - self.first + 1) as usize
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, hour: u32) -> bool {
        (self.first..=self.last).contains(&hour)
    }

    /// Position of `hour` inside the window.
    pub fn offset(&self, hour: u32) -> Option<usize> {
        self.contains(hour).then(|| (hour - self.first) as usize)
    }

    pub fn hours(&self) -> impl Iterator<Item = u32> {
        self.first..=self.last
    }
}

impl Default for HourWindow {
    fn default() -> Self {
        HourWindow::DAYTIME
    }
}

impl TryFrom<[u32; 2]> for HourWindow {
    type Error = String;

    fn try_from([first, last]: [u32; 2]) -> Result<Self, Self::Error> {
        HourWindow::new(first, last).map_err(|e| e.to_string())
    }
}

impl From<HourWindow> for [u32; 2] {
    fn from(w: HourWindow) -> Self {
        [w.first, w.last]
    }
}

/// One way of leaving a stop: a trip departing in a given hour.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepartureEvent {
    pub stop_id: String,
    pub lat: f64,
    pub lng: f64,
    pub hour_bucket: u32,
    /// Trimmed trip headsign; empty when the trip has none.
    pub headsign: String,
    pub trip_id: String,
}

/// Enumerates the departures of every trip active on `date`.
///
/// The final stop time of a trip is not a departure. Frequency-based trips
/// are expanded from their stop-time pattern. Times past 24:00:00 stay on
/// this service day and therefore fall outside any window. Only
/// platform/stop records produce events.
pub fn departure_events(
    feed: &FeedBundle,
    date: NaiveDate,
    window: HourWindow,
) -> Result<Vec<DepartureEvent>, GtfsError> {
    if !feed.contains_date(date) {
        return Err(GtfsError::DateOutsideValidity {
            date,
            start: feed.validity_window.0,
            end: feed.validity_window.1,
        });
    }
    let active = active_services(feed, date);
    let mut events = Vec::new();
    for trip in feed.trips.values() {
        if !active.contains(&trip.service_id) {
            continue;
        }
        let times = feed.stop_times_of(&trip.trip_id);
        let Some((_, departing)) = times.split_last() else {
            continue;
        };
        let headsign = trip.trimmed_headsign().unwrap_or_default();
        let mut emit = |stop_id: &str, secs: i64| {
            if secs < 0 {
                return;
            }
            let hour = (secs / 3600) as u32;
            if !window.contains(hour) {
                return;
            }
            let Some(stop) = feed.stops.get(stop_id) else {
                return;
            };
            if stop.location_type != LocationType::PlatformOrStop {
                return;
            }
            events.push(DepartureEvent {
                stop_id: stop.stop_id.clone(),
                lat: stop.lat,
                lng: stop.lng,
                hour_bucket: hour,
                headsign: headsign.to_owned(),
                trip_id: trip.trip_id.clone(),
            });
        };
        match feed.frequencies.get(&trip.trip_id) {
            Some(frequencies) => {
                let base = i64::from(times[0].departure_secs);
                for freq in frequencies {
                    for start in freq.trip_starts() {
                        for st in departing {
                            emit(
                                &st.stop_id,
                                i64::from(start) + i64::from(st.departure_secs) - base,
                            );
                        }
                    }
                }
            }
            None => {
                for st in departing {
                    emit(&st.stop_id, i64::from(st.departure_secs));
                }
            }
        }
    }
    Ok(events)
}

/// First Wednesday in the validity window on which at least one trip runs.
pub fn default_analysis_date(feed: &FeedBundle) -> Result<NaiveDate, GtfsError> {
    let used: BTreeSet<&str> = feed.trips.values().map(|t| t.service_id.as_str()).collect();
    let (start, end) = feed.validity_window;
    let offset =
        (7 + Weekday::Wed.num_days_from_monday() - start.weekday().num_days_from_monday()) % 7;
    let mut date = start + chrono::Days::new(u64::from(offset));
    while date <= end {
        if used.iter().any(|s| feed.calendars.is_active(s, date)) {
            return Ok(date);
        }
        date = date + chrono::Days::new(7);
    }
    Err(GtfsError::NoAnalysisDate)
}

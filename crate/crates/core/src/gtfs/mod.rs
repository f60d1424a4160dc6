//! Static GTFS feeds: loading, headsign validation, service calendars and
//! departure enumeration.

mod calendar;
mod events;
mod load;
mod model;
mod time;
mod validate;

pub use calendar::{active_services, CalendarRule, DateException, ExceptionKind, ServiceCalendar};
pub use events::{default_analysis_date, departure_events, DepartureEvent, HourWindow};
pub use load::{load_feed, load_feed_from_files, FeedSource, MANDATORY_FILES};
pub use model::{
    FeedBundle, FrequencyRecord, LocationType, RouteRecord, StopRecord, StopTimeRecord, TripRecord,
};
pub use time::{format_gtfs_time, parse_gtfs_time};
pub use validate::{validate_feed, HeadsignPolicy, ValidationReport};

use chrono::NaiveDate;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GtfsError {
    #[error("missing mandatory file {0}")]
    MissingMandatoryFile(String),
    #[error("{file}:{line}: {reason}")]
    MalformedRow {
        file: String,
        line: u64,
        reason: String,
    },
    #[error("{file}: {entity} `{id}` does not exist")]
    DanglingReference {
        file: String,
        entity: &'static str,
        id: String,
    },
    #[error("date {date} is outside the feed validity window {start}..={end}")]
    DateOutsideValidity {
        date: NaiveDate,
        start: NaiveDate,
        end: NaiveDate,
    },
    #[error("feed has no calendar information")]
    EmptyCalendar,
    #[error("no Wednesday with active trips inside the validity window")]
    NoAnalysisDate,
    #[error("invalid hour window {0}..={1} (hours must lie in 0..=23)")]
    InvalidHours(u32, u32),
    #[error("cannot read feed: {0}")]
    Io(#[from] std::io::Error),
    #[error("cannot read archive: {0}")]
    Archive(String),
}

use std::collections::btree_map::Entry;
use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use chrono::NaiveDate;
use serde::de::DeserializeOwned;
use serde::Deserialize;

use super::calendar::{CalendarRule, ExceptionKind, ServiceCalendar};
use super::model::{
    FeedBundle, FrequencyRecord, LocationType, RouteRecord, StopRecord, StopTimeRecord, TripRecord,
};
use super::time::parse_gtfs_time;
use super::GtfsError;

/// Files every feed must carry. The calendar slot is satisfied by either
/// `calendar.txt` or `calendar_dates.txt`.
pub const MANDATORY_FILES: [&str; 5] = [
    "agency.txt",
    "stops.txt",
    "routes.txt",
    "trips.txt",
    "stop_times.txt",
];

const CALENDAR: &str = "calendar.txt";
const CALENDAR_DATES: &str = "calendar_dates.txt";
const FREQUENCIES: &str = "frequencies.txt";

/// Raw file contents keyed by file name (`stops.txt`, ...).
pub type FeedSource = BTreeMap<String, Vec<u8>>;

/// Loads a feed from a `.zip` archive or a directory of `.txt` files.
pub fn load_feed(path: &Path, city_tag: &str) -> Result<FeedBundle, GtfsError> {
    let files = if path.is_dir() {
        read_directory(path)?
    } else {
        read_archive(path)?
    };
    load_feed_from_files(&files, city_tag)
}

fn read_directory(path: &Path) -> Result<FeedSource, GtfsError> {
    let mut files = FeedSource::new();
    for entry in std::fs::read_dir(path)? {
        let entry = entry?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if name.ends_with(".txt") && entry.file_type()?.is_file() {
            files.insert(name, std::fs::read(entry.path())?);
        }
    }
    Ok(files)
}

#[cfg(feature = "zip")]
fn read_archive(path: &Path) -> Result<FeedSource, GtfsError> {
    use std::io::Read;

    let file = std::fs::File::open(path)?;
    let mut archive = zip::ZipArchive::new(file)
        .map_err(|e| GtfsError::Archive(format!("{}: {e}", path.display())))?;
    let mut files = FeedSource::new();
    for i in 0..archive.len() {
        let mut entry = archive
            .by_index(i)
            .map_err(|e| GtfsError::Archive(e.to_string()))?;
        if !entry.is_file() {
            continue;
        }
        // Some agencies wrap the feed in a top-level folder.
        let Some(name) = entry.name().rsplit('/').next().map(str::to_owned) else {
            continue;
        };
        if !name.ends_with(".txt") {
            continue;
        }
        let mut buf = Vec::with_capacity(entry.size() as usize);
        entry.read_to_end(&mut buf)?;
        files.insert(name, buf);
    }
    Ok(files)
}

#[cfg(not(feature = "zip"))]
fn read_archive(path: &Path) -> Result<FeedSource, GtfsError> {
    Err(GtfsError::Archive(format!(
        "{}: built without zip support; unpack the feed into a directory",
        path.display()
    )))
}

#[derive(Deserialize)]
struct RawStop {
    stop_id: Option<String>,
    stop_name: Option<String>,
    stop_lat: Option<String>,
    stop_lon: Option<String>,
    location_type: Option<String>,
}

#[derive(Deserialize)]
struct RawRoute {
    route_id: Option<String>,
    route_type: Option<String>,
    route_short_name: Option<String>,
    route_long_name: Option<String>,
}

#[derive(Deserialize)]
struct RawTrip {
    route_id: Option<String>,
    service_id: Option<String>,
    trip_id: Option<String>,
    trip_headsign: Option<String>,
}

#[derive(Deserialize)]
struct RawStopTime {
    trip_id: Option<String>,
    arrival_time: Option<String>,
    departure_time: Option<String>,
    stop_id: Option<String>,
    stop_sequence: Option<String>,
}

#[derive(Deserialize)]
struct RawCalendar {
    service_id: Option<String>,
    monday: Option<String>,
    tuesday: Option<String>,
    wednesday: Option<String>,
    thursday: Option<String>,
    friday: Option<String>,
    saturday: Option<String>,
    sunday: Option<String>,
    start_date: Option<String>,
    end_date: Option<String>,
}

#[derive(Deserialize)]
struct RawCalendarDate {
    service_id: Option<String>,
    date: Option<String>,
    exception_type: Option<String>,
}

#[derive(Deserialize)]
struct RawFrequency {
    trip_id: Option<String>,
    start_time: Option<String>,
    end_time: Option<String>,
    headway_secs: Option<String>,
}

/// Row-level parse context: file name plus physical line number.
struct Row<'a> {
    file: &'a str,
    line: u64,
}

impl Row<'_> {
    fn err(&self, reason: impl Into<String>) -> GtfsError {
        GtfsError::MalformedRow {
            file: self.file.to_owned(),
            line: self.line,
            reason: reason.into(),
        }
    }

    fn required(&self, value: Option<String>, column: &str) -> Result<String, GtfsError> {
        non_empty(value).ok_or_else(|| self.err(format!("missing required column `{column}`")))
    }

    fn number<T: std::str::FromStr>(&self, value: &str, column: &str) -> Result<T, GtfsError> {
        value
            .parse()
            .map_err(|_| self.err(format!("`{column}` value `{value}` is not a valid number")))
    }

    fn time(&self, value: &str) -> Result<u32, GtfsError> {
        parse_gtfs_time(value).map_err(|reason| self.err(reason))
    }

    fn date(&self, value: &str, column: &str) -> Result<NaiveDate, GtfsError> {
        NaiveDate::parse_from_str(value, "%Y%m%d")
            .map_err(|_| self.err(format!("`{column}` value `{value}` is not a YYYYMMDD date")))
    }
}

fn non_empty(value: Option<String>) -> Option<String> {
    value.map(|v| v.trim().to_owned()).filter(|v| !v.is_empty())
}

fn read_table<T: DeserializeOwned>(
    files: &FeedSource,
    name: &str,
) -> Result<Option<Vec<(u64, T)>>, GtfsError> {
    let Some(bytes) = files.get(name) else {
        return Ok(None);
    };
    let bytes = bytes.strip_prefix(b"\xEF\xBB\xBF").unwrap_or(bytes);
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(bytes);
    let malformed = |line: u64, reason: String| GtfsError::MalformedRow {
        file: name.to_owned(),
        line,
        reason,
    };
    let headers = reader
        .headers()
        .map_err(|e| malformed(1, e.to_string()))?
        .clone();
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            malformed(line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.iter().all(str::is_empty) {
            continue;
        }
        let row = record
            .deserialize(Some(&headers))
            .map_err(|e| malformed(line, e.to_string()))?;
        rows.push((line, row));
    }
    Ok(Some(rows))
}

fn mandatory<T: DeserializeOwned>(
    files: &FeedSource,
    name: &str,
) -> Result<Vec<(u64, T)>, GtfsError> {
    read_table(files, name)?.ok_or_else(|| GtfsError::MissingMandatoryFile(name.to_owned()))
}

/// Builds a feed from in-memory file contents.
pub fn load_feed_from_files(files: &FeedSource, city_tag: &str) -> Result<FeedBundle, GtfsError> {
    for name in MANDATORY_FILES {
        if !files.contains_key(name) {
            return Err(GtfsError::MissingMandatoryFile(name.to_owned()));
        }
    }
    if !files.contains_key(CALENDAR) && !files.contains_key(CALENDAR_DATES) {
        return Err(GtfsError::MissingMandatoryFile(format!(
            "{CALENDAR} or {CALENDAR_DATES}"
        )));
    }

    let calendars = parse_calendars(files)?;
    let validity_window = calendars
        .validity_window()
        .ok_or(GtfsError::EmptyCalendar)?;
    let stops = parse_stops(files)?;
    let routes = parse_routes(files)?;
    let trips = parse_trips(files, &routes, &calendars)?;
    let stop_times = parse_stop_times(files, &trips, &stops)?;
    let frequencies = parse_frequencies(files, &trips)?;

    Ok(FeedBundle {
        city_tag: city_tag.to_owned(),
        stops,
        routes,
        trips,
        stop_times,
        frequencies,
        calendars,
        validity_window,
    })
}

fn parse_calendars(files: &FeedSource) -> Result<ServiceCalendar, GtfsError> {
    let mut calendar = ServiceCalendar::default();
    for (line, raw) in read_table::<RawCalendar>(files, CALENDAR)?.unwrap_or_default() {
        let row = Row {
            file: CALENDAR,
            line,
        };
        let service_id = row.required(raw.service_id, "service_id")?;
        let flags = [
            (raw.monday, "monday"),
            (raw.tuesday, "tuesday"),
            (raw.wednesday, "wednesday"),
            (raw.thursday, "thursday"),
            (raw.friday, "friday"),
            (raw.saturday, "saturday"),
            (raw.sunday, "sunday"),
        ];
        let mut weekdays = [false; 7];
        for (slot, (value, column)) in weekdays.iter_mut().zip(flags) {
            *slot = match row.required(value, column)?.as_str() {
                "0" => false,
                "1" => true,
                other => return Err(row.err(format!("`{column}` must be 0 or 1, got `{other}`"))),
            };
        }
        let start = row.date(&row.required(raw.start_date, "start_date")?, "start_date")?;
        let end = row.date(&row.required(raw.end_date, "end_date")?, "end_date")?;
        if end < start {
            return Err(row.err("end_date precedes start_date"));
        }
        if calendar
            .rules
            .insert(
                service_id.clone(),
                CalendarRule {
                    weekdays,
                    start,
                    end,
                },
            )
            .is_some()
        {
            return Err(row.err(format!("duplicate service_id `{service_id}`")));
        }
    }
    for (line, raw) in read_table::<RawCalendarDate>(files, CALENDAR_DATES)?.unwrap_or_default() {
        let row = Row {
            file: CALENDAR_DATES,
            line,
        };
        let service_id = row.required(raw.service_id, "service_id")?;
        let date = row.date(&row.required(raw.date, "date")?, "date")?;
        let code = row.required(raw.exception_type, "exception_type")?;
        let kind = row
            .number::<u32>(&code, "exception_type")
            .ok()
            .and_then(ExceptionKind::from_code)
            .ok_or_else(|| row.err(format!("exception_type must be 1 or 2, got `{code}`")))?;
        calendar.exceptions.insert((service_id, date), kind);
    }
    Ok(calendar)
}

fn parse_stops(files: &FeedSource) -> Result<BTreeMap<String, StopRecord>, GtfsError> {
    let mut stops = BTreeMap::new();
    for (line, raw) in mandatory::<RawStop>(files, "stops.txt")? {
        let row = Row {
            file: "stops.txt",
            line,
        };
        let stop_id = row.required(raw.stop_id, "stop_id")?;
        let location_type = match non_empty(raw.location_type) {
            None => LocationType::PlatformOrStop,
            Some(code) => LocationType::from_code(Some(row.number(&code, "location_type")?)),
        };
        let (lat, lon) = (non_empty(raw.stop_lat), non_empty(raw.stop_lon));
        let (lat, lng) = match (lat, lon) {
            (Some(lat), Some(lon)) => (
                row.number::<f64>(&lat, "stop_lat")?,
                row.number::<f64>(&lon, "stop_lon")?,
            ),
            // Generic nodes and boarding areas may omit coordinates; they
            // never carry departures.
            _ if location_type == LocationType::Other => {
                log::debug!("stops.txt:{line}: skipping `{stop_id}` without coordinates");
                continue;
            }
            _ => return Err(row.err(format!("stop `{stop_id}` lacks coordinates"))),
        };
        if !(-90.0..=90.0).contains(&lat) || !(-180.0..=180.0).contains(&lng) {
            return Err(row.err(format!("stop `{stop_id}` has out-of-range coordinates")));
        }
        let record = StopRecord {
            stop_id: stop_id.clone(),
            name: non_empty(raw.stop_name).unwrap_or_default(),
            lat,
            lng,
            location_type,
        };
        if stops.insert(stop_id.clone(), record).is_some() {
            return Err(row.err(format!("duplicate stop_id `{stop_id}`")));
        }
    }
    Ok(stops)
}

fn parse_routes(files: &FeedSource) -> Result<BTreeMap<String, RouteRecord>, GtfsError> {
    let mut routes = BTreeMap::new();
    for (line, raw) in mandatory::<RawRoute>(files, "routes.txt")? {
        let row = Row {
            file: "routes.txt",
            line,
        };
        let route_id = row.required(raw.route_id, "route_id")?;
        let route_type = row.number(&row.required(raw.route_type, "route_type")?, "route_type")?;
        let record = RouteRecord {
            route_id: route_id.clone(),
            route_type,
            short_name: non_empty(raw.route_short_name).unwrap_or_default(),
            long_name: non_empty(raw.route_long_name).unwrap_or_default(),
        };
        if routes.insert(route_id.clone(), record).is_some() {
            return Err(row.err(format!("duplicate route_id `{route_id}`")));
        }
    }
    Ok(routes)
}

fn parse_trips(
    files: &FeedSource,
    routes: &BTreeMap<String, RouteRecord>,
    calendars: &ServiceCalendar,
) -> Result<BTreeMap<String, TripRecord>, GtfsError> {
    let services: BTreeSet<&str> = calendars.service_ids();
    let mut trips = BTreeMap::new();
    for (line, raw) in mandatory::<RawTrip>(files, "trips.txt")? {
        let row = Row {
            file: "trips.txt",
            line,
        };
        let trip_id = row.required(raw.trip_id, "trip_id")?;
        let route_id = row.required(raw.route_id, "route_id")?;
        let service_id = row.required(raw.service_id, "service_id")?;
        if !routes.contains_key(&route_id) {
            return Err(dangling("trips.txt", "route", route_id));
        }
        if !services.contains(service_id.as_str()) {
            return Err(dangling("trips.txt", "service", service_id));
        }
        let record = TripRecord {
            trip_id: trip_id.clone(),
            route_id,
            service_id,
            // Raw value kept; trimming happens at comparison time.
            headsign: raw.trip_headsign.filter(|h| !h.trim().is_empty()),
        };
        if trips.insert(trip_id.clone(), record).is_some() {
            return Err(row.err(format!("duplicate trip_id `{trip_id}`")));
        }
    }
    Ok(trips)
}

fn parse_stop_times(
    files: &FeedSource,
    trips: &BTreeMap<String, TripRecord>,
    stops: &BTreeMap<String, StopRecord>,
) -> Result<BTreeMap<String, Vec<StopTimeRecord>>, GtfsError> {
    const FILE: &str = "stop_times.txt";
    let mut by_trip: BTreeMap<String, BTreeMap<u32, StopTimeRecord>> = BTreeMap::new();
    let mut skipped = 0usize;
    for (line, raw) in mandatory::<RawStopTime>(files, FILE)? {
        let row = Row { file: FILE, line };
        let trip_id = row.required(raw.trip_id, "trip_id")?;
        let stop_id = row.required(raw.stop_id, "stop_id")?;
        let stop_sequence = row.number(
            &row.required(raw.stop_sequence, "stop_sequence")?,
            "stop_sequence",
        )?;
        if !trips.contains_key(&trip_id) {
            return Err(dangling(FILE, "trip", trip_id));
        }
        if !stops.contains_key(&stop_id) {
            return Err(dangling(FILE, "stop", stop_id));
        }
        let arrival = non_empty(raw.arrival_time)
            .map(|t| row.time(&t))
            .transpose()?;
        let departure = non_empty(raw.departure_time)
            .map(|t| row.time(&t))
            .transpose()?;
        let departure_secs = match (departure, arrival) {
            (Some(dep), Some(arr)) if dep < arr => {
                return Err(row.err("departure_time precedes arrival_time"));
            }
            (Some(dep), _) => dep,
            (None, Some(arr)) => arr,
            (None, None) => {
                skipped += 1;
                continue;
            }
        };
        let record = StopTimeRecord {
            trip_id: trip_id.clone(),
            stop_id,
            stop_sequence,
            departure_secs,
            arrival_secs: arrival,
        };
        match by_trip.entry(trip_id).or_default().entry(stop_sequence) {
            Entry::Vacant(slot) => {
                slot.insert(record);
            }
            Entry::Occupied(_) => {
                return Err(row.err(format!("duplicate stop_sequence {stop_sequence}")));
            }
        }
    }
    if skipped > 0 {
        log::warn!("{FILE}: skipped {skipped} rows without arrival or departure time");
    }
    Ok(by_trip
        .into_iter()
        .map(|(trip, seq)| (trip, seq.into_values().collect()))
        .collect())
}

fn parse_frequencies(
    files: &FeedSource,
    trips: &BTreeMap<String, TripRecord>,
) -> Result<BTreeMap<String, Vec<FrequencyRecord>>, GtfsError> {
    let mut frequencies: BTreeMap<String, Vec<FrequencyRecord>> = BTreeMap::new();
    for (line, raw) in read_table::<RawFrequency>(files, FREQUENCIES)?.unwrap_or_default() {
        let row = Row {
            file: FREQUENCIES,
            line,
        };
        let trip_id = row.required(raw.trip_id, "trip_id")?;
        if !trips.contains_key(&trip_id) {
            return Err(dangling(FREQUENCIES, "trip", trip_id));
        }
        let start_secs = row.time(&row.required(raw.start_time, "start_time")?)?;
        let end_secs = row.time(&row.required(raw.end_time, "end_time")?)?;
        let headway_secs: u32 = row.number(
            &row.required(raw.headway_secs, "headway_secs")?,
            "headway_secs",
        )?;
        if headway_secs == 0 {
            return Err(row.err("headway_secs must be positive"));
        }
        if end_secs < start_secs {
            return Err(row.err("end_time precedes start_time"));
        }
        frequencies
            .entry(trip_id.clone())
            .or_default()
            .push(FrequencyRecord {
                trip_id,
                start_secs,
                end_secs,
                headway_secs,
            });
    }
    Ok(frequencies)
}

fn dangling(file: &str, entity: &'static str, id: String) -> GtfsError {
    GtfsError::DanglingReference {
        file: file.to_owned(),
        entity,
        id,
    }
}

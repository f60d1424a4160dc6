mod support;

use std::collections::{BTreeMap, BTreeSet};

use chrono::NaiveDate;
use proptest::prelude::*;
use support::fixture;
use transit_typology::gtfs::{
    default_analysis_date, departure_events, load_feed, load_feed_from_files, validate_feed,
    FeedSource, GtfsError, HeadsignPolicy, HourWindow,
};

fn date(s: &str) -> NaiveDate {
    s.parse().unwrap()
}

fn read_dir(name: &str) -> FeedSource {
    std::fs::read_dir(fixture(name))
        .unwrap()
        .map(|e| {
            let path = e.unwrap().path();
            let file = path.file_name().unwrap().to_string_lossy().into_owned();
            (file, std::fs::read(&path).unwrap())
        })
        .collect()
}

fn with_file(mut files: FeedSource, name: &str, text: &str) -> FeedSource {
    files.insert(name.to_owned(), text.as_bytes().to_vec());
    files
}

fn rows(name: &str, file: &str) -> Vec<BTreeMap<String, String>> {
    let mut reader = csv::Reader::from_path(fixture(name).join(file)).unwrap();
    let headers = reader.headers().unwrap().clone();
    reader
        .records()
        .map(|r| {
            let r = r.unwrap();
            headers
                .iter()
                .map(str::to_owned)
                .zip(r.iter().map(str::to_owned))
                .collect()
        })
        .collect()
}

/// Departures counted straight from the text files, for fixtures with a
/// weekly calendar only and no frequencies.
fn brute_force_count(name: &str, day_column: &str, window: HourWindow) -> usize {
    let services: BTreeSet<String> = rows(name, "calendar.txt")
        .into_iter()
        .filter(|r| r[day_column] == "1")
        .map(|r| r["service_id"].clone())
        .collect();
    let platforms: BTreeSet<String> = rows(name, "stops.txt")
        .into_iter()
        .filter(|r| {
            r.get("location_type")
                .is_none_or(|v| v.is_empty() || v == "0")
        })
        .map(|r| r["stop_id"].clone())
        .collect();
    let trips: BTreeSet<String> = rows(name, "trips.txt")
        .into_iter()
        .filter(|r| services.contains(&r["service_id"]))
        .map(|r| r["trip_id"].clone())
        .collect();
    let mut by_trip: BTreeMap<String, Vec<(u32, String, u32)>> = BTreeMap::new();
    for r in rows(name, "stop_times.txt") {
        let parts: Vec<u32> = r["departure_time"]
            .split(':')
            .map(|p| p.parse().unwrap())
            .collect();
        by_trip.entry(r["trip_id"].clone()).or_default().push((
            r["stop_sequence"].parse().unwrap(),
            r["stop_id"].clone(),
            parts[0],
        ));
    }
    by_trip
        .into_iter()
        .filter(|(t, _)| trips.contains(t))
        .map(|(_, mut times)| {
            times.sort();
            times.pop();
            times
                .iter()
                .filter(|(_, stop, hour)| platforms.contains(stop) && window.contains(*hour))
                .count()
        })
        .sum()
}

#[test]
fn stop_times_survive_loading() {
    let feed = load_feed(&fixture("northport"), "northport").unwrap();
    let raw = rows("northport", "stop_times.txt");
    assert_eq!(feed.all_stop_times().count(), raw.len());
    assert_eq!(feed.trips.len(), rows("northport", "trips.txt").len());
    for times in feed.stop_times.values() {
        assert!(times
            .windows(2)
            .all(|w| w[0].stop_sequence < w[1].stop_sequence));
    }
}

#[test]
fn event_counts_match_brute_force() {
    for name in ["northport", "southvale"] {
        let feed = load_feed(&fixture(name), name).unwrap();
        let day = default_analysis_date(&feed).unwrap();
        for window in [
            HourWindow::DAYTIME,
            HourWindow::new(0, 23).unwrap(),
            HourWindow::new(7, 9).unwrap(),
        ] {
            let events = departure_events(&feed, day, window).unwrap();
            assert_eq!(
                events.len(),
                brute_force_count(name, "wednesday", window),
                "{name} {window:?}"
            );
            assert!(events.iter().all(|e| window.contains(e.hour_bucket)));
        }
    }
}

#[test]
fn removed_exception_beats_weekly_rule() {
    let feed = load_feed(&fixture("minicity"), "minicity").unwrap();
    // 2021-01-20 is a Wednesday removed by calendar_dates.
    let events = departure_events(&feed, date("2021-01-20"), HourWindow::DAYTIME).unwrap();
    assert!(events.is_empty());
    let events = departure_events(&feed, date("2021-01-13"), HourWindow::DAYTIME).unwrap();
    assert_eq!(events.len(), 6);
}

#[test]
fn added_exception_beats_weekly_rule() {
    let files = with_file(
        read_dir("minicity"),
        "calendar_dates.txt",
        "service_id,date,exception_type\nWK,20210116,1\n",
    );
    let feed = load_feed_from_files(&files, "minicity").unwrap();
    // A Saturday outside the weekly pattern, added by exception.
    let events = departure_events(&feed, date("2021-01-16"), HourWindow::DAYTIME).unwrap();
    assert_eq!(events.len(), 6);
    let sunday = departure_events(&feed, date("2021-01-17"), HourWindow::DAYTIME).unwrap();
    assert!(sunday.is_empty());
}

#[test]
fn default_date_skips_inactive_wednesdays() {
    let files = with_file(
        read_dir("minicity"),
        "calendar_dates.txt",
        "service_id,date,exception_type\nWK,20210106,2\nWK,20210113,2\n",
    );
    let feed = load_feed_from_files(&files, "minicity").unwrap();
    assert_eq!(default_analysis_date(&feed).unwrap(), date("2021-01-20"));
}

#[test]
fn times_past_midnight_stay_on_the_service_day() {
    let stop_times = "trip_id,arrival_time,departure_time,stop_id,stop_sequence\n\
        T1,23:50:00,23:50:00,S1,1\nT1,24:10:00,24:10:00,S2,2\nT1,25:00:00,25:00:00,S3,3\n\
        T2,07:00:00,07:00:00,S1,1\nT2,07:30:00,07:30:00,S3,2\n\
        T3,06:00:00,06:00:00,S3,1\nT3,06:10:00,06:10:00,S1,2\n\
        T4,23:00:00,23:00:00,S3,1\nT4,23:15:00,23:15:00,S2,2\n";
    let files = with_file(read_dir("minicity"), "stop_times.txt", stop_times);
    let feed = load_feed_from_files(&files, "minicity").unwrap();
    let all = departure_events(&feed, date("2021-01-06"), HourWindow::new(0, 23).unwrap()).unwrap();
    let t1: Vec<u32> = all
        .iter()
        .filter(|e| e.trip_id == "T1")
        .map(|e| e.hour_bucket)
        .collect();
    // 24:10 has hour 24, outside every window, and 25:00 is the final stop.
    assert_eq!(t1, vec![23]);
}

#[test]
fn frequencies_expand_the_pattern() {
    let feed = load_feed(&fixture("minicity"), "minicity").unwrap();
    let events =
        departure_events(&feed, date("2021-01-06"), HourWindow::new(0, 23).unwrap()).unwrap();
    let t3: Vec<(&str, u32)> = events
        .iter()
        .filter(|e| e.trip_id == "T3")
        .map(|e| (e.stop_id.as_str(), e.hour_bucket))
        .collect();
    // 08:00, 08:20, 08:40 from S3; S1 is the final stop of the pattern.
    assert_eq!(t3, vec![("S3", 8); 3]);
}

#[test]
fn date_outside_validity_is_rejected() {
    let feed = load_feed(&fixture("minicity"), "minicity").unwrap();
    let err = departure_events(&feed, date("2021-02-03"), HourWindow::DAYTIME).unwrap_err();
    assert!(matches!(err, GtfsError::DateOutsideValidity { .. }));
}

#[test]
fn strict_policy_rejects_missing_headsigns() {
    let mut feed = load_feed(&fixture("minicity_missing_headsign"), "m").unwrap();
    let report = validate_feed(&mut feed, HeadsignPolicy::Strict);
    assert!(!report.accepted);
    assert_eq!(report.missing_headsign, vec!["T4".to_owned()]);
    assert_eq!(report.substitutions, 0);
}

#[test]
fn fallback_policy_uses_the_final_stop_name() {
    let mut feed = load_feed(&fixture("minicity_missing_headsign"), "m").unwrap();
    let report = validate_feed(&mut feed, HeadsignPolicy::FallbackLastStop);
    assert!(report.accepted);
    assert_eq!(report.substitutions, 1);
    assert_eq!(feed.trips["T4"].headsign.as_deref(), Some("Old Mill"));
}

#[test]
fn structural_errors_are_typed() {
    let mut files = read_dir("minicity");
    files.remove("stop_times.txt");
    assert!(matches!(
        load_feed_from_files(&files, "m"),
        Err(GtfsError::MissingMandatoryFile(f)) if f == "stop_times.txt"
    ));

    let files = with_file(
        read_dir("minicity"),
        "trips.txt",
        "route_id,service_id,trip_id,trip_headsign\nR9,WK,T1,A\n",
    );
    assert!(matches!(
        load_feed_from_files(&files, "m"),
        Err(GtfsError::DanglingReference { .. })
    ));

    let files = with_file(
        read_dir("minicity"),
        "stop_times.txt",
        "trip_id,arrival_time,departure_time,stop_id,stop_sequence\nT1,7h,7h,S1,1\n",
    );
    assert!(matches!(
        load_feed_from_files(&files, "m"),
        Err(GtfsError::MalformedRow { line: 2, .. })
    ));
}

#[cfg(feature = "zip")]
#[test]
fn archive_and_directory_agree() {
    use std::io::Write;
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("feed.zip");
    let mut zip = zip::ZipWriter::new(std::fs::File::create(&path).unwrap());
    for (name, bytes) in read_dir("minicity") {
        zip.start_file(name, zip::write::SimpleFileOptions::default())
            .unwrap();
        zip.write_all(&bytes).unwrap();
    }
    zip.finish().unwrap();
    let from_zip = load_feed(&path, "minicity").unwrap();
    let from_dir = load_feed(&fixture("minicity"), "minicity").unwrap();
    assert_eq!(from_zip, from_dir);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn every_event_falls_in_its_window(first in 0u32..24, len in 1u32..24) {
        let window = HourWindow::new(first, (first + len - 1).min(23)).unwrap();
        let feed = load_feed(&fixture("northport"), "northport").unwrap();
        let events = departure_events(&feed, date("2021-03-10"), window).unwrap();
        prop_assert!(events.iter().all(|e| window.contains(e.hour_bucket)));
        prop_assert_eq!(events.len(), brute_force_count("northport", "wednesday", window));
    }
}

use std::collections::{BTreeMap, BTreeSet};

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use super::FeedBundle;

/// A `calendar.txt` row. `weekdays[0]` is Monday.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CalendarRule {
    pub weekdays: [bool; 7],
    pub start: NaiveDate,
    pub end: NaiveDate,
}

impl CalendarRule {
    pub fn covers(&self, date: NaiveDate) -> bool {
        self.start <= date
            && date <= self.end
            && self.weekdays[date.weekday().num_days_from_monday() as usize]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExceptionKind {
    Add,
    Remove,
}

impl ExceptionKind {
    pub fn from_code(code: u32) -> Option<Self> {
        match code {
            1 => Some(ExceptionKind::Add),
            2 => Some(ExceptionKind::Remove),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DateException {
    pub service_id: String,
    pub date: NaiveDate,
    pub kind: ExceptionKind,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ServiceCalendar {
    pub rules: BTreeMap<String, CalendarRule>,
    pub exceptions: BTreeMap<(String, NaiveDate), ExceptionKind>,
}

impl ServiceCalendar {
    pub fn service_ids(&self) -> BTreeSet<&str> {
        self.rules
            .keys()
            .map(String::as_str)
            .chain(self.exceptions.keys().map(|(s, _)| s.as_str()))
            .collect()
    }

    /// Whether `service_id` runs on `date`. A dated exception always wins
    /// over the weekly rule.
    pub fn is_active(&self, service_id: &str, date: NaiveDate) -> bool {
        match self.exceptions.get(&(service_id.to_owned(), date)) {
            Some(ExceptionKind::Add) => true,
            Some(ExceptionKind::Remove) => false,
            None => self.rules.get(service_id).is_some_and(|r| r.covers(date)),
        }
    }

    /// The span from the earliest rule start or exception date to the latest
    /// rule end or exception date.
    pub fn validity_window(&self) -> Option<(NaiveDate, NaiveDate)> {
        let starts = self
            .rules
            .values()
            .map(|r| r.start)
            .chain(self.exceptions.keys().map(|(_, d)| *d));
        let ends = self
            .rules
            .values()
            .map(|r| r.end)
            .chain(self.exceptions.keys().map(|(_, d)| *d));
        Some((starts.min()?, ends.max()?))
    }
}

/// Service ids running on `date`.
pub fn active_services(feed: &FeedBundle, date: NaiveDate) -> BTreeSet<String> {
    feed.calendars
        .service_ids()
        .into_iter()
        .filter(|s| feed.calendars.is_active(s, date))
        .map(str::to_owned)
        .collect()
}

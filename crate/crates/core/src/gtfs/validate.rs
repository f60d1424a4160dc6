use serde::{Deserialize, Serialize};

use super::FeedBundle;

/// What to do with trips whose `trip_headsign` is blank.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadsignPolicy {
    /// Any missing headsign rejects the whole feed.
    #[default]
    Strict,
    /// Use the name of the trip's final stop instead.
    FallbackLastStop,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub city_tag: String,
    pub policy: HeadsignPolicy,
    pub accepted: bool,
    /// Trips without a usable headsign after the policy was applied.
    pub missing_headsign: Vec<String>,
    pub substitutions: usize,
}

/// Checks headsign completeness and, under
/// [`HeadsignPolicy::FallbackLastStop`], fills the gaps in place.
pub fn validate_feed(feed: &mut FeedBundle, policy: HeadsignPolicy) -> ValidationReport {
    let mut missing = Vec::new();
    let mut substitutions = 0;
    let ids: Vec<String> = feed
        .trips
        .values()
        .filter(|t| t.trimmed_headsign().is_none())
        .map(|t| t.trip_id.clone())
        .collect();
    for trip_id in ids {
        let replacement = match policy {
            HeadsignPolicy::Strict => None,
            HeadsignPolicy::FallbackLastStop => feed
                .stop_times_of(&trip_id)
                .last()
                .and_then(|st| feed.stops.get(&st.stop_id))
                .map(|s| s.name.trim().to_owned())
                .filter(|n| !n.is_empty()),
        };
        match replacement {
            Some(name) => {
                feed.trips
                    .get_mut(&trip_id)
                    .expect("trip id from feed")
                    .headsign = Some(name);
                substitutions += 1;
            }
            None => missing.push(trip_id),
        }
    }
    ValidationReport {
        city_tag: feed.city_tag.clone(),
        policy,
        accepted: missing.is_empty(),
        missing_headsign: missing,
        substitutions,
    }
}

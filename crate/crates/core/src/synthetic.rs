//! Seeded synthetic regions with recognisable daily timetable shapes, for
//! tests, demos and smoke runs without real feeds.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::features::RegionFeatureVector;
use crate::gtfs::HourWindow;
use crate::region::{cell_of, CellId};

/// Relative service level per archetype: hub, urban, suburban, peripheral.
const ARCHETYPE_SCALE: [f64; 4] = [320.0, 90.0, 25.0, 6.0];
const ARCHETYPE_DIRECTIONS: [f64; 4] = [30.0, 12.0, 5.0, 2.0];

/// Daytime demand curve with morning and afternoon peaks, in `(0, 1]`.
fn day_shape(hour: u32, peaky: f64) -> f64 {
    let h = f64::from(hour);
    let morning = (-(h - 7.5).powi(2) / 2.0).exp();
    let afternoon = (-(h - 16.0).powi(2) / 3.0).exp();
    0.35 + peaky * 0.65 * morning.max(afternoon)
}

/// `per_city` regions for each city, cycling through the four archetypes.
/// `city_scale[i]` multiplies the service level of city `i`.
pub fn corpus(seed: u64, cities: &[(&str, f64)], per_city: usize) -> Vec<RegionFeatureVector> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let window = HourWindow::DAYTIME;
    let mut rows = Vec::new();
    for (ci, &(city, scale)) in cities.iter().enumerate() {
        let cells = distinct_cells(ci, per_city);
        for (i, region) in cells.into_iter().enumerate() {
            let archetype = i % ARCHETYPE_SCALE.len();
            let peaky = rng.random_range(0.3..1.0);
            let level = ARCHETYPE_SCALE[archetype] * scale * rng.random_range(0.7..1.3);
            let dir_level = ARCHETYPE_DIRECTIONS[archetype] * rng.random_range(0.7..1.3);
            let mut fv = RegionFeatureVector::zeros(region, city, window);
            for (slot, hour) in window.hours().enumerate() {
                let shape = day_shape(hour, peaky);
                let noise: f64 = rng.random_range(0.9..1.1);
                let trips = (level * shape * noise).round().max(0.0) as u32;
                let dirs = (dir_level * shape.sqrt()).round() as u32;
                fv.trips[slot] = trips;
                fv.directions[slot] = dirs.min(trips);
            }
            rows.push(fv);
        }
    }
    rows
}

fn distinct_cells(city_index: usize, count: usize) -> Vec<CellId> {
    let base_lat = 40.0 + 2.0 * city_index as f64;
    let mut seen = BTreeSet::new();
    let mut out = Vec::with_capacity(count);
    let side = (count as f64).sqrt().ceil() as usize + 1;
    'outer: for row in 0.. {
        for col in 0..side {
            let cell = cell_of(base_lat + 0.012 * row as f64, 10.0 + 0.018 * col as f64, 8)
                .expect("synthetic coordinates are valid");
            if seen.insert(cell) {
                out.push(cell);
                if out.len() == count {
                    break 'outer;
                }
            }
        }
    }
    out
}

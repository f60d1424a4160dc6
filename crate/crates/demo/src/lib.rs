//! WebAssembly bindings for the demo page in `www/`.
//!
//! Every export takes plain numbers or JSON text and returns JSON text, so
//! the page needs no generated type definitions. The logic lives in ordinary
//! functions that the native tests call directly.

use serde::Serialize;
use serde_json::{json, Value};
use transit_typology::clustering::{agglomerate, cuts, Linkage, LinkageConfig, Metric};
use transit_typology::normalize::{fit, NormalizationMode};
use transit_typology::region::cell_of;
use transit_typology::synthetic;
use wasm_bindgen::prelude::*;

/// Upper bound on points in the clustering playground.
pub const MAX_POINTS: usize = 400;
/// Regions per synthetic city in the normalization explorer.
pub const REGIONS_PER_CITY: usize = 24;

fn to_js(result: Result<Value, String>) -> Result<String, JsError> {
    result.map(|v| v.to_string()).map_err(|e| JsError::new(&e))
}

/// H3 cell containing a point: index, centre, boundary ring and the chain
/// of parents up to resolution 0.
pub fn cell_lookup(lat: f64, lng: f64, res: u8) -> Result<Value, String> {
    let cell = cell_of(lat, lng, res).map_err(|e| e.to_string())?;
    let (clat, clng) = cell.center();
    let parents: Vec<String> = (0..res)
        .rev()
        .filter_map(|r| cell.parent(r))
        .map(|c| c.to_string())
        .collect();
    Ok(json!({
        "cell": cell.to_string(),
        "resolution": res,
        "center": [clat, clng],
        "boundary": cell.boundary_ring(),
        "parents": parents,
    }))
}

#[derive(Serialize)]
struct CityProfile {
    city: String,
    hours: Vec<u32>,
    /// Mean hourly trips over the city's regions.
    raw: Vec<f64>,
    global: Vec<f64>,
    local: Vec<f64>,
}

/// Two synthetic cities, one at `town_scale` times the service level of the
/// other. Returns each city's mean trips profile raw, scaled over the pooled
/// corpus and scaled per city.
pub fn normalization_profiles(seed: u64, town_scale: f64) -> Result<Value, String> {
    if !(town_scale > 0.0 && town_scale.is_finite()) {
        return Err("town scale must be a positive number".into());
    }
    let rows = synthetic::corpus(
        seed,
        &[("metro", 1.0), ("town", town_scale)],
        REGIONS_PER_CITY,
    );
    let global = fit(&rows, NormalizationMode::Global).map_err(|e| e.to_string())?;
    let local = fit(&rows, NormalizationMode::Local).map_err(|e| e.to_string())?;
    let mut out = Vec::new();
    for city in ["metro", "town"] {
        let members: Vec<_> = rows.iter().filter(|fv| fv.city == city).collect();
        let width = members[0].trips.len();
        let mean = |vectors: &[Vec<f64>]| -> Vec<f64> {
            (0..width)
                .map(|h| vectors.iter().map(|v| v[h]).sum::<f64>() / vectors.len() as f64)
                .collect()
        };
        let scaled = |params: &transit_typology::normalize::NormalizationParams| {
            members
                .iter()
                .map(|fv| params.transform(fv).map_err(|e| e.to_string()))
                .collect::<Result<Vec<_>, _>>()
        };
        let raw: Vec<Vec<f64>> = members.iter().map(|fv| fv.values()).collect();
        out.push(CityProfile {
            city: city.to_owned(),
            hours: members[0].window.hours().collect(),
            raw: mean(&raw),
            global: mean(&scaled(&global)?),
            local: mean(&scaled(&local)?),
        });
    }
    serde_json::to_value(out).map_err(|e| e.to_string())
}

/// Agglomerates `points` (JSON `[[x, y], ...]`) and cuts the tree at `k`.
pub fn cluster_points(
    points: &str,
    linkage: &str,
    metric: &str,
    k: usize,
) -> Result<Value, String> {
    let points: Vec<Vec<f64>> = serde_json::from_str(points).map_err(|e| format!("points: {e}"))?;
    if points.len() < 2 {
        return Err("place at least two points".into());
    }
    if points.len() > MAX_POINTS {
        return Err(format!("at most {MAX_POINTS} points"));
    }
    let linkage = match linkage {
        "ward" => Linkage::Ward,
        "average" => Linkage::Average,
        other => return Err(format!("unknown linkage `{other}`")),
    };
    let metric = match metric {
        "euclidean" => Metric::Euclidean,
        "cosine" => Metric::Cosine,
        other => return Err(format!("unknown metric `{other}`")),
    };
    let config = LinkageConfig::new(linkage, metric).map_err(|e| e.to_string())?;
    let tree = agglomerate(&points, config).map_err(|e| e.to_string())?;
    let k = k.clamp(1, points.len());
    let all = cuts(&tree, &(1..=k).collect::<Vec<_>>()).map_err(|e| e.to_string())?;
    let last = all.last().expect("k >= 1");
    Ok(json!({
        "k": k,
        "labels": last.labels,
        "sizes": last.sizes(),
        "merges": tree.merges(),
    }))
}

#[wasm_bindgen(js_name = cellLookup)]
pub fn cell_lookup_js(lat: f64, lng: f64, res: u8) -> Result<String, JsError> {
    to_js(cell_lookup(lat, lng, res))
}

#[wasm_bindgen(js_name = normalizationProfiles)]
pub fn normalization_profiles_js(seed: u32, town_scale: f64) -> Result<String, JsError> {
    to_js(normalization_profiles(u64::from(seed), town_scale))
}

#[wasm_bindgen(js_name = clusterPoints)]
pub fn cluster_points_js(
    points: &str,
    linkage: &str,
    metric: &str,
    k: usize,
) -> Result<String, JsError> {
    to_js(cluster_points(points, linkage, metric, k))
}

//! Stage bodies. Each reads its inputs from upstream stage directories and
//! writes its outputs into a scratch directory.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::{CityConfig, PipelineConfig, PipelineError, Stage};
use crate::autoencoder::{train, Architecture, Autoencoder, TrainConfig};
use crate::clustering::{agglomerate, cuts, ClusterCut, Dendrogram, LinkageConfig};
use crate::features::{
    aggregate_all, build_features, feature_header, read_features_csv, write_features_csv,
    AggregatedFeatures, RegionFeatureVector,
};
use crate::gtfs::{
    default_analysis_date, departure_events, load_feed, validate_feed, DepartureEvent,
    HeadsignPolicy, HourWindow, ValidationReport,
};
use crate::normalize::{fit, NormalizationMode};
use crate::region::{cell_of, coverage_of_regions, CellId, RegionKey, RegionSet};
use crate::report::{
    export_dendrogram, export_geojson, hour_profile, scatter_data, share_table, typology_levels,
    write_profiles_csv, write_scatter_csv, TypologyLevel,
};

pub(crate) const EVENTS: &str = "events.csv";
pub(crate) const STOPS: &str = "stops.csv";
pub(crate) const VALIDATION: &str = "validation.json";
pub(crate) const FEATURES: &str = "features.csv";
pub(crate) const AGGREGATES: &str = "aggregates.csv";
pub(crate) const REGIONS: &str = "regions.csv";
pub(crate) const COVERAGE: &str = "coverage.json";
pub(crate) const NORMALIZED: &str = "normalized.csv";
pub(crate) const PARAMS: &str = "normalization.json";
pub(crate) const MODEL: &str = "model.json";
pub(crate) const EMBEDDINGS: &str = "embeddings.csv";
pub(crate) const LOSS: &str = "loss.csv";
pub(crate) const MERGES: &str = "merges.csv";
pub(crate) const ASSIGNMENTS: &str = "assignments.csv";

/// Hidden width and embedding size; the input width follows the hour window.
const HIDDEN: usize = 24;
const EMBEDDING: usize = 16;

pub(crate) fn architecture(hours: HourWindow) -> Architecture {
    Architecture {
        input: 2 * hours.len(),
        hidden: HIDDEN,
        embedding: EMBEDDING,
    }
}

/// Error mapping for files the pipeline itself wrote.
fn own<T, E: std::fmt::Display>(path: &Path, r: Result<T, E>) -> Result<T, PipelineError> {
    r.map_err(|e| PipelineError::internal(path.display(), e))
}

fn create(path: &Path) -> Result<BufWriter<File>, PipelineError> {
    own(path, File::create(path)).map(BufWriter::new)
}

fn open(path: &Path) -> Result<BufReader<File>, PipelineError> {
    own(path, File::open(path)).map(BufReader::new)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), PipelineError> {
    let mut bytes = own(path, serde_json::to_vec_pretty(value))?;
    bytes.push(b'\n');
    own(path, fs::write(path, bytes))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, PipelineError> {
    own(path, serde_json::from_reader(open(path)?))
}

/// Contents of `validation.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub(crate) struct IngestSummary {
    pub validation: ValidationReport,
    pub analysis_date: Option<NaiveDate>,
    pub stops: usize,
    pub events: usize,
}

pub(crate) fn read_ingest_summary(dir: &Path) -> Result<IngestSummary, PipelineError> {
    read_json(&dir.join(VALIDATION))
}

#[derive(Serialize, Deserialize)]
struct StopRow {
    stop_id: String,
    lat: f64,
    lng: f64,
}

/// Loads, validates and enumerates one city's departures. A feed rejected
/// by the headsign policy only gets its validation report.
pub(crate) fn ingest(
    city: &CityConfig,
    policy: HeadsignPolicy,
    hours: HourWindow,
    date: Option<NaiveDate>,
    out: &Path,
) -> Result<IngestSummary, PipelineError> {
    let data = |e: &dyn std::fmt::Display| PipelineError::data(Stage::Ingest, &city.city_tag, e);
    let mut feed = load_feed(&city.feed_path, &city.city_tag).map_err(|e| data(&e))?;
    let validation = validate_feed(&mut feed, policy);
    if !validation.accepted {
        let summary = IngestSummary {
            validation,
            analysis_date: None,
            stops: 0,
            events: 0,
        };
        write_json(&out.join(VALIDATION), &summary)?;
        return Ok(summary);
    }
    let date = match date {
        Some(d) => d,
        None => default_analysis_date(&feed).map_err(|e| data(&e))?,
    };
    let events = departure_events(&feed, date, hours).map_err(|e| data(&e))?;

    let path = out.join(EVENTS);
    let mut w = csv::Writer::from_writer(create(&path)?);
    for e in &events {
        own(&path, w.serialize(e))?;
    }
    own(&path, w.flush())?;

    let path = out.join(STOPS);
    let mut w = csv::Writer::from_writer(create(&path)?);
    let mut stops = 0;
    for s in feed.platform_stops() {
        stops += 1;
        own(
            &path,
            w.serialize(StopRow {
                stop_id: s.stop_id.clone(),
                lat: s.lat,
                lng: s.lng,
            }),
        )?;
    }
    own(&path, w.flush())?;

    let summary = IngestSummary {
        validation,
        analysis_date: Some(date),
        stops,
        events: events.len(),
    };
    write_json(&out.join(VALIDATION), &summary)?;
    Ok(summary)
}

fn read_rows<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, PipelineError> {
    let mut r = csv::Reader::from_reader(open(path)?);
    r.deserialize().map(|row| own(path, row)).collect()
}

/// Assigns stops to cells and builds the hourly feature vectors.
pub(crate) fn featurize(
    city: &CityConfig,
    resolution: u8,
    hours: HourWindow,
    ingest_dir: &Path,
    out: &Path,
) -> Result<usize, PipelineError> {
    let tag = city.city_tag.as_str();
    let data = |e: &dyn std::fmt::Display| PipelineError::data(Stage::Featurize, tag, e);
    let stops: Vec<StopRow> = read_rows(&ingest_dir.join(STOPS))?;
    let events: Vec<DepartureEvent> = read_rows(&ingest_dir.join(EVENTS))?;
    let mut regions = RegionSet::default();
    for s in &stops {
        let cell = cell_of(s.lat, s.lng, resolution)
            .map_err(|e| data(&format!("stop `{}`: {e}", s.stop_id)))?;
        regions.insert(tag, &s.stop_id, cell);
    }
    if regions.is_empty() {
        return Err(data(&"feed has no stops"));
    }
    let features = build_features(tag, &events, &regions, hours).map_err(|e| data(&e))?;

    let path = out.join(FEATURES);
    own(&path, write_features_csv(create(&path)?, hours, &features))?;

    let path = out.join(AGGREGATES);
    let mut w = csv::Writer::from_writer(create(&path)?);
    own(
        &path,
        w.write_record(["region_id", "city", "sum_trips", "directions_whole_day"]),
    )?;
    for a in aggregate_all(tag, &features, &events, &regions) {
        own(
            &path,
            w.write_record([
                a.region.to_string(),
                a.city,
                a.sum_trips.to_string(),
                a.directions_whole_day.to_string(),
            ]),
        )?;
    }
    own(&path, w.flush())?;

    let path = out.join(REGIONS);
    let mut w = csv::Writer::from_writer(create(&path)?);
    own(&path, w.write_record(["region_id", "city", "stop_id"]))?;
    for cell in regions.cells(tag) {
        for stop in regions.stops_in(tag, cell).into_iter().flatten() {
            own(
                &path,
                w.write_record([cell.to_string().as_str(), tag, stop]),
            )?;
        }
    }
    own(&path, w.flush())?;

    if let Some(boundary) = &city.boundary_path {
        let text = fs::read_to_string(boundary)
            .map_err(|e| data(&format!("{}: {e}", boundary.display())))?;
        let value: serde_json::Value = serde_json::from_str(&text)
            .map_err(|e| data(&format!("{}: {e}", boundary.display())))?;
        let report = coverage_of_regions(&regions, &value, resolution).map_err(|e| data(&e))?;
        write_json(&out.join(COVERAGE), &report)?;
    }
    Ok(features.len())
}

pub(crate) fn read_features(path: &Path) -> Result<Vec<RegionFeatureVector>, PipelineError> {
    own(path, read_features_csv(open(path)?))
}

pub(crate) fn read_aggregates(path: &Path) -> Result<Vec<AggregatedFeatures>, PipelineError> {
    #[derive(Deserialize)]
    struct Row {
        region_id: CellId,
        city: String,
        sum_trips: u64,
        directions_whole_day: u64,
    }
    Ok(read_rows::<Row>(path)?
        .into_iter()
        .map(|r| AggregatedFeatures {
            region: r.region_id,
            city: r.city,
            sum_trips: r.sum_trips,
            directions_whole_day: r.directions_whole_day,
        })
        .collect())
}

/// A CSV of `region_id, city, <values...>`.
fn write_matrix(
    path: &Path,
    columns: &[String],
    rows: &[(RegionKey, Vec<f64>)],
) -> Result<(), PipelineError> {
    let mut w = csv::Writer::from_writer(create(path)?);
    let mut header = vec!["region_id".to_owned(), "city".to_owned()];
    header.extend(columns.iter().cloned());
    own(path, w.write_record(&header))?;
    for (key, values) in rows {
        let mut record = vec![key.region.to_string(), key.city.clone()];
        record.extend(values.iter().map(f64::to_string));
        own(path, w.write_record(&record))?;
    }
    own(path, w.flush())
}

pub(crate) fn read_matrix(path: &Path) -> Result<Vec<(RegionKey, Vec<f64>)>, PipelineError> {
    let mut r = csv::Reader::from_reader(open(path)?);
    let mut rows = Vec::new();
    for record in r.records() {
        let record = own(path, record)?;
        let region: CellId = own(path, record[0].parse())?;
        let values = record
            .iter()
            .skip(2)
            .map(|v| v.parse::<f64>())
            .collect::<Result<Vec<_>, _>>();
        rows.push((
            RegionKey {
                city: record[1].to_owned(),
                region,
            },
            own(path, values)?,
        ));
    }
    Ok(rows)
}

pub(crate) fn normalize(
    features: &[RegionFeatureVector],
    mode: NormalizationMode,
    hours: HourWindow,
    out: &Path,
) -> Result<(), PipelineError> {
    let data = |e: &dyn std::fmt::Display| {
        PipelineError::data(Stage::Normalize, crate::normalize::CORPUS_SCOPE, e)
    };
    let params = fit(features, mode).map_err(|e| data(&e))?;
    let rows = features
        .iter()
        .map(|fv| {
            let key = RegionKey {
                city: fv.city.clone(),
                region: fv.region,
            };
            params.transform(fv).map(|v| (key, v))
        })
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| data(&e))?;
    let columns: Vec<String> = feature_header(hours).into_iter().skip(2).collect();
    write_matrix(&out.join(NORMALIZED), &columns, &rows)?;
    write_json(&out.join(PARAMS), &params)
}

#[derive(Serialize)]
struct ModelFile<'a> {
    train: &'a TrainConfig,
    final_loss: Option<f64>,
    model: &'a Autoencoder,
}

pub(crate) fn embed(
    normalized: &[(RegionKey, Vec<f64>)],
    config: &TrainConfig,
    hours: HourWindow,
    out: &Path,
) -> Result<(), PipelineError> {
    let data = |e: &dyn std::fmt::Display| {
        PipelineError::data(Stage::Embed, crate::normalize::CORPUS_SCOPE, e)
    };
    let inputs: Vec<&[f64]> = normalized.iter().map(|(_, v)| v.as_slice()).collect();
    let model = Autoencoder::init(architecture(hours), config);
    let outcome = train(model, &inputs, config).map_err(|e| data(&e))?;
    let rows = normalized
        .iter()
        .map(|(key, x)| outcome.model.encode(x).map(|z| (key.clone(), z)))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| data(&e))?;

    let columns: Vec<String> = (0..EMBEDDING).map(|i| format!("e{i}")).collect();
    write_matrix(&out.join(EMBEDDINGS), &columns, &rows)?;

    let path = out.join(LOSS);
    let mut w = create(&path)?;
    own(&path, writeln!(w, "epoch,loss"))?;
    for (i, loss) in outcome.loss_history.iter().enumerate() {
        own(&path, writeln!(w, "{},{loss}", i + 1))?;
    }
    own(&path, w.flush())?;

    write_json(
        &out.join(MODEL),
        &ModelFile {
            train: config,
            final_loss: outcome.loss_history.last().copied(),
            model: &outcome.model,
        },
    )
}

pub(crate) fn cluster(
    embeddings: &[(RegionKey, Vec<f64>)],
    linkage: LinkageConfig,
    ks: &[usize],
    out: &Path,
) -> Result<(), PipelineError> {
    let scope = crate::normalize::CORPUS_SCOPE;
    let n = embeddings.len();
    if let Some(&k) = ks.iter().find(|&&k| k > n) {
        return Err(PipelineError::Config(super::ConfigErrors(vec![format!(
            "k = {k} exceeds the {n} regions of the corpus"
        )])));
    }
    let points: Vec<Vec<f64>> = embeddings.iter().map(|(_, v)| v.clone()).collect();
    let tree =
        agglomerate(&points, linkage).map_err(|e| PipelineError::data(Stage::Cluster, scope, e))?;
    let cuts = cuts(&tree, ks).map_err(|e| PipelineError::data(Stage::Cluster, scope, e))?;

    let path = out.join(MERGES);
    own(&path, tree.write_csv(create(&path)?))?;

    let path = out.join(ASSIGNMENTS);
    let mut w = csv::Writer::from_writer(create(&path)?);
    own(&path, w.write_record(["region_id", "city", "k", "label"]))?;
    for cut in &cuts {
        for ((key, _), label) in embeddings.iter().zip(&cut.labels) {
            own(
                &path,
                w.write_record([
                    key.region.to_string(),
                    key.city.clone(),
                    cut.k.to_string(),
                    label.to_string(),
                ]),
            )?;
        }
    }
    own(&path, w.flush())
}

pub(crate) fn read_dendrogram(path: &Path) -> Result<Dendrogram, PipelineError> {
    own(path, Dendrogram::read_csv(open(path)?))
}

/// Region keys in corpus order and one cut per `k`, from `assignments.csv`.
pub(crate) fn read_assignments(
    path: &Path,
) -> Result<(Vec<RegionKey>, Vec<ClusterCut>), PipelineError> {
    #[derive(Deserialize)]
    struct Row {
        region_id: CellId,
        city: String,
        k: usize,
        label: usize,
    }
    let rows: Vec<Row> = read_rows(path)?;
    let mut keys = Vec::new();
    let mut cuts: Vec<ClusterCut> = Vec::new();
    for row in rows {
        match cuts.last_mut() {
            Some(c) if c.k == row.k => c.labels.push(row.label),
            _ => cuts.push(ClusterCut {
                k: row.k,
                labels: vec![row.label],
            }),
        }
        if cuts.len() == 1 {
            keys.push(RegionKey {
                city: row.city,
                region: row.region_id,
            });
        }
    }
    if cuts
        .iter()
        .any(|c| c.labels.len() != keys.len() || c.labels.iter().any(|&l| l >= c.k))
    {
        return Err(PipelineError::internal(
            path.display(),
            "inconsistent assignments",
        ));
    }
    Ok((keys, cuts))
}

#[derive(Serialize)]
struct TypologyFile {
    levels: Vec<TypologyLevel>,
}

pub(crate) struct ReportInputs<'a> {
    pub config: &'a PipelineConfig,
    pub cities: &'a [String],
    pub tree: &'a Dendrogram,
    pub keys: &'a [RegionKey],
    pub cuts: &'a [ClusterCut],
    pub raw: &'a [RegionFeatureVector],
    pub aggregates: &'a [AggregatedFeatures],
}

pub(crate) fn report(inputs: &ReportInputs<'_>, out: &Path) -> Result<(), PipelineError> {
    let data = |e: &dyn std::fmt::Display| {
        PipelineError::data(Stage::Report, crate::normalize::CORPUS_SCOPE, e)
    };
    let region_cities: Vec<&str> = inputs.keys.iter().map(|k| k.city.as_str()).collect();
    let by_k = |k: usize| {
        inputs
            .cuts
            .iter()
            .find(|c| c.k == k)
            .ok_or_else(|| PipelineError::internal("report", format!("no cut for k = {k}")))
    };
    let ks = &inputs.config.report_ks;
    for &k in ks {
        let cut = by_k(k)?;
        let table = share_table(cut, &region_cities, inputs.cities).map_err(|e| data(&e))?;
        let path = out.join(format!("shares_k{k}.csv"));
        own(&path, table.write_csv(create(&path)?))?;

        let profiles = (0..k)
            .map(|label| hour_profile(cut, inputs.raw, label))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| data(&e))?;
        let path = out.join(format!("profiles_k{k}.csv"));
        own(&path, write_profiles_csv(create(&path)?, &profiles))?;

        let geojson = export_geojson(cut, inputs.keys).map_err(|e| data(&e))?;
        write_json(&out.join(format!("regions_k{k}.geojson")), &geojson)?;
    }

    let report_cuts: Vec<ClusterCut> = ks
        .iter()
        .map(|&k| by_k(k).cloned())
        .collect::<Result<_, _>>()?;
    let rows = scatter_data(&report_cuts, inputs.aggregates).map_err(|e| data(&e))?;
    let path = out.join("scatter.csv");
    own(&path, write_scatter_csv(create(&path)?, ks, &rows))?;

    let path = out.join("dendrogram.csv");
    own(&path, export_dendrogram(create(&path)?, inputs.tree))?;

    let levels = typology_levels(
        inputs.cuts,
        &inputs.config.levels,
        &inputs.config.level_names,
    )
    .map_err(|e| data(&e))?;
    write_json(&out.join("typology.json"), &TypologyFile { levels })
}

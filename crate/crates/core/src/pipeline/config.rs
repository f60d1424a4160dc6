use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::autoencoder::TrainConfig;
use crate::clustering::{Linkage, LinkageConfig, Metric};
use crate::gtfs::{HeadsignPolicy, HourWindow};
use crate::normalize::NormalizationMode;
use crate::region::DEFAULT_RESOLUTION;
use crate::report::TypeNames;

/// Overrides `output_dir` when set.
pub const OUTPUT_ENV: &str = "TRANSIT_TYPOLOGY_OUT";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CityConfig {
    pub city_tag: String,
    /// Directory or zip archive.
    pub feed_path: PathBuf,
    pub boundary_path: Option<PathBuf>,
    pub analysis_date: Option<NaiveDate>,
}

/// A checked configuration. Relative paths are resolved against the
/// directory of the config file.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PipelineConfig {
    pub cities: Vec<CityConfig>,
    pub resolution: u8,
    pub hours: HourWindow,
    pub normalization: NormalizationMode,
    pub headsign_policy: HeadsignPolicy,
    /// `train.seed` always equals `seed`.
    pub train: TrainConfig,
    pub linkage: LinkageConfig,
    /// Sorted, without duplicates.
    pub report_ks: Vec<usize>,
    /// Sorted, without duplicates.
    pub levels: Vec<usize>,
    pub level_names: TypeNames,
    pub output_dir: PathBuf,
    pub seed: u64,
}

impl PipelineConfig {
    /// Every `k` a cut is needed for.
    pub fn all_ks(&self) -> Vec<usize> {
        let ks: BTreeSet<usize> = self.report_ks.iter().chain(&self.levels).copied().collect();
        ks.into_iter().collect()
    }

    pub fn city(&self, tag: &str) -> Option<&CityConfig> {
        self.cities.iter().find(|c| c.city_tag == tag)
    }
}

/// All problems found in a config file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigErrors(pub Vec<String>);

impl fmt::Display for ConfigErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid configuration")?;
        for e in &self.0 {
            write!(f, "\n  - {e}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigErrors {}

#[derive(Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct RawCity {
    city_tag: String,
    feed_path: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    boundary_path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    analysis_date: Option<String>,
}

#[derive(Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct RawLinkage {
    #[serde(default)]
    linkage: Linkage,
    #[serde(default)]
    metric: Metric,
}

/// Loosely typed mirror of the file so that range problems can be
/// collected instead of failing on the first one.
#[derive(Debug, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
struct RawConfig {
    cities: Vec<RawCity>,
    resolution: i64,
    hours: Vec<i64>,
    normalization: NormalizationMode,
    headsign_policy: HeadsignPolicy,
    train: RawTrain,
    linkage: RawLinkage,
    report_ks: Vec<i64>,
    levels: Vec<i64>,
    level_names: TypeNames,
    output_dir: PathBuf,
    seed: u64,
}

/// The training section without a seed of its own.
#[derive(Debug, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
struct RawTrain {
    epochs: usize,
    batch_size: usize,
    learning_rate: f64,
    optimizer: crate::autoencoder::Optimizer,
}

impl Default for RawTrain {
    fn default() -> Self {
        let t = TrainConfig::default();
        RawTrain {
            epochs: t.epochs,
            batch_size: t.batch_size,
            learning_rate: t.learning_rate,
            optimizer: t.optimizer,
        }
    }
}

impl Default for RawConfig {
    fn default() -> Self {
        RawConfig {
            cities: Vec::new(),
            resolution: i64::from(DEFAULT_RESOLUTION),
            hours: vec![6, 22],
            normalization: NormalizationMode::Global,
            headsign_policy: HeadsignPolicy::Strict,
            train: RawTrain::default(),
            linkage: RawLinkage {
                linkage: Linkage::Ward,
                metric: Metric::Euclidean,
            },
            report_ks: (2..=9).collect(),
            levels: vec![2, 4, 8],
            level_names: TypeNames::new(),
            output_dir: PathBuf::from("out"),
            seed: 42,
        }
    }
}

/// A config file with every default spelled out and one example city.
pub fn template() -> String {
    let raw = RawConfig {
        cities: vec![RawCity {
            city_tag: "example".into(),
            feed_path: PathBuf::from("feeds/example.zip"),
            boundary_path: None,
            analysis_date: None,
        }],
        ..RawConfig::default()
    };
    serde_json::to_string_pretty(&raw).expect("config serializes")
}

/// Reads and checks a config file, reporting every problem at once.
pub fn validate_config(path: &Path) -> Result<PipelineConfig, ConfigErrors> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigErrors(vec![format!("cannot read {}: {e}", path.display())]))?;
    let base = path.parent().unwrap_or(Path::new("."));
    validate_config_str(&text, base)
}

/// [`validate_config`] on in-memory text; relative paths resolve against `base`.
pub fn validate_config_str(text: &str, base: &Path) -> Result<PipelineConfig, ConfigErrors> {
    let raw: RawConfig = serde_json::from_str(text)
        .map_err(|e| ConfigErrors(vec![format!("malformed config: {e}")]))?;
    let mut errors = Vec::new();
    let resolve = |p: &Path| {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            base.join(p)
        }
    };

    let mut seen = BTreeSet::new();
    let mut cities = Vec::with_capacity(raw.cities.len());
    for (i, c) in raw.cities.iter().enumerate() {
        let tag = c.city_tag.trim();
        if tag.is_empty() {
            errors.push(format!("cities[{i}]: empty city_tag"));
        } else if !tag
            .chars()
            .all(|ch| ch.is_ascii_alphanumeric() || ch == '-' || ch == '_')
        {
            errors.push(format!(
                "city_tag `{tag}` may only contain ASCII letters, digits, `-` and `_`"
            ));
        } else if tag == crate::normalize::CORPUS_SCOPE {
            errors.push(format!("city_tag `{tag}` is reserved"));
        } else if !seen.insert(tag.to_owned()) {
            errors.push(format!("duplicate city_tag `{tag}`"));
        }
        let feed_path = resolve(&c.feed_path);
        if !feed_path.exists() {
            errors.push(format!(
                "city `{tag}`: feed_path {} does not exist",
                feed_path.display()
            ));
        }
        let boundary_path = c.boundary_path.as_deref().map(resolve);
        if let Some(b) = &boundary_path {
            if !b.is_file() {
                errors.push(format!(
                    "city `{tag}`: boundary_path {} does not exist",
                    b.display()
                ));
            }
        }
        let analysis_date = match &c.analysis_date {
            None => None,
            Some(d) => match NaiveDate::parse_from_str(d, "%Y-%m-%d") {
                Ok(d) => Some(d),
                Err(_) => {
                    errors.push(format!(
                        "city `{tag}`: analysis_date `{d}` is not YYYY-MM-DD"
                    ));
                    None
                }
            },
        };
        cities.push(CityConfig {
            city_tag: tag.to_owned(),
            feed_path,
            boundary_path,
            analysis_date,
        });
    }

    if !(0..=15).contains(&raw.resolution) {
        errors.push(format!("resolution {} is outside 0..=15", raw.resolution));
    }
    let hours = match raw.hours.as_slice() {
        &[first, last]
            if (0..=23).contains(&first) && (0..=23).contains(&last) && first <= last =>
        {
            HourWindow::new(first as u32, last as u32).ok()
        }
        &[first, last] => {
            errors.push(format!(
                "hours {first}..{last} must satisfy 0 <= first <= last <= 23"
            ));
            None
        }
        other => {
            errors.push(format!(
                "hours must be [first, last], got {} values",
                other.len()
            ));
            None
        }
    };

    let train = TrainConfig {
        seed: raw.seed,
        epochs: raw.train.epochs,
        batch_size: raw.train.batch_size,
        learning_rate: raw.train.learning_rate,
        optimizer: raw.train.optimizer,
    };
    if let Err(e) = train.validate() {
        errors.push(e.to_string());
    }
    let linkage = LinkageConfig::new(raw.linkage.linkage, raw.linkage.metric)
        .map_err(|e| errors.push(format!("linkage: {e}")))
        .ok();

    let mut check_ks = |what: &str, ks: &[i64]| -> Vec<usize> {
        if ks.is_empty() {
            errors.push(format!("{what} must not be empty"));
        }
        for &k in ks.iter().filter(|&&k| k < 1) {
            errors.push(format!("{what}: k = {k} must be at least 1"));
        }
        let set: BTreeSet<usize> = ks
            .iter()
            .filter(|&&k| k >= 1)
            .map(|&k| k as usize)
            .collect();
        set.into_iter().collect()
    };
    let report_ks = check_ks("report_ks", &raw.report_ks);
    let levels = check_ks("levels", &raw.levels);
    for (&k, names) in &raw.level_names {
        if let Some(&label) = names.keys().find(|&&l| l >= k) {
            errors.push(format!(
                "level_names: label {label} does not exist for k = {k}"
            ));
        }
    }

    if !errors.is_empty() {
        return Err(ConfigErrors(errors));
    }
    Ok(PipelineConfig {
        cities,
        resolution: raw.resolution as u8,
        hours: hours.expect("checked"),
        normalization: raw.normalization,
        headsign_policy: raw.headsign_policy,
        train,
        linkage: linkage.expect("checked"),
        report_ks,
        levels,
        level_names: raw.level_names,
        output_dir: resolve(&raw.output_dir),
        seed: raw.seed,
    })
}

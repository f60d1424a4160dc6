//! Block-wise min-max scaling.
//!
//! The trips block (all hourly trip columns) and the directions block are
//! each scaled with a single (min, max) pair so the shape of the day is
//! preserved. Global mode pools every city; local mode fits each city on its
//! own.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::RegionFeatureVector;

#[derive(Debug, Error, PartialEq)]
pub enum NormalizeError {
    #[error("cannot fit normalization on an empty matrix")]
    EmptyMatrix,
    #[error("no normalization parameters for city `{0}`")]
    UnknownCity(String),
    #[error("{block} block of scope `{scope}` is degenerate (min = max = {value})")]
    DegenerateBlock {
        scope: String,
        block: Block,
        value: f64,
    },
    #[error("expected {expected} values, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormalizationMode {
    #[default]
    Global,
    Local,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Block {
    Trips,
    Directions,
}

impl std::fmt::Display for Block {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Block::Trips => "trips",
            Block::Directions => "directions",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MinMax {
    pub min: f64,
    pub max: f64,
}

impl MinMax {
    fn of(values: impl IntoIterator<Item = f64>) -> Option<MinMax> {
        values.into_iter().fold(None, |acc, v| {
            Some(match acc {
                None => MinMax { min: v, max: v },
                Some(m) => MinMax {
                    min: m.min.min(v),
                    max: m.max.max(v),
                },
            })
        })
    }

    pub fn is_degenerate(&self) -> bool {
        self.max == self.min
    }

    /// Maps into `[0, 1]`; values outside the fitted range are clamped and a
    /// degenerate block maps to 0.
    pub fn scale(&self, v: f64) -> f64 {
        if self.is_degenerate() {
            return 0.0;
        }
        ((v - self.min) / (self.max - self.min)).clamp(0.0, 1.0)
    }

    pub fn unscale(&self, v: f64) -> f64 {
        self.min + v * (self.max - self.min)
    }
}

/// Scope key used in global mode.
pub const CORPUS_SCOPE: &str = "corpus";

/// Fitted ranges, serialized as
/// `{"mode": .., "blocks": {"trips": {scope: {min, max}}, "directions": {..}}}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationParams {
    pub mode: NormalizationMode,
    /// Hours per block; the vector layout is `[trips; width][directions; width]`.
    pub width: usize,
    pub blocks: BlockParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockParams {
    pub trips: BTreeMap<String, MinMax>,
    pub directions: BTreeMap<String, MinMax>,
}

impl NormalizationParams {
    fn scope<'a>(&self, city: &'a str) -> &'a str {
        match self.mode {
            NormalizationMode::Global => CORPUS_SCOPE,
            NormalizationMode::Local => city,
        }
    }

    pub fn range(&self, city: &str, block: Block) -> Result<MinMax, NormalizeError> {
        let map = match block {
            Block::Trips => &self.blocks.trips,
            Block::Directions => &self.blocks.directions,
        };
        map.get(self.scope(city))
            .copied()
            .ok_or_else(|| NormalizeError::UnknownCity(city.to_owned()))
    }

    fn ranges(&self, city: &str, len: usize) -> Result<(MinMax, MinMax), NormalizeError> {
        if len != 2 * self.width {
            return Err(NormalizeError::LengthMismatch {
                expected: 2 * self.width,
                actual: len,
            });
        }
        Ok((
            self.range(city, Block::Trips)?,
            self.range(city, Block::Directions)?,
        ))
    }

    /// Scales a raw `[trips..., directions...]` vector of `city`.
    pub fn transform_values(&self, city: &str, raw: &[f64]) -> Result<Vec<f64>, NormalizeError> {
        let (trips, dirs) = self.ranges(city, raw.len())?;
        Ok(raw
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                if i < self.width {
                    trips.scale(v)
                } else {
                    dirs.scale(v)
                }
            })
            .collect())
    }

    pub fn transform(&self, fv: &RegionFeatureVector) -> Result<Vec<f64>, NormalizeError> {
        self.transform_values(&fv.city, &fv.values())
    }

    pub fn inverse_transform(
        &self,
        city: &str,
        scaled: &[f64],
    ) -> Result<Vec<f64>, NormalizeError> {
        let (trips, dirs) = self.ranges(city, scaled.len())?;
        for (block, range) in [(Block::Trips, trips), (Block::Directions, dirs)] {
            if range.is_degenerate() {
                return Err(NormalizeError::DegenerateBlock {
                    scope: self.scope(city).to_owned(),
                    block,
                    value: range.min,
                });
            }
        }
        Ok(scaled
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                if i < self.width {
                    trips.unscale(v)
                } else {
                    dirs.unscale(v)
                }
            })
            .collect())
    }
}

/// Fits block ranges over `rows`.
pub fn fit(
    rows: &[RegionFeatureVector],
    mode: NormalizationMode,
) -> Result<NormalizationParams, NormalizeError> {
    let first = rows.first().ok_or(NormalizeError::EmptyMatrix)?;
    let width = first.trips.len();
    let mut groups: BTreeMap<&str, Vec<&RegionFeatureVector>> = BTreeMap::new();
    for fv in rows {
        if fv.trips.len() != width || fv.directions.len() != width {
            return Err(NormalizeError::LengthMismatch {
                expected: 2 * width,
                actual: fv.len(),
            });
        }
        let scope = match mode {
            NormalizationMode::Global => CORPUS_SCOPE,
            NormalizationMode::Local => fv.city.as_str(),
        };
        groups.entry(scope).or_default().push(fv);
    }
    let mut blocks = BlockParams {
        trips: BTreeMap::new(),
        directions: BTreeMap::new(),
    };
    for (scope, members) in groups {
        let trips = MinMax::of(
            members
                .iter()
                .flat_map(|fv| fv.trips.iter().map(|&v| f64::from(v))),
        );
        let dirs = MinMax::of(
            members
                .iter()
                .flat_map(|fv| fv.directions.iter().map(|&v| f64::from(v))),
        );
        // Zero-width windows are impossible, so both blocks have values.
        blocks
            .trips
            .insert(scope.to_owned(), trips.expect("non-empty block"));
        blocks
            .directions
            .insert(scope.to_owned(), dirs.expect("non-empty block"));
    }
    Ok(NormalizationParams {
        mode,
        width,
        blocks,
    })
}

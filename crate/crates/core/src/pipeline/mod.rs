//! Multi-city orchestration with cached, content-hashed stage artifacts.
//!
//! Outputs live under `{output_dir}/{stage}/{city|corpus}/`. The manifest
//! at `{output_dir}/manifest.json` records, for every completed stage, the
//! hash of its inputs and of each file it wrote. A stage is skipped when
//! its input hash is unchanged and its recorded files are intact.

mod config;
mod run;
mod stages;
mod store;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use config::{
    template, validate_config, validate_config_str, CityConfig, ConfigErrors, PipelineConfig,
    OUTPUT_ENV,
};
pub use run::{run, RunOptions, RunSummary};
pub use store::{ArtifactStore, Manifest, StageRecord, MANIFEST_FILE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Ingest,
    Featurize,
    Normalize,
    Embed,
    Cluster,
    Report,
}

impl Stage {
    /// Dependency order.
    pub const ALL: [Stage; 6] = [
        Stage::Ingest,
        Stage::Featurize,
        Stage::Normalize,
        Stage::Embed,
        Stage::Cluster,
        Stage::Report,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Featurize => "featurize",
            Stage::Normalize => "normalize",
            Stage::Embed => "embed",
            Stage::Cluster => "cluster",
            Stage::Report => "report",
        }
    }

    /// Whether the stage runs once per city rather than once per corpus.
    pub fn per_city(self) -> bool {
        matches!(self, Stage::Ingest | Stage::Featurize)
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Stage::ALL
            .into_iter()
            .find(|st| st.name() == s.trim())
            .ok_or_else(|| format!("unknown stage `{s}`"))
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{0}")]
    Config(ConfigErrors),
    #[error("{stage} [{scope}]: {message}")]
    Data {
        stage: Stage,
        scope: String,
        message: String,
    },
    #[error(
        "stage `{stage}` needs the outputs of stage `{missing}` for {scope}, which are not cached"
    )]
    Dependency {
        stage: Stage,
        missing: Stage,
        scope: String,
    },
    #[error("internal error ({context}): {message}")]
    Internal { context: String, message: String },
}

impl PipelineError {
    /// Process exit status: 2 for configuration problems, 3 for bad input
    /// data, 4 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) | PipelineError::Dependency { .. } => 2,
            PipelineError::Data { .. } => 3,
            PipelineError::Internal { .. } => 4,
        }
    }

    pub(crate) fn data(stage: Stage, scope: &str, err: impl fmt::Display) -> Self {
        PipelineError::Data {
            stage,
            scope: scope.to_owned(),
            message: err.to_string(),
        }
    }

    pub fn internal(context: impl fmt::Display, err: impl fmt::Display) -> Self {
        PipelineError::Internal {
            context: context.to_string(),
            message: err.to_string(),
        }
    }
}

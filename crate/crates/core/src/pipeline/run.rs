use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::Serialize;

use super::stages::{self, ReportInputs};
use super::store::{hash_file, InputHash};
use super::{
    ArtifactStore, CityConfig, ConfigErrors, PipelineConfig, PipelineError, Stage, MANIFEST_FILE,
};
use crate::normalize::CORPUS_SCOPE;

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Stages to (re)consider; `None` means all of them. Earlier stages
    /// that are left out must already have valid cached outputs.
    pub stages: Option<Vec<Stage>>,
    /// Analysis date for every city, overriding the config.
    pub date: Option<NaiveDate>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct RunSummary {
    /// `{stage}/{scope}` of every stage that ran.
    pub executed: Vec<String>,
    /// `{stage}/{scope}` of every stage served from the cache.
    pub cached: Vec<String>,
    /// Cities rejected by headsign validation.
    pub skipped_cities: Vec<String>,
    pub manifest: PathBuf,
}

fn feed_hash(path: &Path) -> io::Result<String> {
    if !path.is_dir() {
        return hash_file(path);
    }
    let mut files = Vec::new();
    for entry in fs::read_dir(path)? {
        let entry = entry?;
        if entry.file_type()?.is_file() {
            files.push(entry.path());
        }
    }
    files.sort();
    let mut h = InputHash::default();
    for f in files {
        let name = f
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        h.part(&name, hash_file(&f)?.as_bytes());
    }
    Ok(h.finish())
}

struct Runner {
    store: ArtifactStore,
    selected: BTreeSet<Stage>,
    summary: RunSummary,
}

impl Runner {
    /// The selected stage that first needs `stage`, if any does.
    fn needed_by(&self, stage: Stage) -> Option<Stage> {
        self.selected.iter().copied().find(|&s| s > stage)
    }

    /// Checks that a stage left out of the selection has cached outputs.
    fn require_cached(&self, stage: Stage, scopes: &[&str]) -> Result<(), PipelineError> {
        let needed_by = self
            .needed_by(stage)
            .expect("only called for needed stages");
        for scope in scopes {
            if self.store.valid(stage, scope).is_none() {
                return Err(PipelineError::Dependency {
                    stage: needed_by,
                    missing: stage,
                    scope: (*scope).to_owned(),
                });
            }
        }
        Ok(())
    }

    fn outputs(
        &self,
        stage: Stage,
        scope: &str,
    ) -> Result<&BTreeMap<String, String>, PipelineError> {
        self.store
            .valid(stage, scope)
            .map(|r| &r.outputs)
            .ok_or_else(|| {
                PipelineError::internal(format!("{stage}/{scope}"), "outputs are missing")
            })
    }

    fn commit(
        &mut self,
        stage: Stage,
        scope: &str,
        hash: String,
        scratch: &Path,
    ) -> Result<(), PipelineError> {
        self.store
            .commit(stage, scope, hash, scratch)
            .map_err(|e| PipelineError::internal(format!("{stage}/{scope}"), e))?;
        log::info!("{stage}/{scope}: done");
        self.summary.executed.push(format!("{stage}/{scope}"));
        Ok(())
    }

    fn scratch(&self, stage: Stage, scope: &str) -> Result<PathBuf, PipelineError> {
        self.store
            .scratch(stage, scope)
            .map_err(|e| PipelineError::internal(format!("{stage}/{scope}"), e))
    }

    /// Runs the stale cities in parallel, then records results in config order.
    fn per_city<F>(
        &mut self,
        stage: Stage,
        jobs: Vec<(&CityConfig, String)>,
        body: F,
    ) -> Result<(), PipelineError>
    where
        F: Fn(&CityConfig, &Path) -> Result<(), PipelineError> + Sync,
    {
        let mut stale = Vec::new();
        for (city, hash) in jobs {
            if self.store.is_fresh(stage, &city.city_tag, &hash) {
                log::info!("{stage}/{}: cached", city.city_tag);
                self.summary
                    .cached
                    .push(format!("{stage}/{}", city.city_tag));
            } else {
                let dir = self.scratch(stage, &city.city_tag)?;
                stale.push((city, hash, dir));
            }
        }
        let results: Vec<Result<(), PipelineError>> = stale
            .par_iter()
            .map(|(city, _, dir)| body(city, dir))
            .collect();
        let mut first_error = None;
        for ((city, hash, dir), result) in stale.into_iter().zip(results) {
            match result {
                Ok(()) => self.commit(stage, &city.city_tag, hash, &dir)?,
                Err(e) => {
                    self.store.discard(&dir);
                    log::error!("{e}");
                    first_error.get_or_insert(e);
                }
            }
        }
        first_error.map_or(Ok(()), Err)
    }

    fn corpus<F>(&mut self, stage: Stage, hash: String, body: F) -> Result<(), PipelineError>
    where
        F: FnOnce(&Path) -> Result<(), PipelineError>,
    {
        if self.store.is_fresh(stage, CORPUS_SCOPE, &hash) {
            log::info!("{stage}/{CORPUS_SCOPE}: cached");
            self.summary.cached.push(format!("{stage}/{CORPUS_SCOPE}"));
            return Ok(());
        }
        let dir = self.scratch(stage, CORPUS_SCOPE)?;
        match body(&dir) {
            Ok(()) => self.commit(stage, CORPUS_SCOPE, hash, &dir),
            Err(e) => {
                self.store.discard(&dir);
                Err(e)
            }
        }
    }

    /// Dispatches one stage: run it if selected, otherwise insist on
    /// cached outputs when a later selected stage depends on it.
    fn wants(&self, stage: Stage, scopes: &[&str]) -> Result<bool, PipelineError> {
        if self.selected.contains(&stage) {
            return Ok(true);
        }
        if self.needed_by(stage).is_some() {
            self.require_cached(stage, scopes)?;
        }
        Ok(false)
    }

    fn file(&self, stage: Stage, scope: &str, name: &str) -> PathBuf {
        self.store.file(stage, scope, name)
    }
}

/// Runs the selected stages in dependency order, reusing cached outputs
/// whose inputs did not change.
pub fn run(config: &PipelineConfig, options: &RunOptions) -> Result<RunSummary, PipelineError> {
    if config.cities.is_empty() {
        return Err(PipelineError::Config(ConfigErrors(vec![
            "no cities configured".into(),
        ])));
    }
    let selected: BTreeSet<Stage> = match &options.stages {
        Some(s) => s.iter().copied().collect(),
        None => Stage::ALL.into_iter().collect(),
    };
    let Some(&last) = selected.iter().max() else {
        return Err(PipelineError::Config(ConfigErrors(vec![
            "no stages selected".into(),
        ])));
    };
    let store = ArtifactStore::open(&config.output_dir)
        .map_err(|e| PipelineError::internal(config.output_dir.display(), e))?;
    let mut r = Runner {
        store,
        selected,
        summary: RunSummary {
            manifest: config.output_dir.join(MANIFEST_FILE),
            ..RunSummary::default()
        },
    };
    let tags: Vec<&str> = config.cities.iter().map(|c| c.city_tag.as_str()).collect();

    // ingest
    if r.wants(Stage::Ingest, &tags)? {
        let mut jobs = Vec::new();
        for city in &config.cities {
            let date = options.date.or(city.analysis_date);
            let feed = feed_hash(&city.feed_path).map_err(|e| {
                PipelineError::data(
                    Stage::Ingest,
                    &city.city_tag,
                    format!("{}: {e}", city.feed_path.display()),
                )
            })?;
            let mut h = InputHash::new(Stage::Ingest);
            h.part("feed", feed.as_bytes())
                .json("policy", &config.headsign_policy)
                .json("hours", &config.hours)
                .json("date", &date);
            jobs.push((city, h.finish()));
        }
        let policy = config.headsign_policy;
        let hours = config.hours;
        r.per_city(Stage::Ingest, jobs, |city, out| {
            stages::ingest(
                city,
                policy,
                hours,
                options.date.or(city.analysis_date),
                out,
            )
            .map(|_| ())
        })?;
    }
    if last == Stage::Ingest {
        return Ok(r.summary);
    }

    let mut accepted = Vec::new();
    for city in &config.cities {
        let summary = stages::read_ingest_summary(&r.store.dir(Stage::Ingest, &city.city_tag))?;
        if summary.validation.accepted {
            accepted.push(city);
        } else {
            log::warn!(
                "skipping city `{}`: {} trip(s) without headsign",
                city.city_tag,
                summary.validation.missing_headsign.len()
            );
            r.summary.skipped_cities.push(city.city_tag.clone());
        }
    }
    if accepted.is_empty() {
        return Err(PipelineError::data(
            Stage::Featurize,
            CORPUS_SCOPE,
            "no city passed headsign validation",
        ));
    }
    let accepted_tags: Vec<&str> = accepted.iter().map(|c| c.city_tag.as_str()).collect();
    let cities: Vec<String> = accepted_tags.iter().map(|&t| t.to_owned()).collect();

    // featurize
    if r.wants(Stage::Featurize, &accepted_tags)? {
        let mut jobs = Vec::new();
        for &city in &accepted {
            let mut h = InputHash::new(Stage::Featurize);
            h.json("ingest", r.outputs(Stage::Ingest, &city.city_tag)?)
                .json("resolution", &config.resolution)
                .json("hours", &config.hours);
            if let Some(b) = &city.boundary_path {
                let bh = hash_file(b).map_err(|e| {
                    PipelineError::data(
                        Stage::Featurize,
                        &city.city_tag,
                        format!("{}: {e}", b.display()),
                    )
                })?;
                h.part("boundary", bh.as_bytes());
            }
            jobs.push((city, h.finish()));
        }
        let root = r.store.root().to_path_buf();
        r.per_city(Stage::Featurize, jobs, |city, out| {
            let ingest_dir = root.join(Stage::Ingest.name()).join(&city.city_tag);
            stages::featurize(city, config.resolution, config.hours, &ingest_dir, out).map(|_| ())
        })?;
    }
    if last == Stage::Featurize {
        return Ok(r.summary);
    }

    let corpus = [CORPUS_SCOPE];
    let read_corpus_features = |r: &Runner| -> Result<Vec<_>, PipelineError> {
        let mut rows = Vec::new();
        for tag in &accepted_tags {
            rows.extend(stages::read_features(&r.file(
                Stage::Featurize,
                tag,
                stages::FEATURES,
            ))?);
        }
        Ok(rows)
    };

    // normalize
    if r.wants(Stage::Normalize, &corpus)? {
        let mut h = InputHash::new(Stage::Normalize);
        for tag in &accepted_tags {
            let features = r
                .outputs(Stage::Featurize, tag)?
                .get(stages::FEATURES)
                .cloned()
                .unwrap_or_default();
            h.part(tag, features.as_bytes());
        }
        h.json("mode", &config.normalization);
        let features = read_corpus_features(&r)?;
        r.corpus(Stage::Normalize, h.finish(), |out| {
            stages::normalize(&features, config.normalization, config.hours, out)
        })?;
    }
    if last == Stage::Normalize {
        return Ok(r.summary);
    }

    // embed
    if r.wants(Stage::Embed, &corpus)? {
        let mut h = InputHash::new(Stage::Embed);
        h.json("normalize", r.outputs(Stage::Normalize, CORPUS_SCOPE)?)
            .json("train", &config.train)
            .json("architecture", &stages::architecture(config.hours));
        let normalized =
            stages::read_matrix(&r.file(Stage::Normalize, CORPUS_SCOPE, stages::NORMALIZED))?;
        r.corpus(Stage::Embed, h.finish(), |out| {
            stages::embed(&normalized, &config.train, config.hours, out)
        })?;
    }
    if last == Stage::Embed {
        return Ok(r.summary);
    }

    // cluster
    let ks = config.all_ks();
    if r.wants(Stage::Cluster, &corpus)? {
        let mut h = InputHash::new(Stage::Cluster);
        h.json(
            "embed",
            &r.outputs(Stage::Embed, CORPUS_SCOPE)?
                .get(stages::EMBEDDINGS),
        )
        .json("linkage", &config.linkage)
        .json("ks", &ks);
        let embeddings =
            stages::read_matrix(&r.file(Stage::Embed, CORPUS_SCOPE, stages::EMBEDDINGS))?;
        r.corpus(Stage::Cluster, h.finish(), |out| {
            stages::cluster(&embeddings, config.linkage, &ks, out)
        })?;
    }
    if last == Stage::Cluster {
        return Ok(r.summary);
    }

    // report
    if r.wants(Stage::Report, &corpus)? {
        let mut h = InputHash::new(Stage::Report);
        h.json("cluster", r.outputs(Stage::Cluster, CORPUS_SCOPE)?);
        for tag in &accepted_tags {
            h.json(tag, r.outputs(Stage::Featurize, tag)?);
        }
        h.json("report_ks", &config.report_ks)
            .json("levels", &config.levels)
            .json("level_names", &config.level_names);
        let tree = stages::read_dendrogram(&r.file(Stage::Cluster, CORPUS_SCOPE, stages::MERGES))?;
        let (keys, cuts) =
            stages::read_assignments(&r.file(Stage::Cluster, CORPUS_SCOPE, stages::ASSIGNMENTS))?;
        let raw = read_corpus_features(&r)?;
        let mut aggregates = Vec::new();
        for tag in &accepted_tags {
            aggregates.extend(stages::read_aggregates(&r.file(
                Stage::Featurize,
                tag,
                stages::AGGREGATES,
            ))?);
        }
        let aligned = raw.len() == keys.len()
            && aggregates.len() == keys.len()
            && keys.iter().zip(&raw).zip(&aggregates).all(|((k, f), a)| {
                k.region == f.region && k.city == f.city && k.region == a.region
            });
        if !aligned {
            return Err(PipelineError::internal(
                "report",
                "cluster assignments do not match the cached features; rerun from normalize",
            ));
        }
        let inputs = ReportInputs {
            config,
            cities: &cities,
            tree: &tree,
            keys: &keys,
            cuts: &cuts,
            raw: &raw,
            aggregates: &aggregates,
        };
        r.corpus(Stage::Report, h.finish(), |out| {
            stages::report(&inputs, out)
        })?;
    }
    Ok(r.summary)
}

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use chrono::NaiveDate;
use clap::{Parser, Subcommand};
use serde_json::Value;

use transit_typology::pipeline::{self, PipelineError, RunOptions, Stage, OUTPUT_ENV};

#[derive(Parser)]
#[command(version, about = "Transit micro-region typologies from GTFS feeds")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the pipeline, reusing cached stage outputs.
    Run {
        #[arg(short, long)]
        config: PathBuf,
        /// Comma-separated subset of ingest,featurize,normalize,embed,cluster,report.
        #[arg(long, value_delimiter = ',')]
        stages: Option<Vec<Stage>>,
        /// Analysis date for every city (YYYY-MM-DD).
        #[arg(long)]
        date: Option<NaiveDate>,
    },
    /// Check a config file and report every problem found.
    Validate { config: PathBuf },
    /// Summarize a pipeline artifact (manifest, CSV, JSON or GeoJSON).
    Inspect { artifact: PathBuf },
    /// Print a config file with all defaults.
    Template,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn execute(command: Command) -> Result<(), PipelineError> {
    match command {
        Command::Run {
            config,
            stages,
            date,
        } => {
            let mut config = pipeline::validate_config(&config).map_err(PipelineError::Config)?;
            if let Some(dir) = std::env::var_os(OUTPUT_ENV) {
                config.output_dir = PathBuf::from(dir);
            }
            let summary = pipeline::run(&config, &RunOptions { stages, date })?;
            let stdout = serde_json::to_string_pretty(&summary)
                .map_err(|e| PipelineError::internal("summary", e))?;
            println!("{stdout}");
            Ok(())
        }
        Command::Validate { config } => {
            let config = pipeline::validate_config(&config).map_err(PipelineError::Config)?;
            println!(
                "ok: {} cities, resolution {}, hours {}..={}, report ks {:?}",
                config.cities.len(),
                config.resolution,
                config.hours.first(),
                config.hours.last(),
                config.report_ks
            );
            Ok(())
        }
        Command::Inspect { artifact } => inspect(&artifact),
        Command::Template => {
            println!("{}", pipeline::template());
            Ok(())
        }
    }
}

fn inspect(path: &Path) -> Result<(), PipelineError> {
    let fail = |e: &dyn std::fmt::Display| {
        PipelineError::Config(pipeline::ConfigErrors(vec![format!(
            "{}: {e}",
            path.display()
        )]))
    };
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .unwrap_or_default();
    match ext {
        "csv" => {
            let mut reader = csv::Reader::from_path(path).map_err(|e| fail(&e))?;
            let header: Vec<String> = reader
                .headers()
                .map_err(|e| fail(&e))?
                .iter()
                .map(str::to_owned)
                .collect();
            let rows = reader.records().count();
            println!("{}: {rows} rows", path.display());
            println!("columns ({}): {}", header.len(), header.join(", "));
        }
        "json" | "geojson" => {
            let text = std::fs::read_to_string(path).map_err(|e| fail(&e))?;
            let value: Value = serde_json::from_str(&text).map_err(|e| fail(&e))?;
            if let Ok(manifest) = serde_json::from_value::<pipeline::Manifest>(value.clone()) {
                for (key, record) in &manifest.stages {
                    println!(
                        "{key}: input {} ({} files)",
                        &record.input_hash[..12.min(record.input_hash.len())],
                        record.outputs.len()
                    );
                    for (name, hash) in &record.outputs {
                        println!("  {name} {}", &hash[..12.min(hash.len())]);
                    }
                }
            } else if value.get("type").and_then(Value::as_str) == Some("FeatureCollection") {
                let n = value["features"].as_array().map_or(0, Vec::len);
                println!("{}: FeatureCollection with {n} features", path.display());
            } else if let Some(obj) = value.as_object() {
                println!(
                    "{}: object with keys {}",
                    path.display(),
                    obj.keys().cloned().collect::<Vec<_>>().join(", ")
                );
            } else {
                println!("{}: {}", path.display(), value);
            }
        }
        _ => {
            return Err(fail(
                &"unsupported artifact type (expected .csv, .json or .geojson)",
            ))
        }
    }
    Ok(())
}

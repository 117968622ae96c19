//! Command-line front end for the vulnhg pipeline.

use clap::{Parser, Subcommand};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use vulnhg::detector::evaluate;
use vulnhg::graph_ingest::{pdg_view, save_cpg, Label};
use vulnhg::slicer::{behaviors_of, ApiList};
use vulnhg::workbench::{
    detect_manifest, emit_report, ingest_record, load_bundle, load_manifest, load_report,
    run_pipeline, save_bundle, serialize_predictions, serialize_report, PipelineConfig,
};

#[derive(Parser)]
#[command(
    name = "vulnhg",
    about = "Vulnerability detection over code behavior hypergraphs",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse manifest records into CPG exchange documents (one file per
    /// function).
    Parse {
        #[arg(long)]
        manifest: PathBuf,
        /// Output directory for `<id>.cpg.json` documents.
        #[arg(long)]
        out: PathBuf,
    },
    /// Emit behavior subgraphs sliced around interest points.
    Slice {
        #[arg(long)]
        manifest: PathBuf,
        /// Output directory for `<id>.slices.json` documents.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Run the full training pipeline; writes `bundle.vhgb` and
    /// `report.json` into the output directory.
    Train {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the config's master seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Score a manifest against a trained bundle.
    Detect {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        bundle: PathBuf,
        /// Output predictions file (line-delimited records).
        #[arg(long)]
        out: PathBuf,
        /// Classification threshold (defaults to the bundle config).
        #[arg(long)]
        threshold: Option<f64>,
    },
    /// Metrics from a predictions file and a labeled manifest.
    Eval {
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        /// Optional path for the metrics document (stdout otherwise).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Pretty-print a stored run report.
    Report {
        /// Path to a report.json produced by `train`.
        path: PathBuf,
    },
}

fn load_config(path: &Option<PathBuf>) -> Result<PipelineConfig, String> {
    match path {
        None => Ok(PipelineConfig::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| format!("cannot read config {}: {e}", p.display()))?;
            let config: PipelineConfig =
                serde_json::from_str(&text).map_err(|e| format!("bad config: {e}"))?;
            config.validate().map_err(|e| e.to_string())?;
            Ok(config)
        }
    }
}

fn ensure_dir(path: &Path) -> Result<(), String> {
    std::fs::create_dir_all(path).map_err(|e| format!("cannot create {}: {e}", path.display()))
}

fn api_list_of(config: &PipelineConfig) -> Result<ApiList, String> {
    match &config.api_list {
        None => Ok(ApiList::default_names()),
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| format!("cannot read api list {}: {e}", p.display()))?;
            Ok(ApiList::parse(&text))
        }
    }
}

fn run(cli: Cli) -> Result<(), String> {
    match cli.command {
        Command::Parse { manifest, out } => {
            let manifest = load_manifest(&manifest).map_err(|e| e.to_string())?;
            manifest.validate(false).map_err(|e| e.to_string())?;
            ensure_dir(&out)?;
            for record in &manifest.records {
                let f = ingest_record(record).map_err(|e| e.to_string())?;
                let path = out.join(format!("{}.cpg.json", f.id));
                std::fs::write(&path, save_cpg(&f.cpg, f.label))
                    .map_err(|e| format!("cannot write {}: {e}", path.display()))?;
            }
            eprintln!("parsed {} functions into {}", manifest.records.len(), out.display());
            Ok(())
        }
        Command::Slice { manifest, out, config } => {
            let config = load_config(&config)?;
            let api_list = api_list_of(&config)?;
            let manifest = load_manifest(&manifest).map_err(|e| e.to_string())?;
            manifest.validate(false).map_err(|e| e.to_string())?;
            ensure_dir(&out)?;
            let mut total = 0usize;
            for record in &manifest.records {
                let f = ingest_record(record).map_err(|e| e.to_string())?;
                let pdg = pdg_view(&f.cpg);
                let behaviors = behaviors_of(&pdg, &f.cpg, &api_list);
                total += behaviors.len();
                let doc = serde_json::json!({
                    "format_version": 1,
                    "function_id": f.id,
                    "behaviors": behaviors,
                });
                let path = out.join(format!("{}.slices.json", f.id));
                std::fs::write(&path, serde_json::to_string_pretty(&doc).unwrap())
                    .map_err(|e| format!("cannot write {}: {e}", path.display()))?;
            }
            eprintln!(
                "sliced {} behaviors from {} functions into {}",
                total,
                manifest.records.len(),
                out.display()
            );
            Ok(())
        }
        Command::Train { manifest, config, out, seed } => {
            let mut config = load_config(&config)?;
            if let Some(seed) = seed {
                config.seed = seed;
            }
            let manifest = load_manifest(&manifest).map_err(|e| e.to_string())?;
            ensure_dir(&out)?;
            let (bundle, report) = run_pipeline(&manifest, &config).map_err(|e| e.to_string())?;
            save_bundle(&bundle, &out.join("bundle.vhgb")).map_err(|e| e.to_string())?;
            emit_report(&report, &out.join("report.json")).map_err(|e| e.to_string())?;
            for (stage, ms) in &report.stage_timings_ms {
                eprintln!("stage {stage:>9}: {ms} ms");
            }
            eprintln!(
                "test F-measure {:.4} (baseline {:.4}); artifacts in {}",
                report.test.f_measure,
                report.baseline_test.f_measure,
                out.display()
            );
            Ok(())
        }
        Command::Detect { manifest, bundle, out, threshold } => {
            let bundle = load_bundle(&bundle).map_err(|e| e.to_string())?;
            let tau = threshold.unwrap_or(bundle.config.threshold);
            let manifest = load_manifest(&manifest).map_err(|e| e.to_string())?;
            let outcome = detect_manifest(&manifest, &bundle, tau).map_err(|e| e.to_string())?;
            std::fs::write(&out, serialize_predictions(&outcome.predictions))
                .map_err(|e| format!("cannot write {}: {e}", out.display()))?;
            for failure in &outcome.failures {
                eprintln!("skipped {} ({}): {}", failure.id, failure.stage, failure.message);
            }
            eprintln!(
                "scored {} functions ({} skipped) into {}",
                outcome.predictions.len(),
                outcome.failures.len(),
                out.display()
            );
            Ok(())
        }
        Command::Eval { predictions, manifest, out } => {
            let text = std::fs::read_to_string(&predictions)
                .map_err(|e| format!("cannot read {}: {e}", predictions.display()))?;
            let predictions =
                vulnhg::workbench::parse_predictions(&text).map_err(|e| e.to_string())?;
            let manifest = load_manifest(&manifest).map_err(|e| e.to_string())?;
            manifest.validate(true).map_err(|e| e.to_string())?;
            let truth: std::collections::BTreeMap<&str, bool> = manifest
                .records
                .iter()
                .map(|r| (r.id.as_str(), r.label == Label::Vulnerable))
                .collect();
            let mut predicted = Vec::new();
            let mut actual = Vec::new();
            for p in &predictions {
                let Some(&label) = truth.get(p.id.as_str()) else {
                    return Err(format!("prediction for unknown id `{}`", p.id));
                };
                predicted.push(p.label == Label::Vulnerable);
                actual.push(label);
            }
            let metrics = evaluate(&predicted, &actual).map_err(|e| e.to_string())?;
            let text = serde_json::to_string_pretty(&metrics).unwrap();
            match out {
                Some(path) => std::fs::write(&path, text)
                    .map_err(|e| format!("cannot write {}: {e}", path.display()))?,
                None => println!("{text}"),
            }
            Ok(())
        }
        Command::Report { path } => {
            let report = load_report(&path).map_err(|e| e.to_string())?;
            print!("{}", serialize_report(&report));
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(message) => {
            eprintln!("error: {message}");
            ExitCode::FAILURE
        }
    }
}

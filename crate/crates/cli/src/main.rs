//! `dtlsfp`: fingerprint WebRTC DTLS handshakes, classify them by
//! application, hunt for class-unique identifiers, and measure how far
//! the recommended Snowflake rewrites blunt the classifier.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use dtlsfp_core::eval::{cross_validate, identifier_search, importance_ranking};
use dtlsfp_core::features::{
    build_schema, encode_matrix, extract_dataset, read_records_jsonl, write_records_jsonl,
    FeatureRecord,
};
use dtlsfp_core::forest::Hyperparameters;
use dtlsfp_core::handshake::{packet_stats, FlowSummary, HandshakeFlow};
use dtlsfp_core::ingest::{ingest_dataset, load_dataset, read_manifest};
use dtlsfp_core::mimicry::{evaluate_countermeasures, parse_transform_list};
use dtlsfp_core::synth::{generate_dataset, SynthConfig};

#[derive(Parser)]
#[command(
    name = "dtlsfp",
    about = "DTLS handshake fingerprinting: ingest captures, extract features, classify, and evaluate countermeasures",
    version
)]
struct Cli {
    /// Worker threads for file/fold/tree parallelism (0 = all cores).
    /// Results are independent of this value.
    #[arg(long, global = true, default_value_t = 0, env = "DTLSFP_JOBS")]
    jobs: usize,

    /// Omit the generated-at timestamp from JSON outputs so reruns are
    /// byte-identical.
    #[arg(long, global = true, env = "DTLSFP_NO_TIMESTAMPS")]
    no_timestamps: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct EvalOptions {
    #[arg(long, default_value_t = 42, env = "DTLSFP_SEED")]
    seed: u64,

    /// Cross-validation folds.
    #[arg(long, default_value_t = 5, env = "DTLSFP_FOLDS")]
    folds: usize,

    #[arg(long, default_value_t = 100, env = "DTLSFP_TREES")]
    trees: usize,

    /// Columns sampled per split (default ⌈√columns⌉).
    #[arg(long, env = "DTLSFP_MAX_FEATURES")]
    max_features: Option<usize>,
}

impl EvalOptions {
    fn hyperparameters(&self) -> Hyperparameters {
        Hyperparameters {
            trees: self.trees,
            max_features: self.max_features,
            ..Default::default()
        }
    }
}

#[derive(Args, Clone)]
struct RecordSource {
    /// CSV manifest of labeled captures (path,app,browser).
    #[arg(long, env = "DTLSFP_MANIFEST", required_unless_present = "records")]
    manifest: Option<PathBuf>,

    /// Feature records from a previous `extract` run (records.jsonl);
    /// skips capture parsing entirely.
    #[arg(long, conflicts_with = "manifest")]
    records: Option<PathBuf>,
}

impl RecordSource {
    fn load(&self) -> Result<Vec<FeatureRecord>> {
        if let Some(path) = &self.records {
            let file =
                std::fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
            return Ok(read_records_jsonl(file)?);
        }
        let manifest_path = self.manifest.as_ref().expect("clap enforces one source");
        let (records, excluded) = extract_dataset(&load_flows(manifest_path)?);
        if excluded > 0 {
            eprintln!("note: {excluded} incomplete handshake(s) excluded");
        }
        Ok(records)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Count labeled handshakes per application/browser cell.
    Ingest {
        #[arg(long, env = "DTLSFP_MANIFEST")]
        manifest: PathBuf,
        /// Write the accounting report as JSON here.
        #[arg(long, env = "DTLSFP_OUT")]
        out: Option<PathBuf>,
    },

    /// Mean packets per handshake, per application.
    Stats {
        #[arg(long, env = "DTLSFP_MANIFEST")]
        manifest: PathBuf,
        #[arg(long, env = "DTLSFP_OUT")]
        out: Option<PathBuf>,
        /// Also dump one JSON flow summary per line (debugging aid).
        #[arg(long)]
        flows_out: Option<PathBuf>,
    },

    /// Extract features: writes features.csv, schema.json, records.jsonl.
    Extract {
        #[arg(long, env = "DTLSFP_MANIFEST")]
        manifest: PathBuf,
        /// Output directory.
        #[arg(long, env = "DTLSFP_OUT")]
        out: PathBuf,
    },

    /// Stratified cross-validation of the random-forest classifier.
    Evaluate {
        #[command(flatten)]
        source: RecordSource,
        #[command(flatten)]
        eval: EvalOptions,
        #[arg(long, env = "DTLSFP_OUT")]
        out: Option<PathBuf>,
        /// Also write the confusion matrix as CSV.
        #[arg(long)]
        confusion_csv: Option<PathBuf>,
    },

    /// Per-class feature presence rates and class-unique identifiers.
    Identifiers {
        #[command(flatten)]
        source: RecordSource,
        #[command(flatten)]
        eval: EvalOptions,
        /// Presence tolerance in percentage points (0 = exact 100/0 rule).
        #[arg(long, default_value_t = 0.0, env = "DTLSFP_TOLERANCE")]
        tolerance: f64,
        /// Importance-ranking entries to include.
        #[arg(long, default_value_t = 10)]
        top: usize,
        #[arg(long, env = "DTLSFP_OUT")]
        out: Option<PathBuf>,
    },

    /// Apply countermeasure transforms to Snowflake flows and compare
    /// before/after detectability.
    Transform {
        #[arg(long, env = "DTLSFP_MANIFEST")]
        manifest: PathBuf,
        /// Comma-separated transform names, or "all". Available:
        /// drop-optional-client-hello, add-renegotiation-info,
        /// remove-supported-groups.
        #[arg(long, default_value = "all", env = "DTLSFP_TRANSFORMS")]
        transforms: String,
        #[command(flatten)]
        eval: EvalOptions,
        #[arg(long, default_value_t = 0.0, env = "DTLSFP_TOLERANCE")]
        tolerance: f64,
        #[arg(long, env = "DTLSFP_OUT")]
        out: Option<PathBuf>,
    },

    /// Generate a synthetic labeled dataset from a profile config.
    Synth {
        /// Profile config (JSON).
        #[arg(long)]
        config: PathBuf,
        /// Output directory for pcaps + manifest.csv.
        #[arg(long, env = "DTLSFP_OUT")]
        out: PathBuf,
        /// Override the config's seed.
        #[arg(long, env = "DTLSFP_SEED")]
        seed: Option<u64>,
        /// Override every capture's flow count.
        #[arg(long)]
        count: Option<usize>,
    },
}

fn load_flows(manifest_path: &Path) -> Result<Vec<HandshakeFlow>> {
    let manifest = read_manifest(manifest_path)?;
    let (flows, report) = load_dataset(&manifest);
    if !report.errors.is_empty() {
        for error in &report.errors {
            eprintln!("warning: {error}");
        }
    }
    if flows.is_empty() {
        bail!("no handshakes found via {}", manifest_path.display());
    }
    Ok(flows)
}

#[derive(Serialize)]
struct Envelope<T: Serialize> {
    #[serde(skip_serializing_if = "Option::is_none")]
    generated_at_unix: Option<u64>,
    #[serde(flatten)]
    report: T,
}

struct Output {
    no_timestamps: bool,
}

impl Output {
    fn write<T: Serialize>(&self, out: Option<&Path>, report: &T) -> Result<()> {
        let envelope = Envelope {
            generated_at_unix: if self.no_timestamps {
                None
            } else {
                Some(SystemTime::now().duration_since(UNIX_EPOCH)?.as_secs())
            },
            report,
        };
        let json = serde_json::to_string_pretty(&envelope)?;
        match out {
            Some(path) => {
                std::fs::write(path, json.as_bytes())
                    .with_context(|| format!("writing {}", path.display()))?;
            }
            None => println!("{json}"),
        }
        Ok(())
    }
}

fn run(cli: Cli) -> Result<()> {
    let output = Output {
        no_timestamps: cli.no_timestamps,
    };
    match cli.command {
        Command::Ingest { manifest, out } => {
            let entries = read_manifest(&manifest)?;
            let report = ingest_dataset(&entries);
            print!("{}", report.render_table());
            output.write(out.as_deref(), &report)?;
        }

        Command::Stats {
            manifest,
            out,
            flows_out,
        } => {
            let flows = load_flows(&manifest)?;
            if let Some(path) = flows_out {
                let mut text = String::new();
                for flow in &flows {
                    text.push_str(&serde_json::to_string(&FlowSummary::of(flow))?);
                    text.push('\n');
                }
                std::fs::write(&path, text)
                    .with_context(|| format!("writing {}", path.display()))?;
            }
            let stats = packet_stats(&flows);
            print!("{}", stats.render_table());
            output.write(out.as_deref(), &stats)?;
        }

        Command::Extract { manifest, out } => {
            let flows = load_flows(&manifest)?;
            let (records, excluded) = extract_dataset(&flows);
            if excluded > 0 {
                eprintln!("note: {excluded} incomplete handshake(s) excluded");
            }
            let schema = build_schema(&records)?;
            std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
            let matrix = encode_matrix(&records, &schema);
            let csv_path = out.join("features.csv");
            matrix.write_csv(
                std::fs::File::create(&csv_path)
                    .with_context(|| format!("creating {}", csv_path.display()))?,
            )?;
            std::fs::write(
                out.join("schema.json"),
                serde_json::to_string_pretty(&schema)?,
            )?;
            let records_path = out.join("records.jsonl");
            write_records_jsonl(
                &records,
                std::fs::File::create(&records_path)
                    .with_context(|| format!("creating {}", records_path.display()))?,
            )?;
            println!(
                "{} rows x {} columns -> {}",
                matrix.rows.len(),
                schema.len(),
                out.display()
            );
            if schema.len() != 61 {
                eprintln!(
                    "schema has {} columns, not the 61 expected on the reference dataset; audit:",
                    schema.len()
                );
                eprint!("{}", schema.render_audit());
            }
        }

        Command::Evaluate {
            source,
            eval,
            out,
            confusion_csv,
        } => {
            let records = source.load()?;
            let report = cross_validate(&records, eval.folds, &eval.hyperparameters(), eval.seed)?;
            print!("{}", report.render_table());
            if let Some(path) = confusion_csv {
                std::fs::write(&path, report.confusion_csv())
                    .with_context(|| format!("writing {}", path.display()))?;
            }
            output.write(out.as_deref(), &report)?;
        }

        Command::Identifiers {
            source,
            eval,
            tolerance,
            top,
            out,
        } => {
            let records = source.load()?;
            let identifiers = identifier_search(&records, None, tolerance)?;
            let evaluation =
                cross_validate(&records, eval.folds, &eval.hyperparameters(), eval.seed)?;
            let ranking = importance_ranking(&evaluation, top);
            print!("{}", identifiers.render_table());
            println!("top importances:");
            for entry in &ranking {
                println!("  {:<52} {:.4}", entry.column, entry.importance);
            }
            #[derive(Serialize)]
            struct IdentifiersOut {
                identifiers: dtlsfp_core::eval::IdentifierReport,
                importance_ranking: Vec<dtlsfp_core::eval::ImportanceEntry>,
            }
            output.write(
                out.as_deref(),
                &IdentifiersOut {
                    identifiers,
                    importance_ranking: ranking,
                },
            )?;
        }

        Command::Transform {
            manifest,
            transforms,
            eval,
            tolerance,
            out,
        } => {
            let flows = load_flows(&manifest)?;
            let selected = parse_transform_list(&transforms)?;
            let report = evaluate_countermeasures(
                &flows,
                &selected,
                eval.folds,
                &eval.hyperparameters(),
                eval.seed,
                tolerance,
            )?;
            println!(
                "transforms: {}",
                if report.transforms.is_empty() {
                    "(none)".to_string()
                } else {
                    report.transforms.join(", ")
                }
            );
            println!(
                "accuracy {:.4} -> {:.4} (delta {:+.4})",
                report.before.accuracy, report.after.accuracy, report.accuracy_delta
            );
            let sf_before = report.before.class_metrics(dtlsfp_core::App::Snowflake);
            let sf_after = report.after.class_metrics(dtlsfp_core::App::Snowflake);
            println!(
                "snowflake recall {:.4} -> {:.4} (delta {:+.4})",
                sf_before.recall, sf_after.recall, report.snowflake_recall_delta
            );
            println!("removed identifiers: {:?}", report.removed_identifiers);
            println!("remaining identifiers: {:?}", report.remaining_identifiers);
            output.write(out.as_deref(), &report)?;
        }

        Command::Synth {
            config,
            out,
            seed,
            count,
        } => {
            let mut config = SynthConfig::from_path(&config)?;
            if let Some(seed) = seed {
                config.seed = seed;
            }
            if let Some(count) = count {
                if count == 0 {
                    bail!("--count must be at least 1");
                }
                for capture in &mut config.captures {
                    capture.count = count;
                }
            }
            let generated = generate_dataset(&config, &out)?;
            println!("{generated}");
        }
    }
    Ok(())
}

fn main() {
    let cli = Cli::parse();
    if cli.jobs > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.jobs)
            .build_global()
            .expect("thread pool initialized once");
    }
    if let Err(error) = run(cli) {
        let payload = serde_json::json!({ "error": format!("{error:#}") });
        eprintln!("{payload}");
        std::process::exit(1);
    }
}

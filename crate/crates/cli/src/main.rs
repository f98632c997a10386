//! `intent-landscape`: stage-per-command driver over a run directory.
//!
//! Exit status: 0 success, 1 general failure, 2 missing artifact,
//! 3 stale or edited artifact (override with `--force`), 4 mapping refers
//! to clusters that do not exist.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use intent_landscape::artifacts::canonical_json;
use intent_landscape::clustering::{generate_cut_vectors, ClusterSelection};
use intent_landscape::config::{ConfigLayer, Preset, RunConfig};
use intent_landscape::corpus::CorpusFormat;
use intent_landscape::pipeline::{self, EmbedSource, PipelineError, QaSource};
use intent_landscape::synth;
use serde::Serialize;

#[derive(Parser, Debug)]
#[command(name = "intent-landscape", version, about = "Intent landscape mining for customer-service dialogues")]
struct Cli {
    /// Run directory holding stage artifacts.
    #[arg(long, global = true, default_value = ".")]
    dir: PathBuf,
    /// JSON config file (keys mirror the stage flags, in snake_case).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    preset: Option<Preset>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Proceed even when upstream artifacts fail the hash check.
    #[arg(long, global = true)]
    force: bool,
    /// Repeat for more logging.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(flatten)]
    flags: StageFlags,
    #[command(subcommand)]
    command: Command,
}

/// Overrides for individual run-config fields.
#[derive(Args, Debug, Default)]
struct StageFlags {
    /// 0, 1 or 2: which built-in question to ask the QA model.
    #[arg(long, global = true)]
    question_index: Option<usize>,
    /// Use the spelling-corrected first question.
    #[arg(long, global = true)]
    question_corrected: bool,
    #[arg(long, global = true)]
    top_k: Option<usize>,
    #[arg(long, global = true)]
    min_cluster_size: Option<usize>,
    #[arg(long, global = true)]
    min_samples: Option<usize>,
    #[arg(long, global = true)]
    selection: Option<Selection>,
    #[arg(long, global = true)]
    distance_threshold: Option<f64>,
    #[arg(long, global = true)]
    force_cluster_threshold: Option<f64>,
    #[arg(long, global = true)]
    unlabeled_threshold: Option<f64>,
    #[arg(long, global = true)]
    min_support: Option<usize>,
    #[arg(long, global = true)]
    qa_url: Option<String>,
    #[arg(long, global = true)]
    tagger_url: Option<String>,
    #[arg(long, global = true)]
    embed_url: Option<String>,
    #[arg(long, global = true)]
    max_in_flight: Option<usize>,
    #[arg(long, global = true)]
    batch_size: Option<usize>,
    #[arg(long, global = true)]
    mock_dim: Option<usize>,
    #[arg(long, global = true)]
    mock_spread: Option<f64>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Selection {
    ExcessOfMass,
    Leaf,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Format {
    Jsonl,
    Csv,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Backend {
    Mock,
    File,
    Http,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Parse a corpus file into the run directory.
    Ingest {
        input: PathBuf,
        #[arg(long)]
        format: Option<Format>,
    },
    /// Ask the QA backend for candidate spans.
    Extract {
        /// Replay candidates from a JSONL file instead of calling a service.
        #[arg(long)]
        replay: Option<PathBuf>,
    },
    /// Run the validation funnel.
    Validate,
    /// Embed the valid spans.
    Embed {
        #[arg(long, value_enum, default_value = "mock")]
        backend: Backend,
        /// Keyword family rules for the mock backend.
        #[arg(long)]
        families: Option<PathBuf>,
        /// Vector file for the file backend.
        #[arg(long)]
        vectors: Option<PathBuf>,
    },
    /// Low-level density clustering and the top-level cut.
    Cluster,
    /// Attach dialogues to clusters and estimate volumes.
    Landscape,
    /// Score the clustering against gold labels.
    Evaluate {
        gold: PathBuf,
        /// Comma-separated ground-truth intents for scheme recall.
        #[arg(long, value_delimiter = ',')]
        scheme: Option<Vec<String>>,
    },
    /// Write review_export.json for the review tool.
    ExportReview {
        /// Precomputed 2D coordinates (JSONL) instead of the built-in PCA.
        #[arg(long)]
        coordinates: Option<PathBuf>,
    },
    /// Import an edited mapping and refresh the landscape.
    ImportMapping { mapping: PathBuf },
    /// Write a synthetic corpus, replay candidates, gold and family rules.
    Synth {
        out: PathBuf,
        #[arg(long, default_value_t = 200)]
        dialogues: usize,
    },
    /// Write the shared cut test-vector suite.
    CutVectors {
        out: PathBuf,
        #[arg(long, default_value_t = 3)]
        dendrograms: usize,
        #[arg(long, default_value_t = 100)]
        thresholds: usize,
    },
}

impl Cli {
    fn flag_layer(&self) -> ConfigLayer {
        let f = &self.flags;
        ConfigLayer {
            preset: self.preset,
            seed: self.seed,
            question_index: f.question_index,
            question_corrected: f.question_corrected.then_some(true),
            top_k: f.top_k,
            min_cluster_size: f.min_cluster_size,
            min_samples: f.min_samples,
            selection: f.selection.map(|s| match s {
                Selection::ExcessOfMass => ClusterSelection::ExcessOfMass,
                Selection::Leaf => ClusterSelection::Leaf,
            }),
            distance_threshold: f.distance_threshold,
            force_cluster_threshold: f.force_cluster_threshold,
            unlabeled_threshold: f.unlabeled_threshold,
            min_support: f.min_support,
            qa_url: f.qa_url.clone(),
            tagger_url: f.tagger_url.clone(),
            embed_url: f.embed_url.clone(),
            max_in_flight: f.max_in_flight,
            batch_size: f.batch_size,
            mock_dim: f.mock_dim,
            mock_spread: f.mock_spread,
        }
    }

    fn resolve_config(&self) -> Result<RunConfig, PipelineError> {
        let file = match &self.config {
            Some(path) => ConfigLayer::from_file(path)?,
            None => ConfigLayer::default(),
        };
        let env = ConfigLayer::from_env();
        Ok(RunConfig::resolve(&[&file, &env, &self.flag_layer()])?)
    }
}

fn print<T: Serialize>(value: &T) -> Result<(), PipelineError> {
    let text = canonical_json(value).map_err(|e| PipelineError::Input(e.to_string()))?;
    print!("{text}");
    Ok(())
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> PipelineError + '_ {
    move |e| PipelineError::Input(format!("{}: {e}", path.display()))
}

fn run(cli: &Cli) -> Result<(), PipelineError> {
    // Commands that do not touch the run directory.
    match &cli.command {
        Command::Synth { out, dialogues } => {
            let seed = cli.seed.unwrap_or(0);
            let corpus = synth::generate(*dialogues, seed);
            corpus.write_to(out).map_err(io_err(out))?;
            return print(&serde_json::json!({"dialogues": corpus.dialogues.len(), "intents": corpus.intents}));
        }
        Command::CutVectors {
            out,
            dendrograms,
            thresholds,
        } => {
            let suite = generate_cut_vectors(cli.seed.unwrap_or(0), *dendrograms, *thresholds)?;
            let text = canonical_json(&suite).map_err(|e| PipelineError::Input(e.to_string()))?;
            intent_landscape::artifacts::write_atomic(out, text.as_bytes())?;
            return Ok(());
        }
        _ => {}
    }

    let cfg = cli.resolve_config()?;
    let ws = pipeline::workspace(&cli.dir, cli.force);
    match &cli.command {
        Command::Ingest { input, format } => {
            let format = format.map(|f| match f {
                Format::Jsonl => CorpusFormat::Jsonl,
                Format::Csv => CorpusFormat::Csv,
            });
            print(&pipeline::ingest(&ws, &cfg, input, format)?)
        }
        Command::Extract { replay } => {
            let source = match replay {
                Some(path) => QaSource::Replay(path.clone()),
                None => QaSource::Remote,
            };
            let n = pipeline::extract(&ws, &cfg, &source)?;
            print(&serde_json::json!({"candidates": n}))
        }
        Command::Validate => print(&pipeline::validate(&ws, &cfg)?),
        Command::Embed {
            backend,
            families,
            vectors,
        } => {
            let source = match backend {
                Backend::Mock => EmbedSource::Mock {
                    families: families.clone(),
                },
                Backend::File => EmbedSource::File(
                    vectors
                        .clone()
                        .ok_or_else(|| PipelineError::Input("--backend file needs --vectors".into()))?,
                ),
                Backend::Http => EmbedSource::Remote,
            };
            let n = pipeline::embed(&ws, &cfg, &source)?;
            print(&serde_json::json!({"embedded": n}))
        }
        Command::Cluster => print(&pipeline::cluster(&ws, &cfg)?),
        Command::Landscape => {
            let l = pipeline::landscape(&ws, &cfg)?;
            print(&serde_json::json!({
                "source_counts": l.source_counts,
                "volumes": l.volumes,
                "unmapped": l.unmapped,
            }))
        }
        Command::Evaluate { gold, scheme } => {
            let r = pipeline::evaluate(&ws, &cfg, gold, scheme.as_deref())?;
            print(&serde_json::json!({
                "rows": r.evaluation.rows,
                "unlabeled_count": r.evaluation.unlabeled_count,
                "scheme_recall": r.scheme_recall,
            }))
        }
        Command::ExportReview { coordinates } => {
            let e = pipeline::export_review(&ws, &cfg, coordinates.as_deref())?;
            print(&serde_json::json!({
                "points": e.points.len(),
                "leaves": e.dendrogram.leaf_count,
                "threshold": e.threshold,
            }))
        }
        Command::ImportMapping { mapping } => {
            let l = pipeline::import_mapping(&ws, &cfg, mapping)?;
            print(&serde_json::json!({"volumes": l.volumes, "unmapped": l.unmapped}))
        }
        Command::Synth { .. } | Command::CutVectors { .. } => unreachable!("handled above"),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

//! `autoctx`: engine-audio powertrain classification and diagnostic model
//! selection from the command line.
//!
//! Human-readable tables go to stdout, machine artifacts to files, and
//! JSON-lines logs to stderr. Exit codes: 0 success, 2 usage, 3 signal,
//! 4 features, 5 learn, 6 chain, 7 context, 8 registry, 9 synth,
//! 10 config or I/O.

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::error::CliError;

#[derive(Parser, Debug)]
#[command(name = "autoctx", version, about = "Engine-audio powertrain classification and context-based diagnostic model selection")]
struct Cli {
    /// JSON config file; flags override it, it overrides defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Log level for the JSON-lines log on stderr.
    #[arg(long, global = true, default_value = "info", value_parser = ["error", "warn", "info", "debug", "trace"])]
    log_level: String,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a labeled synthetic corpus (WAV + JSON sidecars).
    Synth(SynthFlags),
    /// Canonicalize WAV files (mono, 22,050 Hz, peak 1) into a directory.
    Ingest(IngestFlags),
    /// Cut segments and dump feature matrices.
    Featurize(FeaturizeFlags),
    /// Train a classifier chain on a labeled directory.
    Train(TrainFlags),
    /// Grid search over feature configs and classifiers.
    Grid(GridFlags),
    /// Evaluate a trained chain on a labeled directory.
    Evaluate(EvaluateFlags),
    /// Classify one clip with a trained chain and segment voting.
    Classify(ClassifyFlags),
    /// Match context and pick the most specific applicable model.
    SelectModel(SelectFlags),
    /// Inspect or extend a model registry.
    #[command(subcommand)]
    Registry(RegistryCommand),
}

macro_rules! flags {
    ($(#[$m:meta])* $name:ident { $($(#[$fm:meta])* $field:ident : $ty:ty),* $(,)? }) => {
        $(#[$m])*
        #[derive(Args, Serialize, Debug, Default)]
        pub struct $name {
            $(
                $(#[$fm])*
                #[arg(long)]
                #[serde(skip_serializing_if = "Option::is_none")]
                pub $field: Option<$ty>,
            )*
        }
    };
}

flags!(SynthFlags {
    /// Output directory.
    out: PathBuf,
    /// Number of vehicles.
    n: usize,
    /// Class mix: `balanced` or `fleet`.
    mix: String,
    seed: u64,
    duration_s: f64,
    /// Timbre family: `standard` or `alternate`.
    family: String,
    /// Source-id prefix.
    prefix: String,
});

flags!(IngestFlags {
    /// WAV file or directory.
    input: PathBuf,
    out: PathBuf,
});

flags!(FeaturizeFlags {
    input: PathBuf,
    out: PathBuf,
    /// FeatureConfig JSON; defaults when absent.
    features: PathBuf,
    segments: usize,
    segment_length_s: f64,
    seed: u64,
});

flags!(TrainFlags {
    input: PathBuf,
    /// Model file to write.
    out: PathBuf,
    /// ChainSpec JSON; the aspiration-fuel-cylinders chain when absent.
    chain: PathBuf,
    seed: u64,
});

flags!(GridFlags {
    input: PathBuf,
    out: PathBuf,
    /// GridSpec JSON; a three-ensemble grid on `target` when absent.
    grid: PathBuf,
    target: String,
    seed: u64,
});

flags!(EvaluateFlags {
    input: PathBuf,
    model: PathBuf,
    /// Report JSON to write.
    out: PathBuf,
    segments: usize,
    seed: u64,
});

flags!(ClassifyFlags {
    model: PathBuf,
    clip: PathBuf,
    out: PathBuf,
    segments: usize,
    seed: u64,
    /// Confidence floor for descriptor identification.
    floor: f64,
});

flags!(SelectFlags {
    /// Registry directory.
    registry: PathBuf,
    /// Diagnostic kind; taken from the context match when absent.
    kind: String,
    /// Vehicle descriptor, e.g. "(gasoline, inline, 4, 2.0, turbo, ford, *)".
    descriptor: String,
    /// Output of `classify`, identified into a descriptor.
    prediction: PathBuf,
    /// Confidence floor for descriptor identification.
    floor: f64,
    /// Minimum training-set size for a record to be eligible.
    min_n: u32,
    /// Context JSON with `query`, `db` and `weights`.
    context: PathBuf,
    /// Print the trace as JSON.
    #[arg(num_args = 0..=1, default_missing_value = "true")]
    json: bool,
});

#[derive(Subcommand, Debug)]
enum RegistryCommand {
    /// List records.
    List {
        #[arg(long)]
        registry: PathBuf,
    },
    /// Add a record, optionally with a model file stored by content.
    Add {
        #[arg(long)]
        registry: PathBuf,
        #[arg(long)]
        id: String,
        #[arg(long)]
        descriptor: String,
        #[arg(long)]
        kind: String,
        #[arg(long)]
        n_train: u32,
        #[arg(long)]
        blob: Option<PathBuf>,
    },
}

fn init_logging(level: &str) {
    let level: tracing::Level = level.parse().unwrap_or(tracing::Level::INFO);
    tracing_subscriber::fmt().json().with_writer(std::io::stderr).with_max_level(level).with_target(false).init();
}

fn run(cli: Cli) -> error::Result<()> {
    let file = config::load_file(cli.config.as_deref())?;
    let file = file.as_ref();
    match cli.command {
        Command::Synth(f) => commands::synth(file, &f),
        Command::Ingest(f) => commands::ingest(file, &f),
        Command::Featurize(f) => commands::featurize(file, &f),
        Command::Train(f) => commands::train(file, &f),
        Command::Grid(f) => commands::grid(file, &f),
        Command::Evaluate(f) => commands::evaluate(file, &f),
        Command::Classify(f) => commands::classify(file, &f),
        Command::SelectModel(f) => commands::select_model(file, &f),
        Command::Registry(RegistryCommand::List { registry }) => commands::registry_list(&registry),
        Command::Registry(RegistryCommand::Add { registry, id, descriptor, kind, n_train, blob }) => {
            commands::registry_add(&registry, &id, &descriptor, &kind, n_train, blob.as_deref())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    init_logging(&cli.log_level);
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            tracing::error!(code = e.code(), error = %e, "command failed");
            eprintln!("error: {e}");
            e.exit()
        }
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Io(format!("json: {e}"))
    }
}

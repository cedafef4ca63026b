use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use rxpredict_cli::config::parse_assignment;
use rxpredict_cli::{
    cmd_analyze, cmd_build, cmd_eval, cmd_parse, cmd_report, cmd_synth, cmd_train, CliError, ModelKind, RunConfig,
    RunOptions, Split,
};

/// Predict discharge antihypertensives from admission-time note text.
#[derive(Parser)]
#[command(name = "rxpredict", version)]
struct Cli {
    /// No per-epoch progress or skipped-note messages on stderr.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse raw discharge notes (JSON lines or a note-events CSV) into admission records.
    Parse {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
    /// Generate a synthetic corpus.
    Synth {
        /// Generator settings as JSON (defaults when omitted).
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        output: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        num_notes: Option<usize>,
        /// Write raw note texts instead of parsed records.
        #[arg(long)]
        raw: bool,
    },
    /// Split, build vocabularies and features for every seed.
    Build(RunArgs),
    /// Train one model per seed.
    Train(RunArgs),
    /// Score trained checkpoints on a split.
    Eval {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, default_value = "test")]
        split: Split,
    },
    /// Embedding neighbors, filter n-grams and t-SNE for trained CNNs.
    Analyze(RunArgs),
    /// Aggregate per-seed metrics into the run manifest.
    Report {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, default_value = "test")]
        split: Split,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Run configuration JSON; defaults apply to missing keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Parsed notes (overrides `notes`).
    #[arg(long)]
    notes: Option<PathBuf>,
    /// Output directory (overrides `output_dir`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// cnn, lr or mlp (overrides `model`).
    #[arg(long)]
    model: Option<ModelKind>,
    /// Comma-separated seeds (overrides `seeds`).
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// Epoch limit for every model kind (overrides `train.max_epochs`,
    /// `lr.max_epochs` and `mlp.max_epochs`).
    #[arg(long)]
    epochs: Option<usize>,
    /// Any config key as `dotted.path=value`; the value is JSON when it
    /// parses, else a string. Applied after the named flags, in order.
    #[arg(long = "set", value_parser = parse_assignment)]
    set: Vec<(String, String)>,
    /// Seeds processed in parallel.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

impl RunArgs {
    fn load(&self) -> Result<RunConfig, CliError> {
        let mut overrides = Vec::new();
        let mut push = |k: &str, v: String| overrides.push((k.to_string(), v));
        if let Some(p) = &self.notes {
            push("notes", json_string(&p.to_string_lossy()));
        }
        if let Some(p) = &self.out {
            push("output_dir", json_string(&p.to_string_lossy()));
        }
        if let Some(m) = self.model {
            push("model", json_string(m.as_str()));
        }
        if let Some(s) = &self.seeds {
            push("seeds", serde_json::to_string(s).expect("seed list serializes"));
        }
        if let Some(e) = self.epochs {
            for key in ["train.max_epochs", "lr.max_epochs", "mlp.max_epochs"] {
                push(key, e.to_string());
            }
        }
        overrides.extend(self.set.iter().cloned());
        RunConfig::load(self.config.as_deref(), &overrides)
    }

    fn options(&self, quiet: bool) -> RunOptions {
        RunOptions { jobs: self.jobs, quiet }
    }
}

fn json_string(s: &str) -> String {
    serde_json::to_string(s).expect("string serializes")
}

fn print<T: Serialize>(value: &T) {
    println!("{}", serde_json::to_string_pretty(value).expect("summary serializes"));
}

fn run(cli: Cli) -> Result<(), CliError> {
    let quiet = cli.quiet;
    match cli.command {
        Command::Parse { input, output } => print(&cmd_parse(&input, &output, quiet)?),
        Command::Synth {
            spec,
            output,
            seed,
            num_notes,
            raw,
        } => print(&cmd_synth(spec.as_deref(), &output, seed, num_notes, raw)?),
        Command::Build(args) => print(&cmd_build(&args.load()?, args.options(quiet))?),
        Command::Train(args) => print(&cmd_train(&args.load()?, args.options(quiet))?),
        Command::Eval { run, split } => {
            let reports = cmd_eval(&run.load()?, split, run.options(quiet))?;
            for r in reports {
                println!("seed {}\n{}", r.seed, r.metrics.to_text_table());
            }
        }
        Command::Analyze(args) => print(&cmd_analyze(&args.load()?, args.options(quiet))?),
        Command::Report { run, split } => print!("{}", cmd_report(&run.load()?, split)?.to_text_table()),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

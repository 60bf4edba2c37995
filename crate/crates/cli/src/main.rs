use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use inforelay::experiment::{
    analyze_network, run_experiment, summarize, AnalysisConfig, ExperimentConfig, Manifest, MANIFEST_FILE,
};
use inforelay::infotheory::StateSource;
use inforelay::recnet::{train, Arch, Checkpoint, TrainConfig};
use inforelay::taskgen::{generate_dataset, write_dataset_csv, DelayRegime, Task};
use inforelay::Error;

#[derive(Parser)]
#[command(name = "inforelay", version, about = "Information relays in small recurrent networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a balanced dataset as CSV.
    Gen(GenArgs),
    /// Train one network and save a JSON checkpoint.
    Train(TrainArgs),
    /// Run relay, knockout, temporal and latent analyses on a checkpoint.
    Analyze(AnalyzeArgs),
    /// Train and analyze every cell of an experiment.
    Sweep(SweepArgs),
    /// Aggregate a sweep manifest into summary tables.
    Summarize(SummarizeArgs),
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, default_value = "memory")]
    task: Task,
    /// `fixed:K`, `random`, `random:LO-HI` or `eval:K`.
    #[arg(long, default_value = "random")]
    regime: DelayRegime,
    #[arg(long, default_value_t = 800)]
    episodes: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Args, Default)]
struct TrainFlags {
    /// TOML file with training hyperparameters (the `[train]` table layout).
    #[arg(long)]
    train_config: Option<PathBuf>,
    #[arg(long)]
    max_epochs: Option<usize>,
    #[arg(long)]
    max_restarts: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    target_accuracy: Option<f64>,
}

impl TrainFlags {
    fn apply(&self, cfg: &mut TrainConfig) -> Result<()> {
        if let Some(path) = &self.train_config {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            *cfg = toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        }
        if let Some(v) = self.max_epochs {
            cfg.max_epochs = v;
        }
        if let Some(v) = self.max_restarts {
            cfg.max_restarts = v;
        }
        if let Some(v) = self.batch_size {
            cfg.batch_size = v;
        }
        if let Some(v) = self.learning_rate {
            cfg.adam.lr = v;
        }
        if let Some(v) = self.target_accuracy {
            cfg.target_accuracy = v;
        }
        cfg.validate()?;
        Ok(())
    }
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long, default_value = "memory")]
    task: Task,
    #[arg(long, default_value = "lstm")]
    arch: Arch,
    #[arg(long, default_value = "random")]
    regime: DelayRegime,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, short)]
    out: PathBuf,
    #[command(flatten)]
    flags: TrainFlags,
}

#[derive(Args, Default)]
struct AnalysisFlags {
    #[arg(long)]
    episodes: Option<usize>,
    #[arg(long)]
    knockout_samples: Option<usize>,
    #[arg(long)]
    removal_samples: Option<usize>,
    #[arg(long)]
    shuffle_permutations: Option<usize>,
    /// Hold knocked-out nodes at zero instead of a one-time overwrite.
    #[arg(long)]
    persistent_knockout: bool,
    /// Read node states from the LSTM cell instead of the hidden state.
    #[arg(long)]
    cell_state: bool,
}

impl AnalysisFlags {
    fn apply(&self, cfg: &mut AnalysisConfig) {
        if let Some(v) = self.episodes {
            cfg.episodes = v;
        }
        if let Some(v) = self.knockout_samples {
            cfg.knockout_samples = v;
        }
        if let Some(v) = self.removal_samples {
            cfg.removal_samples = v;
        }
        if let Some(v) = self.shuffle_permutations {
            cfg.shuffle_permutations = v;
        }
        if self.persistent_knockout {
            cfg.persistent_knockout = true;
        }
        if self.cell_state {
            cfg.state_source = StateSource::Cell;
        }
    }
}

#[derive(Args)]
struct AnalyzeArgs {
    #[arg(long, short)]
    checkpoint: PathBuf,
    /// Directory for the output tables.
    #[arg(long, short)]
    out: PathBuf,
    /// Seed for the analysis datasets and baselines; defaults to the checkpoint seed.
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    flags: AnalysisFlags,
}

#[derive(Args)]
struct SweepArgs {
    /// TOML experiment file; flags given here override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Print the effective configuration as TOML and exit.
    #[arg(long)]
    print_config: bool,
    #[arg(long, value_delimiter = ',')]
    tasks: Option<Vec<Task>>,
    #[arg(long, value_delimiter = ',')]
    archs: Option<Vec<Arch>>,
    #[arg(long, value_delimiter = ',')]
    regimes: Option<Vec<DelayRegime>>,
    #[arg(long)]
    replicates: Option<usize>,
    #[arg(long)]
    base_seed: Option<u64>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// Worker threads; 0 uses one per core.
    #[arg(long)]
    workers: Option<usize>,
    #[command(flatten)]
    train: TrainFlags,
    #[command(flatten)]
    analysis: AnalysisFlags,
}

#[derive(Args)]
struct SummarizeArgs {
    /// Manifest file, or a sweep directory containing one.
    #[arg(long, short)]
    manifest: PathBuf,
    /// Output directory; defaults to the manifest's directory.
    #[arg(long, short)]
    out: Option<PathBuf>,
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(file))
}

fn gen(args: GenArgs) -> Result<ExitCode> {
    let episodes = generate_dataset(args.task, args.episodes, args.regime, args.seed)?;
    write_dataset_csv(&episodes, create(&args.out)?)?;
    eprintln!("wrote {} {} episodes to {}", episodes.len(), args.task, args.out.display());
    Ok(ExitCode::SUCCESS)
}

fn train_cmd(args: TrainArgs) -> Result<ExitCode> {
    let mut cfg = TrainConfig::default();
    args.flags.apply(&mut cfg)?;
    match train(args.arch, args.task, args.regime, args.seed, &cfg) {
        Ok((params, report)) => {
            let ck = Checkpoint::new(args.task, args.regime, args.seed, cfg, params, Some(report.clone()));
            if let Some(parent) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
                std::fs::create_dir_all(parent)?;
            }
            ck.save(&args.out)?;
            eprintln!(
                "accuracy {:.4} after {} epochs ({} restarts); saved {}",
                report.final_accuracy,
                report.epochs_used,
                report.restarts,
                args.out.display()
            );
            Ok(ExitCode::SUCCESS)
        }
        Err(e @ Error::TrainingFailed(_)) => {
            eprintln!("{e}");
            Ok(ExitCode::from(2))
        }
        Err(e) => Err(e.into()),
    }
}

fn analyze(args: AnalyzeArgs) -> Result<ExitCode> {
    let ck = Checkpoint::load(&args.checkpoint)?;
    let mut cfg = AnalysisConfig::default();
    args.flags.apply(&mut cfg);
    let seed = args.seed.unwrap_or(ck.seed);
    let analysis = analyze_network(&ck.params, ck.task, ck.regime, &cfg, seed)?;
    let files = analysis.write_to(&args.out)?;
    eprintln!("wrote {} tables to {}", files.len(), args.out.display());
    Ok(ExitCode::SUCCESS)
}

fn sweep(args: SweepArgs) -> Result<ExitCode> {
    let mut cfg = match &args.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(v) = args.tasks {
        cfg.tasks = v;
    }
    if let Some(v) = args.archs {
        cfg.archs = v;
    }
    if let Some(v) = args.regimes {
        cfg.regimes = v;
    }
    if let Some(v) = args.replicates {
        cfg.replicates = v;
    }
    if let Some(v) = args.base_seed {
        cfg.base_seed = v;
    }
    if let Some(v) = args.output_dir {
        cfg.output_dir = v;
    }
    if let Some(v) = args.workers {
        cfg.workers = v;
    }
    args.train.apply(&mut cfg.train)?;
    args.analysis.apply(&mut cfg.analysis);
    cfg.validate()?;
    if args.print_config {
        print!("{}", cfg.to_toml_string()?);
        return Ok(ExitCode::SUCCESS);
    }

    let outcome = run_experiment(&cfg)?;
    eprintln!(
        "{} cells run, {} already present, {} failed; manifest in {}",
        outcome.ran.len(),
        outcome.skipped.len(),
        outcome.failed.len(),
        cfg.output_dir.join(MANIFEST_FILE).display()
    );
    for key in &outcome.failed {
        eprintln!("failed: {key}");
    }
    Ok(if outcome.all_succeeded() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(2)
    })
}

fn summarize_cmd(args: SummarizeArgs) -> Result<ExitCode> {
    let path = if args.manifest.is_dir() {
        args.manifest.join(MANIFEST_FILE)
    } else {
        args.manifest.clone()
    };
    let manifest = Manifest::load(&path)?;
    let summary = summarize(&manifest)?;
    let out = match args.out {
        Some(dir) => dir,
        None => match path.parent() {
            Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
            _ => PathBuf::from("."),
        },
    };
    let files = summary.write_to(&out)?;
    eprintln!("wrote {} to {}", files.join(", "), out.display());
    Ok(ExitCode::SUCCESS)
}

fn run() -> Result<ExitCode> {
    let cli = Cli::parse();
    match cli.command {
        Command::Gen(a) => gen(a),
        Command::Train(a) => train_cmd(a),
        Command::Analyze(a) => analyze(a),
        Command::Sweep(a) => sweep(a),
        Command::Summarize(a) => summarize_cmd(a),
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
